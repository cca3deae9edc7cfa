#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "fractal/envelope.hpp"
#include "fractal/operator.hpp"
#include "fractal/quadrature.hpp"
#include "fractal/resolvent.hpp"

namespace fractal {

// h(z) with H = (1/2 pi i) \oint G^{(z)} h(z) dz and spectral form sum_j h(-lambda_j) phi_j phi_j.
struct SymbolFunction {
    std::string tag = "user";  // heat | exp-complex | complex-power | user
    double t = std::numeric_limits<double>::quiet_NaN();
    cplx w = std::numeric_limits<double>::quiet_NaN();
    std::function<cplx(cplx)> h;
    // |h| ~ |z|^decay_power along the rays; -inf means faster than any power
    double decay_power = -std::numeric_limits<double>::infinity();
    // ray tails beyond |z| = S of h(z) z^{-k-1} dz, lower ray inward plus upper ray outward
    std::function<cplx(int k, double S, double alpha)> tail_moment;

    cplx operator()(cplx z) const { return h(z); }
    bool algebraic() const { return std::isfinite(decay_power); }
    ojson to_json() const {
        ojson j{{"tag", tag}};
        if (std::isfinite(t)) j["t"] = t;
        if (std::isfinite(w.real())) j["w"] = {w.real(), w.imag()};
        if (algebraic()) j["decay_power"] = decay_power;
        return j;
    }
};

inline SymbolFunction heat_symbol(double t) {
    if (!(t > 0)) throw DomainError("heat kernel needs t > 0");
    SymbolFunction s;
    s.tag = "heat";
    s.t = t;
    s.h = [t](cplx z) { return std::exp(t * z); };
    return s;
}

inline SymbolFunction exp_symbol(cplx w) {
    SymbolFunction s;
    s.tag = "exp-complex";
    s.w = w;
    s.t = std::abs(w);
    s.h = [w](cplx z) { return std::exp(w * z); };
    return s;
}

inline SymbolFunction power_symbol(cplx w) {
    if (!(w.real() < 0)) throw DomainError("complex power needs Re w < 0");
    SymbolFunction s;
    s.tag = "complex-power";
    s.w = w;
    s.h = [w](cplx z) { return std::pow(-z, w); };
    s.decay_power = w.real();
    s.tail_moment = [w](int k, double S, double a) {
        const cplx I(0, 1), c = std::pow(cplx(S), w - double(k)) / (double(k) - w);
        return c * (std::exp(I * (w * (a - std::numbers::pi) - double(k) * a)) -
                    std::exp(I * (w * (std::numbers::pi - a) + double(k) * a)));
    };
    return s;
}

// A user symbol either decays exponentially on the rays or is O(|z|^p), p <= -1, and
// analytic at infinity; the second kind gets its ray tails by quadrature in 1/|z|.
inline SymbolFunction user_symbol(std::string tag, std::function<cplx(cplx)> h,
                                  double decay_power = -std::numeric_limits<double>::infinity()) {
    SymbolFunction s;
    s.tag = std::move(tag);
    s.h = std::move(h);
    s.decay_power = decay_power;
    if (std::isfinite(decay_power)) {
        if (decay_power > -1) throw ConfigError("user symbols must decay at least like 1/|z|");
        auto f = s.h;
        s.tail_moment = [f](int k, double S, double a) {
            PanelIntegrator q(1e-13, 1e-300, 16, 30);
            const cplx up = std::polar(1.0, a), dn = std::conj(up);
            cplx iu = q([&](double u) { return f(S * up / u) * std::pow(u, k - 1); }, 0.0, 1.0);
            cplx id = q([&](double u) { return f(S * dn / u) * std::pow(u, k - 1); }, 0.0, 1.0);
            return std::pow(S, -k) * (std::pow(dn, k) * iu - std::pow(up, k) * id);
        };
    }
    return s;
}

enum class ContourKind { Keyhole, PowerRays };

struct ContourNode {
    cplx z, weight;  // dz weight; the mirrored node conj(z) carries -conj(weight)
};

// Upper half of a contour symmetric about the real axis. Keyhole: arc |z| = radius for
// arg z in [0, alpha] then the ray arg z = alpha outward. PowerRays: the segment
// Re z = -offset from the axis up to the ray start, then the ray outward. The full contour
// (lower ray inward, middle piece, upper ray outward) winds once around the negative axis.
struct Contour {
    struct Panel {
        int piece = 0;  // 0 arc or segment, 1 ray
        double a = 0, b = 0;
    };
    ContourKind kind = ContourKind::Keyhole;
    double alpha = 0.75 * std::numbers::pi;
    double radius = 1;  // arc radius, or ray start modulus for PowerRays
    double offset = 0;  // lambda0/2 for PowerRays
    int nodes_per_panel = 16;
    std::vector<Panel> panels;
    double tail_from = std::numeric_limits<double>::infinity();  // analytic ray tails beyond this modulus
    double truncation = 0;                                       // neglected ray size, relative

    double ray_start() const { return radius; }
    double ray_end() const {
        double e = radius;
        for (auto& p : panels)
            if (p.piece == 1) e = std::max(e, std::exp(p.b));
        return e;
    }

    std::vector<ContourNode> upper() const {
        const GaussRule& g = gauss_legendre(nodes_per_panel);
        std::vector<ContourNode> out;
        const cplx I(0, 1), ray = std::polar(1.0, alpha);
        for (auto& p : panels) {
            const double h = 0.5 * (p.b - p.a), c = 0.5 * (p.a + p.b);
            for (int k = 0; k < nodes_per_panel; ++k) {
                double u = c + h * g.nodes[k], wt = h * g.weights[k];
                if (p.piece == 1) {
                    // log-spaced ray panels: s = exp(u)
                    double s = std::exp(u);
                    out.push_back({s * ray, ray * s * wt});
                } else if (kind == ContourKind::Keyhole) {
                    cplx z = std::polar(radius, u);
                    out.push_back({z, I * z * wt});
                } else {
                    out.push_back({cplx(-offset, u), I * wt});
                }
            }
        }
        return out;
    }

    // Full contour in traversal order.
    std::vector<ContourNode> full() const {
        auto up = upper();
        std::vector<ContourNode> out;
        for (auto it = up.rbegin(); it != up.rend(); ++it) out.push_back({std::conj(it->z), -std::conj(it->weight)});
        out.insert(out.end(), up.begin(), up.end());
        return out;
    }

    Contour refined() const {
        Contour c = *this;
        c.panels.clear();
        for (auto& p : panels) {
            double m = 0.5 * (p.a + p.b);
            c.panels.push_back({p.piece, p.a, m});
            c.panels.push_back({p.piece, m, p.b});
        }
        return c;
    }

    ojson to_json() const {
        return {{"kind", kind == ContourKind::Keyhole ? "keyhole" : "power-rays"},
                {"alpha", alpha},
                {"radius", radius},
                {"offset", offset},
                {"panels", static_cast<int>(panels.size())},
                {"nodes_per_panel", nodes_per_panel},
                {"ray_end", ray_end()},
                {"tail_from", std::isfinite(tail_from) ? ojson(tail_from) : ojson(nullptr)},
                {"truncation", truncation}};
    }
};

namespace detail {

// Ray panels of width log 2 from the ray start; stops once |h| s on both rays is below
// 1e-18 of the scale reached on the middle piece, or at `limit` for algebraic symbols.
inline void add_ray_panels(Contour& c, const SymbolFunction& h, double limit) {
    double scale = 0;
    for (auto& n : c.upper()) scale = std::max(scale, std::abs(h(n.z)) * std::abs(n.z));
    for (auto& n : c.upper()) scale = std::max(scale, std::abs(h(std::conj(n.z))) * std::abs(n.z));
    const cplx ray = std::polar(1.0, c.alpha);
    double u = std::log(c.radius);
    if (h.algebraic()) {
        if (!(limit > c.radius)) throw DomainError("ray limit must exceed the ray start");
        const double end = std::log(limit);
        while (u < end - 1e-12) {
            double b = std::min(end, u + std::log(2.0));
            c.panels.push_back({1, u, b});
            u = b;
        }
        c.tail_from = limit;
        return;
    }
    for (int k = 0; k < 400; ++k) {
        double b = u + std::log(2.0), s = std::exp(b);
        c.panels.push_back({1, u, b});
        u = b;
        double tail = s * std::max(std::abs(h(s * ray)), std::abs(h(s * std::conj(ray))));
        if (scale == 0 || tail <= 1e-18 * scale) {
            c.truncation = scale > 0 ? tail / scale : 0.0;
            return;
        }
    }
    throw GateFailure("symbol does not decay along the rays at angle " + std::to_string(c.alpha));
}

}  // namespace detail

// Gamma_{alpha,t}: arc |z| = 1/t.
inline Contour keyhole_contour(double alpha, double t, const SymbolFunction& h, double ray_limit = 0, int nodes = 16,
                               int arc_panels = 4) {
    if (!(alpha > 0 && alpha < std::numbers::pi)) throw DomainError("contour angle must lie in (0, pi)");
    if (!(t > 0)) throw DomainError("keyhole contour needs t > 0");
    Contour c;
    c.kind = ContourKind::Keyhole;
    c.alpha = alpha;
    c.radius = 1 / t;
    c.nodes_per_panel = nodes;
    for (int k = 0; k < arc_panels; ++k) c.panels.push_back({0, alpha * k / arc_panels, alpha * (k + 1) / arc_panels});
    detail::add_ray_panels(c, h, ray_limit);
    return c;
}

// Rays at angle +-alpha from modulus lambda0/(2|cos alpha|), joined by the vertical segment
// through -lambda0/2.
inline Contour power_contour(double alpha, double lambda0, const SymbolFunction& h, double ray_limit = 0, int nodes = 16,
                             int segment_panels = 2) {
    if (!(alpha > std::numbers::pi / 2 && alpha < std::numbers::pi)) throw DomainError("power contour angle must lie in (pi/2, pi)");
    if (!(lambda0 > 0)) throw DomainError("power contour needs lambda0 > 0");
    Contour c;
    c.kind = ContourKind::PowerRays;
    c.alpha = alpha;
    c.offset = lambda0 / 2;
    c.radius = lambda0 / (2 * std::abs(std::cos(alpha)));
    c.nodes_per_panel = nodes;
    const double top = c.radius * std::sin(alpha);
    for (int k = 0; k < segment_panels; ++k) c.panels.push_back({0, top * k / segment_panels, top * (k + 1) / segment_panels});
    detail::add_ray_panels(c, h, ray_limit);
    return c;
}

// (1/2 pi i) \oint h(z) / (z + lambda) dz, which is h(-lambda) for -lambda inside.
inline cplx scalar_cauchy(const Contour& c, const SymbolFunction& h, double lambda) {
    cplx s = 0;
    for (auto& n : c.full()) s += n.weight * h(n.z) / (n.z + lambda);
    if (std::isfinite(c.tail_from) && h.tail_moment) {
        // 1/(z + lambda) = sum_k (-lambda)^k z^{-k-1}
        const double q = lambda / c.tail_from;
        if (!(q < 0.5)) throw DomainError("scalar check needs lambda below half the tail modulus");
        for (int k = 0; std::pow(q, k) > 1e-18; ++k) s += std::pow(-lambda, k) * h.tail_moment(k, c.tail_from, c.alpha);
    }
    return s / cplx(0, 2 * std::numbers::pi);
}

// Conditions under which H and the spectral sum define the same kernel: the contour
// integral of |h| |z|^{a-1} with a above S/(2(S+1)) (L2) or S/(S+1) (Linf), and dyadic
// summability of h(-lambda_j) (Linf) and |h(-lambda_j)|^2 (L2).
struct GateOptions {
    double a_l2 = std::numeric_limits<double>::quiet_NaN();  // default S/(2(S+1)) + 1e-3
    double a_linf = std::numeric_limits<double>::quiet_NaN();  // default S/(S+1) + 1e-3
    double slope_margin = -0.02;
};

namespace detail {

struct RayGate {
    double value = 0, ratio = 0, certificate = 0;
    bool converges = false;
};

// int over the contour of |h||z|^{a-1}|dz| plus a ratio test on decades beyond its end.
inline RayGate contour_gate(const Contour& c, const SymbolFunction& h, double a) {
    RayGate g;
    for (auto& n : c.full()) g.value += std::abs(n.weight) * std::abs(h(n.z)) * std::pow(std::abs(n.z), a - 1);
    const GaussRule& rule = gauss_legendre(16);
    const cplx ray = std::polar(1.0, c.alpha);
    auto decade = [&](double s0) {
        double lo = std::log(s0), hi = lo + std::log(10.0), s = 0;
        for (int k = 0; k < 16; ++k) {
            double u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.nodes[k], x = std::exp(u);
            s += 0.5 * (hi - lo) * rule.weights[k] * (std::abs(h(x * ray)) + std::abs(h(x * std::conj(ray)))) * std::pow(x, a);
        }
        return s;
    };
    std::vector<double> I;
    double s0 = c.ray_end();
    for (int j = 0; j < 10; ++j, s0 *= 10) I.push_back(decade(s0));
    double last = I.back(), prev = I[I.size() - 2];
    double total = 0;
    for (double v : I) total += v;
    if (last == 0 || !(last > 1e-300)) {
        g.ratio = 0;
        g.converges = std::isfinite(total);
        g.certificate = 0;
    } else {
        g.ratio = last / prev;
        g.converges = std::isfinite(total) && g.ratio < 1 - 1e-9;
        g.certificate = g.converges ? last * g.ratio / (1 - g.ratio) : std::numeric_limits<double>::infinity();
    }
    g.value += total;
    return g;
}

struct SumGate {
    double slope = std::numeric_limits<double>::quiet_NaN(), partial = 0;
    int blocks = 0;
    bool vanishing = false, pass = false;
    ojson terms = ojson::array();
};

// sum_k 2^{kS/(S+1)} sup_{2^k <= lambda_j < 2^{k+1}} |h(-lambda_j)|^power over the lowest
// third of the computed spectrum; the fitted log2 slope of the terms must be below margin.
inline SumGate summability_gate(const Eigen::VectorXd& lambda, const SymbolFunction& h, double exponent, int power,
                                double margin) {
    SumGate g;
    const int usable = std::max<int>(1, static_cast<int>(lambda.size()) / 3);
    std::map<int, double> sup;
    for (int j = 0; j < usable; ++j) {
        int k = static_cast<int>(std::floor(std::log2(lambda(j))));
        double v = std::pow(std::abs(h(-lambda(j))), power);
        sup[k] = std::max(sup[k], v);
    }
    std::vector<double> ks, ls;
    double top = 0;
    for (auto& [k, v] : sup) {
        double term = std::pow(2.0, k * exponent) * v;
        g.terms.push_back({k, term});
        g.partial += term;
        top = std::max(top, term);
        if (term > 0) ks.push_back(k), ls.push_back(std::log2(term));
    }
    g.blocks = static_cast<int>(sup.size());
    double tail = sup.empty() ? 0 : std::pow(2.0, sup.rbegin()->first * exponent) * sup.rbegin()->second;
    g.vanishing = top == 0 || tail <= 1e-16 * top;
    if (ks.size() >= 2) g.slope = fit_line(ks, ls).slope;
    g.pass = std::isfinite(g.partial) && (g.vanishing || (std::isfinite(g.slope) && g.slope < margin));
    return g;
}

}  // namespace detail

inline VerificationReport check_gates(const FractalSpec& spec, const Eigen::VectorXd& lambda, const SymbolFunction& h,
                                      const Contour& c, GateOptions opt = {}) {
    VerificationReport rep;
    rep.name = "gates";
    const double e = spec.S / (spec.S + 1);
    if (!std::isfinite(opt.a_l2)) opt.a_l2 = e / 2 + 1e-3;
    if (!std::isfinite(opt.a_linf)) opt.a_linf = e + 1e-3;
    if (!(opt.a_l2 > e / 2)) throw ConfigError("L2 gate exponent must exceed S/(2(S+1))");
    rep.meta = {{"spec", spec.name}, {"symbol", h.to_json()}, {"contour", c.to_json()}, {"a_l2", opt.a_l2}, {"a_linf", opt.a_linf}};
    auto ray = [&](const char* id, double a) {
        auto g = detail::contour_gate(c, h, a);
        rep.add(id, g.converges,
                {{"a", a}, {"value", g.value}, {"decade_ratio", g.ratio},
                 {"tail_certificate", std::isfinite(g.certificate) ? ojson(g.certificate) : ojson(nullptr)}});
    };
    auto sum = [&](const char* id, int power) {
        auto g = detail::summability_gate(lambda, h, e, power, opt.slope_margin);
        rep.add(id, g.pass,
                {{"power", power}, {"partial_sum", g.partial}, {"blocks", g.blocks}, {"vanishing", g.vanishing},
                 {"slope", std::isfinite(g.slope) ? ojson(g.slope) : ojson(nullptr)}, {"terms", g.terms}});
    };
    ray("contour_integral_l2", opt.a_l2);
    sum("summability_l2", 2);
    ray("contour_integral_linf", opt.a_linf);
    sum("summability_linf", 1);
    bool l2 = rep.find("contour_integral_l2")->pass && rep.find("summability_l2")->pass;
    bool linf = l2 && rep.find("contour_integral_linf")->pass && rep.find("summability_linf")->pass;
    rep.meta["kernel_sense"] = linf ? "linf" : l2 ? "l2" : "none";
    // the Linf pair is informative once L2 holds
    for (auto& ch : rep.checks)
        if (ch.id.find("linf") != std::string::npos) ch.hard = false;
    return rep;
}

inline void require_gates(const VerificationReport& gates) {
    std::string failed;
    for (auto& c : gates.checks)
        if (c.hard && !c.pass) failed += (failed.empty() ? "" : ", ") + c.id;
    if (!failed.empty()) throw GateFailure("symbol rejected, failed gate: " + failed);
}

// Contour and spectral evaluation of H on one level graph.
class KernelCalculus {
public:
    KernelCalculus(FractalSpec spec, int m, int depth = -1)
        : spec_(std::move(spec)), fam_(spec_), m_(m), D_(depth < 0 ? m - 2 : depth) {
        if (m < 2) throw ConfigError("kernel calculus needs level m >= 2");
        if (D_ > m - 2) throw ConfigError("series depth must satisfy D <= m-2");
    }

    const FractalSpec& spec() const { return spec_; }
    int level() const { return m_; }
    int depth() const { return D_; }
    const LevelGraph& graph() { return fam_.at(m_); }

    // full Dirichlet spectrum, computed once
    const Spectrum& spectrum_full() {
        if (!sp_) sp_ = std::make_unique<Spectrum>(spectrum(graph(), Boundary::Dirichlet, -1, true));
        return *sp_;
    }
    bool has_spectrum() const { return static_cast<bool>(sp_); }

    // 1 / max torsion: a lower bound for the first Dirichlet eigenvalue
    double lambda_floor() {
        if (floor_ == 0) {
            const LevelGraph& g = graph();
            ShiftedSolver S(g, 0.0);
            VecC b(g.interior_size());
            for (int i = 0; i < b.size(); ++i) b(i) = g.mass[g.nb() + i];
            floor_ = 1 / S.solve(b).cwiseAbs().maxCoeff();
        }
        return floor_;
    }

    // Gershgorin bound on the spectrum of M^{-1} L on the interior
    double lambda_ceiling() {
        if (ceil_ == 0) {
            const LevelGraph& g = graph();
            SpMat A = interior_block(graph_laplacian(g), g.nb());
            for (int c = 0; c < A.outerSize(); ++c) {
                double s = 0;
                for (SpMat::InnerIterator it(A, c); it; ++it) s += std::abs(it.value());
                ceil_ = std::max(ceil_, s / g.mass[g.nb() + c]);
            }
        }
        return ceil_;
    }

    // where algebraic symbols switch to the large-|z| expansion
    double tail_modulus() { return 4 * lambda_ceiling(); }

    // H over pts x pts by contour quadrature of the series resolvent.
    // The series at depth m-2 is the discrete resolvent on V_{m-1}, so points must lie there.
    MatC contour_matrix(const SymbolFunction& h, const Contour& c, const std::vector<int>& pts) {
        for (int v : pts)
            if (v < 0 || v >= graph().nv[m_ - 1])
                throw DomainError("contour kernels need points of V_" + std::to_string(m_ - 1) + " (vertex " + std::to_string(v) + ")");
        auto nodes = c.upper();
        const int n = static_cast<int>(nodes.size()), threads = std::max(1, std::min(thread_count(), n));
        std::vector<MatC> G(n);
        std::vector<std::unique_ptr<PsiCache>> caches(threads);
        std::vector<std::string> errors(threads);
        parallel_for(
            n,
            [&](int i) {
                const int tid = i % threads;
                if (!errors[tid].empty()) return;
                if (!caches[tid]) caches[tid] = std::make_unique<PsiCache>(spec_);
                try {
                    G[i] = SeriesResolvent(*caches[tid], m_, nodes[i].z, D_).matrix(pts, pts);
                } catch (const Error& e) {
                    errors[tid] = "contour node z=(" + std::to_string(nodes[i].z.real()) + "," +
                                  std::to_string(nodes[i].z.imag()) + "): " + e.what();
                }
                caches[tid]->clear();
            },
            threads);
        for (auto& e : errors)
            if (!e.empty()) throw SingularityError(e);
        const int p = static_cast<int>(pts.size());
        MatC H = MatC::Zero(p, p);
        for (int i = 0; i < n; ++i) {
            const auto& nd = nodes[i];
            H += (nd.weight * h(nd.z)) * G[i] - (std::conj(nd.weight) * h(std::conj(nd.z))) * G[i].conjugate();
        }
        if (std::isfinite(c.tail_from)) H += tail_matrix(h, c, pts);
        evaluations_ += n;
        return H / cplx(0, 2 * std::numbers::pi);
    }

    // Ray tails beyond |z| = S through G = sum_k (-1)^k z^{-k-1} (M^{-1}L)^k M^{-1}.
    MatC tail_matrix(const SymbolFunction& h, const Contour& c, const std::vector<int>& pts) {
        if (!h.tail_moment) throw ConfigError("algebraic symbol without tail moments");
        const double S = c.tail_from;
        if (!(S > 2 * lambda_ceiling())) throw DomainError("ray tails need |z| beyond twice the spectral radius");
        const LevelGraph& g = graph();
        const int nb = g.nb(), ni = g.interior_size(), p = static_cast<int>(pts.size());
        SpMat A = interior_block(graph_laplacian(g), nb);
        Eigen::VectorXd minv(ni);
        for (int i = 0; i < ni; ++i) minv(i) = 1 / g.mass[nb + i];
        MatC out = MatC::Zero(p, p);
        const double q = lambda_ceiling() / S;
        for (int b = 0; b < p; ++b) {
            if (pts[b] < nb) continue;
            Eigen::VectorXd v = Eigen::VectorXd::Zero(ni);
            v(pts[b] - nb) = minv(pts[b] - nb);
            double sign = 1;
            for (int k = 0; k < 200; ++k) {
                cplx T = h.tail_moment(k, S, c.alpha);
                for (int a = 0; a < p; ++a)
                    if (pts[a] >= nb) out(a, b) += sign * T * v(pts[a] - nb);
                if (std::pow(q, k) < 1e-18) break;
                v = minv.cwiseProduct(A * v);
                sign = -sign;
            }
        }
        return out;
    }

    MatC spectral_matrix(const SymbolFunction& h, const std::vector<int>& pts) {
        const Spectrum& sp = spectrum_full();
        const int p = static_cast<int>(pts.size()), n = static_cast<int>(sp.lambda.size());
        VecC coef(n);
        for (int j = 0; j < n; ++j) coef(j) = h(-sp.lambda(j));
        MatC P(p, n);
        for (int a = 0; a < p; ++a)
            for (int j = 0; j < n; ++j) P(a, j) = sp.phi(pts[a], j);
        return P * coef.asDiagonal() * P.transpose();
    }

    long evaluations() const { return evaluations_; }

private:
    FractalSpec spec_;
    GraphFamily fam_;
    int m_, D_;
    std::unique_ptr<Spectrum> sp_;
    double floor_ = 0, ceil_ = 0;
    long evaluations_ = 0;
};

// Contour and spectral kernels on a pair list, with the difference and a refinement check.
struct KernelResult {
    KernelGrid grid;  // contour values unless the contour was skipped
    std::vector<cplx> spectral;
    Contour contour;
    std::string method;
    double relative_difference = std::numeric_limits<double>::quiet_NaN();  // max|c - s| / max|s|
    double refinement_change = std::numeric_limits<double>::quiet_NaN();    // relative, panels halved
    ojson notes = ojson::array();
    ojson to_json() const {
        auto f = [](double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); };
        return {{"method", method},
                {"contour", contour.to_json()},
                {"relative_difference", f(relative_difference)},
                {"refinement_change", f(refinement_change)},
                {"notes", notes}};
    }
};

enum class KernelMethod { Contour, Spectral, Both };

inline KernelMethod parse_kernel_method(const std::string& s) {
    if (s == "contour") return KernelMethod::Contour;
    if (s == "spectral") return KernelMethod::Spectral;
    if (s == "both") return KernelMethod::Both;
    throw ConfigError("method must be contour, spectral or both");
}

inline KernelResult operator_kernel(KernelCalculus& kc, const SymbolFunction& h, const Contour& c, const PairList& pairs,
                                    KernelMethod method = KernelMethod::Both, bool refine = false) {
    KernelResult r;
    r.contour = c;
    std::vector<std::pair<int, int>> idx;
    auto pts = pair_points(pairs, idx);
    MatC C, Sp;
    bool have_c = method != KernelMethod::Spectral, have_s = method != KernelMethod::Contour;
    if (have_s) {
        try {
            Sp = kc.spectral_matrix(h, pts);
        } catch (const CapacityError& e) {
            if (method == KernelMethod::Spectral) throw;
            have_s = false;
            r.notes.push_back(std::string("spectral side skipped: ") + e.what());
        }
    }
    if (have_c) C = kc.contour_matrix(h, c, pts);
    r.method = have_c && have_s ? "both" : have_c ? "contour" : "spectral";
    const MatC& V = have_c ? C : Sp;
    r.grid.t = h.t;
    r.grid.provenance = std::string(have_c ? "contour quadrature of the series resolvent" : "spectral sum") + ", level " +
                        std::to_string(kc.level());
    r.grid.pairs = pairs;
    std::vector<double> budget(pairs.size(), 0.0);
    if (have_c && have_s) {
        double num = (C - Sp).cwiseAbs().maxCoeff(), den = Sp.cwiseAbs().maxCoeff();
        r.relative_difference = den > 0 ? num / den : num;
        for (size_t i = 0; i < pairs.size(); ++i) budget[i] = std::abs(C(idx[i].first, idx[i].second) - Sp(idx[i].first, idx[i].second));
    }
    if (have_c && refine) {
        MatC F = kc.contour_matrix(h, c.refined(), pts);
        double den = F.cwiseAbs().maxCoeff();
        r.refinement_change = (F - C).cwiseAbs().maxCoeff() / (den > 0 ? den : 1.0);
        for (size_t i = 0; i < pairs.size(); ++i)
            budget[i] = std::max(budget[i], std::abs(F(idx[i].first, idx[i].second) - C(idx[i].first, idx[i].second)));
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
        r.grid.values.push_back(V(idx[i].first, idx[i].second));
        r.grid.tail.push_back(budget[i]);
        if (have_s && have_c) r.spectral.push_back(Sp(idx[i].first, idx[i].second));
        else if (have_s) r.spectral.push_back(r.grid.values.back());
    }
    r.grid.symmetry_residual = matrix_asymmetry(V);
    return r;
}

inline KernelResult heat_kernel(KernelCalculus& kc, double t, const PairList& pairs, KernelMethod method = KernelMethod::Both,
                                bool refine = false) {
    auto h = heat_symbol(t);
    Contour c = keyhole_contour(0.75 * std::numbers::pi, t, h);
    return operator_kernel(kc, h, c, pairs, method, refine);
}

// e^{w Delta}, w = |w| e^{i beta}: both rays need cos(alpha -+ beta) < 0, so alpha lies in
// (pi/2 + |beta|, pi); pi - |beta|/2 when that is inside, else the midpoint (3pi/4 at beta = 0).
inline double exp_contour_angle(double beta) {
    const double pi = std::numbers::pi, b = std::abs(beta);
    if (!(b < pi / 2)) throw GateFailure("e^{w Delta} needs |arg w| < pi/2");
    double a = pi - b / 2, lo = pi / 2 + b;
    return a > lo && a < pi ? a : 0.5 * (lo + pi);
}

inline KernelResult exp_complex_kernel(KernelCalculus& kc, cplx w, const PairList& pairs,
                                       KernelMethod method = KernelMethod::Both, bool refine = false) {
    if (!(std::abs(w) > 0)) throw DomainError("e^{w Delta} needs w != 0");
    const double beta = std::arg(w);
    const double alpha = exp_contour_angle(beta);
    auto h = exp_symbol(w);
    Contour c = keyhole_contour(alpha, std::abs(w), h);
    auto r = operator_kernel(kc, h, c, pairs, method, refine);
    r.notes.push_back("contour angle " + std::to_string(alpha) + " for arg w = " + std::to_string(beta));
    return r;
}

inline KernelResult complex_power_kernel(KernelCalculus& kc, cplx w, const PairList& pairs,
                                         KernelMethod method = KernelMethod::Both, bool refine = false,
                                         VerificationReport* gates = nullptr) {
    auto h = power_symbol(w);
    Contour c = power_contour(0.75 * std::numbers::pi, kc.lambda_floor(), h, kc.tail_modulus());
    // the lowest third of the spectrum drives the summability gates
    auto rep = check_gates(kc.spec(), kc.spectrum_full().lambda, h, c);
    if (gates) *gates = rep;
    require_gates(rep);
    return operator_kernel(kc, h, c, pairs, method, refine);
}

// Heat upper bound checks over a t grid.
struct HeatVerifyConfig {
    std::vector<double> t_grid = logspace(1e-3, 1e-1, 7);
    double C_cal = std::exp(-1.0);
    double tolerance = 1e-4;  // contour vs spectral, relative
};

inline VerificationReport verify_heat_upper(KernelCalculus& kc, const PairList& pairs, const HeatVerifyConfig& cfg = {}) {
    VerificationReport rep;
    rep.name = "heat";
    const FractalSpec& spec = kc.spec();
    const LevelGraph& g = kc.graph();
    const double e = spec.S / (spec.S + 1);
    rep.meta = {{"spec", spec.name}, {"level", kc.level()}, {"depth", kc.depth()}, {"t_grid", cfg.t_grid},
                {"C_cal", cfg.C_cal}, {"tolerance", cfg.tolerance}, {"pairs", static_cast<int>(pairs.size())},
                {"target_slope", -e}};
    for (double t : cfg.t_grid)
        if (!(t > 0 && t <= 1)) throw DomainError("heat t grid must lie in (0, 1]");
    double worst = 0, worst_refine = std::numeric_limits<double>::quiet_NaN();
    bool positive = true;
    double asym = 0;
    std::vector<double> dd, lg_, diag_t, diag_p;
    ojson per_t = ojson::array();
    int excluded = 0, unresolved = 0, below_noise = 0;
    std::vector<std::vector<cplx>> values;
    for (size_t it = 0; it < cfg.t_grid.size(); ++it) {
        const double t = cfg.t_grid[it];
        // refinement check at the smallest t, where the contour is widest
        bool refine = it == static_cast<size_t>(std::min_element(cfg.t_grid.begin(), cfg.t_grid.end()) - cfg.t_grid.begin());
        auto r = heat_kernel(kc, t, pairs, KernelMethod::Both, refine);
        worst = std::max(worst, r.relative_difference);
        if (refine) worst_refine = r.refinement_change;
        asym = std::max(asym, r.grid.symmetry_residual);
        const int k = k_of_lambda(spec, 1 / t, cfg.C_cal);
        const bool ok = resolves_scale(spec, kc.level(), k);
        std::unique_ptr<ChemicalGraph> cg;
        if (ok) cg = std::make_unique<ChemicalGraph>(g, partition_at_scale(spec, k));
        double dsum = 0, top = 0;
        int dn = 0;
        for (auto& v : r.grid.values) top = std::max(top, std::abs(v));
        // below this the sign is rounding noise of both methods
        const double noise = 1e-12 * top;
        for (size_t i = 0; i < pairs.size(); ++i) {
            auto [x, y] = pairs[i];
            double p = r.grid.values[i].real();
            if (x < g.nb() || y < g.nb()) {
                ++excluded;
                continue;
            }
            if (std::abs(p) <= noise) {
                ++below_noise;
                continue;
            }
            positive = positive && p > 0;
            if (!(p > 0)) continue;
            if (x == y) dsum += std::log(p), ++dn;
            if (!ok) {
                ++unresolved;
                continue;
            }
            dd.push_back(cg->distance(x, y));
            lg_.push_back(std::log(std::pow(t, e) * p));
        }
        if (dn) diag_t.push_back(std::log(t)), diag_p.push_back(dsum / dn);
        per_t.push_back({{"t", t}, {"k", k}, {"relative_difference", r.relative_difference},
                         {"mean_log_diagonal", dn ? ojson(dsum / dn) : ojson(nullptr)}});
    }
    rep.meta["per_t"] = per_t;
    rep.meta["excluded_boundary_samples"] = excluded;
    rep.meta["unresolved_samples"] = unresolved;
    rep.meta["below_noise_samples"] = below_noise;
    rep.add("contour_matches_spectral", worst <= cfg.tolerance, {{"max_relative_difference", worst}, {"tolerance", cfg.tolerance}});
    rep.add("quadrature_refinement", std::isfinite(worst_refine) && worst_refine <= cfg.tolerance,
            {{"relative_change", std::isfinite(worst_refine) ? ojson(worst_refine) : ojson(nullptr)}});
    rep.add("positive_symmetric", positive && asym < 1e-8, {{"symmetry_residual", asym}});
    if (diag_t.size() >= 2) {
        auto f = fit_line(diag_t, diag_p);
        rep.add("on_diagonal_slope", std::abs(f.slope + e) <= 0.05, {{"slope", f.slope}, {"target", -e}, {"rms", f.rms}});
    } else {
        rep.add("on_diagonal_slope", false, {}, "needs diagonal pairs at two or more t");
    }
    auto env = upper_decay_envelope(dd, lg_);
    rep.add("off_diagonal_envelope", env.valid() && env.kappa > 0 && env.violations == 0,
            {{"kappa7", env.kappa}, {"envelope", env.to_json()},
             {"distinct_distances", static_cast<int>(std::set<double>(dd.begin(), dd.end()).size())}});
    // Dirichlet mass loss and monotone heat content from the spectral side
    {
        const Spectrum& sp = kc.spectrum_full();
        Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(g.mass.data(), g.size());
        Eigen::VectorXd c = sp.phi.transpose() * m;
        double worst_mass = 0, prev = std::numeric_limits<double>::infinity();
        bool mono = true;
        std::vector<double> ts = cfg.t_grid;
        std::sort(ts.begin(), ts.end());
        for (double t : ts) {
            Eigen::VectorXd d = (-sp.lambda * t).array().exp().matrix().cwiseProduct(c);
            Eigen::VectorXd u = sp.phi * d;
            worst_mass = std::max(worst_mass, u.maxCoeff());
            double content = c.dot(d);
            mono = mono && content <= prev * (1 + 1e-12);
            prev = content;
        }
        rep.add("mass_at_most_one", worst_mass <= 1 + 1e-10 && mono, {{"max_mass", worst_mass}, {"content_nonincreasing", mono}});
    }
    return rep;
}

}  // namespace fractal
