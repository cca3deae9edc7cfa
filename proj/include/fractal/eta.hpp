#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fractal/envelope.hpp"
#include "fractal/operator.hpp"
#include "fractal/partition.hpp"

namespace fractal {

// Piecewise z-eigenfunctions eta_p (one per V0 point) on one level graph, together with
// their normal derivatives dtn(q,p) = d_n eta_p (q), z-mass term included.
struct EtaSet {
    cplx z;
    int level = 0;
    std::vector<VecC> eta;
    MatC dtn;
    double residual = 0;
};

inline double interior_residual(const LevelGraph& lg, const VecC& u, cplx z) {
    const int nb = lg.nb();
    double worst = 0, scale = 0;
    for (int x = nb; x < lg.size(); ++x) {
        cplx s = z * lg.mass[x] * u(x);
        double diag = std::abs(z) * lg.mass[x];
        for (int k = lg.adj_ptr[x]; k < lg.adj_ptr[x + 1]; ++k) {
            s += lg.adj_c[k] * (u(x) - u(lg.adj_idx[k]));
            diag += lg.adj_c[k];
        }
        worst = std::max(worst, std::abs(s));
        scale = std::max(scale, diag);
    }
    double un = u.cwiseAbs().maxCoeff();
    return un > 0 && scale > 0 ? worst / (scale * un) : worst;
}

inline EtaSet eta_set(const LevelGraph& lg, cplx z) {
    EtaSet e;
    e.z = z;
    e.level = lg.level;
    const int nb = lg.nb();
    ShiftedSolver S(lg, z);
    e.dtn = MatC::Zero(nb, nb);
    for (int p = 0; p < nb; ++p) {
        VecC b = VecC::Zero(nb);
        b(p) = 1.0;
        e.eta.push_back(boundary_value_solve(lg, S, b));
        e.residual = std::max(e.residual, interior_residual(lg, e.eta.back(), z));
        for (int q = 0; q < nb; ++q) e.dtn(q, p) = normal_derivative(lg, e.eta.back(), q, {}, z);
    }
    return e;
}

struct EtaField {
    cplx z;
    int p = 0;
    int level = 0;
    VecC values;
    double residual = 0;
};

inline EtaField eta(const LevelGraph& lg, int p, cplx z) {
    if (p < 0 || p >= lg.nb()) throw DomainError("eta: base point must be a V0 index");
    ShiftedSolver S(lg, z);
    VecC b = VecC::Zero(lg.nb());
    b(p) = 1.0;
    EtaField f{z, p, lg.level, boundary_value_solve(lg, S, b), 0.0};
    f.residual = interior_residual(lg, f.values, z);
    if (f.residual > 1e-9) throw NumericalError("eta residual " + std::to_string(f.residual) + " above 1e-9");
    return f;
}

// psi_p for junctions p in V1 \ V0 on a level-L graph, and the junction matrices B, G = B^{-1}.
struct PsiData {
    cplx z;
    int level = 0;
    std::vector<int> junctions;  // vertex ids nb..nv[1]-1
    MatC psi;                    // rows: vertices of the level-L graph, cols: junctions
    MatC B, G;
    double symmetry_residual = 0, inverse_residual = 0, condition = 0;
};

class PsiCache {
public:
    explicit PsiCache(const FractalSpec& spec) : fam_(spec) {}

    GraphFamily& graphs() { return fam_; }

    // drops z-dependent data, keeps the graphs
    void clear() {
        eta_.clear();
        psi_.clear();
    }

    const EtaSet& etas(int level, cplx z) {
        Key k{level, z.real(), z.imag()};
        auto it = eta_.find(k);
        if (it == eta_.end()) it = eta_.emplace(k, std::make_shared<EtaSet>(eta_set(fam_.at(level), z))).first;
        return *it->second;
    }

    const PsiData& psi(int level, cplx z) {
        Key k{level, z.real(), z.imag()};
        auto it = psi_.find(k);
        if (it == psi_.end()) it = psi_.emplace(k, std::make_shared<PsiData>(build(level, z))).first;
        return *it->second;
    }

private:
    using Key = std::tuple<int, double, double>;

    PsiData build(int L, cplx z) {
        if (L < 1) throw DomainError("psi needs a graph of level >= 1");
        const LevelGraph& g = fam_.at(L);
        const FractalSpec& s = g.spec;
        const int nb = s.nb(), J = s.letters;
        PsiData d;
        d.z = z;
        d.level = L;
        for (int v = nb; v < g.nv[1]; ++v) d.junctions.push_back(v);
        const int nj = static_cast<int>(d.junctions.size());
        d.psi = MatC::Zero(g.size(), nj);
        d.B = MatC::Zero(nj, nj);
        double bscale = 0;
        for (int j = 0; j < J; ++j) {
            cplx zj = s.r[j] * s.mu[j] * z;
            const EtaSet& E = etas(L - 1, zj);
            const LevelGraph& sub = fam_.at(L - 1);
            // junction column carried by each corner of F_j(X), -1 for V0 corners
            std::vector<int> col(nb, -1);
            for (int q = 0; q < nb; ++q) {
                int v = g.addr[1][j * nb + q];
                if (v >= nb) col[q] = v - nb;
            }
            for (int ls = 0; ls < sub.size(); ++ls) {
                // level-L vertex F_j(ls): any address (u,q) of ls prefixed by j
                int a = sub.vaddr[sub.vaddr_ptr[ls]];
                std::int64_t u = a / nb;
                int q = a % nb;
                int x = g.addr[L][(j * sub.cells_at[L - 1] + u) * nb + q];
                for (int qq = 0; qq < nb; ++qq)
                    if (col[qq] >= 0) d.psi(x, col[qq]) = E.eta[qq](ls);
            }
            for (int a = 0; a < nb; ++a)
                for (int b = 0; b < nb; ++b)
                    if (col[a] >= 0 && col[b] >= 0) d.B(col[a], col[b]) += E.dtn(a, b) / s.r[j];
            bscale = std::max(bscale, E.dtn.cwiseAbs().maxCoeff() / s.r[j]);
        }
        d.symmetry_residual = (d.B - d.B.transpose()).cwiseAbs().maxCoeff() / std::max(1e-300, d.B.cwiseAbs().maxCoeff());
        Eigen::FullPivLU<MatC> lu(d.B);
        if (!lu.isInvertible()) throw SingularityError("junction matrix is singular at this z");
        d.G = lu.inverse();
        d.inverse_residual = (d.B * d.G - MatC::Identity(nj, nj)).cwiseAbs().maxCoeff();
        // scaled by the cell maps, not by B itself: a 1x1 B can vanish with every summand
        d.condition = std::max(d.B.cwiseAbs().rowwise().sum().maxCoeff(), bscale) * d.G.cwiseAbs().rowwise().sum().maxCoeff();
        if (d.inverse_residual > 1e-8 || d.condition > 1e12)
            throw SingularityError("junction matrix numerically singular (condition " + std::to_string(d.condition) + ")");
        return d;
    }

    GraphFamily fam_;
    std::map<Key, std::shared_ptr<EtaSet>> eta_;
    std::map<Key, std::shared_ptr<PsiData>> psi_;
};

// psi_p on the level-m graph for the junction vertex p (an id in V1 \ V0).
inline VecC psi(PsiCache& cache, int m, int p, cplx z) {
    const PsiData& d = cache.psi(m, z);
    for (size_t i = 0; i < d.junctions.size(); ++i)
        if (d.junctions[i] == p) return d.psi.col(i);
    throw DomainError("psi: vertex is not a junction point of V1 \\ V0");
}

inline const PsiData& junction_matrix(PsiCache& cache, int m, cplx z) { return cache.psi(m, z); }

struct EtaVerifyConfig {
    double C_cal = 1.0;
    double fit_lo = 1e2, fit_hi = 1e5;
    double slope_tol = 0.05;
    double tol = 1e-8;
    double floor = 1e-13;  // below this eta values are treated as round-off
    int random_triples = 200;
    unsigned seed = 1;
};

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Level condition: the k(lambda)-cells must carry at least two graph levels.
inline bool resolves_scale(const FractalSpec& spec, int m, int k) {
    return partition_at_scale(spec, k).max_length + 2 <= m;
}

// Sum of eta_p over vertices of Theta' off dY, for Theta' = Theta_k and Theta_k minus the cells at p.
inline std::vector<std::pair<double, double>> interior_boundary_sums(const LevelGraph& g, const Partition& P, const VecC& eta,
                                                                     int p) {
    const int nb = g.nb();
    std::vector<std::pair<double, double>> out;
    for (int variant = 0; variant < 2; ++variant) {
        std::set<int> inner, removed;
        for (auto& w : P.words) {
            bool at_p = false;
            for (int q = 0; q < nb; ++q) at_p = at_p || g.vertex(w, q) == p;
            for (int q = 0; q < nb; ++q) (variant == 1 && at_p ? removed : inner).insert(g.vertex(w, q));
        }
        double in = 0, bd = 0;
        for (int v : inner) {
            bool edge = v < nb || removed.count(v);
            (edge ? bd : in) += eta(v).real();
        }
        out.push_back({in, bd});
    }
    return out;
}

struct Calibration {
    double C_cal = 1.0;
    int tested = 0;
    double worst_ratio = 0;
    ojson trials = ojson::array();
};

// Smallest C_cal on a half-integer log grid for which the 1/e interior-versus-boundary
// inequality holds at every resolved lambda with k(lambda) >= 1.
inline Calibration calibrate_c_cal(const FractalSpec& spec, int m, const std::vector<double>& lambdas) {
    auto g = build_level_graph(spec, m);
    std::map<double, EtaSet> cache;
    Calibration best;
    for (int j = -8; j <= 8; ++j) {
        double C = std::exp(0.5 * j);
        int tested = 0;
        double worst = 0;
        for (double l : lambdas) {
            int k = k_of_lambda(spec, l, C);
            if (k < 1 || !resolves_scale(spec, m, k)) continue;
            auto P = partition_at_scale(spec, k);
            auto it = cache.find(l);
            if (it == cache.end()) it = cache.emplace(l, eta_set(g, l)).first;
            for (int p = 0; p < g.nb(); ++p)
                for (auto [in, bd] : interior_boundary_sums(g, P, it->second.eta[p], p)) {
                    ++tested;
                    worst = std::max(worst, bd > 0 ? in / bd : (in > 0 ? INFINITY : 0.0));
                }
        }
        best.trials.push_back({{"C_cal", C}, {"tested", tested}, {"worst_ratio", worst}});
        if (tested > 0 && worst <= std::exp(-1.0)) {
            best.C_cal = C;
            best.tested = tested;
            best.worst_ratio = worst;
            return best;
        }
    }
    best.C_cal = std::exp(4.0);
    return best;
}

inline VerificationReport verify_eta_estimates(const FractalSpec& spec, std::vector<double> lambdas, int m,
                                               const EtaVerifyConfig& cfg = {}) {
    if (lambdas.empty()) throw DomainError("empty lambda grid");
    for (size_t i = 0; i < lambdas.size(); ++i)
        if (!(lambdas[i] > 0) || (i && lambdas[i] <= lambdas[i - 1])) throw DomainError("lambda grid must be positive and increasing");
    VerificationReport rep;
    rep.name = "eta";
    const double S = spec.S;
    rep.meta = {{"spec", spec.name}, {"level", m}, {"C_cal", cfg.C_cal}, {"lambda_grid", lambdas},
                {"integral_target_slope", -S / (S + 1)}, {"normal_derivative_target_slope", 1 / (S + 1)}};
    auto g = build_level_graph(spec, m);
    const int nb = g.nb(), n = g.size(), NL = static_cast<int>(lambdas.size());
    std::vector<Eigen::VectorXd> zeta(nb);
    for (int p = 0; p < nb; ++p) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(nb);
        b(p) = 1;
        zeta[p] = harmonic_field(g, b);
    }
    std::vector<EtaSet> sets(NL);
    parallel_for(NL, [&](int i) { sets[i] = eta_set(g, lambdas[i]); });
    auto val = [&](int i, int p, int v) { return sets[i].eta[p](v).real(); };

    // (a) sandwich and (b) monotonicity
    double lo = 0, hi = 0, mono = 0, resid = 0;
    for (int i = 0; i < NL; ++i) {
        resid = std::max(resid, sets[i].residual);
        for (int p = 0; p < nb; ++p)
            for (int v = 0; v < n; ++v) {
                lo = std::min(lo, val(i, p, v));
                hi = std::max(hi, val(i, p, v) - zeta[p](v));
                if (i) mono = std::max(mono, val(i, p, v) - val(i - 1, p, v));
            }
    }
    rep.add("a_between_zero_and_harmonic", lo >= -cfg.tol && hi <= cfg.tol,
            {{"min_eta", lo}, {"max_excess_over_harmonic", hi}, {"max_interior_residual", resid}});
    rep.add("b_decreasing_in_lambda", mono <= cfg.tol, {{"max_increase", mono}});

    // resolved points of the fit window
    std::vector<int> window;
    ojson dropped = ojson::array();
    for (int i = 0; i < NL; ++i) {
        if (lambdas[i] < cfg.fit_lo * (1 - 1e-12) || lambdas[i] > cfg.fit_hi * (1 + 1e-12)) continue;
        if (resolves_scale(spec, m, k_of_lambda(spec, lambdas[i], cfg.C_cal)))
            window.push_back(i);
        else
            dropped.push_back(lambdas[i]);
    }
    rep.meta["fit_window"] = {cfg.fit_lo, cfg.fit_hi};
    rep.meta["unresolved_lambdas"] = dropped;

    // (c) integral scaling
    {
        ojson data = ojson::object();
        ojson ints = ojson::array();
        bool ok = true;
        for (int p = 0; p < nb; ++p) {
            std::vector<double> x, y;
            ojson row = ojson::array();
            for (int i = 0; i < NL; ++i) {
                double I = 0;
                for (int v = 0; v < n; ++v) I += val(i, p, v) * g.mass[v];
                row.push_back(I);
                if (std::find(window.begin(), window.end(), i) != window.end()) {
                    x.push_back(std::log(lambdas[i]));
                    y.push_back(std::log(I));
                }
            }
            auto f = fit_line(x, y);
            ints.push_back(row);
            data["slope_p" + std::to_string(p)] = f.slope;
            ok = ok && f.ok() && std::abs(f.slope + S / (S + 1)) <= cfg.slope_tol;
        }
        data["integrals"] = ints;
        rep.add("c_integral_slope", ok, data);
    }

    // (d) normal derivatives
    {
        bool sign = true, incr = true, slope_ok = true;
        ojson data = ojson::object();
        for (int p = 0; p < nb; ++p) {
            std::vector<double> x, y;
            for (int i = 0; i < NL; ++i) {
                for (int q = 0; q < nb; ++q) {
                    double d = sets[i].dtn(q, p).real();
                    if (q == p) sign = sign && d > 0;
                    else sign = sign && d <= cfg.tol;
                    if (i) incr = incr && d >= sets[i - 1].dtn(q, p).real() - cfg.tol * (1 + std::abs(d));
                }
                if (std::find(window.begin(), window.end(), i) != window.end()) {
                    x.push_back(std::log(lambdas[i]));
                    y.push_back(std::log(sets[i].dtn(p, p).real()));
                }
            }
            auto f = fit_line(x, y);
            data["slope_p" + std::to_string(p)] = f.slope;
            slope_ok = slope_ok && f.ok() && std::abs(f.slope - 1 / (S + 1)) <= cfg.slope_tol;
        }
        ojson diag = ojson::array();
        for (int i = 0; i < NL; ++i) diag.push_back(sets[i].dtn(0, 0).real());
        data["diagonal_p0"] = diag;
        rep.add("d_normal_derivative_signs", sign && incr, {{"signs", sign}, {"increasing", incr}});
        rep.add("d_normal_derivative_slope", slope_ok, data);
    }

    // (e) exponential decay in the chemical metric
    {
        std::vector<double> du, lu, dl, ll;
        int used = 0;
        for (int i : window) {
            int k = k_of_lambda(spec, lambdas[i], cfg.C_cal);
            if (k < 1) continue;
            ++used;
            ChemicalGraph cg(g, partition_at_scale(spec, k));
            for (int p = 0; p < nb; ++p) {
                auto d = cg.distance_field(p);
                for (int v = 0; v < n; ++v) {
                    double e = val(i, p, v);
                    if (!(e > cfg.floor)) continue;
                    du.push_back(d[v]);
                    lu.push_back(std::log(e));
                    if (!cg.touches_other_boundary(v, p)) {
                        dl.push_back(d[v]);
                        ll.push_back(std::log(e));
                    }
                }
            }
        }
        auto up = upper_decay_envelope(du, lu), dn = lower_decay_envelope(dl, ll);
        bool ok = up.valid() && dn.valid() && up.kappa > 0 && dn.kappa > 0 && up.violations == 0 && dn.violations == 0;
        rep.add("e_chemical_decay_envelopes", ok, {{"lambdas_used", used}, {"upper", up.to_json()}, {"lower", dn.to_json()}},
                used ? "" : "no resolved lambda with k(lambda) >= 1", used > 0);
        rep.add("e_upper_rate_at_least_one", up.valid() && up.kappa >= 1, {{"kappa", up.kappa}}, "", false);
    }

    // random (p, lambda, x) triples
    if (cfg.random_triples > 0) {
        std::mt19937_64 rng(cfg.seed);
        const double a = std::log(lambdas.front()), b = std::log(lambdas.back());
        struct T { int p, v; double l; };
        std::vector<T> tr(cfg.random_triples);
        for (auto& t : tr) {
            t.p = static_cast<int>(rng() % nb);
            t.v = static_cast<int>(rng() % n);
            t.l = std::exp(a + (b - a) * uniform01(rng));
        }
        std::vector<int> bad(tr.size(), 0);
        std::vector<double> worst(tr.size(), 0);
        parallel_for(static_cast<int>(tr.size()), [&](int i) {
            auto e1 = eta(g, tr[i].p, tr[i].l), e2 = eta(g, tr[i].p, 2 * tr[i].l);
            double x1 = e1.values(tr[i].v).real(), x2 = e2.values(tr[i].v).real();
            double w = std::max({-x1, x1 - zeta[tr[i].p](tr[i].v), x2 - x1});
            worst[i] = w;
            bad[i] = w > cfg.tol;
        });
        int nbad = 0;
        double w = 0;
        for (size_t i = 0; i < tr.size(); ++i) nbad += bad[i], w = std::max(w, worst[i]);
        rep.add("random_triples", nbad == 0, {{"triples", cfg.random_triples}, {"failures", nbad}, {"worst_excess", w}});
    }
    return rep;
}

}  // namespace fractal
