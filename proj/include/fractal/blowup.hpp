#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fractal/resolvent.hpp"

namespace fractal {

// Infinite word omega = preperiod followed by period repeated forever.
struct InfiniteWord {
    Word preperiod, period;

    int letter(int i) const {  // omega_i, i >= 1
        if (i < 1) throw DomainError("letters of omega are indexed from 1");
        if (i <= static_cast<int>(preperiod.size())) return preperiod[i - 1];
        if (period.empty()) throw ConfigError("omega needs a non-empty period");
        return period[(i - 1 - preperiod.size()) % period.size()];
    }
    // omega eventually constant: Omega has a boundary point
    bool eventually_constant() const {
        return !period.empty() && std::all_of(period.begin(), period.end(), [&](int j) { return j == period[0]; });
    }
};

// "pre:period" with letters as digits, e.g. ":0" or "12:0".
inline InfiniteWord parse_infinite_word(const std::string& text, int letters) {
    auto colon = text.find(':');
    std::string a = colon == std::string::npos ? std::string() : text.substr(0, colon);
    std::string b = colon == std::string::npos ? text : text.substr(colon + 1);
    auto conv = [&](const std::string& s) {
        Word w;
        for (char c : s) {
            if (c < '0' || c - '0' >= letters) throw ConfigError("bad letter '" + std::string(1, c) + "' in omega");
            w.push_back(c - '0');
        }
        return w;
    };
    InfiniteWord o{conv(a), conv(b)};
    if (o.period.empty()) throw ConfigError("omega needs a non-empty period");
    return o;
}

// A point F_{omega_1}^{-1} ... F_{omega_depth}^{-1} F_word(q) of Omega_{-depth}.
struct BlowupPoint {
    int depth = 0;
    Word word;
    int label = 0;
};

// "word:label" or "word:label@depth".
inline BlowupPoint parse_blowup_point(const std::string& text, const FractalSpec& s) {
    BlowupPoint p;
    std::string t = text;
    if (auto at = t.find('@'); at != std::string::npos) {
        try {
            p.depth = std::stoi(t.substr(at + 1));
        } catch (...) {
            throw ConfigError("bad blowup depth in '" + text + "'");
        }
        t = t.substr(0, at);
    }
    auto colon = t.find(':');
    if (colon == std::string::npos || p.depth < 0) throw ConfigError("blowup point must look like word:label[@depth]");
    for (char c : t.substr(0, colon)) {
        if (c < '0' || c - '0' >= s.letters) throw ConfigError("bad letter in '" + text + "'");
        p.word.push_back(c - '0');
    }
    try {
        p.label = std::stoi(t.substr(colon + 1));
    } catch (...) {
        throw ConfigError("bad label in '" + text + "'");
    }
    if (p.label < 0 || p.label >= s.nb()) throw ConfigError("label out of range in '" + text + "'");
    return p;
}

inline std::string blowup_point_name(const BlowupPoint& p) {
    return word_string(p.word) + ":" + std::to_string(p.label) + (p.depth ? "@" + std::to_string(p.depth) : "");
}

// G_{-n} evaluated through X: G_{-n}(x,y) = r^{-1} G_0^{(z / (r mu))}(Phi_n x, Phi_n y), with
// r, mu those of [omega]_n and Phi_n = F_{omega_n} o ... o F_{omega_1}. The graph level grows
// with n so the mesh on Omega_{-n} stays that of X at level base_level.
class BlowupResolvent {
public:
    BlowupResolvent(const FractalSpec& spec, InfiniteWord omega, cplx z, int base_level)
        : spec_(spec), cache_(spec), omega_(std::move(omega)), z_(z), base_(base_level) {
        if (base_level < 2) throw ConfigError("blowup base level must be >= 2");
    }

    PsiCache& cache() { return cache_; }
    int level(int n) const { return base_ + n; }

    double ratio(int n) const {
        double r = 1;
        for (int i = 1; i <= n; ++i) r *= spec_.r[omega_.letter(i)];
        return r;
    }
    double mass(int n) const {
        double m = 1;
        for (int i = 1; i <= n; ++i) m *= spec_.mu[omega_.letter(i)];
        return m;
    }
    cplx scaled_z(int n) const { return z_ / (ratio(n) * mass(n)); }

    // Vertex of the level-(base+n) graph representing Phi_n(p).
    int image(const BlowupPoint& p, int n) {
        if (p.depth > n) throw DomainError("point " + blowup_point_name(p) + " is outside Omega_-" + std::to_string(n));
        Word w;
        for (int i = n; i > p.depth; --i) w.push_back(omega_.letter(i));
        w.insert(w.end(), p.word.begin(), p.word.end());
        const LevelGraph& g = cache_.graphs().at(level(n));
        if (static_cast<int>(w.size()) > g.level) throw DomainError("point address deeper than the blowup mesh");
        return g.vertex(w, p.label);
    }

    MatC values(int n, const std::vector<BlowupPoint>& xs, const std::vector<BlowupPoint>& ys) {
        SeriesResolvent R = series(n);
        return R.matrix(images(xs, n), images(ys, n)) / ratio(n);
    }

    double tail(int n, const BlowupPoint& x, const BlowupPoint& y) {
        SeriesResolvent R = series(n);
        return R.tail_bound(image(x, n), image(y, n)) / ratio(n);
    }

    // G_{-(n+1)} - G_{-n} on Omega_{-n}: the single new shell term r^{-1} Psi at the root of X.
    MatC increment(int n, const std::vector<BlowupPoint>& xs, const std::vector<BlowupPoint>& ys) {
        SeriesResolvent R = series(n + 1);
        return R.terms(images(xs, n + 1), images(ys, n + 1), 0)[0] / ratio(n + 1);
    }

private:
    SeriesResolvent series(int n) {
        try {
            return SeriesResolvent(cache_, level(n), scaled_z(n), level(n) - 2);
        } catch (const SingularityError& e) {
            throw SingularityError("blowup scale n=" + std::to_string(n) + ": " + e.what());
        }
    }

    std::vector<int> images(const std::vector<BlowupPoint>& ps, int n) {
        std::vector<int> out;
        for (auto& p : ps) out.push_back(image(p, n));
        return out;
    }

    FractalSpec spec_;
    PsiCache cache_;
    InfiniteWord omega_;
    cplx z_;
    int base_;
};

inline KernelGrid blowup_resolvent(const FractalSpec& spec, const InfiniteWord& omega, int n, cplx z,
                                   const std::vector<std::pair<BlowupPoint, BlowupPoint>>& pairs, int base_level) {
    BlowupResolvent B(spec, omega, z, base_level);
    std::vector<BlowupPoint> xs, ys;
    for (auto& [x, y] : pairs) xs.push_back(x), ys.push_back(y);
    MatC K = B.values(n, xs, ys);
    KernelGrid kg;
    kg.z = z;
    kg.provenance = "blowup n=" + std::to_string(n) + " base level " + std::to_string(base_level);
    for (size_t i = 0; i < pairs.size(); ++i) {
        kg.pairs.push_back({B.image(xs[i], n), B.image(ys[i], n)});
        kg.values.push_back(K(i, i));
        kg.tail.push_back(B.tail(n, xs[i], ys[i]));
    }
    MatC S = B.values(n, ys, xs);
    double asym = 0, sc = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        asym = std::max(asym, std::abs(K(i, i) - S(i, i)));
        sc = std::max(sc, std::abs(K(i, i)));
    }
    kg.symmetry_residual = sc > 0 ? asym / sc : 0.0;
    return kg;
}

inline VerificationReport blowup_convergence(const FractalSpec& spec, const InfiniteWord& omega, int n_max, cplx z,
                                             const std::vector<std::pair<BlowupPoint, BlowupPoint>>& pairs, int base_level) {
    VerificationReport rep;
    rep.name = "blowup";
    BlowupResolvent B(spec, omega, z, base_level);
    std::vector<BlowupPoint> xs, ys;
    int n0 = 0;
    for (auto& [x, y] : pairs) {
        xs.push_back(x);
        ys.push_back(y);
        n0 = std::max({n0, x.depth, y.depth});
    }
    ojson names = ojson::array();
    for (auto& [x, y] : pairs) names.push_back({blowup_point_name(x), blowup_point_name(y)});
    rep.meta = {{"spec", spec.name}, {"omega_preperiod", word_string(omega.preperiod)}, {"omega_period", word_string(omega.period)},
                {"z", {z.real(), z.imag()}}, {"n_max", n_max}, {"base_level", base_level}, {"pairs", names}};
    auto diag = [](const MatC& M) {
        VecC d(M.rows());
        for (int i = 0; i < M.rows(); ++i) d(i) = M(i, i);
        return d;
    };
    // per-n increments over the pairs present at that depth
    std::vector<double> sup;
    double exhaustion = 0;
    VecC prev;
    ojson incs = ojson::array(), vals = ojson::array();
    for (int n = 0; n < n_max; ++n) {
        std::vector<BlowupPoint> px, py;
        for (size_t i = 0; i < pairs.size(); ++i)
            if (xs[i].depth <= n && ys[i].depth <= n) px.push_back(xs[i]), py.push_back(ys[i]);
        if (px.empty()) {
            sup.push_back(std::numeric_limits<double>::quiet_NaN());
            incs.push_back(nullptr);
            continue;
        }
        VecC inc = diag(B.increment(n, px, py));
        VecC a = diag(B.values(n, px, py)), b = diag(B.values(n + 1, px, py));
        double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
        exhaustion = std::max(exhaustion, (b - a - inc).cwiseAbs().maxCoeff() / scale);
        sup.push_back(inc.cwiseAbs().maxCoeff());
        incs.push_back(sup.back());
    }
    bool dec = true;
    ojson ratios = ojson::array();
    for (int n = n0 + 1; n < n_max; ++n) {
        dec = dec && sup[n] < sup[n - 1];
        ratios.push_back(sup[n - 1] > 0 ? sup[n] / sup[n - 1] : std::numeric_limits<double>::quiet_NaN());
    }
    rep.add("increments_strictly_decreasing", dec && n_max - n0 >= 2, {{"sup_increments", incs}, {"ratios", ratios}});
    rep.add("exhaustion_identity", exhaustion < 1e-9, {{"max_residual", exhaustion}});
    VecC last = diag(B.values(n_max, xs, ys));
    for (int i = 0; i < last.size(); ++i) vals.push_back({last(i).real(), last(i).imag()});
    double q = ratios.empty() ? std::numeric_limits<double>::quiet_NaN() : ratios.back().get<double>();
    double cert = (std::isfinite(q) && q < 1) ? sup.back() * q / (1 - q) : std::numeric_limits<double>::infinity();
    rep.add("limit_estimate", std::isfinite(cert), {{"values", vals}, {"cauchy_tail", cert}}, "", false);
    if (omega.eventually_constant()) {
        // the fixed point of F_j (j the repeated letter) is a boundary point of Omega
        const LevelGraph& g1 = B.cache().graphs().at(1);
        const int j = omega.period[0], nb = spec.nb();
        int fixed = -1;
        for (int q2 = 0; q2 < nb; ++q2)
            if (g1.addr[1][j * nb + q2] == q2) fixed = q2;
        double worst = 0;
        if (fixed >= 0) {
            int pre = static_cast<int>(omega.preperiod.size());
            BlowupPoint p{pre, {}, fixed};
            for (int n = std::max(pre, n0); n <= n_max; ++n) worst = std::max(worst, B.values(n, {p}, ys).cwiseAbs().maxCoeff());
        }
        rep.add("boundary_point_dirichlet", fixed >= 0 && worst == 0.0, {{"label", fixed}, {"max_abs", worst}});
    }
    return rep;
}

}  // namespace fractal
