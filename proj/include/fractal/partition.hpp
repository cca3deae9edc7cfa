#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Sparse>

#include "fractal/errors.hpp"
#include "fractal/level_graph.hpp"
#include "fractal/report.hpp"

namespace fractal {

struct Partition {
    double k = 0;
    std::vector<Word> words;
    int max_length = 0;
    double ratio_min = 0, ratio_max = 0;  // r_theta * e^k
    double mass_min = 0, mass_max = 0;    // mu_theta * e^{kS}
};

// theta is accepted iff r_theta <= e^{-k} < r of its parent; the empty word is always refined.
inline Partition partition_at_scale(const FractalSpec& spec, double k) {
    if (!(k >= 0)) throw DomainError("partition scale must be >= 0");
    Partition P;
    P.k = k;
    const double thr = std::exp(-k) * (1 + 1e-12);
    P.ratio_min = P.mass_min = std::numeric_limits<double>::infinity();
    std::vector<std::pair<Word, double>> stack{{Word{}, 1.0}};
    while (!stack.empty()) {
        auto [w, r] = stack.back();
        stack.pop_back();
        if (!w.empty() && r <= thr) {
            P.words.push_back(w);
            P.max_length = std::max<int>(P.max_length, w.size());
            if (P.words.size() > 20'000'000) throw CapacityError("partition too large");
            continue;
        }
        for (int j = spec.letters - 1; j >= 0; --j) {
            Word c = w;
            c.push_back(j);
            stack.push_back({c, r * spec.r[j]});
        }
    }
    for (auto& w : P.words) {
        double r = word_ratio(spec, w) * std::exp(k), m = word_mass(spec, w) * std::exp(k * spec.S);
        P.ratio_min = std::min(P.ratio_min, r);
        P.ratio_max = std::max(P.ratio_max, r);
        P.mass_min = std::min(P.mass_min, m);
        P.mass_max = std::max(P.mass_max, m);
    }
    return P;
}

// The graph Gamma_k realised on a level graph of level >= the longest partition word.
class ChemicalGraph {
public:
    ChemicalGraph(const LevelGraph& lg, const Partition& P) : lg_(&lg), P_(P) {
        if (lg.level < P.max_length)
            throw DomainError("level graph too shallow for the partition (need level " +
                              std::to_string(P.max_length) + ")");
        const int nb = lg.nb();
        gid_.assign(lg.size(), -1);
        corners_.resize(P.words.size());
        for (size_t t = 0; t < P.words.size(); ++t)
            for (int q = 0; q < nb; ++q) {
                int v = lg.vertex(P.words[t], q);
                if (gid_[v] < 0) {
                    gid_[v] = static_cast<int>(verts_.size());
                    verts_.push_back(v);
                }
                corners_[t].push_back(gid_[v]);
            }
        nbr_.resize(verts_.size());
        for (auto& c : corners_)
            for (int a : c)
                for (int b : c)
                    if (a != b) nbr_[a].push_back(b);
        for (auto& n : nbr_) {
            std::sort(n.begin(), n.end());
            n.erase(std::unique(n.begin(), n.end()), n.end());
        }
        // owning partition cell of every level-m cell
        const int m = lg.level;
        owner_.assign(lg.cells_at[m], -1);
        for (size_t t = 0; t < P.words.size(); ++t) {
            const int len = static_cast<int>(P.words[t].size());
            std::int64_t span = lg.cells_at[m - len], base = lg.cell_index(P.words[t]) * span;
            for (std::int64_t c = base; c < base + span; ++c) owner_[c] = static_cast<int>(t);
        }
    }

    const Partition& partition() const { return P_; }
    int graph_size() const { return static_cast<int>(verts_.size()); }
    int graph_vertex(int gv) const { return verts_[gv]; }
    int graph_id(int v) const { return gid_[v]; }
    const std::vector<int>& neighbors(int gv) const { return nbr_[gv]; }

    // Gamma_k vertices standing for a point: itself if it is a partition vertex, otherwise
    // the corners of the unique cell containing it.
    std::vector<int> sources(int v) const {
        if (gid_[v] >= 0) return {gid_[v]};
        int c = lg_->vaddr[lg_->vaddr_ptr[v]] / lg_->nb();
        return corners_[owner_[c]];
    }

    std::vector<int> bfs(const std::vector<int>& src) const {
        std::vector<int> d(verts_.size(), -1);
        std::deque<int> q;
        for (int s : src) {
            if (d[s] < 0) {
                d[s] = 0;
                q.push_back(s);
            }
        }
        while (!q.empty()) {
            int a = q.front();
            q.pop_front();
            for (int b : nbr_[a])
                if (d[b] < 0) {
                    d[b] = d[a] + 1;
                    q.push_back(b);
                }
        }
        return d;
    }

    // d_k from the point x to every vertex of the level graph.
    std::vector<int> distance_field(int x) const {
        auto d = bfs(sources(x));
        std::vector<int> out(lg_->size());
        for (int v = 0; v < lg_->size(); ++v) {
            int best = std::numeric_limits<int>::max();
            for (int s : sources(v)) {
                if (d[s] < 0) throw StructuralError("Gamma_k is disconnected");
                best = std::min(best, d[s]);
            }
            out[v] = best;
        }
        return out;
    }

    int distance(int x, int y) const {
        if (x == y) return 0;
        auto d = bfs(sources(x));
        int best = std::numeric_limits<int>::max();
        for (int s : sources(y)) {
            if (d[s] < 0) throw StructuralError("Gamma_k is disconnected");
            best = std::min(best, d[s]);
        }
        return best;
    }

    // Index of the partition cell containing v (any one if v is a partition vertex).
    int cell_of(int v) const { return owner_[lg_->vaddr[lg_->vaddr_ptr[v]] / lg_->nb()]; }
    const std::vector<int>& cell_corners(int t) const { return corners_[t]; }

    std::vector<int> cells_of(int v) const {
        std::vector<int> out;
        for (int k = lg_->vaddr_ptr[v]; k < lg_->vaddr_ptr[v + 1]; ++k) out.push_back(owner_[lg_->vaddr[k] / lg_->nb()]);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    // True when some partition cell containing v has a corner in V0 other than `keep`.
    bool touches_other_boundary(int v, int keep) const {
        for (int t : cells_of(v))
            for (int c : corners_[t]) {
                int u = verts_[c];
                if (u < lg_->nb() && u != keep) return true;
            }
        return false;
    }

private:
    const LevelGraph* lg_;
    Partition P_;
    std::vector<int> gid_, verts_;
    std::vector<std::vector<int>> corners_, nbr_;
    std::vector<int> owner_;
};

inline int chemical_distance(const LevelGraph& lg, const Partition& P, int x, int y) {
    return ChemicalGraph(lg, P).distance(x, y);
}

inline constexpr int kResistanceCapacity = 20000;

inline Eigen::SparseMatrix<double> graph_laplacian(const LevelGraph& lg) {
    std::vector<Eigen::Triplet<double>> t;
    for (int a = 0; a < lg.size(); ++a) {
        double s = 0;
        for (int k = lg.adj_ptr[a]; k < lg.adj_ptr[a + 1]; ++k) {
            t.emplace_back(a, lg.adj_idx[k], -lg.adj_c[k]);
            s += lg.adj_c[k];
        }
        t.emplace_back(a, a, s);
    }
    Eigen::SparseMatrix<double> L(lg.size(), lg.size());
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

// Effective resistances from x to every vertex: ground x, inject unit current at each y.
class ResistanceSolver {
public:
    ResistanceSolver(const LevelGraph& lg, int ground) : n_(lg.size()), ground_(ground) {
        if (lg.size() > kResistanceCapacity)
            throw CapacityError("effective resistance limited to " + std::to_string(kResistanceCapacity) +
                                " vertices");
        auto L = graph_laplacian(lg);
        std::vector<Eigen::Triplet<double>> t;
        for (int c = 0; c < L.outerSize(); ++c)
            for (Eigen::SparseMatrix<double>::InnerIterator it(L, c); it; ++it)
                if (it.row() != ground && it.col() != ground)
                    t.emplace_back(idx(it.row()), idx(it.col()), it.value());
        Eigen::SparseMatrix<double> A(n_ - 1, n_ - 1);
        A.setFromTriplets(t.begin(), t.end());
        solver_.compute(A);
        if (solver_.info() != Eigen::Success) throw StructuralError("resistance network is disconnected");
    }
    double operator()(int y) {
        if (y == ground_) return 0.0;
        Eigen::VectorXd b = Eigen::VectorXd::Zero(n_ - 1);
        b(idx(y)) = 1.0;
        Eigen::VectorXd u = solver_.solve(b);
        return u(idx(y));
    }

private:
    int idx(int v) const { return v < ground_ ? v : v - 1; }
    int n_, ground_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

inline double effective_resistance(const LevelGraph& lg, int x, int y) {
    if (x == y) return 0.0;
    return ResistanceSolver(lg, x)(y);
}

inline int k_of_lambda(const FractalSpec& spec, double lambda, double C_cal = 1.0) {
    if (!(lambda > 0)) throw DomainError("k(lambda) needs lambda > 0");
    if (!(C_cal > 0)) throw DomainError("k(lambda) needs C_cal > 0");
    double v = std::log(lambda) / (spec.S + 1) - std::log(C_cal) - 2.0;
    return std::max(0, static_cast<int>(std::floor(v + 1e-9)));
}

struct MetricSample {
    int x = 0, y = 0;
    double k = 0;
    int d_k = 0;
    double R = 0;
};

// Distance ratios d_{k+k'}/d_k against the bracket e^{k'} .. e^{(S+1)k'/2}.
inline VerificationReport distance_ratio_scan(const FractalSpec& spec, const std::vector<double>& ks, double kprime,
                                              const std::vector<std::pair<Word, int>>& x_pts,
                                              const std::vector<std::pair<Word, int>>& y_pts) {
    VerificationReport rep;
    rep.name = "distance_ratio_scan";
    rep.meta["k_prime"] = kprime;
    int need = 0;
    for (double k : ks) need = std::max(need, partition_at_scale(spec, k + kprime).max_length);
    for (auto& p : x_pts) need = std::max<int>(need, p.first.size());
    for (auto& p : y_pts) need = std::max<int>(need, p.first.size());
    LevelGraph lg = build_level_graph(spec, need);
    const double lo_scale = std::exp(kprime), hi_scale = std::exp((spec.S + 1) * kprime / 2);
    double cl_min = INFINITY, cl_max = 0, cu_min = INFINITY, cu_max = 0;
    ojson rows = ojson::array();
    int skipped = 0;
    for (size_t i = 0; i < x_pts.size() && i < y_pts.size(); ++i) {
        int x = lg.vertex(x_pts[i].first, x_pts[i].second), y = lg.vertex(y_pts[i].first, y_pts[i].second);
        if (x == y) {
            ++skipped;
            continue;
        }
        for (double k : ks) {
            int d0 = chemical_distance(lg, partition_at_scale(spec, k), x, y);
            int d1 = chemical_distance(lg, partition_at_scale(spec, k + kprime), x, y);
            if (d0 == 0) {
                ++skipped;
                continue;
            }
            double ratio = double(d1) / d0;
            double cl = ratio / lo_scale, cu = ratio / hi_scale;
            cl_min = std::min(cl_min, cl);
            cl_max = std::max(cl_max, cl);
            cu_min = std::min(cu_min, cu);
            cu_max = std::max(cu_max, cu);
            rows.push_back({{"pair", i}, {"k", k}, {"d_k", d0}, {"d_k_plus", d1}, {"ratio", ratio}});
        }
    }
    rep.meta["samples"] = rows;
    rep.meta["skipped"] = skipped;
    bool have = std::isfinite(cl_min);
    // constants must exist and stay within a factor 10 across the scanned scales
    rep.add("lower_constant", have && cl_min > 0 && cl_max / cl_min <= 10.0,
            {{"min", have ? cl_min : 0.0}, {"max", cl_max}, {"bracket", lo_scale}});
    rep.add("upper_constant", have && std::isfinite(cu_max) && cu_max / cu_min <= 10.0,
            {{"min", have ? cu_min : 0.0}, {"max", cu_max}, {"bracket", hi_scale}});
    return rep;
}

struct GammaFit {
    double gamma_k = NAN;      // slope of log d_k against k
    double gamma_R = NAN;      // slope of log d_k against log R at the finest k
    double residual = NAN;
    bool degenerate = false;
};

inline GammaFit estimate_gamma(const FractalSpec& spec, const std::vector<std::pair<int, int>>& pairs,
                               const LevelGraph& lg, const std::vector<double>& ks) {
    GammaFit g;
    if (ks.size() < 2 || pairs.size() < 1) {
        g.degenerate = true;
        return g;
    }
    std::vector<double> x, y;
    std::vector<ChemicalGraph> graphs;
    for (double k : ks) graphs.emplace_back(lg, partition_at_scale(spec, k));
    for (auto [a, b] : pairs)
        for (size_t i = 0; i < ks.size(); ++i) {
            int d = graphs[i].distance(a, b);
            if (d <= 0) continue;
            x.push_back(ks[i]);
            y.push_back(std::log(double(d)));
        }
    auto f = fit_line(x, y);
    g.gamma_k = f.slope;
    g.residual = f.rms;
    g.degenerate = !f.ok() || std::abs(f.slope) < 1e-3;
    if (pairs.size() >= 2 && lg.size() <= kResistanceCapacity) {
        std::vector<double> lx, ly;
        for (auto [a, b] : pairs) {
            int d = graphs.back().distance(a, b);
            double R = effective_resistance(lg, a, b);
            if (d > 0 && R > 0) {
                lx.push_back(std::log(R));
                ly.push_back(std::log(double(d)));
            }
        }
        auto fr = fit_line(lx, ly);
        if (fr.ok()) g.gamma_R = fr.slope;
    }
    return g;
}

// Metric axioms, R <~ e^{-k} d_k and neighbour comparability on a sample of vertices.
inline VerificationReport verify_metric(const LevelGraph& lg, double k, int samples, unsigned seed) {
    VerificationReport rep;
    rep.name = "metric";
    Partition P = partition_at_scale(lg.spec, k);
    ChemicalGraph cg(lg, P);
    rep.meta["k"] = k;
    rep.meta["cells"] = P.words.size();
    rep.meta["ratio_range"] = {P.ratio_min, P.ratio_max};
    rep.meta["mass_range"] = {P.mass_min, P.mass_max};
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> pick(0, cg.graph_size() - 1);
    bool tri = true, sym = true;
    for (int s = 0; s < samples; ++s) {
        int a = cg.graph_vertex(pick(rng)), b = cg.graph_vertex(pick(rng)), c = cg.graph_vertex(pick(rng));
        int ab = cg.distance(a, b), ba = cg.distance(b, a), bc = cg.distance(b, c), ac = cg.distance(a, c);
        sym = sym && ab == ba && cg.distance(a, a) == 0;
        tri = tri && ac <= ab + bc;
    }
    rep.add("symmetry", sym);
    rep.add("triangle", tri);
    // coverage: every word of maximal length has exactly one prefix in the partition
    {
        bool ok = true;
        const int L = P.max_length, J = lg.spec.letters;
        std::int64_t total = 1;
        for (int i = 0; i < L; ++i) total *= J;
        std::vector<int> hits(total, 0);
        for (auto& w : P.words) {
            std::int64_t span = 1, base = 0;
            for (size_t i = w.size(); i < static_cast<size_t>(L); ++i) span *= J;
            for (int j : w) base = base * J + j;
            for (std::int64_t c = base * span; c < (base + 1) * span; ++c) hits[c]++;
        }
        for (int h : hits) ok = ok && h == 1;
        rep.add("coverage", ok, {{"words", total}});
    }
    if (lg.size() <= kResistanceCapacity) {
        double cmax = 0, nmin = INFINITY, nmax = 0;
        for (int s = 0; s < std::min(samples, 20); ++s) {
            int a = cg.graph_vertex(pick(rng));
            ResistanceSolver R(lg, a);
            auto d = cg.bfs({cg.graph_id(a)});
            for (int gv = 0; gv < cg.graph_size(); ++gv) {
                if (d[gv] <= 0) continue;
                double rr = R(cg.graph_vertex(gv));
                cmax = std::max(cmax, rr / (std::exp(-k) * d[gv]));
                if (d[gv] == 1) {
                    nmin = std::min(nmin, rr * std::exp(k));
                    nmax = std::max(nmax, rr * std::exp(k));
                }
            }
        }
        rep.add("resistance_below_path", std::isfinite(cmax), {{"constant", cmax}});
        rep.add("neighbour_comparability", nmin > 0 && std::isfinite(nmax), {{"min", nmin}, {"max", nmax}});
    }
    return rep;
}

}  // namespace fractal
