#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseCholesky>

#include "fractal/eta.hpp"

namespace fractal {

using PairList = std::vector<std::pair<int, int>>;

struct KernelGrid {
    cplx z = 0;
    double t = std::numeric_limits<double>::quiet_NaN();
    PairList pairs;
    std::vector<cplx> values;
    std::vector<double> tail;
    std::string provenance;
    double symmetry_residual = 0;
};

// Distinct points of a pair list, in first-appearance order, with the index of each pair end.
inline std::vector<int> pair_points(const PairList& pairs, std::vector<std::pair<int, int>>& idx) {
    std::vector<int> pts;
    auto find = [&](int v) {
        auto it = std::find(pts.begin(), pts.end(), v);
        if (it != pts.end()) return static_cast<int>(it - pts.begin());
        pts.push_back(v);
        return static_cast<int>(pts.size()) - 1;
    };
    idx.clear();
    for (auto [x, y] : pairs) {
        int a = find(x);
        idx.push_back({a, find(y)});
    }
    return pts;
}

inline double matrix_asymmetry(const MatC& K) {
    double s = K.cwiseAbs().maxCoeff();
    return s > 0 ? (K - K.transpose()).cwiseAbs().maxCoeff() / s : 0.0;
}

// G = sum over cells F_w(X), |w| <= D, of r_w * Psi^{(r_w mu_w z)} in cell coordinates.
class SeriesResolvent {
public:
    SeriesResolvent(PsiCache& cache, int m, cplx z, int depth) : cache_(&cache), m_(m), D_(depth), z_(z) {
        if (depth < 0 || depth > m - 2) throw ConfigError("series depth must satisfy 0 <= D <= m-2");
        g_ = &cache.graphs().at(m);
        const auto& s = g_->spec;
        rmax_ = *std::max_element(s.r.begin(), s.r.end());
        for (int j = 0; j < s.letters; ++j) rm_max_ = std::max(rm_max_, s.r[j] * s.mu[j]);
    }

    const LevelGraph& graph() const { return *g_; }
    int depth() const { return D_; }
    cplx z() const { return z_; }

    // Contribution of each depth 0..D (or 0..upto) to the kernel on xs x ys.
    std::vector<MatC> terms(const std::vector<int>& xs, const std::vector<int>& ys, int upto = -1) {
        std::vector<MatC> out;
        for (int n = 0; n <= (upto < 0 ? D_ : std::min(upto, D_)); ++n) {
            MatC T = MatC::Zero(xs.size(), ys.size());
            auto hx = hits(xs, n), hy = hits(ys, n);
            size_t a = 0, b = 0;
            while (a < hx.size() && b < hy.size()) {
                if (hx[a].cell < hy[b].cell) { ++a; continue; }
                if (hy[b].cell < hx[a].cell) { ++b; continue; }
                std::int64_t c = hx[a].cell;
                size_t a1 = a, b1 = b;
                while (a1 < hx.size() && hx[a1].cell == c) ++a1;
                while (b1 < hy.size() && hy[b1].cell == c) ++b1;
                const PsiData& d = psi_for(n, c);
                const int nj = static_cast<int>(d.junctions.size());
                MatC X(a1 - a, nj), Y(b1 - b, nj);
                for (size_t i = a; i < a1; ++i) X.row(i - a) = d.psi.row(hx[i].local);
                for (size_t i = b; i < b1; ++i) Y.row(i - b) = d.psi.row(hy[i].local);
                MatC blk = g_->ratio_of_cell(c, n) * (X * d.G * Y.transpose());
                for (size_t i = a; i < a1; ++i)
                    for (size_t k = b; k < b1; ++k) T(hx[i].idx, hy[k].idx) += blk(i - a, k - b);
                a = a1;
                b = b1;
            }
            out.push_back(std::move(T));
        }
        return out;
    }

    MatC matrix(const std::vector<int>& xs, const std::vector<int>& ys) {
        MatC K = MatC::Zero(xs.size(), ys.size());
        for (auto& T : terms(xs, ys)) K += T;
        return K;
    }

    // Zero when the omitted depths cannot see the pair; otherwise a geometric estimate from
    // the sup of Psi at the first omitted depth.
    double tail_bound(int x, int y) {
        if (D_ + 1 >= m_) return 0.0;
        auto cx = g_->cells_containing(x, D_ + 1), cy = g_->cells_containing(y, D_ + 1);
        int common = 0;
        for (auto c : cx) common += std::count(cy.begin(), cy.end(), c) ? 1 : 0;
        if (common == 0) return 0.0;
        if (x < g_->nv[D_ + 1] || y < g_->nv[D_ + 1]) return 0.0;
        if (psi_sup_ < 0) {
            const PsiData& d = cache_->psi(m_ - D_ - 1, z_ * std::pow(rm_max_, D_ + 1));
            double ps = d.psi.rowwise().squaredNorm().maxCoeff();
            psi_sup_ = d.G.norm() * ps;
        }
        return common * psi_sup_ * std::pow(rmax_, D_ + 1) / (1 - rmax_);
    }

    KernelGrid grid(const PairList& pairs) {
        std::vector<std::pair<int, int>> idx;
        auto pts = pair_points(pairs, idx);
        MatC K = matrix(pts, pts);
        KernelGrid kg;
        kg.z = z_;
        kg.pairs = pairs;
        kg.provenance = "series depth " + std::to_string(D_) + " level " + std::to_string(m_);
        kg.symmetry_residual = matrix_asymmetry(K);
        for (size_t i = 0; i < pairs.size(); ++i) {
            kg.values.push_back(K(idx[i].first, idx[i].second));
            kg.tail.push_back(tail_bound(pairs[i].first, pairs[i].second));
        }
        return kg;
    }

    // u = sum_y G(x,y) f(y) m_y through per-cell moments.
    VecC apply(const VecC& f) {
        const LevelGraph& g = *g_;
        const int N = g.size();
        if (f.size() != N) throw DomainError("field length does not match the level graph");
        VecC u = VecC::Zero(N);
        std::vector<int> all(N);
        for (int v = 0; v < N; ++v) all[v] = v;
        for (int n = 0; n <= D_; ++n) {
            auto h = hits(all, n);
            for (size_t a = 0; a < h.size();) {
                std::int64_t c = h[a].cell;
                size_t a1 = a;
                while (a1 < h.size() && h[a1].cell == c) ++a1;
                const PsiData& d = psi_for(n, c);
                VecC mom = VecC::Zero(d.junctions.size());
                for (size_t i = a; i < a1; ++i) mom += d.psi.row(h[i].local).transpose() * (f(h[i].idx) * g.mass[h[i].idx]);
                VecC coef = g.ratio_of_cell(c, n) * (d.G * mom);
                for (size_t i = a; i < a1; ++i) u(h[i].idx) += (d.psi.row(h[i].local) * coef)(0);
                a = a1;
            }
        }
        return u;
    }

    double apply_residual(const VecC& u, const VecC& f) const {
        const LevelGraph& g = *g_;
        double w = 0;
        for (int x = g.nb(); x < g.size(); ++x) {
            cplx s = z_ * g.mass[x] * u(x) - g.mass[x] * f(x);
            for (int k = g.adj_ptr[x]; k < g.adj_ptr[x + 1]; ++k) s += g.adj_c[k] * (u(x) - u(g.adj_idx[k]));
            w = std::max(w, std::abs(s));
        }
        double fn = f.cwiseAbs().maxCoeff();
        return fn > 0 ? w / fn : w;
    }

private:
    struct Hit {
        std::int64_t cell;
        int local, idx;
        bool operator<(const Hit& o) const { return cell != o.cell ? cell < o.cell : idx < o.idx; }
        bool operator==(const Hit& o) const { return cell == o.cell && idx == o.idx; }
    };

    std::vector<Hit> hits(const std::vector<int>& pts, int n) const {
        const LevelGraph& g = *g_;
        const int nb = g.nb();
        const std::int64_t div = g.cells_at[m_ - n];
        const auto& sub = g.addr[m_ - n];
        std::vector<Hit> h;
        for (size_t i = 0; i < pts.size(); ++i) {
            int v = pts[i];
            for (int k = g.vaddr_ptr[v]; k < g.vaddr_ptr[v + 1]; ++k) {
                std::int64_t c = g.vaddr[k] / nb;
                h.push_back({c / div, sub[(c % div) * nb + g.vaddr[k] % nb], static_cast<int>(i)});
            }
        }
        std::sort(h.begin(), h.end());
        h.erase(std::unique(h.begin(), h.end()), h.end());
        return h;
    }

    const PsiData& psi_for(int n, std::int64_t c) {
        cplx zw = g_->ratio_of_cell(c, n) * g_->mass_of_cell(c, n) * z_;
        try {
            return cache_->psi(m_ - n, zw);
        } catch (const SingularityError& e) {
            throw SingularityError("cell w = '" + word_string(g_->cell_word(c, n), g_->spec.letters) +
                                   "' hits the discrete spectrum at rescaled z: " + e.what());
        }
    }

    PsiCache* cache_;
    const LevelGraph* g_;
    int m_, D_;
    cplx z_;
    double rmax_ = 0, rm_max_ = 0;
    double psi_sup_ = -1;
};

inline KernelGrid resolvent_series(PsiCache& cache, int m, cplx z, int depth, const PairList& pairs) {
    SeriesResolvent R(cache, m, z, depth);
    return R.grid(pairs);
}

// Diagonal of (M+L)^{-1} (Dirichlet: interior block) at the requested points.
inline std::vector<double> unit_shift_diagonal(const LevelGraph& g, Boundary bc, const std::vector<int>& pts) {
    std::vector<double> out(pts.size(), 0.0);
    if (bc == Boundary::Dirichlet) {
        ShiftedSolver S(g, 1.0);
        for (size_t i = 0; i < pts.size(); ++i) {
            if (pts[i] < g.nb()) continue;
            VecC b = VecC::Zero(g.interior_size());
            b(pts[i] - g.nb()) = 1.0;
            out[i] = S.solve(b)(pts[i] - g.nb()).real();
        }
        return out;
    }
    SpMat A = graph_laplacian(g);
    for (int v = 0; v < g.size(); ++v) A.coeffRef(v, v) += g.mass[v];
    Eigen::SimplicialLDLT<SpMat> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericalError("factorization of M+L failed");
    for (size_t i = 0; i < pts.size(); ++i) {
        Eigen::VectorXd b = Eigen::VectorXd::Zero(g.size());
        b(pts[i]) = 1;
        out[i] = ldlt.solve(b)(pts[i]);
    }
    return out;
}

// sup over lambda >= lo of (1+lambda)/|z+lambda|.
inline double shift_ratio_sup(cplx z, double lo) {
    double s = 1.0;
    for (int i = 0; i <= 2400; ++i) {
        double l = lo * std::pow(10.0, i / 100.0);
        s = std::max(s, (1 + l) / std::abs(z + l));
    }
    return s * 1.01;
}

// G(x,y) = sum_j phi_j(x) phi_j(y) / (z + lambda_j) over the computed eigenpairs. The tail is
// bounded by Cauchy-Schwarz against the exact unit-shift diagonal.
inline KernelGrid resolvent_spectral(const LevelGraph& g, const Spectrum& sp, cplx z, const PairList& pairs) {
    const int J = static_cast<int>(sp.lambda.size());
    if (J == 0 || sp.phi.cols() != J) throw DomainError("spectral resolvent needs eigenvectors");
    int near = 0;
    for (int j = 0; j < J; ++j)
        if (std::abs(z + sp.lambda(j)) < std::abs(z + sp.lambda(near))) near = j;
    if (std::abs(z + sp.lambda(near)) <= 1e-10 * (1 + std::abs(z)))
        throw SingularityError("z coincides with -lambda_" + std::to_string(near) + " = " + std::to_string(-sp.lambda(near)));
    std::vector<std::pair<int, int>> idx;
    auto pts = pair_points(pairs, idx);
    auto diag = unit_shift_diagonal(g, sp.bc, pts);
    const int full = sp.bc == Boundary::Dirichlet ? g.interior_size() : g.size();
    const double cz = J < full ? shift_ratio_sup(z, sp.lambda(J - 1)) : 0.0;
    std::vector<double> rest(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
        double s = 0;
        for (int j = 0; j < J; ++j) s += sp.phi(pts[i], j) * sp.phi(pts[i], j) / (1 + sp.lambda(j));
        rest[i] = std::max(0.0, diag[i] - s);
    }
    KernelGrid kg;
    kg.z = z;
    kg.pairs = pairs;
    kg.provenance = "spectral count " + std::to_string(J) + " level " + std::to_string(g.level);
    VecC w(J);
    for (int j = 0; j < J; ++j) w(j) = 1.0 / (z + sp.lambda(j));
    for (size_t i = 0; i < pairs.size(); ++i) {
        auto [a, b] = idx[i];
        cplx v = 0;
        for (int j = 0; j < J; ++j) v += sp.phi(pts[a], j) * sp.phi(pts[b], j) * w(j);
        kg.values.push_back(v);
        kg.tail.push_back(cz * std::sqrt(rest[a] * rest[b]));
    }
    return kg;
}

// Neumann resolvent: G + sum C_pq eta_p(x) eta_q(y), C the inverse of [d_n eta_q (p)].
inline KernelGrid neumann_resolvent(PsiCache& cache, int m, double lambda, const PairList& pairs, int depth = -1) {
    if (!(lambda > 0)) throw DomainError("Neumann resolvent needs lambda > 0");
    if (depth < 0) depth = m - 2;
    SeriesResolvent R(cache, m, lambda, depth);
    const EtaSet& E = cache.etas(m, lambda);
    Eigen::FullPivLU<MatC> lu(E.dtn);
    if (!lu.isInvertible()) throw NumericalError("normal derivative matrix of eta is singular");
    MatC C = lu.inverse();
    if ((E.dtn * C - MatC::Identity(C.rows(), C.cols())).cwiseAbs().maxCoeff() > 1e-8)
        throw NumericalError("normal derivative matrix of eta is numerically singular");
    std::vector<std::pair<int, int>> idx;
    auto pts = pair_points(pairs, idx);
    MatC K = R.matrix(pts, pts);
    const int nb = static_cast<int>(C.rows());
    MatC H(pts.size(), nb);
    for (size_t i = 0; i < pts.size(); ++i)
        for (int p = 0; p < nb; ++p) H(i, p) = E.eta[p](pts[i]);
    K += H * C * H.transpose();
    KernelGrid kg;
    kg.z = lambda;
    kg.pairs = pairs;
    kg.provenance = "neumann series depth " + std::to_string(depth) + " level " + std::to_string(m);
    kg.symmetry_residual = matrix_asymmetry(K);
    for (size_t i = 0; i < pairs.size(); ++i) {
        kg.values.push_back(K(idx[i].first, idx[i].second));
        kg.tail.push_back(R.tail_bound(pairs[i].first, pairs[i].second));
    }
    return kg;
}

// Distinct random interior vertices of V_n (n <= graph level), deterministic in the seed.
inline std::vector<int> sample_points(const LevelGraph& g, int n, int count, unsigned seed) {
    std::mt19937_64 rng(seed);
    const int lo = g.nb(), hi = g.nv[std::min(n, g.level)];
    count = std::min(count, hi - lo);
    std::vector<int> out;
    while (static_cast<int>(out.size()) < count) {
        int v = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo));
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

struct ResolventVerifyConfig {
    double C_cal = 1.0;
    int points = 24;
    unsigned seed = 3;
};

inline VerificationReport verify_resolvent_bounds(const FractalSpec& spec, const std::vector<double>& lambdas, int m,
                                                  const ResolventVerifyConfig& cfg = {}, std::vector<int> pts = {}) {
    VerificationReport rep;
    rep.name = "resolvent";
    const double S = spec.S, a = 1 / (S + 1);
    PsiCache cache(spec);
    const LevelGraph& g = cache.graphs().at(m);
    const int nb = g.nb();
    if (pts.empty()) pts = sample_points(g, m - 1, cfg.points, cfg.seed);
    rep.meta = {{"spec", spec.name}, {"level", m}, {"depth", m - 2}, {"C_cal", cfg.C_cal}, {"lambda_grid", lambdas},
                {"points", static_cast<int>(pts.size())}};
    std::vector<double> ga_d, ga_l, gb_d, gb_l, nd_d, nd_l, nl_d, nl_l, mx_d, mx_l;
    bool positive = true, monotone = true, dropped = false;
    for (double l : lambdas) {
        int k = k_of_lambda(spec, l, cfg.C_cal);
        if (!resolves_scale(spec, m, k)) {
            dropped = true;
            continue;
        }
        ChemicalGraph cg(g, partition_at_scale(spec, k));
        SeriesResolvent R(cache, m, l, m - 2);
        auto T = R.terms(pts, pts);
        MatC K = MatC::Zero(pts.size(), pts.size());
        for (auto& t : T) {
            MatC prev = K;
            K += t;
            positive = positive && t.real().minCoeff() >= -1e-14 * std::max(1.0, K.cwiseAbs().maxCoeff());
            monotone = monotone && (K.real() - prev.real()).minCoeff() >= -1e-14;
        }
        double pre = std::pow(1 + l, a);
        for (size_t i = 0; i < pts.size(); ++i) {
            auto d = cg.distance_field(pts[i]);
            bool edge_i = cg.touches_other_boundary(pts[i], -1);
            for (size_t j = 0; j < pts.size(); ++j) {
                double v = K(i, j).real();
                if (!(v > 0)) continue;
                ga_d.push_back(d[pts[j]]);
                ga_l.push_back(std::log(pre * v));
                if (!edge_i && !cg.touches_other_boundary(pts[j], -1)) {
                    gb_d.push_back(d[pts[j]]);
                    gb_l.push_back(std::log(pre * v));
                }
            }
        }
        // -d_n G(., y)(p) = eta_p(y) holds exactly for the discrete kernel
        const EtaSet& E = cache.etas(m, l);
        for (int p = 0; p < nb; ++p) {
            auto d = cg.distance_field(p);
            for (int y : pts) {
                double v = E.eta[p](y).real();
                if (!(v > 1e-13)) continue;
                nd_d.push_back(d[y]);
                nd_l.push_back(std::log(v));
                if (!cg.touches_other_boundary(y, p)) {
                    nl_d.push_back(d[y]);
                    nl_l.push_back(std::log(v));
                }
            }
            for (int q = 0; q < nb; ++q) {
                if (q == p) continue;
                double v = -E.dtn(p, q).real() / pre;
                if (!(v > 1e-300)) continue;
                mx_d.push_back(d[q]);
                mx_l.push_back(std::log(v));
            }
        }
    }
    auto add_pair = [&](const std::string& id, const std::vector<double>& du, const std::vector<double>& lu,
                        const std::vector<double>& dl, const std::vector<double>& ll) {
        auto up = upper_decay_envelope(du, lu), lo = lower_decay_envelope(dl, ll);
        bool spread = !du.empty() && *std::max_element(du.begin(), du.end()) > 0;
        bool ok = up.valid() && lo.valid() && spread && up.kappa > 0 && lo.kappa > 0 && up.violations == 0 && lo.violations == 0;
        rep.add(id, ok, {{"upper", up.to_json()}, {"lower", lo.to_json()}}, spread ? "" : "no samples at positive distance");
    };
    add_pair("a_kernel_envelopes", ga_d, ga_l, gb_d, gb_l);
    add_pair("b_boundary_derivative_envelopes", nd_d, nd_l, nl_d, nl_l);
    add_pair("c_mixed_derivative_envelopes", mx_d, mx_l, mx_d, mx_l);
    rep.add("series_terms_positive", positive);
    rep.add("partial_sums_nondecreasing", monotone);
    if (dropped) rep.meta["note"] = "lambdas whose k(lambda) cells are not resolved were skipped";
    return rep;
}

}  // namespace fractal
