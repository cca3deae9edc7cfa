#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "fractal/level_graph.hpp"
#include "fractal/linalg.hpp"
#include "fractal/partition.hpp"
#include "fractal/report.hpp"

namespace fractal {

// Stiffness L (energy form) and lumped mass M; the Laplacian is -M^{-1} L.
struct Operator {
    SpMat L;
    Eigen::VectorXd M;
};

inline Operator assemble_operator(const LevelGraph& lg) {
    Operator op;
    op.L = graph_laplacian(lg);
    op.M = Eigen::Map<const Eigen::VectorXd>(lg.mass.data(), lg.size());
    return op;
}

// Rows/columns of interior vertices; interior ids are nb..n-1, so index = id - nb.
inline SpMat interior_block(const SpMat& L, int nb) {
    const int n = static_cast<int>(L.rows()) - nb;
    std::vector<Eigen::Triplet<double>> t;
    for (int c = nb; c < L.outerSize(); ++c)
        for (SpMat::InnerIterator it(L, c); it; ++it)
            if (it.row() >= nb) t.emplace_back(it.row() - nb, c - nb, it.value());
    SpMat A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

// Factorisation of (zM + L) restricted to interior vertices (Dirichlet conditions on V0).
class ShiftedSolver {
public:
    ShiftedSolver(const LevelGraph& lg, cplx z) : lg_(&lg), z_(z), n_(lg.interior_size()), nb_(lg.nb()) {
        SpMat L = interior_block(graph_laplacian(lg), nb_);
        Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(lg.mass.data() + nb_, n_);
        if (n_ == 0) return;
        if (z.imag() == 0.0) {
            SpMat A = L;
            for (int i = 0; i < n_; ++i) A.coeffRef(i, i) += z.real() * m(i);
            A_real_ = A;
            if (z.real() >= 0) {
                ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(A);
                ok_ = ldlt_->info() == Eigen::Success;
            } else {
                lu_real_ = std::make_unique<Eigen::SparseLU<SpMat>>();
                lu_real_->analyzePattern(A);
                lu_real_->factorize(A);
                ok_ = lu_real_->info() == Eigen::Success;
            }
        } else {
            Eigen::SparseMatrix<cplx> A = L.cast<cplx>();
            for (int i = 0; i < n_; ++i) A.coeffRef(i, i) += z * m(i);
            A_cplx_ = A;
            lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>();
            lu_->analyzePattern(A);
            lu_->factorize(A);
            ok_ = lu_->info() == Eigen::Success;
        }
        if (!ok_) singular("factorisation failed");
        norm_ = A_norm();
    }

    cplx z() const { return z_; }
    int interior_size() const { return n_; }

    // Solves (zM+L)_II u = b and checks the result for near-singularity.
    VecC solve(const VecC& b) const {
        if (n_ == 0) return VecC();
        VecC u;
        if (ldlt_ || lu_real_) {
            Eigen::VectorXd re = b.real(), im = b.imag();
            Eigen::VectorXd ur = ldlt_ ? Eigen::VectorXd(ldlt_->solve(re)) : Eigen::VectorXd(lu_real_->solve(re));
            Eigen::VectorXd ui = Eigen::VectorXd::Zero(n_);
            if (im.cwiseAbs().maxCoeff() > 0) ui = ldlt_ ? Eigen::VectorXd(ldlt_->solve(im)) : Eigen::VectorXd(lu_real_->solve(im));
            u = ur.cast<cplx>() + cplx(0, 1) * ui.cast<cplx>();
            check(u, b, (A_real_.cast<cplx>() * u - b));
        } else {
            u = lu_->solve(b);
            check(u, b, (A_cplx_ * u - b));
        }
        return u;
    }

private:
    void check(const VecC& u, const VecC& b, const VecC& res) const {
        double bn = b.cwiseAbs().maxCoeff(), un = u.cwiseAbs().maxCoeff();
        if (!std::isfinite(un)) singular("non-finite solution");
        if (bn == 0) return;
        // growth far beyond any admissible resolvent norm means z sits on the spectrum
        double scale = norm_;
        if (un * scale / bn > 1e12 || res.cwiseAbs().maxCoeff() > 1e-6 * (bn + scale * un)) singular("ill-conditioned solve", &u);
    }
    double A_norm() const {
        double s = 0;
        if (lu_)
            for (int c = 0; c < A_cplx_.outerSize(); ++c)
                for (Eigen::SparseMatrix<cplx>::InnerIterator it(A_cplx_, c); it; ++it) s = std::max(s, std::abs(it.value()));
        else
            for (int c = 0; c < A_real_.outerSize(); ++c)
                for (SpMat::InnerIterator it(A_real_, c); it; ++it) s = std::max(s, std::abs(it.value()));
        return s;
    }
    [[noreturn]] void singular(const std::string& why, const VecC* u = nullptr) const {
        std::string msg = "z = (" + std::to_string(z_.real()) + "," + std::to_string(z_.imag()) +
                          ") is on or next to the Dirichlet spectrum at level " + std::to_string(lg_->level) + " (" + why + ")";
        if (u) {
            // Rayleigh quotient of the blown-up solution approximates the offending eigenvalue
            SpMat L = interior_block(graph_laplacian(*lg_), nb_);
            Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(lg_->mass.data() + nb_, n_);
            VecC Lu = L.cast<cplx>() * (*u);
            cplx num = u->dot(Lu);
            cplx den = u->dot(m.cast<cplx>().asDiagonal() * (*u));
            msg += "; nearest -lambda_j = " + std::to_string(-(num / den).real());
        }
        throw SingularityError(msg);
    }

    const LevelGraph* lg_;
    cplx z_;
    int n_, nb_;
    bool ok_ = true;
    double norm_ = 0;
    SpMat A_real_;
    Eigen::SparseMatrix<cplx> A_cplx_;
    std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> ldlt_;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_real_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>> lu_;
};

// Solution of (zM+L)u = 0 off V0 with prescribed boundary values.
inline VecC boundary_value_solve(const LevelGraph& lg, const ShiftedSolver& S, const VecC& bvals) {
    const int nb = lg.nb(), n = lg.size();
    if (bvals.size() != nb) throw DomainError("need one boundary value per V0 point");
    VecC rhs = VecC::Zero(n - nb);
    for (int q = 0; q < nb; ++q)
        for (int k = lg.adj_ptr[q]; k < lg.adj_ptr[q + 1]; ++k) {
            int y = lg.adj_idx[k];
            if (y >= nb) rhs(y - nb) += lg.adj_c[k] * bvals(q);
        }
    VecC u(n);
    u.head(nb) = bvals;
    if (n > nb) u.tail(n - nb) = S.solve(rhs);
    return u;
}

inline Eigen::VectorXd harmonic_field(const LevelGraph& lg, const Eigen::VectorXd& bvals) {
    ShiftedSolver S(lg, 0.0);
    return boundary_value_solve(lg, S, bvals.cast<cplx>()).real();
}

// Outward flux of u at p through the cell F_w(X): sum of c(p,y)(u(p)-u(y)) over edges of
// level-m cells inside F_w(X), plus z * (mass of p carried by those cells) * u(p).
inline cplx normal_derivative(const LevelGraph& lg, const VecC& u, int p, const Word& w = {}, cplx z = 0.0) {
    const int nb = lg.nb(), n = static_cast<int>(w.size());
    if (n > lg.level) throw DomainError("cell deeper than the graph level");
    std::int64_t wc = lg.cell_index(w);
    bool corner = false;
    for (int q = 0; q < nb; ++q) corner = corner || lg.addr[n][wc * nb + q] == p;
    if (!corner) throw DomainError("vertex is not on the boundary of the referenced cell");
    const std::int64_t div = lg.cells_at[lg.level - n];
    cplx s = 0;
    for (int k = lg.vaddr_ptr[p]; k < lg.vaddr_ptr[p + 1]; ++k) {
        std::int64_t c = lg.vaddr[k] / nb;
        int q = lg.vaddr[k] % nb;
        if (c / div != wc) continue;
        for (int q2 = 0; q2 < nb; ++q2) {
            if (q2 == q) continue;
            int y = lg.addr[lg.level][c * nb + q2];
            s += lg.spec.c0(q, q2) / lg.cell_ratio[c] * (u(p) - u(y));
        }
        s += z * lg.cell_mass[c] / double(nb) * u(p);
    }
    return s;
}

// Dirichlet Green kernel at z=0: G(x,y) = [L_II^{-1}]_{xy}.
class GreenZero {
public:
    explicit GreenZero(const LevelGraph& lg) : lg_(&lg), S_(lg, 0.0) {}
    VecC column(int y) const {
        VecC out = VecC::Zero(lg_->size());
        if (y < lg_->nb()) return out;
        VecC b = VecC::Zero(lg_->interior_size());
        b(y - lg_->nb()) = 1.0;
        out.tail(lg_->interior_size()) = S_.solve(b);
        return out;
    }
    double operator()(int x, int y) const { return column(y)(x).real(); }

private:
    const LevelGraph* lg_;
    ShiftedSolver S_;
};

inline double green_kernel_zero(const LevelGraph& lg, int x, int y) { return GreenZero(lg)(x, y); }

enum class Boundary { Dirichlet, Neumann };

struct Spectrum {
    Boundary bc = Boundary::Dirichlet;
    int level = 0;
    Eigen::VectorXd lambda;
    Eigen::MatrixXd phi;  // rows: all vertices of the level graph
    double orthonormality_residual = 0;
};

inline constexpr int kDenseEigenLimit = 8000;

// Lowest `count` eigenpairs of L phi = lambda M phi (count < 0: all).
inline Spectrum spectrum(const LevelGraph& lg, Boundary bc, int count, bool vectors = true) {
    Spectrum sp;
    sp.bc = bc;
    sp.level = lg.level;
    const int nb = lg.nb(), n = lg.size();
    SpMat L = graph_laplacian(lg);
    Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(lg.mass.data(), n);
    int off = bc == Boundary::Dirichlet ? nb : 0;
    int dim = n - off;
    if (count > dim) throw DomainError("requested more eigenpairs than the interior dimension");
    SpMat A = bc == Boundary::Dirichlet ? interior_block(L, nb) : L;
    bool tri = !path_ordering(A).empty();
    if (!tri && dim > kDenseEigenLimit) throw CapacityError("dense eigensolver limited to dimension 8000");
    auto r = generalized_eig(A, m.tail(dim), count, vectors);
    sp.lambda = r.values;
    if (vectors) {
        sp.phi = Eigen::MatrixXd::Zero(n, r.vectors.cols());
        sp.phi.bottomRows(dim) = r.vectors;
        int chk = std::min<int>(50, static_cast<int>(sp.phi.cols()));
        Eigen::MatrixXd P = sp.phi.leftCols(chk);
        Eigen::MatrixXd G = P.transpose() * m.asDiagonal() * P - Eigen::MatrixXd::Identity(chk, chk);
        sp.orthonormality_residual = chk ? G.cwiseAbs().maxCoeff() : 0.0;
        if (sp.orthonormality_residual > 1e-8)
            throw NumericalError("eigenvectors fail mass orthonormality (" + std::to_string(sp.orthonormality_residual) + ")");
    }
    return sp;
}

// Counting function slope on the lowest third of the computed spectrum.
inline VerificationReport weyl_count(const FractalSpec& spec, const Spectrum& sp, std::vector<double> x_grid = {}) {
    VerificationReport rep;
    rep.name = "weyl";
    const double target = spec.weyl_exponent();
    rep.meta["target_slope"] = target;
    const int usable = static_cast<int>(sp.lambda.size()) / 3;
    rep.meta["usable_eigenvalues"] = usable;
    if (usable < 10) {
        rep.add("enough_eigenvalues", false, {}, "fewer than 30 eigenvalues computed");
        return rep;
    }
    std::vector<double> lam(sp.lambda.data(), sp.lambda.data() + usable);
    if (x_grid.empty()) {
        double lo = lam[std::min(4, usable - 1)];
        if (lo <= 0) lo = lam[std::min(usable - 1, 5)];
        x_grid = logspace(lo, lam.back(), 60);
    }
    std::vector<double> lx, ly;
    ojson samples = ojson::array();
    for (double x : x_grid) {
        if (x > lam.back() || x <= 0) continue;
        double N = static_cast<double>(std::upper_bound(lam.begin(), lam.end(), x) - lam.begin());
        if (N <= 0) continue;
        lx.push_back(std::log(x));
        ly.push_back(std::log(N));
        samples.push_back({x, N});
    }
    rep.meta["samples"] = samples;
    if (lx.size() < 2) return rep;
    auto f = fit_line(lx, ly);
    rep.add("slope", f.ok(), {{"slope", f.slope}, {"target", target}, {"rms", f.rms}, {"difference", f.slope - target}},
            "", false);
    return rep;
}

}  // namespace fractal
