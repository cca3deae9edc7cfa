#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <lapacke.h>

#include "fractal/errors.hpp"

namespace fractal {

using cplx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<double>;

// Eigenpairs of a symmetric matrix, ascending; `count` < 0 means all.
struct SymEig {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
};

inline SymEig symmetric_tridiagonal_eig(const Eigen::VectorXd& d, const Eigen::VectorXd& e, int count, bool vectors) {
    const lapack_int n = static_cast<lapack_int>(d.size());
    if (count < 0 || count > n) count = n;
    std::vector<double> D(d.data(), d.data() + n), E(n, 0.0);
    for (lapack_int i = 0; i + 1 < n; ++i) E[i] = e(i);
    lapack_int m = 0;
    std::vector<double> w(n);
    std::vector<lapack_int> isuppz(2 * std::max<lapack_int>(1, count));
    SymEig out;
    Eigen::MatrixXd Z;
    if (vectors) Z.resize(n, count);
    lapack_int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', count == n ? 'A' : 'I', n, D.data(),
                                     E.data(), 0.0, 0.0, 1, count, 0.0, &m, w.data(), vectors ? Z.data() : nullptr,
                                     n, isuppz.data());
    if (info != 0) throw NumericalError("tridiagonal eigensolver failed (info " + std::to_string(info) + ")");
    out.values = Eigen::Map<Eigen::VectorXd>(w.data(), m);
    if (vectors) out.vectors = Z.leftCols(m);
    return out;
}

inline SymEig symmetric_dense_eig(Eigen::MatrixXd A, int count, bool vectors) {
    const lapack_int n = static_cast<lapack_int>(A.rows());
    if (count < 0 || count > n) count = n;
    SymEig out;
    if (count == n) {
        std::vector<double> w(n);
        lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'L', n, A.data(), n, w.data());
        if (info != 0) throw NumericalError("dense eigensolver failed (info " + std::to_string(info) + ")");
        out.values = Eigen::Map<Eigen::VectorXd>(w.data(), n);
        if (vectors) out.vectors = std::move(A);
        return out;
    }
    lapack_int m = 0;
    std::vector<double> w(n);
    std::vector<lapack_int> isuppz(2 * count);
    Eigen::MatrixXd Z;
    if (vectors) Z.resize(n, count);
    lapack_int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'I', 'L', n, A.data(), n, 0.0, 0.0, 1,
                                     count, 0.0, &m, w.data(), vectors ? Z.data() : nullptr, n, isuppz.data());
    if (info != 0) throw NumericalError("dense eigensolver failed (info " + std::to_string(info) + ")");
    out.values = Eigen::Map<Eigen::VectorXd>(w.data(), m);
    if (vectors) out.vectors = Z.leftCols(m);
    return out;
}

// If the sparse symmetric matrix is a path graph in some ordering, returns that ordering.
inline std::vector<int> path_ordering(const SpMat& A) {
    const int n = static_cast<int>(A.rows());
    std::vector<std::vector<int>> nb(n);
    for (int c = 0; c < A.outerSize(); ++c)
        for (SpMat::InnerIterator it(A, c); it; ++it)
            if (it.row() != it.col() && it.value() != 0) nb[it.row()].push_back(static_cast<int>(it.col()));
    int start = -1;
    for (int i = 0; i < n; ++i) {
        std::sort(nb[i].begin(), nb[i].end());
        nb[i].erase(std::unique(nb[i].begin(), nb[i].end()), nb[i].end());
        if (nb[i].size() > 2) return {};
        if (nb[i].size() <= 1 && start < 0) start = i;
    }
    if (start < 0) return {};
    std::vector<int> order{start};
    std::vector<bool> seen(n, false);
    seen[start] = true;
    while (true) {
        int cur = order.back(), nxt = -1;
        for (int b : nb[cur])
            if (!seen[b]) nxt = b;
        if (nxt < 0) break;
        seen[nxt] = true;
        order.push_back(nxt);
    }
    if (static_cast<int>(order.size()) != n) return {};
    return order;
}

// Lowest `count` eigenpairs of the pencil (A, diag(m)) with m > 0, eigenvectors m-orthonormal.
inline SymEig generalized_eig(const SpMat& A, const Eigen::VectorXd& m, int count, bool vectors) {
    const int n = static_cast<int>(A.rows());
    Eigen::VectorXd s = m.cwiseSqrt().cwiseInverse();
    SymEig r;
    auto order = path_ordering(A);
    if (!order.empty() && n > 1) {
        std::vector<int> pos(n);
        for (int i = 0; i < n; ++i) pos[order[i]] = i;
        Eigen::VectorXd d(n), e = Eigen::VectorXd::Zero(n);
        for (int c = 0; c < A.outerSize(); ++c)
            for (SpMat::InnerIterator it(A, c); it; ++it) {
                int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
                double v = it.value() * s(i) * s(j);
                if (i == j) d(pos[i]) = v;
                else if (pos[j] == pos[i] + 1) e(pos[i]) = v;
            }
        auto t = symmetric_tridiagonal_eig(d, e, count, vectors);
        r.values = t.values;
        if (vectors) {
            r.vectors.resize(n, t.vectors.cols());
            for (int i = 0; i < n; ++i) r.vectors.row(order[i]) = t.vectors.row(i) * s(order[i]);
        }
    } else {
        Eigen::MatrixXd D = Eigen::MatrixXd(A);
        D = s.asDiagonal() * D * s.asDiagonal();
        auto t = symmetric_dense_eig(std::move(D), count, vectors);
        r.values = t.values;
        if (vectors) r.vectors = s.asDiagonal() * t.vectors;
    }
    // deterministic sign: first entry of largest magnitude positive
    if (vectors)
        for (int c = 0; c < r.vectors.cols(); ++c) {
            Eigen::Index imax;
            r.vectors.col(c).cwiseAbs().maxCoeff(&imax);
            if (r.vectors(imax, c) < 0) r.vectors.col(c) *= -1;
        }
    return r;
}

}  // namespace fractal
