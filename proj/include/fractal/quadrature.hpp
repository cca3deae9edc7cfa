#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "fractal/errors.hpp"

namespace fractal {

struct GaussRule {
    std::vector<double> nodes, weights;  // on [-1, 1]
};

// Golub-Welsch for the weight (1-x)^a (1+x)^b on [-1, 1].
inline GaussRule gauss_jacobi_uncached(int n, double a, double b) {
    if (n < 1) throw DomainError("quadrature needs at least one node");
    if (!(a > -1) || !(b > -1)) throw DomainError("Jacobi exponents must exceed -1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    const double ab = a + b;
    for (int k = 0; k < n; ++k) {
        double s = 2 * k + ab;
        J(k, k) = (k == 0) ? (b - a) / (ab + 2) : (b * b - a * a) / (s * (s + 2));
        if (k + 1 < n) {
            int m = k + 1;
            double t = 2 * m + ab;
            double v = m == 1 ? 4 * (1 + a) * (1 + b) / (t * t * (t + 1))
                              : 4 * m * (m + a) * (m + b) * (m + ab) / (t * t * (t + 1) * (t - 1));
            J(k, k + 1) = J(k + 1, k) = std::sqrt(v);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    double mu0 = std::exp((ab + 1) * std::log(2.0) + std::lgamma(a + 1) + std::lgamma(b + 1) - std::lgamma(ab + 2));
    GaussRule r;
    for (int k = 0; k < n; ++k) {
        r.nodes.push_back(es.eigenvalues()(k));
        double v = es.eigenvectors()(0, k);
        r.weights.push_back(mu0 * v * v);
    }
    return r;
}

inline const GaussRule& gauss_jacobi(int n, double a, double b) {
    static std::map<std::tuple<int, double, double>, GaussRule> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(n, a, b);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, gauss_jacobi_uncached(n, a, b)).first;
    return it->second;
}

inline const GaussRule& gauss_legendre(int n) { return gauss_jacobi(n, 0.0, 0.0); }

// Integral over [a, b] of f(t) where f(t) ~ (t-a)^ea near a and (b-t)^eb near b.
// Bisects until the n and 2n point rules agree.
class PanelIntegrator {
public:
    using Fn = std::function<std::complex<double>(double)>;

    explicit PanelIntegrator(double rel_tol = 1e-12, double abs_tol = 0.0, int nodes = 20, int max_depth = 48)
        : rel_(rel_tol), abs_(abs_tol), n_(nodes), depth_(max_depth) {}

    std::complex<double> operator()(const Fn& f, double a, double b, double ea = 0, double eb = 0) {
        evaluations = 0;
        panels = 0;
        return rec(f, a, b, ea, eb, 0);
    }

    int evaluations = 0, panels = 0;

private:
    std::complex<double> rule(const Fn& f, double a, double b, double ea, double eb, int n) {
        const GaussRule& g = gauss_jacobi(n, eb, ea);
        const double h = 0.5 * (b - a), c = 0.5 * (a + b);
        std::complex<double> s = 0;
        for (int k = 0; k < n; ++k) {
            double x = g.nodes[k];
            double t = c + h * x;
            double wf = std::pow(1 - x, eb) * std::pow(1 + x, ea);
            s += g.weights[k] * f(t) / wf;
        }
        evaluations += n;
        return s * h;
    }

    std::complex<double> rec(const Fn& f, double a, double b, double ea, double eb, int depth) {
        auto lo = rule(f, a, b, ea, eb, n_), hi = rule(f, a, b, ea, eb, 2 * n_);
        if (std::abs(hi - lo) <= std::max(rel_ * std::abs(hi), abs_) || !std::isfinite(std::abs(hi))) {
            ++panels;
            if (!std::isfinite(std::abs(hi))) throw NumericalError("quadrature produced a non-finite value");
            return hi;
        }
        if (depth >= depth_) throw NumericalError("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                                                  std::to_string(b) + "]");
        double m = 0.5 * (a + b);
        return rec(f, a, m, ea, 0, depth + 1) + rec(f, m, b, 0, eb, depth + 1);
    }

    double rel_, abs_;
    int n_, depth_;
};

}  // namespace fractal
