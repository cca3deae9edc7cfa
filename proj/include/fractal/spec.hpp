#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fractal/errors.hpp"

namespace fractal {

// Combinatorial and harmonic data of a p.c.f. self-similar set.
// Level-1 vertices carry integer labels; boundary[q] is the label of the q-th V0 point
// and cell_boundary_map[j][q] the label of F_j(q).
struct FractalSpec {
    std::string name;
    int letters = 0;
    std::vector<int> boundary;
    std::vector<std::vector<int>> cell_boundary_map;
    std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> gluing;
    std::vector<double> r;
    std::vector<double> mu;
    double S = 0.0;
    Eigen::MatrixXd c0;
    int label_count = 0;

    int nb() const { return static_cast<int>(boundary.size()); }
    double weyl_exponent() const { return S / (S + 1.0); }
};

using Word = std::vector<int>;

inline double word_ratio(const FractalSpec& s, const Word& w) {
    double v = 1.0;
    for (int j : w) v *= s.r[j];
    return v;
}

inline double word_mass(const FractalSpec& s, const Word& w) {
    double v = 1.0;
    for (int j : w) v *= s.mu[j];
    return v;
}

// Letters as digits; specs with more than ten letters use '.' separators.
inline std::string word_string(const Word& w, int letters = 10) {
    std::string out;
    for (size_t i = 0; i < w.size(); ++i) {
        if (letters > 10 && i) out += '.';
        out += std::to_string(w[i]);
    }
    return out;
}

namespace detail {

inline double solve_similarity_dimension(const std::vector<double>& r) {
    // sum r_j^S is strictly decreasing in S
    auto f = [&](double S) {
        double t = 0;
        for (double x : r) t += std::pow(x, S);
        return t - 1.0;
    };
    double lo = 0.0, hi = 1.0;
    while (f(hi) > 0) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (f(mid) > 0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline Eigen::MatrixXd laplacian_of(const Eigen::MatrixXd& c) {
    Eigen::MatrixXd L = -c;
    for (int i = 0; i < c.rows(); ++i) {
        L(i, i) = 0;
        L(i, i) = -L.row(i).sum();
    }
    return L;
}

}  // namespace detail

// Trace of the level-1 form onto the boundary labels minus the boundary form.
inline double renormalization_residual(const FractalSpec& s) {
    int n = s.label_count, nb = s.nb();
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (int j = 0; j < s.letters; ++j)
        for (int p = 0; p < nb; ++p)
            for (int q = 0; q < nb; ++q) {
                if (p == q) continue;
                double c = s.c0(p, q) / s.r[j];
                int a = s.cell_boundary_map[j][p], b = s.cell_boundary_map[j][q];
                L(a, b) -= c;
                L(a, a) += c;
            }
    std::vector<int> B(s.boundary), I;
    std::vector<bool> isb(n, false);
    for (int b : B) isb[b] = true;
    for (int i = 0; i < n; ++i)
        if (!isb[i]) I.push_back(i);
    Eigen::MatrixXd LBB(nb, nb), LBI(nb, I.size()), LII(I.size(), I.size());
    for (int a = 0; a < nb; ++a) {
        for (int b = 0; b < nb; ++b) LBB(a, b) = L(B[a], B[b]);
        for (size_t i = 0; i < I.size(); ++i) LBI(a, i) = L(B[a], I[i]);
    }
    for (size_t i = 0; i < I.size(); ++i)
        for (size_t k = 0; k < I.size(); ++k) LII(i, k) = L(I[i], I[k]);
    Eigen::MatrixXd T = LBB;
    if (!I.empty()) T -= LBI * LII.ldlt().solve(LBI.transpose());
    Eigen::MatrixXd L0 = detail::laplacian_of(s.c0);
    double scale = std::max(1e-300, L0.cwiseAbs().maxCoeff());
    return (T - L0).cwiseAbs().maxCoeff() / scale;
}

// Checks every structural invariant and fills the derived fields S, mu, label_count.
inline void finalize_spec(FractalSpec& s) {
    if (s.letters < 2) throw StructuralError("spec: letters must be >= 2");
    int nb = s.nb();
    if (nb < 2) throw StructuralError("spec: boundary needs at least two points");
    if (static_cast<int>(s.cell_boundary_map.size()) != s.letters)
        throw StructuralError("spec: cell_boundary_map needs one row per letter");
    if (static_cast<int>(s.r.size()) != s.letters)
        throw StructuralError("spec: r needs one entry per letter");
    if (s.c0.rows() != nb || s.c0.cols() != nb)
        throw StructuralError("spec: c0 must be |V0| x |V0|");
    for (double x : s.r)
        if (!(x > 0 && x < 1)) throw StructuralError("spec: resistance scalings must lie in (0,1)");
    for (int p = 0; p < nb; ++p)
        for (int q = 0; q < nb; ++q) {
            if (s.c0(p, q) < 0) throw StructuralError("spec: c0 must be nonnegative");
            if (std::abs(s.c0(p, q) - s.c0(q, p)) > 1e-14 * (1 + std::abs(s.c0(p, q))))
                throw StructuralError("spec: c0 must be symmetric");
        }

    int maxlabel = -1;
    for (auto& row : s.cell_boundary_map) {
        if (static_cast<int>(row.size()) != nb)
            throw StructuralError("spec: every cell_boundary_map row needs |V0| labels");
        std::set<int> seen(row.begin(), row.end());
        if (static_cast<int>(seen.size()) != nb)
            throw StructuralError("spec: cell_boundary_map rows must be injective");
        for (int l : row) {
            if (l < 0) throw StructuralError("spec: labels must be nonnegative");
            maxlabel = std::max(maxlabel, l);
        }
    }
    s.label_count = maxlabel + 1;
    std::vector<int> used(s.label_count, 0);
    for (auto& row : s.cell_boundary_map)
        for (int l : row) used[l]++;
    for (int l = 0; l < s.label_count; ++l)
        if (!used[l]) throw StructuralError("spec: level-1 label " + std::to_string(l) + " unused");
    {
        std::set<int> bs(s.boundary.begin(), s.boundary.end());
        if (static_cast<int>(bs.size()) != nb) throw StructuralError("spec: boundary labels repeat");
        for (int b : s.boundary)
            if (b < 0 || b >= s.label_count || used[b] != 1)
                throw StructuralError("spec: each boundary label must be a corner of exactly one cell");
    }

    // gluing must coincide with label equality across distinct cells
    using Key = std::pair<std::pair<int, int>, std::pair<int, int>>;
    auto norm = [](Key k) {
        if (k.second < k.first) std::swap(k.first, k.second);
        return k;
    };
    std::set<Key> implied, given;
    for (int j = 0; j < s.letters; ++j)
        for (int k = j + 1; k < s.letters; ++k)
            for (int p = 0; p < nb; ++p)
                for (int q = 0; q < nb; ++q)
                    if (s.cell_boundary_map[j][p] == s.cell_boundary_map[k][q])
                        implied.insert(norm({{j, p}, {k, q}}));
    for (auto g : s.gluing) {
        if (g.first.first < 0 || g.first.first >= s.letters || g.second.first < 0 ||
            g.second.first >= s.letters || g.first.second < 0 || g.first.second >= nb ||
            g.second.second < 0 || g.second.second >= nb || g.first.first == g.second.first)
            throw StructuralError("spec: malformed gluing pair");
        given.insert(norm(g));
    }
    if (implied != given)
        throw StructuralError("spec: gluing relation inconsistent with cell_boundary_map labels");
    for (auto& g : given) {
        int lab = s.cell_boundary_map[g.first.first][g.first.second];
        if (std::find(s.boundary.begin(), s.boundary.end(), lab) != s.boundary.end())
            throw StructuralError("spec: a V0 point cannot be glued");
    }

    // cells must be connected through non-boundary junctions
    std::vector<int> parent(s.letters);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (auto& g : given) parent[find(g.first.first)] = find(g.second.first);
    for (int j = 0; j < s.letters; ++j)
        if (find(j) != find(0)) throw StructuralError("spec: level-1 graph minus V0 is disconnected");

    s.S = detail::solve_similarity_dimension(s.r);
    s.mu.resize(s.letters);
    double tot = 0;
    for (int j = 0; j < s.letters; ++j) tot += (s.mu[j] = std::pow(s.r[j], s.S));
    if (std::abs(tot - 1.0) > 1e-12) throw StructuralError("spec: measure weights do not sum to 1");

    double res = renormalization_residual(s);
    if (res > 1e-9)
        throw StructuralError("spec: harmonic renormalization residual " + std::to_string(res) +
                              " exceeds 1e-9");
}

inline FractalSpec interval_spec() {
    FractalSpec s;
    s.name = "interval";
    s.letters = 2;
    s.boundary = {0, 1};
    s.cell_boundary_map = {{0, 2}, {2, 1}};
    s.gluing = {{{0, 1}, {1, 0}}};
    s.r = {0.5, 0.5};
    s.c0 = Eigen::MatrixXd(2, 2);
    s.c0 << 0, 1, 1, 0;
    finalize_spec(s);
    return s;
}

// Corners 0,1,2; label 3 = mid(0,1), 4 = mid(1,2), 5 = mid(0,2).
inline FractalSpec gasket_spec() {
    FractalSpec s;
    s.name = "sierpinski";
    s.letters = 3;
    s.boundary = {0, 1, 2};
    s.cell_boundary_map = {{0, 3, 5}, {3, 1, 4}, {5, 4, 2}};
    s.gluing = {{{0, 1}, {1, 0}}, {{0, 2}, {2, 0}}, {{1, 2}, {2, 1}}};
    s.r = {0.6, 0.6, 0.6};
    s.c0 = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
    finalize_spec(s);
    return s;
}

inline FractalSpec spec_from_json(const nlohmann::json& j) {
    FractalSpec s;
    try {
        s.name = j.value("name", std::string("custom"));
        s.letters = j.at("letters").get<int>();
        s.boundary = j.at("boundary").get<std::vector<int>>();
        s.cell_boundary_map = j.at("cell_boundary_map").get<std::vector<std::vector<int>>>();
        for (auto& g : j.at("gluing")) {
            auto a = g.at(0).get<std::vector<int>>();
            auto b = g.at(1).get<std::vector<int>>();
            if (a.size() != 2 || b.size() != 2) throw StructuralError("spec: gluing entries are [[j,p],[k,q]]");
            s.gluing.push_back({{a[0], a[1]}, {b[0], b[1]}});
        }
        s.r = j.at("r").get<std::vector<double>>();
        auto c = j.at("c0").get<std::vector<std::vector<double>>>();
        s.c0 = Eigen::MatrixXd::Zero(c.size(), c.size());
        for (size_t a = 0; a < c.size(); ++a) {
            if (c[a].size() != c.size()) throw StructuralError("spec: c0 must be square");
            for (size_t b = 0; b < c.size(); ++b) s.c0(a, b) = c[a][b];
        }
        if (j.contains("mu") || j.contains("S"))
            throw StructuralError("spec: S and mu are derived and must not be supplied");
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError(std::string("spec: ") + e.what());
    }
    finalize_spec(s);
    return s;
}

inline nlohmann::json spec_to_json(const FractalSpec& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["letters"] = s.letters;
    j["boundary"] = s.boundary;
    j["cell_boundary_map"] = s.cell_boundary_map;
    nlohmann::json g = nlohmann::json::array();
    for (auto& p : s.gluing)
        g.push_back({{p.first.first, p.first.second}, {p.second.first, p.second.second}});
    j["gluing"] = g;
    j["r"] = s.r;
    std::vector<std::vector<double>> c(s.nb(), std::vector<double>(s.nb()));
    for (int a = 0; a < s.nb(); ++a)
        for (int b = 0; b < s.nb(); ++b) c[a][b] = s.c0(a, b);
    j["c0"] = c;
    return j;
}

// "interval" and "sierpinski" (or "sg") resolve to built-ins, anything else is a JSON path.
inline FractalSpec load_spec(const std::string& what) {
    if (what == "interval") return interval_spec();
    if (what == "sierpinski" || what == "sg" || what == "gasket") return gasket_spec();
    std::ifstream in(what);
    if (!in) throw ConfigError("cannot open spec file '" + what + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("spec file '" + what + "' is not valid JSON: " + e.what());
    }
    return spec_from_json(j);
}

}  // namespace fractal
