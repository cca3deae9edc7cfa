#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fractal/complex_analysis.hpp"
#include "fractal/json_out.hpp"
#include "support/interval_coords.hpp"

using namespace fractal;
using std::numbers::pi;

namespace {

SectorDecayModel model(std::function<double(double)> f, double b1, double b2, double eps) {
    SectorDecayModel m;
    m.f = std::move(f);
    m.beta1 = b1;
    m.beta2 = b2;
    m.eps = eps;
    m.M = 8;
    m.J = 8;
    return m;
}

SectorDecayModel pure() { return model([](double x) { return std::sqrt(x); }, 0.4, 0.6, 0.03); }
SectorDecayModel wobble() {
    return model([](double x) { return std::sqrt(x) * (1 + 0.1 * std::sin(std::log(x))); }, 0.4, 0.6, 0.03);
}
SectorDecayModel drift() {
    return model([](double x) { return std::pow(x, 0.45) * std::exp(0.3 * std::sin(0.5 * std::log(x))); }, 0.25, 0.65, 0.03);
}

}  // namespace

TEST(Quadrature, GaussRules) {
    auto& g = gauss_legendre(5);
    double s = 0;
    for (int k = 0; k < 5; ++k) s += g.weights[k] * std::pow(g.nodes[k], 8);
    EXPECT_NEAR(s, 2.0 / 9, 1e-14);
    auto& j = gauss_jacobi(12, -0.5, 0.3);
    double w = 0, x1 = 0;
    for (int k = 0; k < 12; ++k) w += j.weights[k], x1 += j.weights[k] * (1 + j.nodes[k]);
    // integral of (1-x)^{-1/2} (1+x)^{0.3} = 2^{0.8} B(0.5, 1.3)
    double B = std::exp(std::lgamma(0.5) + std::lgamma(1.3) - std::lgamma(1.8));
    EXPECT_NEAR(w, std::pow(2.0, 0.8) * B, 1e-12);
    double B2 = std::exp(std::lgamma(0.5) + std::lgamma(2.3) - std::lgamma(2.8));
    EXPECT_NEAR(x1, std::pow(2.0, 1.8) * B2, 1e-12);
    EXPECT_THROW(gauss_jacobi(4, -1.0, 0.0), DomainError);
}

TEST(Quadrature, EndpointSingularities) {
    PanelIntegrator q(1e-13);
    auto inv_sqrt = [](double t) { return cplx(1 / std::sqrt(t)); };
    EXPECT_NEAR(q(inv_sqrt, 0, 1, -0.5, 0).real(), 2.0, 1e-12);
    auto two = [](double t) { return cplx(1 / std::sqrt(std::abs(1 - t))); };
    EXPECT_NEAR((q(two, 0, 1, 0, -0.5) + q(two, 1, 2, -0.5, 0)).real(), 4.0, 1e-12);
    auto smooth = [](double t) { return cplx(std::cos(t), std::sin(t)); };
    auto v = q(smooth, 0, 3, 0, 0);
    EXPECT_NEAR(v.real(), std::sin(3.0), 1e-13);
    EXPECT_NEAR(v.imag(), 1 - std::cos(3.0), 1e-13);
}

TEST(TauSequence, PurePowerIsTrivial) {
    auto m = tau_sequence(pure());
    EXPECT_NEAR(m.tau[0], 0.5, 1e-14);
    for (int j = 1; j <= m.J(); ++j) EXPECT_NEAR(m.tau[j], 0.0, 1e-13);
    EXPECT_LT(m.identity_residual, 1e-12);
    EXPECT_LE(m.window_excess, 0.0);
    EXPECT_EQ(m.M, 8.0);
}

TEST(TauSequence, MatchesDifferenceForm) {
    // tau_j = s_j - s_{j+1} with s_i the log slope of f across [M^{i-1}, M^i]
    for (auto md : {wobble(), drift()}) {
        auto m = tau_sequence(md);
        const double lm = std::log(m.M);
        auto s = [&](int i) { return (std::log(md.f(std::pow(m.M, i))) - std::log(md.f(std::pow(m.M, i - 1)))) / lm; };
        double l0 = std::log(md.f(m.M)) / lm;
        EXPECT_NEAR(m.tau[0], 1 - l0, 1e-14);
        EXPECT_NEAR(m.tau[1], l0 - s(2), 1e-13);
        for (int j = 2; j <= m.J(); ++j) EXPECT_NEAR(m.tau[j], s(j) - s(j + 1), 1e-12) << j;
        EXPECT_LT(m.identity_residual, 1e-12);
        EXPECT_LE(m.window_excess, 1e-12);
        EXPECT_LT(m.tau_sup, 1.0);
        double partial = 0;
        for (int k = 0; k <= m.J(); ++k) {
            partial += m.tau[k];
            EXPECT_GE(partial, m.alpha1 - 1e-12);
            EXPECT_LE(partial, m.alpha2 + 1e-12);
        }
    }
}

TEST(TauSequence, HypothesisErrors) {
    auto big = wobble();
    big.eps = 0.1;  // 3 eps > beta2 - beta1
    EXPECT_THROW(tau_sequence(big), ModelError);
    auto steep = model([](double x) { return std::pow(x, 0.9); }, 0.4, 0.6, 0.03);
    try {
        tau_sequence(steep);
        FAIL();
    } catch (const ModelError& e) {
        EXPECT_NE(std::string(e.what()).find("j=0"), std::string::npos) << e.what();
    }
    auto order = wobble();
    order.beta1 = 0.7;
    EXPECT_THROW(tau_sequence(order), ModelError);
}

TEST(TauSequence, EnlargesScale) {
    // the window only holds on scales longer than the oscillation period
    auto md = model([](double x) { return std::sqrt(x) * std::exp(0.25 * std::sin(2 * std::log(x))); }, 0.4, 0.6, 0.03);
    md.M = 2;
    auto m = tau_sequence(md);
    EXPECT_GT(m.M, 2.0);
    EXPECT_EQ(m.M_requested, 2.0);
    EXPECT_LE(m.window_excess, 1e-12);
}

TEST(ScMap, PurePowerClosedForm) {
    const double a = 0.6;
    auto m = sc_map_from_tau({1 - a}, 8);
    cplx H = sc_evaluate(m, cplx(0, 1));
    cplx want = std::polar(1 / a, a * pi / 2);
    EXPECT_NEAR(H.real(), want.real(), 1e-8);
    EXPECT_NEAR(H.imag(), want.imag(), 1e-8);
    EXPECT_NEAR(want.real(), 0.979642087154122, 1e-12);
    for (double x : {0.5, 2.0, 7.5}) {
        cplx h = sc_evaluate(m, x);
        EXPECT_EQ(h.imag(), 0.0);
        EXPECT_NEAR(h.real(), std::pow(x, a) / a, 1e-10);
    }
    EXPECT_THROW(sc_evaluate(m, cplx(1, -1)), DomainError);
    EXPECT_THROW(sc_evaluate(m, 0.0), DomainError);
    EXPECT_THROW(sc_map_from_tau({0.5, 1.0}, 8), ModelError);
}

TEST(ScMap, OneVertexHypergeometric) {
    // integrand w^{-1/2} (1 - w/8)^{-0.3}: H(z) = 2 sqrt(z) 2F1(0.3, 1/2; 3/2; z/8)
    auto m = sc_map_from_tau({0.5, 0.3}, 8);
    cplx a = sc_evaluate(m, cplx(0, 5));
    EXPECT_NEAR(a.real(), 2.93608535209637, 1e-10);
    EXPECT_NEAR(a.imag(), 3.30315354219858, 1e-10);
    EXPECT_NEAR(sc_evaluate(m, 6.0).real(), 5.46653055555902, 1e-10);
    // past the vertex on the real axis, approached from above
    cplx b = sc_evaluate(m, 12.0);
    EXPECT_NEAR(b.real(), 8.426406834953489, 1e-9);
    EXPECT_NEAR(b.imag(), 1.842901972219610, 1e-9);
    cplx c = sc_evaluate(m, 8.0);
    EXPECT_TRUE(std::isfinite(std::abs(c)));
}

TEST(ScMap, SandwichOnSyntheticMaps) {
    for (auto md : {pure(), wobble(), drift()}) {
        auto map = tau_sequence(md);
        auto rep = sc_sandwich(map);
        EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
        EXPECT_EQ(rep.find("im_positive")->data["samples"].get<int>(), 100);
    }
}

TEST(ScMap, GrowthMatchesL) {
    auto map = tau_sequence(drift());
    for (int K = 1; K < map.J(); ++K) {
        double r = std::pow(map.M, K + 0.5);
        EXPECT_NEAR(std::log(sc_growth(map, r)) / std::log(r), map.l[K - 1], 1e-12);
    }
}

TEST(PlExtend, ClassicalRootEnvelope) {
    // g = exp(-sqrt z) on the quarter plane: axis bound exp(-f(x^2)) with f = lambda^{1/4}
    SectorDecayModel md;
    md.alpha = pi / 2;
    md.f = [](double x) { return std::pow(x, 0.25); };
    md.beta1 = 0.2;
    md.beta2 = 0.3;
    md.eps = 0.01;
    std::vector<std::pair<double, double>> axis;
    for (double x : {0.5, 1.0, 10.0, 100.0}) axis.push_back({x, std::exp(-std::sqrt(x))});
    auto env = pl_extend(md, axis);
    ASSERT_TRUE(env.classical);
    EXPECT_NEAR(env.a1, 1.0, 1e-12);
    EXPECT_NEAR(env.a2, 0.5, 1e-12);
    EXPECT_NEAR(-env.log_bound(1.0, pi / 4), 0.541196100146197, 1e-12);
    for (double r : {1.0, 10.0, 100.0})
        for (double b : {0.0, pi / 8, pi / 4, 3 * pi / 8, pi / 2}) {
            double g = std::abs(std::exp(-std::sqrt(std::polar(r, b))));
            EXPECT_LE(std::log(g), env.log_bound(r, b) + 1e-12) << r << " " << b;
        }
    EXPECT_NEAR(std::log(std::abs(std::exp(-std::sqrt(std::polar(1.0, pi / 4))))), -0.923879532511287, 1e-12);
    EXPECT_EQ(env.log_bound(5.0, pi / 2), 0.0);
    EXPECT_NEAR(env.log_bound(9.0, 0.0), -3.0, 1e-12);
    axis.push_back({4.0, 0.5});
    EXPECT_THROW(pl_extend(md, axis), ModelError);
}

TEST(PlExtend, GeneralConstruction) {
    auto md = drift();
    md.alpha = 3 * pi / 4;
    auto env = pl_extend(md);
    EXPECT_FALSE(env.classical);
    EXPECT_GT(env.c3, 0);
    EXPECT_NEAR(env.ctilde, (0.25 - 0.03) * pi, 1e-15);
    EXPECT_NEAR(env.norm, std::sin(pi * 0.68), 1e-15);
    EXPECT_EQ(env.log_bound(100.0, md.alpha), 0.0);
    double prev = -INFINITY;
    for (double b : {0.0, 0.5, 1.0, 1.5, 2.0}) {
        double v = env.log_bound(50.0, b);
        EXPECT_LT(v, 0.0);
        EXPECT_GT(v, prev);
        prev = v;
    }
    // beta = 0 relative to the axis bound
    double ratio = env.log_bound(50.0, 0) / -md.f(std::pow(50.0, pi / md.alpha));
    EXPECT_GT(ratio, 0);
    EXPECT_LE(ratio, 1.0 / env.norm);
    EXPECT_THROW(env.log_bound(1.0, 3.0), DomainError);
}

TEST(EigenLinfty, IntervalSines) {
    auto rep = eigen_linfty_bound(interval_spec(), 9, {50, 100, 200, 400, 800, 1600});
    EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
    for (auto& row : rep.meta["rows"]) {
        double L = row["Lambda"].get<double>();
        // every sine has sup norm sqrt 2
        EXPECT_NEAR(row["single"].get<double>() * std::pow(L, 0.25), std::sqrt(2.0), 1e-3);
        EXPECT_LE(row["random"].get<double>(), row["linfty_constant"].get<double>());
    }
}

TEST(EigenLinfty, ScaleInvariant) {
    auto a = eigen_linfty_bound(gasket_spec(), 5, {200, 800}, 5, 1);
    auto b = eigen_linfty_bound(gasket_spec(), 5, {200, 800}, 5, 1);
    EXPECT_EQ(dump_json(a.to_json()), dump_json(b.to_json()));
    EXPECT_TRUE(a.pass()) << dump_json(a.to_json());
}

TEST(SectorEstimates, IntervalRays) {
    SectorVerifyConfig cfg;
    cfg.C_cal = std::exp(-1.0);
    auto rep = verify_sector_estimates(interval_spec(), 10, cfg);
    EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
    EXPECT_GT(rep.meta["kappa5"].get<double>(), 0);
}

TEST(SectorEstimates, IntervalClosedFormAtImaginaryZ) {
    // eta_1 at z = 100 i against sinh(sqrt z x) / sinh(sqrt z) on the mesh
    auto g = build_level_graph(interval_spec(), 12);
    cplx z(0, 100);
    auto e = eta(g, 1, z);
    double worst = 0;
    for (int v = 0; v < g.size(); ++v) {
        double x = interval_coordinate(g, v);
        cplx want = std::sinh(std::sqrt(z) * x) / std::sinh(std::sqrt(z));
        worst = std::max(worst, std::abs(e.values(v) - want));
    }
    EXPECT_LT(worst, 1e-4);
    EXPECT_NEAR(std::abs(std::sinh(std::sqrt(z) * 0.5) / std::sinh(std::sqrt(z))), 0.0291257394759, 1e-12);
}

TEST(SectorEstimates, GasketRays) {
    SectorVerifyConfig cfg;
    cfg.C_cal = std::exp(-1.0);
    cfg.rays = {pi / 4, pi / 2, 3 * pi / 4};
    auto rep = verify_sector_estimates(gasket_spec(), 8, cfg);
    EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
    for (auto id : {"c_envelope_green", "c_envelope_eta", "c_envelope_mixed_normal_derivative_green"})
        EXPECT_EQ(rep.find(id)->data["envelope"]["violations"].get<int>(), 0);
}

TEST(SectorEstimates, NearSpectrumExcluded) {
    auto g = build_level_graph(interval_spec(), 8);
    auto sp = spectrum(g, Boundary::Dirichlet, 3, false);
    SectorVerifyConfig cfg;
    cfg.rays = {pi * (1 - 1e-15)};
    cfg.moduli = {sp.lambda(0)};
    auto rep = verify_sector_estimates(interval_spec(), 8, cfg);
    EXPECT_GE(rep.meta["excluded"].size() + rep.meta["unresolved_samples"].get<int>(), 1u);
    cfg.rays = {pi};
    EXPECT_THROW(verify_sector_estimates(interval_spec(), 8, cfg), DomainError);
}
