#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fractal/json_out.hpp"
#include "fractal/kernel_calculus.hpp"
#include "support/interval_coords.hpp"

using namespace fractal;

namespace {

constexpr double kPi = std::numbers::pi;

int at(const LevelGraph& g, double x) {
    for (int v = 0; v < g.size(); ++v)
        if (std::abs(interval_coordinate(g, v) - x) < 1e-15) return v;
    return -1;
}

double fourier_heat(double t, double x, double y) {
    double s = 0;
    for (int j = 1; j < 400; ++j) s += 2 * std::exp(-j * j * kPi * kPi * t) * std::sin(j * kPi * x) * std::sin(j * kPi * y);
    return s;
}

std::vector<int> all_points(const LevelGraph& g) {
    std::vector<int> v(g.size());
    for (int i = 0; i < g.size(); ++i) v[i] = i;
    return v;
}

Eigen::VectorXd masses(const LevelGraph& g) { return Eigen::Map<const Eigen::VectorXd>(g.mass.data(), g.size()); }

}  // namespace

TEST(Contour, ScalarCauchyOrientation) {
    auto h = heat_symbol(0.1);
    Contour c = keyhole_contour(0.75 * kPi, 0.1, h);
    for (double l : {1.0, 50.0, 500.0}) EXPECT_NEAR(scalar_cauchy(c, h, l).real(), std::exp(-0.1 * l), 1e-12) << l;
    auto full = c.full();
    for (size_t i = 0; i < full.size(); ++i) {
        EXPECT_LE(std::abs(std::arg(full[i].z)), 0.75 * kPi + 1e-14);
        EXPECT_EQ(full[i].z, std::conj(full[full.size() - 1 - i].z));
    }
    auto p = power_symbol(-1.0);
    Contour d = power_contour(0.75 * kPi, 4.0, p, 1e6);
    for (double l : {5.0, 1e3, 1e5}) EXPECT_NEAR(scalar_cauchy(d, p, l).real() * l, 1.0, 1e-10) << l;
    EXPECT_NEAR(d.radius * std::cos(d.alpha), -2.0, 1e-12);
}

TEST(Gates, HeatPassesBoth) {
    KernelCalculus kc(interval_spec(), 8);
    auto h = heat_symbol(0.05);
    auto rep = check_gates(kc.spec(), kc.spectrum_full().lambda, h, keyhole_contour(0.75 * kPi, 0.05, h));
    EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
    for (auto& c : rep.checks) EXPECT_TRUE(c.pass) << c.id;
    EXPECT_EQ(rep.meta["kernel_sense"], "linf");
}

TEST(Gates, SmallPowerRejected) {
    KernelCalculus kc(interval_spec(), 8);
    auto h = power_symbol(-0.1);
    auto rep = check_gates(kc.spec(), kc.spectrum_full().lambda, h, power_contour(0.75 * kPi, kc.lambda_floor(), h, kc.tail_modulus()));
    EXPECT_FALSE(rep.find("contour_integral_l2")->pass);
    EXPECT_FALSE(rep.find("summability_l2")->pass);
    EXPECT_EQ(rep.meta["kernel_sense"], "none");
    EXPECT_THROW(complex_power_kernel(kc, -0.1, {{3, 5}}), GateFailure);
    // between the two thresholds the kernel exists in L2 only
    auto mid = power_symbol(-0.4);
    auto r2 = check_gates(kc.spec(), kc.spectrum_full().lambda, mid, power_contour(0.75 * kPi, kc.lambda_floor(), mid, kc.tail_modulus()));
    EXPECT_EQ(r2.meta["kernel_sense"], "l2");
}

TEST(Gates, ZeroSymbol) {
    KernelCalculus kc(interval_spec(), 6);
    auto h = user_symbol("zero", [](cplx) { return cplx(0); });
    Contour c = keyhole_contour(0.75 * kPi, 0.1, h);
    EXPECT_TRUE(check_gates(kc.spec(), kc.spectrum_full().lambda, h, c).pass());
    auto r = operator_kernel(kc, h, c, {{5, 9}, {7, 7}});
    for (auto v : r.grid.values) EXPECT_EQ(v, cplx(0));
}

TEST(Heat, IntervalFourierOracle) {
    KernelCalculus kc(interval_spec(), 12);
    const LevelGraph& g = kc.graph();
    int q = at(g, 0.25), h = at(g, 0.5);
    auto r = heat_kernel(kc, 0.1, {{h, h}, {q, h}});
    EXPECT_NEAR(fourier_heat(0.1, 0.5, 0.5), 0.745693, 1e-6);
    EXPECT_NEAR(r.grid.values[0].real(), fourier_heat(0.1, 0.5, 0.5), 1e-6);
    EXPECT_NEAR(r.grid.values[1].real(), fourier_heat(0.1, 0.25, 0.5), 1e-6);
    EXPECT_LT(r.relative_difference, 1e-6);
    EXPECT_LT(std::abs(r.grid.values[0].imag()), 1e-12);
}

TEST(Heat, SemigroupAndMassLoss) {
    KernelCalculus kc(interval_spec(), 7);
    const LevelGraph& g = kc.graph();
    auto all = all_points(g);
    Eigen::VectorXd m = masses(g);
    auto S = [&](double t) { return kc.spectral_matrix(heat_symbol(t), all).real().eval(); };
    Eigen::MatrixXd a = S(0.02), b = S(0.03), ab = S(0.05);
    Eigen::MatrixXd comp = a * m.asDiagonal() * b;
    EXPECT_LT((comp - ab).cwiseAbs().maxCoeff(), 1e-10 * ab.cwiseAbs().maxCoeff());
    Eigen::VectorXd mass = a * m;
    EXPECT_LE(mass.maxCoeff(), 1 + 1e-10);
    EXPECT_GT(mass.minCoeff(), -1e-12);
    // the contour kernel is the same operator on V_{m-1}
    std::vector<int> coarse(all.begin(), all.begin() + g.nv[6]);
    auto h = heat_symbol(0.05);
    MatC c = kc.contour_matrix(h, keyhole_contour(0.75 * kPi, 0.05, h), coarse);
    double diff = 0;
    for (size_t i = 0; i < coarse.size(); ++i)
        for (size_t j = 0; j < coarse.size(); ++j) diff = std::max(diff, std::abs(c(i, j) - ab(coarse[i], coarse[j])));
    EXPECT_LT(diff, 1e-10 * ab.cwiseAbs().maxCoeff());
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(kc.contour_matrix(h, keyhole_contour(0.75 * kPi, 0.05, h), {g.size() - 1}), DomainError);
}

TEST(Heat, GasketContourMatchesSpectral) {
    KernelCalculus kc(gasket_spec(), 5);
    auto pts = sample_points(kc.graph(), 4, 8, 3);
    PairList pairs;
    for (size_t i = 0; i < pts.size(); ++i) pairs.push_back({pts[i], pts[(i + 3) % pts.size()]});
    auto r = heat_kernel(kc, 0.01, pairs, KernelMethod::Both, true);
    EXPECT_LT(r.relative_difference, 1e-8);
    EXPECT_LT(r.refinement_change, 1e-10);
    for (auto v : r.grid.values) EXPECT_GT(v.real(), 0);
}

TEST(Heat, ContourIndependence) {
    KernelCalculus kc(interval_spec(), 9);
    auto h = heat_symbol(0.1);
    std::vector<int> pts{at(kc.graph(), 0.25), at(kc.graph(), 0.625)};
    MatC a = kc.contour_matrix(h, keyhole_contour(0.75 * kPi, 0.1, h), pts);
    MatC b = kc.contour_matrix(h, keyhole_contour(0.6 * kPi, 0.1, h), pts);
    MatC c = kc.contour_matrix(h, keyhole_contour(0.75 * kPi, 0.04, h), pts);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LT((a - c).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Kernel, CauchySymbol) {
    KernelCalculus kc(interval_spec(), 8);
    PairList pairs{{at(kc.graph(), 0.25), at(kc.graph(), 0.5)}, {at(kc.graph(), 0.5), at(kc.graph(), 0.5)}};
    auto cauchy = [](cplx z0) { return user_symbol("cauchy", [z0](cplx z) { return 1.0 / (z - z0); }, -1.0); };
    // pole enclosed with the spectrum: G h is analytic outside and O(|z|^-2), so H = 0
    auto in = cauchy(-30.0);
    auto r = operator_kernel(kc, in, keyhole_contour(0.75 * kPi, 0.01, in, kc.tail_modulus()), pairs, KernelMethod::Contour);
    for (auto v : r.grid.values) EXPECT_LT(std::abs(v), 1e-12);
    // pole outside: H is the spectral sum, i.e. -G^{(z0)}
    auto out = cauchy(50.0);
    auto s = operator_kernel(kc, out, keyhole_contour(0.75 * kPi, 0.1, out, kc.tail_modulus()), pairs);
    EXPECT_LT(s.relative_difference, 1e-10);
    PsiCache cache(interval_spec());
    MatC G = SeriesResolvent(cache, 8, 50.0, 6).matrix({pairs[0].first}, {pairs[0].second});
    EXPECT_NEAR(std::abs(s.grid.values[0] + G(0, 0)), 0.0, 1e-12);
}

TEST(Kernel, TimeDerivativeSymbol) {
    KernelCalculus kc(interval_spec(), 10);
    const double t = 0.05, dt = 1e-4;
    auto h = user_symbol("z e^{tz}", [t](cplx z) { return z * std::exp(t * z); });
    PairList pairs{{at(kc.graph(), 0.25), at(kc.graph(), 0.5)}, {at(kc.graph(), 0.5), at(kc.graph(), 0.5)}};
    auto d = operator_kernel(kc, h, keyhole_contour(0.75 * kPi, t, h), pairs);
    auto hi = heat_kernel(kc, t + dt, pairs, KernelMethod::Contour), lo = heat_kernel(kc, t - dt, pairs, KernelMethod::Contour);
    for (size_t i = 0; i < pairs.size(); ++i) {
        double fd = (hi.grid.values[i].real() - lo.grid.values[i].real()) / (2 * dt);
        EXPECT_NEAR(d.grid.values[i].real(), fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
    EXPECT_LT(d.relative_difference, 1e-8);
}

TEST(Power, MinusOneIsGreenZero) {
    for (auto [spec, m] : {std::pair{interval_spec(), 10}, std::pair{gasket_spec(), 5}}) {
        KernelCalculus kc(spec, m);
        auto pts = sample_points(kc.graph(), m - 1, 6, 9);
        PairList pairs;
        for (size_t i = 0; i < pts.size(); ++i) pairs.push_back({pts[i], pts[(i + 1) % pts.size()]});
        pairs.push_back({pts[0], pts[0]});
        auto r = complex_power_kernel(kc, -1.0, pairs);
        GreenZero G(kc.graph());
        for (size_t i = 0; i < pairs.size(); ++i) {
            EXPECT_NEAR(r.grid.values[i].real(), G(pairs[i].first, pairs[i].second), 1e-6) << spec.name << " " << i;
            EXPECT_LT(std::abs(r.grid.values[i].imag()), 1e-9);
        }
    }
}

TEST(Power, IntervalComplexExponent) {
    KernelCalculus kc(interval_spec(), 12);
    const cplx w(-1, 0.5);
    const double x = 0.25, y = 0.5;
    auto r = complex_power_kernel(kc, w, {{at(kc.graph(), x), at(kc.graph(), y)}});
    cplx s = 0;
    for (int j = 1; j <= 2000000; ++j) s += std::pow(double(j) * j * kPi * kPi, w) * 2.0 * std::sin(j * kPi * x) * std::sin(j * kPi * y);
    EXPECT_LT(std::abs(r.grid.values[0] - s), 1e-5);
    EXPECT_LT(r.relative_difference, 1e-8);
}

TEST(Power, MinusTwoIsTheSquare) {
    KernelCalculus kc(interval_spec(), 7);
    const LevelGraph& g = kc.graph();
    std::vector<int> pts;
    for (int v = g.nb(); v < g.nv[6]; v += 5) pts.push_back(v);
    auto h = power_symbol(-2.0);
    MatC H = kc.contour_matrix(h, power_contour(0.75 * kPi, kc.lambda_floor(), h, kc.tail_modulus()), pts);
    GreenZero G(g);
    Eigen::MatrixXd G0(g.size(), g.size());
    for (int y = 0; y < g.size(); ++y) G0.col(y) = G.column(y).real();
    Eigen::MatrixXd sq = G0 * masses(g).asDiagonal() * G0;
    double diff = 0;
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = 0; j < pts.size(); ++j) diff = std::max(diff, std::abs(H(i, j).real() - sq(pts[i], pts[j])));
    EXPECT_LT(diff, 1e-9 * sq.cwiseAbs().maxCoeff());
}

TEST(ExpComplex, IntervalAndLimits) {
    KernelCalculus kc(interval_spec(), 10);
    PairList pairs{{at(kc.graph(), 0.25), at(kc.graph(), 0.5)}, {at(kc.graph(), 0.125), at(kc.graph(), 0.125)}};
    auto r = exp_complex_kernel(kc, std::polar(0.1, kPi / 4), pairs);
    EXPECT_LT(r.relative_difference, 1e-6);
    EXPECT_NEAR(exp_contour_angle(kPi / 4), 7 * kPi / 8, 1e-15);
    EXPECT_NEAR(exp_contour_angle(1.2), 0.5 * (kPi / 2 + 1.2 + kPi), 1e-15);
    auto e = exp_complex_kernel(kc, 0.1, pairs, KernelMethod::Contour);
    auto p = heat_kernel(kc, 0.1, pairs, KernelMethod::Contour);
    for (size_t i = 0; i < pairs.size(); ++i) EXPECT_NEAR(std::abs(e.grid.values[i] - p.grid.values[i]), 0.0, 1e-12);
    EXPECT_THROW(exp_complex_kernel(kc, cplx(0, 0.1), pairs), GateFailure);
}

TEST(VerifyHeat, IntervalReport) {
    KernelCalculus kc(interval_spec(), 10);
    const LevelGraph& g = kc.graph();
    PairList pairs;
    for (double x : {0.375, 0.5, 0.625}) pairs.push_back({at(g, x), at(g, x)});
    for (double x : {0.125, 0.25, 0.5}) pairs.push_back({at(g, x), at(g, 0.75)});
    HeatVerifyConfig cfg;
    cfg.tolerance = 1e-6;
    auto rep = verify_heat_upper(kc, pairs, cfg);
    EXPECT_TRUE(rep.pass()) << dump_json(rep.to_json());
    auto s = rep.find("on_diagonal_slope")->data["slope"].get<double>();
    EXPECT_NEAR(s, -0.5, 0.05);
    EXPECT_GT(rep.find("off_diagonal_envelope")->data["kappa7"].get<double>(), 0);
}
