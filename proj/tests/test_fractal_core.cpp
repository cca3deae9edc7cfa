#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "fractal/partition.hpp"

using namespace fractal;

TEST(Spec, BuiltinsDeriveDimensionAndMeasure) {
    auto I = interval_spec();
    EXPECT_NEAR(I.S, 1.0, 1e-12);
    EXPECT_NEAR(I.mu[0], 0.5, 1e-12);
    auto G = gasket_spec();
    EXPECT_NEAR(G.S, std::log(3.0) / std::log(5.0 / 3.0), 1e-12);
    for (double m : G.mu) EXPECT_NEAR(m, 1.0 / 3.0, 1e-12);
    EXPECT_LT(renormalization_residual(G), 1e-12);
}

TEST(Spec, RejectsInconsistentGluing) {
    auto j = spec_to_json(gasket_spec());
    j["gluing"] = nlohmann::json::array({{{0, 1}, {1, 0}}});
    EXPECT_THROW(spec_from_json(j), StructuralError);
}

TEST(Spec, RejectsBadRenormalization) {
    auto j = spec_to_json(gasket_spec());
    j["r"] = {0.5, 0.5, 0.5};
    EXPECT_THROW(spec_from_json(j), StructuralError);
}

TEST(Spec, RejectsSuppliedMeasure) {
    auto j = spec_to_json(interval_spec());
    j["mu"] = {0.5, 0.5};
    EXPECT_THROW(spec_from_json(j), StructuralError);
}

TEST(Spec, JsonRoundTrip) {
    auto s = spec_from_json(spec_to_json(gasket_spec()));
    EXPECT_EQ(s.letters, 3);
    EXPECT_NEAR(s.S, gasket_spec().S, 1e-14);
}

TEST(LevelGraph, IntervalLevelOne) {
    auto g = build_level_graph(interval_spec(), 1);
    EXPECT_EQ(g.size(), 3);
    int edges = 0;
    for (int a = 0; a < g.size(); ++a)
        for (int k = g.adj_ptr[a]; k < g.adj_ptr[a + 1]; ++k) {
            ++edges;
            EXPECT_DOUBLE_EQ(g.adj_c[k], 2.0);
        }
    EXPECT_EQ(edges / 2, 2);
}

TEST(LevelGraph, GasketLevelOne) {
    auto g = build_level_graph(gasket_spec(), 1);
    EXPECT_EQ(g.size(), 6);
    int edges = 0;
    for (int a = 0; a < g.size(); ++a)
        for (int k = g.adj_ptr[a]; k < g.adj_ptr[a + 1]; ++k) {
            ++edges;
            EXPECT_NEAR(g.adj_c[k], 5.0 / 3.0, 1e-14);
        }
    EXPECT_EQ(edges / 2, 9);
}

TEST(LevelGraph, GasketCountsMatchCoordinateEnumeration) {
    // counts from deduplicating Euclidean corner coordinates of all m-cells
    const int expected[] = {3, 6, 15, 42, 123, 366, 1095};
    for (int m = 0; m <= 6; ++m) EXPECT_EQ(build_level_graph(gasket_spec(), m).size(), expected[m]);
    EXPECT_EQ(build_level_graph(gasket_spec(), 3).size(), 3 * (27 + 1) / 2);
}

TEST(LevelGraph, NestedIdsAndMassesSumToOne) {
    auto g = build_level_graph(gasket_spec(), 4);
    auto h = build_level_graph(gasket_spec(), 2);
    for (int v = 0; v < h.size(); ++v) EXPECT_LT(v, g.nv[2]);
    EXPECT_EQ(g.addr[2], h.addr[2]);
    double s = 0;
    for (double m : g.mass) s += m;
    EXPECT_NEAR(s, 1.0, 1e-13);
    EXPECT_EQ(g.vertex({}, 2), 2);
}

TEST(LevelGraph, PointParsing) {
    auto g = build_level_graph(interval_spec(), 3);
    EXPECT_EQ(parse_point(g, "0:1"), parse_point(g, "1:0"));
    EXPECT_EQ(parse_point(g, ":1"), 1);
    EXPECT_EQ(point_name(g, parse_point(g, "01:1")), "0:1");
    int v = parse_point(g, "011:0");
    EXPECT_EQ(parse_point(g, point_name(g, v)), v);
    EXPECT_THROW(parse_point(g, "01"), ConfigError);
    EXPECT_THROW(parse_point(g, "0123:0"), ConfigError);
}

TEST(LevelGraph, CapacityError) { EXPECT_THROW(build_level_graph(gasket_spec(), 17), CapacityError); }

TEST(Partition, IntervalScales) {
    auto p1 = partition_at_scale(interval_spec(), 1);
    EXPECT_EQ(p1.words.size(), 4u);
    for (auto& w : p1.words) EXPECT_EQ(w.size(), 2u);
    auto p0 = partition_at_scale(interval_spec(), 0);
    EXPECT_EQ(p0.words.size(), 2u);
    for (auto& w : p0.words) EXPECT_EQ(w.size(), 1u);
}

TEST(Partition, GasketScaleTwoHasLengthFour) {
    // (3/5)^4 = 0.1296 <= e^-2 = 0.1353 < (3/5)^3
    auto p = partition_at_scale(gasket_spec(), 2);
    EXPECT_EQ(p.words.size(), 81u);
    for (auto& w : p.words) EXPECT_EQ(w.size(), 4u);
}

TEST(Partition, CoverageAndNonOverlap) {
    FractalSpec s = interval_spec();
    s.r = {0.3, 0.7};
    finalize_spec(s);
    auto P = partition_at_scale(s, 2.5);
    std::set<Word> W(P.words.begin(), P.words.end());
    for (auto& w : P.words)
        for (size_t l = 1; l < w.size(); ++l) EXPECT_FALSE(W.count(Word(w.begin(), w.begin() + l)));
    auto g = build_level_graph(s, P.max_length);
    auto rep = verify_metric(g, 2.5, 20, 7);
    EXPECT_TRUE(rep.find("coverage")->pass);
    for (auto& w : P.words) {
        EXPECT_LE(word_ratio(s, w), std::exp(-2.5) * (1 + 1e-12));
        EXPECT_GT(word_ratio(s, Word(w.begin(), w.end() - 1)), std::exp(-2.5));
    }
}

TEST(Chemical, IntervalEndpoints) {
    for (int m = 1; m <= 6; ++m) {
        auto g = build_level_graph(interval_spec(), m);
        Partition P = partition_at_scale(interval_spec(), m * std::log(2.0));
        EXPECT_EQ(chemical_distance(g, P, 0, 1), 1 << m);
        EXPECT_EQ(chemical_distance(g, P, 0, 0), 0);
    }
}

TEST(Chemical, GasketCornersMatchCoordinateBfs) {
    const int bfs[] = {1, 2, 4, 8, 16, 32, 64};
    for (int m = 1; m <= 6; ++m) {
        auto g = build_level_graph(gasket_spec(), m);
        Partition P = partition_at_scale(gasket_spec(), m * std::log(5.0 / 3.0));
        ASSERT_EQ(P.max_length, m);
        EXPECT_EQ(chemical_distance(g, P, 0, 1), bfs[m]);
    }
}

TEST(Chemical, InteriorPointsUseCellCorners) {
    auto g = build_level_graph(interval_spec(), 4);
    Partition P = partition_at_scale(interval_spec(), 2 * std::log(2.0));
    int x = g.vertex({0, 1, 0}, 1);  // 3/8, interior of the cell [1/4,1/2]
    int y = g.vertex({1, 1, 0}, 0);
    ChemicalGraph cg(g, P);
    EXPECT_EQ(cg.distance(x, x), 0);
    EXPECT_EQ(cg.distance(x, g.vertex({0, 1}, 1)), 0);
    EXPECT_EQ(cg.distance(x, y), cg.distance(y, x));
    EXPECT_EQ(cg.distance(x, y), 1);
}

TEST(Resistance, Interval) {
    auto g = build_level_graph(interval_spec(), 5);
    EXPECT_NEAR(effective_resistance(g, 0, 1), 1.0, 1e-12);
    EXPECT_NEAR(effective_resistance(g, 0, g.vertex({0}, 1)), 0.5, 1e-12);
    EXPECT_EQ(effective_resistance(g, 3, 3), 0.0);
}

TEST(Resistance, GasketCornersInvariantInLevel) {
    // triangle of unit conductances: 1/(1 + 1/2)
    for (int m = 0; m <= 4; ++m)
        EXPECT_NEAR(effective_resistance(build_level_graph(gasket_spec(), m), 0, 1), 2.0 / 3.0, 1e-12);
}

TEST(Resistance, CapacityLimit) {
    auto g = build_level_graph(interval_spec(), 15);
    EXPECT_THROW(effective_resistance(g, 0, 1), CapacityError);
}

TEST(KLambda, Examples) {
    EXPECT_EQ(k_of_lambda(interval_spec(), std::exp(8.0), 1.0), 2);
    auto G = gasket_spec();
    EXPECT_EQ(k_of_lambda(G, 1e6, 1.0), 2);
    EXPECT_EQ(k_of_lambda(G, std::exp(2 * (G.S + 1)) * 0.999, 1.0), 0);
    EXPECT_THROW(k_of_lambda(G, 0.0, 1.0), DomainError);
    int prev = 0;
    for (double l = 1; l < 1e9; l *= 1.7) {
        int k = k_of_lambda(G, l);
        EXPECT_GE(k, prev);
        prev = k;
    }
}

TEST(DistanceRatio, IntervalHalvingBracketsTwo) {
    auto rep = distance_ratio_scan(interval_spec(), {std::log(2.0), 2 * std::log(2.0), 3 * std::log(2.0)}, std::log(2.0),
                                   {{{}, 0}}, {{{}, 1}});
    for (auto& r : rep.meta["samples"]) EXPECT_DOUBLE_EQ(r["ratio"].get<double>(), 2.0);
    EXPECT_TRUE(rep.pass());
}

TEST(DistanceRatio, SamePointSkipped) {
    auto rep = distance_ratio_scan(interval_spec(), {1.0}, 1.0, {{{0}, 1}}, {{{1}, 0}});
    EXPECT_EQ(rep.meta["skipped"].get<int>(), 1);
}

TEST(Gamma, IntervalAndGasket) {
    auto gi = build_level_graph(interval_spec(), 8);
    std::vector<double> ki;
    for (int m = 2; m <= 8; ++m) ki.push_back(m * std::log(2.0));
    auto fi = estimate_gamma(interval_spec(), {{0, 1}, {0, gi.vertex({0}, 1)}}, gi, ki);
    EXPECT_NEAR(fi.gamma_k, 1.0, 1e-9);
    auto gs = build_level_graph(gasket_spec(), 6);
    std::vector<double> ks;
    for (int m = 1; m <= 6; ++m) ks.push_back(m * std::log(5.0 / 3.0));
    auto fs = estimate_gamma(gasket_spec(), {{0, 1}, {1, 2}}, gs, ks);
    EXPECT_NEAR(fs.gamma_k, std::log(2.0) / std::log(5.0 / 3.0), 1e-9);
    auto fd = estimate_gamma(interval_spec(), {{gi.vertex({0, 0, 0, 0, 0, 0, 0}, 1), gi.vertex({0, 0, 0, 0, 0, 0, 0}, 0)}}, gi,
                             {0.0, 0.5});
    EXPECT_TRUE(fd.degenerate);
}

TEST(Metric, GasketAxioms) {
    auto g = build_level_graph(gasket_spec(), 5);
    auto rep = verify_metric(g, 2.5, 40, 11);
    EXPECT_TRUE(rep.pass()) << rep.to_json().dump();
}
