#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "support/run_cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

struct Cli : ::testing::Test {
    fs::path dir;
    void SetUp() override { dir = cli::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name()); }
    void TearDown() override { fs::remove_all(dir); }
    cli::Result run(const std::string& a) { return cli::run(a, dir); }
    std::string file(const std::string& name, const std::string& text) {
        cli::write(dir / name, text);
        return "'" + (dir / name).string() + "'";
    }
};

std::vector<std::vector<std::string>> rows(const std::string& csv) {
    std::vector<std::vector<std::string>> out;
    std::stringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) f.push_back(tok);
        out.push_back(f);
    }
    return out;
}

double green_interval(double l, double x, double y) {
    double s = std::sqrt(l), a = std::min(x, y), b = std::max(x, y);
    return std::sinh(s * a) * std::sinh(s * (1 - b)) / (s * std::sinh(s));
}

}  // namespace

TEST_F(Cli, MissingSpecFileIsConfigError) {
    auto r = run("info --spec '" + (dir / "absent.json").string() + "'");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("absent.json"), std::string::npos) << r.err;
    EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, BadArgumentsAreConfigErrors) {
    EXPECT_EQ(run("spectrum --spec interval").code, 2);
    EXPECT_EQ(run("nonsense").code, 2);
    EXPECT_EQ(run("eta --spec interval --level 4 --p 7 --z 1").code, 2);
    EXPECT_EQ(run("verify eta --spec interval --level 6 --lambda-grid 10,1").code, 2);
    auto bad = file("bad.json", "{\"letters\": 2,");
    EXPECT_EQ(run("info --spec " + bad).code, 2);
}

TEST_F(Cli, SpectrumHeaderAndClosedForm) {
    auto r = run("spectrum --spec interval --level 4 --count 5");
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rows(r.out);
    ASSERT_EQ(t.size(), 6u);
    EXPECT_EQ(t[0], (std::vector<std::string>{"j", "lambda_j"}));
    // path graph with spacing h: (4/h^2) sin^2(j pi h / 2)
    const double h = 1.0 / 16;
    for (int j = 1; j <= 5; ++j) {
        double want = 4 / (h * h) * std::pow(std::sin(j * pi * h / 2), 2);
        EXPECT_NEAR(std::stod(t[j][1]), want, 1e-10 * want);
    }
    EXPECT_NEAR(std::stod(t[1][1]), 9.83793643354592, 1e-12);
    // 17 significant digits
    EXPECT_EQ(t[1][1], "9.8379364335459201");
}

TEST_F(Cli, EigenvalueInTheGridIsNamedAndExitsThree) {
    auto s = run("spectrum --spec interval --level 6 --count 1");
    ASSERT_EQ(s.code, 0);
    std::string lam = rows(s.out)[1][1];
    auto pairs = file("p.csv", "x,y\n0:1,1:0\n");
    auto r = run("resolvent --spec interval --level 6 --pairs " + pairs + " --z=-" + lam + ",0");
    EXPECT_EQ(r.code, 3) << r.out;
    EXPECT_NE(r.err.find("singularity"), std::string::npos) << r.err;
    auto e = run("eta --spec interval --level 6 --p 1 --z=-" + lam);
    EXPECT_EQ(e.code, 3);
    EXPECT_NE(e.err.find("-9.867"), std::string::npos) << e.err;
    auto g = run("spectrum --spec sierpinski --level 4 --count 1");
    std::string lg = rows(g.out)[1][1];
    auto gp = file("g.csv", "0:1,1:2\n");
    EXPECT_EQ(run("resolvent --spec sierpinski --level 4 --pairs " + gp + " --z=-" + lg).code, 3);
}

TEST_F(Cli, ResolventCsvMatchesClosedForm) {
    auto pairs = file("p.csv", "x,y\n00:1,11:0\n010:1,010:1\n:0,1:0\n");
    auto r = run("resolvent --spec interval --level 10 --depth 8 --z 100 --pairs " + pairs);
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rows(r.out);
    ASSERT_EQ(t.size(), 4u);
    EXPECT_EQ(t[0], (std::vector<std::string>{"x", "y", "re", "im", "tail_bound"}));
    EXPECT_EQ(t[1][0], "00:1");
    EXPECT_EQ(t[1][1], "10:1");  // shortest address of 3/4
    EXPECT_NEAR(std::stod(t[1][2]), green_interval(100, 0.25, 0.75), 1e-6);
    EXPECT_NEAR(std::stod(t[2][2]), green_interval(100, 0.375, 0.375), 1e-6);
    EXPECT_EQ(std::stod(t[3][2]), 0.0);
    EXPECT_EQ(std::stod(t[1][3]), 0.0);
}

TEST_F(Cli, MetricColumns) {
    auto pairs = file("p.csv", "00:1,11:0\n000:1,11:0\n0:1,1:0\n");
    auto r = run("metric --spec interval --level 6 --k 2 --pairs " + pairs);
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rows(r.out);
    EXPECT_EQ(t[0], (std::vector<std::string>{"x", "y", "k", "d_k", "R"}));
    // resistance on the interval with the boundary grounded away: |x - y| in series
    EXPECT_NEAR(std::stod(t[1][4]), 0.5, 1e-12);
    EXPECT_NEAR(std::stod(t[2][4]), 0.625, 1e-12);
    EXPECT_GT(std::stoi(t[2][3]), std::stoi(t[1][3]));
    // F_0(1) and F_1(0) are the same point
    EXPECT_EQ(t[3][0], t[3][1]);
    EXPECT_EQ(std::stod(t[3][4]), 0.0);
}

TEST_F(Cli, HeatAndKernelCommands) {
    auto pairs = file("p.csv", "00:1,00:1\n010:1,11:0\n");
    auto h = run("heat --spec interval --level 8 --t 0.01 --method both --pairs " + pairs);
    ASSERT_EQ(h.code, 0) << h.err;
    auto t = rows(h.out);
    EXPECT_EQ(t[0], (std::vector<std::string>{"x", "y", "re", "im", "budget"}));
    EXPECT_GT(std::stod(t[1][2]), 0);
    EXPECT_LT(std::stod(t[1][4]), 1e-8);

    auto k = run("kernel --spec interval --level 8 --symbol power --w -1,0 --pairs " + pairs + " --report '" +
                 (dir / "k.json").string() + "'");
    ASSERT_EQ(k.code, 0) << k.err;
    auto kt = rows(k.out);
    // G0(x, y) = min(x, y)(1 - max(x, y))
    EXPECT_NEAR(std::stod(kt[1][2]), 0.25 * 0.75, 1e-7);
    EXPECT_NEAR(std::stod(kt[2][2]), 0.375 * 0.25, 1e-7);
    auto rep = nlohmann::json::parse(cli::slurp(dir / "k.json"));
    EXPECT_EQ(rep["schema"], 1);
    EXPECT_TRUE(rep["gates"]["pass"].get<bool>());

    auto g = run("kernel --spec interval --level 8 --symbol power --w=-0.1 --pairs " + pairs);
    EXPECT_EQ(g.code, 3);
    EXPECT_NE(g.err.find("contour_integral_l2"), std::string::npos) << g.err;
}

TEST_F(Cli, VerifyIsDeterministicAndVersioned) {
    auto a = run("verify resolvent --spec interval --level 10 --out '" + (dir / "a.json").string() + "'");
    auto b = run("verify resolvent --spec interval --level 10 --out '" + (dir / "b.json").string() + "'");
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0);
    std::string ja = cli::slurp(dir / "a.json"), jb = cli::slurp(dir / "b.json");
    EXPECT_FALSE(ja.empty());
    EXPECT_EQ(ja, jb);
    EXPECT_FALSE(fs::exists(dir / "a.json.tmp"));
    auto j = nlohmann::json::parse(ja);
    EXPECT_EQ(j["schema"], 1);
    EXPECT_EQ(j["command"], "verify resolvent");
    EXPECT_EQ(j["config"]["seed"], 1);
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_EQ(j["reports"][0]["meta"]["seed"], 3);
}

TEST_F(Cli, FailedHardCheckExitsThreeWithItsId) {
    auto r = run("verify weyl --spec interval --level 7 --weyl-tolerance 1e-9");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("weyl/slope_matches_exponent"), std::string::npos) << r.err;
    auto j = nlohmann::json::parse(r.out);
    EXPECT_FALSE(j["pass"].get<bool>());
    EXPECT_EQ(j["failed_checks"][0], "weyl/slope_matches_exponent");
}

TEST_F(Cli, ScMapOfPurePower) {
    std::string s = "lambda,f\n";
    for (int i = 0; i <= 8; ++i) {
        double x = std::pow(8.0, i);
        char line[80];
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", x, std::sqrt(x));
        s += line;
    }
    auto f = file("f.csv", s);
    auto z = file("z.csv", "re,im\n0,1\n2,0\n");
    auto r = run("scmap --f " + f + " --M 8 --eps 0.03 --beta1 0.4 --beta2 0.6 --eval " + z);
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rows(r.out);
    EXPECT_EQ(t[0], (std::vector<std::string>{"re", "im", "h_re", "h_im"}));
    // tau = (1/2, 0, ...): H(z) = 2 sqrt(z)
    std::complex<double> want = 2.0 * std::sqrt(std::complex<double>(0, 1));
    EXPECT_NEAR(std::stod(t[1][2]), want.real(), 1e-8);
    EXPECT_NEAR(std::stod(t[1][3]), want.imag(), 1e-8);
    EXPECT_NEAR(std::stod(t[2][2]), 2 * std::sqrt(2.0), 1e-8);
    auto bad = run("scmap --f " + f + " --M 8 --eps 0.1 --beta1 0.4 --beta2 0.6 --eval " + z);
    EXPECT_EQ(bad.code, 2);
}

TEST_F(Cli, BlowupRowsAndReport) {
    auto pairs = file("b.csv", "x,y\n0:1,1:0\n:1,:1@1\n");
    auto r = run("blowup --spec interval --omega :0 --nmax 4 --z 1 --base-level 6 --pairs " + pairs + " --report '" +
                 (dir / "b.json").string() + "'");
    ASSERT_EQ(r.code, 0) << r.err;
    auto t = rows(r.out);
    EXPECT_EQ(t[0], (std::vector<std::string>{"n", "x", "y", "re", "im", "tail_bound"}));
    EXPECT_EQ(t[1][0], "1");  // the deepest point lives in the first copy
    EXPECT_EQ(t.size(), 1u + 4 * 2);
    auto j = nlohmann::json::parse(cli::slurp(dir / "b.json"));
    EXPECT_TRUE(j["report"]["pass"].get<bool>());
}

TEST_F(Cli, InfoDescribesLevels) {
    auto r = run("info --spec sierpinski --level 3");
    ASSERT_EQ(r.code, 0);
    auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["schema"], 1);
    EXPECT_NEAR(j["similarity_dimension"].get<double>(), std::log(3.0) / std::log(5.0 / 3), 1e-13);
    EXPECT_EQ(j["levels"][3]["vertices"], 42);
    EXPECT_EQ(j["levels"][3]["interior"], 39);
}

TEST_F(Cli, ThreadCountDoesNotChangeResults) {
    auto pairs = file("p.csv", "0:1,0:1\n01:1,1:0\n");
    auto a = run("heat --spec sierpinski --level 4 --t 0.05 --method contour --threads 1 --pairs " + pairs);
    auto b = run("heat --spec sierpinski --level 4 --t 0.05 --method contour --threads 3 --pairs " + pairs);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
}

TEST_F(Cli, SpecFilesMatchBuiltins) {
    for (std::string s : {"interval", "sierpinski"}) {
        auto a = run("info --spec " + s + " --level 4");
        auto b = run("info --spec '" + std::string(FRACTAL_SPEC_DIR) + "/" + s + ".json' --level 4");
        ASSERT_EQ(b.code, 0) << b.err;
        EXPECT_EQ(a.out, b.out);
    }
    // three cells of ratio 1/3: S = 1, so the Weyl exponent is 1/2 as on the interval
    auto t = run("info --spec '" + std::string(FRACTAL_SPEC_DIR) + "/triadic_interval.json' --level 2");
    ASSERT_EQ(t.code, 0) << t.err;
    auto j = nlohmann::json::parse(t.out);
    EXPECT_NEAR(j["similarity_dimension"].get<double>(), 1.0, 1e-12);
    EXPECT_LT(j["renormalization_residual"].get<double>(), 1e-12);
    EXPECT_EQ(j["levels"][2]["vertices"], 10);
}
