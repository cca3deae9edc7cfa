#pragma once

// One-shot verification suite shared by `fractal verify` and the acceptance binary.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "blowup.hpp"
#include "complex_analysis.hpp"
#include "eta.hpp"
#include "json_out.hpp"
#include "kernel_calculus.hpp"
#include "operator.hpp"
#include "resolvent.hpp"

namespace fractal {

inline constexpr int kReportSchema = 1;

struct SuiteConfig {
    std::string spec_source;
    int level = 0;  // 0: per-report default
    double C_cal = std::exp(-1.0);
    std::vector<double> lambda_grid;  // eta, resolvent and sector moduli
    std::vector<double> t_grid;
    double heat_tolerance = 0;  // 0: 1e-6 on the interval, 1e-4 otherwise
    double weyl_tolerance = 0.05;
    int random_triples = 200;
    int heat_pairs = 30;
    unsigned seed = 1;

    ojson to_json() const {
        ojson j;
        j["spec"] = spec_source;
        j["level"] = level;
        j["C_cal"] = C_cal;
        j["lambda_grid"] = lambda_grid;
        j["t_grid"] = t_grid;
        j["heat_tolerance"] = heat_tolerance;
        j["weyl_tolerance"] = weyl_tolerance;
        j["random_triples"] = random_triples;
        j["heat_pairs"] = heat_pairs;
        j["seed"] = seed;
        j["threads"] = thread_count();
        return j;
    }
};

inline const std::vector<std::string>& suite_reports() {
    static const std::vector<std::string> names{"eta", "resolvent", "sector", "weyl", "heat", "kernels", "blowup"};
    return names;
}

// Level used by a report: the override if given, the tuned level for the built-ins, otherwise
// the deepest level whose graph stays under a size cap.
inline int suite_level(const FractalSpec& spec, const std::string& report, int override_level) {
    if (override_level > 0) return override_level;
    if (spec.name == "interval") {
        if (report == "sector") return 10;
        if (report == "heat" || report == "kernels") return 10;
        if (report == "blowup") return 7;
        return 12;
    }
    if (spec.name == "sierpinski") {
        if (report == "eta") return 9;
        if (report == "resolvent" || report == "sector") return 8;
        if (report == "kernels" || report == "blowup") return 5;
        return 7;
    }
    int cap = 10000;
    if (report == "heat" || report == "weyl") cap = 3500;
    if (report == "kernels" || report == "blowup") cap = 400;
    // vertex count grows by at most `letters` per level
    double n = spec.nb();
    int m = 1;
    while (n * spec.letters <= cap && m < 20) {
        n *= spec.letters;
        ++m;
    }
    return std::max(2, m - 1);
}

inline std::vector<double> suite_lambdas(const SuiteConfig& cfg) {
    return cfg.lambda_grid.empty() ? logspace(1e2, 1e5, 7) : cfg.lambda_grid;
}

// Diagonal pairs at the level-1 junctions, the rest off-diagonal between random points of V_{m-1}.
inline PairList heat_pairs(const LevelGraph& g, int count, unsigned seed) {
    PairList pairs;
    for (int v = g.nb(); v < g.nv[1] && static_cast<int>(pairs.size()) < count; ++v) pairs.push_back({v, v});
    auto pts = sample_points(g, g.level - 1, 2 * count, seed);
    for (size_t i = 0; i + 1 < pts.size() && static_cast<int>(pairs.size()) < count; i += 2)
        pairs.push_back({pts[i], pts[i + 1]});
    return pairs;
}

// Random depth-0 blowup pairs F_w(q), words of length 1..3.
inline std::vector<std::pair<BlowupPoint, BlowupPoint>> blowup_pairs(const FractalSpec& spec, int count, unsigned seed) {
    std::mt19937_64 rng(seed);
    auto point = [&] {
        BlowupPoint p;
        int len = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < len; ++i) p.word.push_back(static_cast<int>(rng() % spec.letters));
        p.label = static_cast<int>(rng() % spec.nb());
        return p;
    };
    std::vector<std::pair<BlowupPoint, BlowupPoint>> out;
    for (int i = 0; i < count; ++i) {
        auto x = point();
        out.push_back({x, i % 3 == 0 ? x : point()});
    }
    return out;
}

inline VerificationReport suite_eta(const FractalSpec& spec, const SuiteConfig& cfg) {
    EtaVerifyConfig c;
    c.C_cal = cfg.C_cal;
    c.random_triples = cfg.random_triples;
    c.seed = cfg.seed;
    auto rep = verify_eta_estimates(spec, suite_lambdas(cfg), suite_level(spec, "eta", cfg.level), c);
    rep.meta["seed"] = c.seed;
    return rep;
}

inline VerificationReport suite_resolvent(const FractalSpec& spec, const SuiteConfig& cfg) {
    ResolventVerifyConfig c;
    c.C_cal = cfg.C_cal;
    c.seed = cfg.seed + 2;
    auto ls = cfg.lambda_grid.empty() ? logspace(1e2, 1e5, 4) : cfg.lambda_grid;
    auto rep = verify_resolvent_bounds(spec, ls, suite_level(spec, "resolvent", cfg.level), c);
    rep.meta["seed"] = c.seed;
    return rep;
}

inline VerificationReport suite_sector(const FractalSpec& spec, const SuiteConfig& cfg) {
    SectorVerifyConfig c;
    c.C_cal = cfg.C_cal;
    c.seed = cfg.seed + 6;
    c.moduli = suite_lambdas(cfg);
    const double pi = std::numbers::pi;
    c.rays = {0.0, pi / 4, pi / 2, 3 * pi / 4};
    auto rep = verify_sector_estimates(spec, suite_level(spec, "sector", cfg.level), c);
    rep.meta["seed"] = c.seed;
    return rep;
}

inline VerificationReport suite_weyl(const FractalSpec& spec, const Spectrum& sp, double tol) {
    auto rep = weyl_count(spec, sp);
    rep.meta["level"] = sp.level;
    rep.meta["eigenvalues"] = static_cast<int>(sp.lambda.size());
    if (const Check* c = rep.find("slope")) {
        double d = c->data["difference"].get<double>();
        rep.add("slope_matches_exponent", std::abs(d) <= tol, {{"difference", d}, {"tolerance", tol}});
    }
    return rep;
}

inline VerificationReport suite_weyl(const FractalSpec& spec, const SuiteConfig& cfg) {
    auto g = build_level_graph(spec, suite_level(spec, "weyl", cfg.level));
    return suite_weyl(spec, spectrum(g, Boundary::Dirichlet, -1, false), cfg.weyl_tolerance);
}

inline VerificationReport suite_heat(KernelCalculus& kc, const SuiteConfig& cfg) {
    HeatVerifyConfig c;
    c.C_cal = cfg.C_cal;
    if (!cfg.t_grid.empty()) c.t_grid = cfg.t_grid;
    c.tolerance = cfg.heat_tolerance > 0 ? cfg.heat_tolerance : kc.spec().name == "interval" ? 1e-6 : 1e-4;
    const unsigned seed = cfg.seed + 10;
    auto pairs = heat_pairs(kc.graph(), cfg.heat_pairs, seed);
    auto rep = verify_heat_upper(kc, pairs, c);
    rep.meta["seed"] = seed;
    ojson names = ojson::array();
    for (auto [x, y] : pairs) names.push_back({point_name(kc.graph(), x), point_name(kc.graph(), y)});
    rep.meta["pair_names"] = names;
    return rep;
}

inline VerificationReport suite_heat(const FractalSpec& spec, const SuiteConfig& cfg) {
    KernelCalculus kc(spec, suite_level(spec, "heat", cfg.level));
    return suite_heat(kc, cfg);
}

// Symbol gates and the w = -1 identity.
inline VerificationReport suite_kernels(const FractalSpec& spec, const SuiteConfig& cfg) {
    VerificationReport rep;
    rep.name = "kernels";
    const int m = suite_level(spec, "kernels", cfg.level);
    KernelCalculus kc(spec, m);
    const auto& lam = kc.spectrum_full().lambda;
    rep.meta = {{"spec", spec.name}, {"level", m}, {"lambda_floor", kc.lambda_floor()}};

    auto heat_gates = check_gates(spec, lam, heat_symbol(0.01), keyhole_contour(0.75 * std::numbers::pi, 0.01, heat_symbol(0.01)));
    rep.add("heat_symbol_passes_gates",
            heat_gates.find("contour_integral_l2")->pass && heat_gates.find("summability_l2")->pass &&
                heat_gates.find("contour_integral_linf")->pass && heat_gates.find("summability_linf")->pass,
            heat_gates.to_json());

    const auto& g = kc.graph();
    PairList pairs;
    auto pts = sample_points(g, m - 1, 8, cfg.seed + 20);
    for (size_t i = 0; i < pts.size(); ++i) pairs.push_back({pts[i], pts[(i + 1) % pts.size()]});
    for (int v : pts) pairs.push_back({v, v});

    VerificationReport small;
    bool rejected = false;
    std::string why;
    try {
        complex_power_kernel(kc, -0.1, pairs, KernelMethod::Contour, false, &small);
    } catch (const GateFailure& e) {
        rejected = true;
        why = e.what();
    }
    const Check* l2 = small.find("contour_integral_l2");
    rep.add("small_power_rejected", rejected && l2 && !l2->pass, {{"gates", small.to_json()}, {"reason", why}});

    VerificationReport unit;
    auto r = complex_power_kernel(kc, -1.0, pairs, KernelMethod::Both, false, &unit);
    GreenZero G0(g);
    double worst = 0, scale = 0;
    for (size_t i = 0; i < pairs.size(); ++i) {
        double want = G0(pairs[i].first, pairs[i].second);
        worst = std::max(worst, std::abs(r.grid.values[i] - want));
        scale = std::max(scale, std::abs(want));
    }
    rep.add("minus_one_power_is_green_zero", worst <= 1e-6 * scale,
            {{"max_abs_difference", worst}, {"scale", scale}, {"contour_vs_spectral", r.relative_difference}, {"gates", unit.to_json()}});
    return rep;
}

inline VerificationReport suite_blowup(const FractalSpec& spec, const SuiteConfig& cfg) {
    const int base = suite_level(spec, "blowup", cfg.level);
    const int n_max = spec.name == "interval" ? 7 : 5;
    auto omega = parse_infinite_word(":0", spec.letters);
    auto rep = blowup_convergence(spec, omega, n_max, 1.0, blowup_pairs(spec, 10, cfg.seed + 30), base);
    rep.meta["seed"] = cfg.seed + 30;
    return rep;
}

inline VerificationReport suite_report(const FractalSpec& spec, const std::string& name, const SuiteConfig& cfg) {
    if (name == "eta") return suite_eta(spec, cfg);
    if (name == "resolvent") return suite_resolvent(spec, cfg);
    if (name == "sector") return suite_sector(spec, cfg);
    if (name == "weyl") return suite_weyl(spec, cfg);
    if (name == "heat") return suite_heat(spec, cfg);
    if (name == "kernels") return suite_kernels(spec, cfg);
    if (name == "blowup") return suite_blowup(spec, cfg);
    throw ConfigError("unknown report '" + name + "'");
}

inline ojson suite_envelope(const FractalSpec& spec, const std::string& command, const SuiteConfig& cfg) {
    ojson j;
    j["schema"] = kReportSchema;
    j["command"] = command;
    j["config"] = cfg.to_json();
    j["spec"] = spec.name;
    return j;
}

// Hard checks that failed, as "report/check".
inline std::vector<std::string> failed_checks(const std::vector<VerificationReport>& reps) {
    std::vector<std::string> out;
    for (auto& r : reps)
        for (auto& c : r.checks)
            if (c.hard && !c.pass) out.push_back(r.name + "/" + c.id);
    return out;
}

inline ojson suite_json(const FractalSpec& spec, const std::string& command, const SuiteConfig& cfg,
                        const std::vector<VerificationReport>& reps) {
    ojson j = suite_envelope(spec, command, cfg);
    auto failed = failed_checks(reps);
    j["pass"] = failed.empty();
    j["failed_checks"] = failed;
    ojson arr = ojson::array();
    for (auto& r : reps) arr.push_back(r.to_json());
    j["reports"] = arr;
    return j;
}

// Every report; the weyl and heat reports share one full spectrum when their levels agree.
inline std::vector<VerificationReport> suite_all(const FractalSpec& spec, const SuiteConfig& cfg) {
    std::vector<VerificationReport> reps;
    reps.push_back(suite_eta(spec, cfg));
    reps.push_back(suite_resolvent(spec, cfg));
    reps.push_back(suite_sector(spec, cfg));
    const int mh = suite_level(spec, "heat", cfg.level), mw = suite_level(spec, "weyl", cfg.level);
    KernelCalculus kc(spec, mh);
    if (mh == mw)
        reps.push_back(suite_weyl(spec, kc.spectrum_full(), cfg.weyl_tolerance));
    else
        reps.push_back(suite_weyl(spec, cfg));
    reps.push_back(suite_heat(kc, cfg));
    reps.push_back(suite_kernels(spec, cfg));
    reps.push_back(suite_blowup(spec, cfg));
    return reps;
}

}  // namespace fractal
