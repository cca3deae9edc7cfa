// fractal: command-line front end for the analysis-on-fractals library.

#include <cstdlib>
#include <cctype>
#include <fstream>
#include <map>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fractal/suite.hpp"

using namespace fractal;

namespace {

std::string trim(std::string s) {
    auto a = s.find_first_not_of(" \t\r\n");
    auto b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string tok;
    while (std::getline(in, tok, sep)) out.push_back(trim(tok));
    return out;
}

double parse_number(const std::string& text) {
    std::string t = trim(text);
    double scale = 1;
    if (t.size() >= 2 && t.substr(t.size() - 2) == "pi") {
        scale = std::numbers::pi;
        t = t.substr(0, t.size() - 2);
        if (t.empty() || t == "+") return scale;
        if (t == "-") return -scale;
    }
    try {
        size_t used = 0;
        double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v * scale;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse number '" + text + "'");
    }
}

cplx parse_complex(const std::string& text) {
    auto p = split(text, ',');
    if (p.size() == 1) return parse_number(p[0]);
    if (p.size() == 2) return {parse_number(p[0]), parse_number(p[1])};
    throw ConfigError("complex values are written RE,IM (got '" + text + "')");
}

// "a,b,c" or "lo:hi:n" (n log-spaced values).
std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> g;
    if (text.find(':') != std::string::npos) {
        auto p = split(text, ':');
        if (p.size() != 3) throw ConfigError("log grid must be lo:hi:n");
        int n = static_cast<int>(parse_number(p[2]));
        double lo = parse_number(p[0]), hi = parse_number(p[1]);
        if (!(lo > 0 && hi > lo && n >= 2)) throw ConfigError("log grid needs 0 < lo < hi and n >= 2");
        g = logspace(lo, hi, n);
    } else {
        for (auto& s : split(text, ',')) g.push_back(parse_number(s));
    }
    for (size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) throw ConfigError("grid '" + text + "' must be strictly increasing");
    if (g.empty()) throw ConfigError("empty grid");
    return g;
}

// CSV rows of at least `cols` fields; blank lines, '#' comments and a header are skipped.
std::vector<std::vector<std::string>> read_csv(const std::string& path, size_t cols) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, ',');
        bool header = first && !f.empty() && !f[0].empty() && std::isalpha(static_cast<unsigned char>(f[0][0])) &&
                      f[0].find(':') == std::string::npos;
        first = false;
        if (header) continue;
        if (f.size() < cols) throw ConfigError("'" + path + "': row '" + line + "' needs " + std::to_string(cols) + " fields");
        rows.push_back(f);
    }
    return rows;
}

PairList read_pairs(const LevelGraph& g, const std::string& path) {
    PairList pairs;
    for (auto& r : read_csv(path, 2)) pairs.push_back({parse_point(g, r[0]), parse_point(g, r[1])});
    if (pairs.empty()) throw ConfigError("'" + path + "' holds no pairs");
    return pairs;
}

std::string csv_line(std::initializer_list<std::string> f) {
    std::string s;
    for (auto& x : f) s += (s.empty() ? "" : ",") + x;
    return s + "\n";
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-")
        std::cout << text << std::flush;
    else
        write_file_atomic(out, text);
}

int finish_report(const std::string& out, const ojson& j) {
    emit(out, dump_json(j));
    if (j.contains("failed_checks") && !j["failed_checks"].empty()) {
        for (auto& id : j["failed_checks"]) std::cerr << "fractal: check failed: " << id.get<std::string>() << "\n";
        return 3;
    }
    return 0;
}

ojson single_report(const FractalSpec& spec, const std::string& command, const SuiteConfig& cfg, const VerificationReport& rep) {
    return suite_json(spec, command, cfg, {rep});
}

struct Common {
    std::string spec = "";
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* c, Common& o) {
    c->add_option("--spec", o.spec, "built-in name (interval, sierpinski) or JSON spec file")->required();
    c->add_option("--out", o.out, "output file (default stdout)");
    c->add_option("--threads", o.threads, "worker threads (overrides FRACTAL_THREADS)")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Analysis on p.c.f. self-similar fractals: graphs, resolvents, kernels and their verification"};
    app.require_subcommand(1);

    Common co;
    std::map<std::string, int> lvl;  // per command, so defaults do not leak between commands
    int depth = -1, count = -1, nmax = 6, base_level = 0, p_label = 0;
    double k_scale = 1, t_val = 0.01, M_scale = 8, eps = 0.02, beta1 = 0, beta2 = 0, sec_alpha = std::numbers::pi / 2;
    int J = 8;
    bool neumann = false, refine = false;
    std::string bc = "dirichlet", z_text = "1", pairs_path, omega_text = ":0", rays_text = "0,0.25pi,0.5pi,0.75pi";
    std::string modulus_text, f_path, eval_path, method = "both", symbol = "power", w_text = "-1", report_path;
    std::string lambda_text, t_text, what;
    double c_cal = std::exp(-1.0), heat_tol = 0, weyl_tol = 0.05;
    int triples = 200, heat_pairs = 30;
    unsigned seed = 1, sector_seed = 7;

    auto* info = app.add_subcommand("info", "spec summary and level sizes (JSON)");
    add_common(info, co);
    info->add_option("--level", lvl["info"], "deepest level to describe")->default_val(4);

    auto* metric = app.add_subcommand("metric", "chemical distance and effective resistance of pairs (CSV)");
    add_common(metric, co);
    metric->add_option("--level", lvl["metric"], "graph level")->default_val(8);
    metric->add_option("--k", k_scale, "partition scale k")->required();
    metric->add_option("--pairs", pairs_path, "CSV of point pairs w:q")->required();

    auto* spec_cmd = app.add_subcommand("spectrum", "eigenvalues of the level-m Laplacian (CSV)");
    add_common(spec_cmd, co);
    spec_cmd->add_option("--level", lvl["spectrum"], "graph level")->required();
    spec_cmd->add_option("--bc", bc, "dirichlet or neumann")->check(CLI::IsMember({"dirichlet", "neumann"}));
    spec_cmd->add_option("--count", count, "number of eigenvalues (default all)");

    auto* eta_cmd = app.add_subcommand("eta", "boundary-driven field for a V0 point (CSV)");
    add_common(eta_cmd, co);
    eta_cmd->add_option("--level", lvl["eta"], "graph level")->required();
    eta_cmd->add_option("--p", p_label, "V0 point index")->required();
    eta_cmd->add_option("--z", z_text, "spectral parameter RE,IM")->required();

    auto* res = app.add_subcommand("resolvent", "resolvent kernel on pairs (CSV)");
    add_common(res, co);
    res->add_option("--level", lvl["resolvent"], "graph level")->required();
    res->add_option("--z", z_text, "spectral parameter RE,IM")->required();
    res->add_option("--depth", depth, "series depth (default level-2)");
    res->add_option("--pairs", pairs_path, "CSV of point pairs")->required();
    res->add_flag("--neumann", neumann, "Neumann kernel (real z only)");

    auto* blow = app.add_subcommand("blowup", "blowup resolvent per n (CSV) and convergence report");
    add_common(blow, co);
    blow->add_option("--omega", omega_text, "infinite word pre:period");
    blow->add_option("--nmax", nmax, "largest blowup index");
    blow->add_option("--z", z_text, "spectral parameter RE,IM");
    blow->add_option("--pairs", pairs_path, "CSV of blowup point pairs word:label[@depth]")->required();
    blow->add_option("--base-level", base_level, "series level inside each copy")->default_val(7);
    blow->add_option("--report", report_path, "write the convergence JSON here");

    auto* sec = app.add_subcommand("sector", "sector estimates off the negative axis (JSON)");
    add_common(sec, co);
    sec->add_option("--level", lvl["sector"], "graph level")->default_val(8);
    sec->add_option("--pairs", pairs_path, "CSV of point pairs (their points are sampled)");
    sec->add_option("--rays", rays_text, "ray angles, e.g. 0,0.25pi,0.5pi");
    sec->add_option("--modulus-grid", modulus_text, "moduli, list or lo:hi:n");
    sec->add_option("--c-cal", c_cal, "scale calibration constant");
    sec->add_option("--seed", sector_seed, "sampling seed");

    auto* sc = app.add_subcommand("scmap", "Schwarz-Christoffel map from f samples (CSV)");
    sc->add_option("--f", f_path, "CSV of lambda,f samples")->required();
    sc->add_option("--eval", eval_path, "CSV of points re,im in the closed upper half plane")->required();
    sc->add_option("--M", M_scale, "scale factor M");
    sc->add_option("--eps", eps, "slack eps");
    sc->add_option("--beta1", beta1, "lower growth exponent")->required();
    sc->add_option("--beta2", beta2, "upper growth exponent")->required();
    sc->add_option("--J", J, "number of vertices");
    sc->add_option("--alpha", sec_alpha, "sector angle");
    sc->add_option("--out", co.out, "output file (default stdout)");
    sc->add_option("--report", report_path, "write the exponent sequence JSON here");

    auto* heat = app.add_subcommand("heat", "heat kernel on pairs (CSV)");
    add_common(heat, co);
    heat->add_option("--level", lvl["heat"], "graph level")->default_val(7);
    heat->add_option("--t", t_val, "time")->required();
    heat->add_option("--pairs", pairs_path, "CSV of point pairs")->required();
    heat->add_option("--method", method, "contour, spectral or both")->check(CLI::IsMember({"contour", "spectral", "both"}));
    heat->add_flag("--refine", refine, "also rerun the contour with halved panels");

    auto* ker = app.add_subcommand("kernel", "kernel of a function of the Laplacian (CSV)");
    add_common(ker, co);
    ker->add_option("--level", lvl["kernel"], "graph level")->default_val(7);
    ker->add_option("--symbol", symbol, "power, exp or heat")->check(CLI::IsMember({"power", "exp", "heat"}));
    ker->add_option("--w", w_text, "exponent RE,IM (power, exp) or time (heat)");
    ker->add_option("--pairs", pairs_path, "CSV of point pairs")->required();
    ker->add_option("--method", method, "contour, spectral or both")->check(CLI::IsMember({"contour", "spectral", "both"}));
    ker->add_flag("--refine", refine, "also rerun the contour with halved panels");
    ker->add_option("--report", report_path, "write contour, gates and budgets JSON here");

    auto* ver = app.add_subcommand("verify", "verification reports (JSON)");
    add_common(ver, co);
    std::vector<std::string> kinds = suite_reports();
    kinds.push_back("all");
    ver->add_option("what", what, "eta, resolvent, sector, weyl, heat, kernels, blowup or all")->required()->check(CLI::IsMember(kinds));
    ver->add_option("--level", lvl["verify"], "level for every report (default: per report)");
    ver->add_option("--lambda-grid", lambda_text, "lambda grid, list or lo:hi:n");
    ver->add_option("--t-grid", t_text, "heat t grid, list or lo:hi:n");
    ver->add_option("--c-cal", c_cal, "scale calibration constant");
    ver->add_option("--seed", seed, "base seed for sampled points and triples");
    ver->add_option("--random-triples", triples, "random (p, lambda, x) triples");
    ver->add_option("--heat-pairs", heat_pairs, "heat kernel pairs");
    ver->add_option("--heat-tolerance", heat_tol, "contour vs spectral tolerance (default by spec)");
    ver->add_option("--weyl-tolerance", weyl_tol, "allowed Weyl slope deviation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (co.threads > 0) setenv("FRACTAL_THREADS", std::to_string(co.threads).c_str(), 1);
        auto* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        const int level = lvl[name];

        if (name == "scmap") {
            std::vector<std::pair<double, double>> samples;
            for (auto& r : read_csv(f_path, 2)) samples.push_back({parse_number(r[0]), parse_number(r[1])});
            SectorDecayModel md;
            md.f = sampled_function(samples);
            md.alpha = sec_alpha;
            md.beta1 = beta1;
            md.beta2 = beta2;
            md.eps = eps;
            md.M = M_scale;
            md.J = J;
            for (auto& s : samples) md.lambda_max = std::isfinite(md.lambda_max) ? std::max(md.lambda_max, s.first) : s.first;
            auto map = tau_sequence(md);
            std::string csv = csv_line({"re", "im", "h_re", "h_im"});
            for (auto& r : read_csv(eval_path, 2)) {
                cplx z(parse_number(r[0]), parse_number(r[1]));
                cplx h = sc_evaluate(map, z);
                csv += csv_line({fmt17(z.real()), fmt17(z.imag()), fmt17(h.real()), fmt17(h.imag())});
            }
            if (!report_path.empty()) {
                ojson j{{"schema", kReportSchema}, {"command", "scmap"}, {"map", map.to_json()}, {"sandwich", sc_sandwich(map).to_json()}};
                write_file_atomic(report_path, dump_json(j));
            }
            emit(co.out, csv);
            return 0;
        }

        const FractalSpec spec = load_spec(co.spec);

        if (name == "info") {
            ojson j;
            j["schema"] = kReportSchema;
            j["command"] = "info";
            j["spec"] = spec_to_json(spec);
            j["name"] = spec.name;
            j["similarity_dimension"] = spec.S;
            j["weyl_exponent"] = spec.weyl_exponent();
            j["mu"] = spec.mu;
            j["renormalization_residual"] = renormalization_residual(spec);
            ojson lv = ojson::array();
            for (int m = 0; m <= level; ++m) {
                auto g = build_level_graph(spec, m);
                lv.push_back({{"level", m}, {"vertices", g.size()}, {"interior", g.interior_size()}, {"cells", g.cells_at[m]}});
            }
            j["levels"] = lv;
            emit(co.out, dump_json(j));
            return 0;
        }

        if (name == "metric") {
            auto g = build_level_graph(spec, level);
            auto pairs = read_pairs(g, pairs_path);
            ChemicalGraph cg(g, partition_at_scale(spec, k_scale));
            std::string csv = csv_line({"x", "y", "k", "d_k", "R"});
            for (auto [x, y] : pairs)
                csv += csv_line({point_name(g, x), point_name(g, y), fmt17(k_scale), std::to_string(cg.distance(x, y)),
                                 fmt17(effective_resistance(g, x, y))});
            emit(co.out, csv);
            return 0;
        }

        if (name == "spectrum") {
            auto g = build_level_graph(spec, level);
            auto sp = spectrum(g, bc == "neumann" ? Boundary::Neumann : Boundary::Dirichlet, count, false);
            std::string csv = csv_line({"j", "lambda_j"});
            for (int j = 0; j < sp.lambda.size(); ++j) csv += csv_line({std::to_string(j + 1), fmt17(sp.lambda(j))});
            emit(co.out, csv);
            return 0;
        }

        if (name == "eta") {
            auto g = build_level_graph(spec, level);
            if (p_label < 0 || p_label >= g.nb()) throw ConfigError("--p must index a V0 point");
            auto e = eta(g, p_label, parse_complex(z_text));
            std::string csv = csv_line({"vertex", "value_re", "value_im"});
            for (int v = 0; v < g.size(); ++v) csv += csv_line({point_name(g, v), fmt17(e.values(v).real()), fmt17(e.values(v).imag())});
            emit(co.out, csv);
            return 0;
        }

        if (name == "resolvent") {
            PsiCache cache(spec);
            const LevelGraph& g = cache.graphs().at(level);
            auto pairs = read_pairs(g, pairs_path);
            const cplx z = parse_complex(z_text);
            KernelGrid kg;
            if (neumann) {
                if (z.imag() != 0) throw ConfigError("the Neumann kernel takes real z");
                kg = neumann_resolvent(cache, level, z.real(), pairs, depth);
            } else {
                if (level < 2) throw ConfigError("the series needs level >= 2");
                kg = resolvent_series(cache, level, z, depth < 0 ? level - 2 : depth, pairs);
            }
            std::string csv = csv_line({"x", "y", "re", "im", "tail_bound"});
            for (size_t i = 0; i < pairs.size(); ++i)
                csv += csv_line({point_name(g, pairs[i].first), point_name(g, pairs[i].second), fmt17(kg.values[i].real()),
                                 fmt17(kg.values[i].imag()), fmt17(kg.tail[i])});
            emit(co.out, csv);
            return 0;
        }

        if (name == "blowup") {
            auto omega = parse_infinite_word(omega_text, spec.letters);
            std::vector<std::pair<BlowupPoint, BlowupPoint>> pairs;
            int n0 = 0;
            for (auto& r : read_csv(pairs_path, 2)) {
                pairs.push_back({parse_blowup_point(r[0], spec), parse_blowup_point(r[1], spec)});
                n0 = std::max({n0, pairs.back().first.depth, pairs.back().second.depth});
            }
            if (pairs.empty()) throw ConfigError("'" + pairs_path + "' holds no pairs");
            const cplx z = parse_complex(z_text);
            std::string csv = csv_line({"n", "x", "y", "re", "im", "tail_bound"});
            for (int n = n0; n <= nmax; ++n) {
                auto kg = blowup_resolvent(spec, omega, n, z, pairs, base_level);
                for (size_t i = 0; i < pairs.size(); ++i)
                    csv += csv_line({std::to_string(n), blowup_point_name(pairs[i].first), blowup_point_name(pairs[i].second),
                                     fmt17(kg.values[i].real()), fmt17(kg.values[i].imag()), fmt17(kg.tail[i])});
            }
            auto rep = blowup_convergence(spec, omega, nmax, z, pairs, base_level);
            ojson j{{"schema", kReportSchema}, {"command", "blowup"}, {"report", rep.to_json()}};
            auto failed = failed_checks({rep});
            j["failed_checks"] = failed;
            if (!report_path.empty()) write_file_atomic(report_path, dump_json(j));
            emit(co.out, csv);
            for (auto& id : failed) std::cerr << "fractal: check failed: " << id << "\n";
            return failed.empty() ? 0 : 3;
        }

        if (name == "sector") {
            SectorVerifyConfig c;
            c.C_cal = c_cal;
            c.seed = sector_seed;
            c.rays.clear();
            for (auto& s : split(rays_text, ',')) c.rays.push_back(parse_number(s));
            if (!modulus_text.empty()) c.moduli = parse_grid(modulus_text);
            std::vector<int> pts;
            if (!pairs_path.empty()) {
                auto g = build_level_graph(spec, level);
                std::vector<std::pair<int, int>> idx;
                pts = pair_points(read_pairs(g, pairs_path), idx);
            }
            auto rep = verify_sector_estimates(spec, level, c, pts);
            SuiteConfig sc_cfg;
            sc_cfg.spec_source = co.spec;
            sc_cfg.level = level;
            sc_cfg.C_cal = c_cal;
            sc_cfg.lambda_grid = c.moduli;
            sc_cfg.seed = sector_seed;
            return finish_report(co.out, single_report(spec, "sector", sc_cfg, rep));
        }

        if (name == "heat" || name == "kernel") {
            KernelCalculus kc(spec, level);
            auto pairs = read_pairs(kc.graph(), pairs_path);
            const auto km = parse_kernel_method(method);
            KernelResult r;
            VerificationReport gates;
            bool have_gates = false;
            if (name == "heat") {
                r = heat_kernel(kc, t_val, pairs, km, refine);
            } else if (symbol == "heat") {
                r = heat_kernel(kc, parse_number(w_text), pairs, km, refine);
            } else if (symbol == "exp") {
                r = exp_complex_kernel(kc, parse_complex(w_text), pairs, km, refine);
            } else {
                have_gates = true;
                try {
                    r = complex_power_kernel(kc, parse_complex(w_text), pairs, km, refine, &gates);
                } catch (const GateFailure&) {
                    if (!report_path.empty())
                        write_file_atomic(report_path, dump_json(ojson{{"schema", kReportSchema}, {"command", "kernel"}, {"gates", gates.to_json()}}));
                    throw;
                }
            }
            std::string csv = csv_line({"x", "y", "re", "im", "budget"});
            for (size_t i = 0; i < pairs.size(); ++i)
                csv += csv_line({point_name(kc.graph(), pairs[i].first), point_name(kc.graph(), pairs[i].second),
                                 fmt17(r.grid.values[i].real()), fmt17(r.grid.values[i].imag()), fmt17(r.grid.tail[i])});
            if (!report_path.empty()) {
                ojson j{{"schema", kReportSchema}, {"command", name}, {"result", r.to_json()}};
                if (have_gates) j["gates"] = gates.to_json();
                write_file_atomic(report_path, dump_json(j));
            }
            emit(co.out, csv);
            return 0;
        }

        if (name == "verify") {
            SuiteConfig cfg;
            cfg.spec_source = co.spec;
            cfg.level = level;
            cfg.C_cal = c_cal;
            if (!lambda_text.empty()) cfg.lambda_grid = parse_grid(lambda_text);
            if (!t_text.empty()) cfg.t_grid = parse_grid(t_text);
            cfg.heat_tolerance = heat_tol;
            cfg.weyl_tolerance = weyl_tol;
            cfg.random_triples = triples;
            cfg.heat_pairs = heat_pairs;
            cfg.seed = seed;
            std::vector<VerificationReport> reps;
            if (what == "all")
                reps = suite_all(spec, cfg);
            else
                reps.push_back(suite_report(spec, what, cfg));
            return finish_report(co.out, suite_json(spec, "verify " + what, cfg, reps));
        }
        throw ConfigError("unknown command '" + name + "'");
    } catch (const Error& e) {
        std::cerr << "fractal: " << e.kind() << " error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "fractal: error: " << e.what() << "\n";
        return 3;
    }
}
