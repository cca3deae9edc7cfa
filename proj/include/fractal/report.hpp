#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace fractal {

using ojson = nlohmann::ordered_json;

struct Check {
    std::string id;
    bool pass = false;
    bool hard = true;
    std::string note;
    ojson data = ojson::object();
};

struct VerificationReport {
    std::string name;
    ojson meta = ojson::object();
    std::vector<Check> checks;

    Check& add(std::string id, bool pass, ojson data = ojson::object(), std::string note = {}, bool hard = true) {
        checks.push_back({std::move(id), pass, hard, std::move(note), std::move(data)});
        return checks.back();
    }
    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass || !c.hard; });
    }
    const Check* find(const std::string& id) const {
        for (auto& c : checks)
            if (c.id == id) return &c;
        return nullptr;
    }
    ojson to_json() const {
        ojson j;
        j["report"] = name;
        j["pass"] = pass();
        j["meta"] = meta;
        ojson arr = ojson::array();
        for (auto& c : checks) {
            ojson e;
            e["id"] = c.id;
            e["pass"] = c.pass;
            e["hard"] = c.hard;
            if (!c.note.empty()) e["note"] = c.note;
            e["data"] = c.data;
            arr.push_back(e);
        }
        j["checks"] = arr;
        return j;
    }
};

struct LineFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double rms = std::numeric_limits<double>::quiet_NaN();
    int n = 0;
    bool ok() const { return n >= 2 && std::isfinite(slope); }
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit f;
    f.n = static_cast<int>(std::min(x.size(), y.size()));
    if (f.n < 2) return f;
    double mx = 0, my = 0;
    for (int i = 0; i < f.n; ++i) mx += x[i], my += y[i];
    mx /= f.n;
    my /= f.n;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < f.n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (int i = 0; i < f.n; ++i) {
        double e = y[i] - (f.intercept + f.slope * x[i]);
        ss += e * e;
    }
    f.rms = std::sqrt(ss / f.n);
    return f;
}

inline std::vector<double> logspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = n == 1 ? a : std::exp(std::log(a) + (std::log(b) - std::log(a)) * i / (n - 1));
    return v;
}

inline int thread_count() {
    if (const char* e = std::getenv("FRACTAL_THREADS")) {
        int t = std::atoi(e);
        if (t > 0) return t;
    }
    unsigned h = std::thread::hardware_concurrency();
    return h ? static_cast<int>(h) : 1;
}

// Runs f(i) for i in [0,n); callers write results by index so output order never depends
// on scheduling.
template <class F>
void parallel_for(int n, F&& f, int threads = thread_count()) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (int i = t; i < n; i += threads) f(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace fractal
