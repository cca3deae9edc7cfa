#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fractal/report.hpp"

namespace fractal {

// g <= C exp(-kappa d) (upper) or g >= c exp(-kappa d) (lower), fitted to samples of
// (d, log g). The line is pinned by the extreme sample at the smallest distance and takes
// the tightest rate consistent with every sample.
struct DecayEnvelope {
    double log_prefactor = std::numeric_limits<double>::quiet_NaN();
    double kappa = std::numeric_limits<double>::quiet_NaN();
    int samples = 0;
    int violations = 0;
    bool valid() const { return samples > 0 && std::isfinite(log_prefactor) && std::isfinite(kappa); }
    ojson to_json() const {
        return {{"log_prefactor", log_prefactor}, {"kappa", kappa}, {"samples", samples}, {"violations", violations}};
    }
};

inline DecayEnvelope upper_decay_envelope(const std::vector<double>& d, const std::vector<double>& logg) {
    DecayEnvelope e;
    e.samples = static_cast<int>(d.size());
    if (d.empty()) return e;
    double dmin = *std::min_element(d.begin(), d.end());
    e.log_prefactor = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] == dmin) e.log_prefactor = std::max(e.log_prefactor, logg[i]);
    double k = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] > dmin) k = std::min(k, (e.log_prefactor - logg[i]) / (d[i] - dmin));
    if (!std::isfinite(k)) k = 0;
    e.log_prefactor += k * dmin;
    e.kappa = k;
    for (size_t i = 0; i < d.size(); ++i)
        if (logg[i] > e.log_prefactor - e.kappa * d[i] + 1e-12 * (1 + std::abs(logg[i]))) ++e.violations;
    return e;
}

inline DecayEnvelope lower_decay_envelope(const std::vector<double>& d, const std::vector<double>& logg) {
    DecayEnvelope e;
    e.samples = static_cast<int>(d.size());
    if (d.empty()) return e;
    double dmin = *std::min_element(d.begin(), d.end());
    e.log_prefactor = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] == dmin) e.log_prefactor = std::min(e.log_prefactor, logg[i]);
    double k = 0;
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] > dmin) k = std::max(k, (e.log_prefactor - logg[i]) / (d[i] - dmin));
    // re-anchor at d = 0
    e.log_prefactor += k * dmin;
    e.kappa = k;
    for (size_t i = 0; i < d.size(); ++i)
        if (logg[i] < e.log_prefactor - e.kappa * d[i] - 1e-12 * (1 + std::abs(logg[i]))) ++e.violations;
    return e;
}

}  // namespace fractal
