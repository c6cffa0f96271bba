// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "schedule.hpp"
#include "tensor.hpp"

#include <cmath>
#include <vector>

namespace gramdiff {

/// Multiplier on lambda_gram keyed by the number of data symbols behind the
/// Gram estimate. Rows are (min_n_d, factor); the last row with
/// min_n_d <= n_d wins.
struct GramAdaptation {
    struct Row {
        std::size_t min_n_d;
        double factor;
    };
    std::vector<Row> rows{{0, 0.1}, {20, 0.3}, {200, 1.0}};

    double factor(std::size_t n_d) const {
        double f = 1.0;
        std::size_t best = 0;
        bool found = false;
        for (const auto &r : rows)
            if (r.min_n_d <= n_d && (!found || r.min_n_d >= best)) {
                best = r.min_n_d;
                f = r.factor;
                found = true;
            }
        return f;
    }
};

struct GuidanceConfig {
    double lambda_like = 0.0;
    double lambda_gram = 0.0;
    double snr0 = 0.1;        // gate midpoint, raw SNR
    double delta = 0.0585;    // gate smoothness, raw SNR
    double clip_threshold = 1.0;
    double clip_epsilon = 1e-8;
    bool gating_enabled = false;
    bool clip_enabled = true;
    GramAdaptation adaptation;

    void validate() const {
        if (!(lambda_like >= 0.0) || !std::isfinite(lambda_like))
            throw ConfigError("guidance: lambda_like must be finite and >= 0");
        if (!(lambda_gram >= 0.0) || !std::isfinite(lambda_gram))
            throw ConfigError("guidance: lambda_gram must be finite and >= 0");
        if (!(delta > 0.0))
            throw ConfigError("guidance: delta must be > 0");
        if (!(clip_threshold > 0.0))
            throw ConfigError("guidance: clip_threshold must be > 0");
        if (!(clip_epsilon > 0.0))
            throw ConfigError("guidance: clip_epsilon must be > 0");
        if (!std::isfinite(snr0))
            throw ConfigError("guidance: snr0 must be finite");
    }
};

/// Gate midpoint and width given in dB. The width is converted at the
/// midpoint: delta_raw = snr0_raw (10^{delta_db/10} - 1).
inline void set_gate_db(GuidanceConfig &cfg, double snr0_db, double delta_db) {
    cfg.snr0 = std::pow(10.0, snr0_db / 10.0);
    cfg.delta = cfg.snr0 * (std::pow(10.0, delta_db / 10.0) - 1.0);
}

/// (Y~ - T(H~_t)) / sigma^2
inline ComplexMatrix likelihood_guidance(const ComplexMatrix &y_obs, const ComplexMatrix &tweedie_est, double sigma2) {
    if (!(sigma2 > 0.0))
        throw DegenerateError("likelihood_guidance: sigma2 must be > 0 (noiseless observation)");
    ComplexMatrix g = y_obs - tweedie_est;
    g *= 1.0 / sigma2;
    return g;
}

/// 4 (R~ - H~ H~^H) H~, the gradient of -||H~ H~^H - R~||_F^2 with respect to
/// (Re H~, Im H~) packed as Re + i Im.
inline ComplexMatrix gram_guidance(const ComplexMatrix &ht, const ComplexMatrix &r_angular) {
    if (r_angular.rows() != ht.rows() || r_angular.cols() != ht.rows())
        throw DimensionError("gram_guidance: R~ must be " + std::to_string(ht.rows()) + "x" +
                             std::to_string(ht.rows()));
    ComplexMatrix mismatch = r_angular - gram(ht);
    ComplexMatrix g = matmul(mismatch, ht);
    g *= 4.0;
    return g;
}

inline double gate(double snr_obs, double snr0, double delta) {
    if (!(delta > 0.0))
        throw PreconditionError("gate: delta must be > 0");
    return 1.0 / (1.0 + std::exp(-(snr_obs - snr0) / delta));
}

/// lambda_like * beta_t * w(SNR)
inline double lambda_like_at(std::size_t t, const NoiseSchedule &s, const GuidanceConfig &cfg, double snr_obs) {
    if (cfg.lambda_like == 0.0)
        return 0.0;
    const double w = cfg.gating_enabled ? gate(snr_obs, cfg.snr0, cfg.delta) : 1.0;
    return cfg.lambda_like * s.beta(t) * w;
}

/// lambda_gram * sqrt(beta_t)
inline double lambda_gram_at(std::size_t t, const NoiseSchedule &s, const GuidanceConfig &cfg) {
    if (cfg.lambda_gram == 0.0)
        return 0.0;
    return cfg.lambda_gram * std::sqrt(s.beta(t));
}

/// dx * min(1, th / (||dx||_F + eps))
inline ComplexMatrix clip_update(const ComplexMatrix &dx, double th, double eps) {
    if (!(th > 0.0) || !(eps > 0.0))
        throw PreconditionError("clip_update: th and eps must be > 0");
    const double f = std::min(1.0, th / (fro_norm(dx) + eps));
    ComplexMatrix out = dx;
    out *= f;
    return out;
}

} // namespace gramdiff
