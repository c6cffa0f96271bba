// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "errors.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

namespace gramdiff {

enum class ScheduleKind { linear, cosine };

inline std::string to_string(ScheduleKind k) { return k == ScheduleKind::linear ? "linear" : "cosine"; }

inline ScheduleKind parse_schedule_kind(const std::string &s) {
    if (s == "linear")
        return ScheduleKind::linear;
    if (s == "cosine")
        return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind '" + s + "' (expected linear|cosine)");
}

struct ScheduleParams {
    std::size_t t_max = 300;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    ScheduleKind kind = ScheduleKind::linear;

    /// Canonical text used for the schedule hash shared with weight files.
    std::string canonical() const {
        char buf[160];
        std::snprintf(buf, sizeof buf, "kind=%s;t_max=%zu;beta_start=%.17g;beta_end=%.17g", to_string(kind).c_str(),
                      t_max, beta_start, beta_end);
        return buf;
    }

    std::uint64_t hash() const {
        const auto c = canonical();
        return fnv1a64(c.data(), c.size());
    }
};

/// Variance-preserving noise schedule. Steps are 1-based: t = 1..T, with
/// alpha_bar(0) defined as 1.
class NoiseSchedule {
  public:
    NoiseSchedule() = default;

    explicit NoiseSchedule(std::vector<double> betas, ScheduleParams params = {})
        : params_(params), beta_(std::move(betas)) {
        if (beta_.empty())
            throw ConfigError("NoiseSchedule: empty beta sequence");
        alpha_.resize(beta_.size());
        alpha_bar_.resize(beta_.size());
        snr_.resize(beta_.size());
        double prod = 1.0;
        for (std::size_t i = 0; i < beta_.size(); ++i) {
            if (!(beta_[i] > 0.0) || beta_[i] > 0.999)
                throw ConfigError("NoiseSchedule: beta[" + std::to_string(i + 1) + "] outside (0, 0.999]");
            alpha_[i] = 1.0 - beta_[i];
            prod *= alpha_[i];
            alpha_bar_[i] = prod;
            snr_[i] = prod / (1.0 - prod);
        }
        params_.t_max = beta_.size();
    }

    std::size_t t_max() const noexcept { return beta_.size(); }
    double beta(std::size_t t) const { return beta_.at(t - 1); }
    double alpha(std::size_t t) const { return alpha_.at(t - 1); }
    double alpha_bar(std::size_t t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
    double snr_dm(std::size_t t) const { return snr_.at(t - 1); }

    const std::vector<double> &betas() const noexcept { return beta_; }
    const std::vector<double> &alpha_bars() const noexcept { return alpha_bar_; }
    const std::vector<double> &snrs() const noexcept { return snr_; }
    const ScheduleParams &params() const noexcept { return params_; }

  private:
    ScheduleParams params_;
    std::vector<double> beta_, alpha_, alpha_bar_, snr_;
};

/// Builds a schedule. `linear` interpolates beta between the endpoints;
/// `cosine` takes alpha_bar from the squared-cosine profile and clamps the
/// implied betas into [beta_start, beta_end].
inline NoiseSchedule make_schedule(const ScheduleParams &p) {
    if (p.t_max == 0)
        throw ConfigError("make_schedule: t_max must be >= 1");
    if (!(p.beta_start > 0.0) || !(p.beta_start <= p.beta_end) || !(p.beta_end < 1.0))
        throw ConfigError("make_schedule: require 0 < beta_start <= beta_end < 1");
    std::vector<double> b(p.t_max);
    if (p.kind == ScheduleKind::linear) {
        for (std::size_t i = 0; i < p.t_max; ++i) {
            const double frac = p.t_max == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(p.t_max - 1);
            b[i] = p.beta_start + frac * (p.beta_end - p.beta_start);
        }
    } else {
        constexpr double s = 0.008;
        auto f = [&](double t) {
            const double c = std::cos((t / static_cast<double>(p.t_max) + s) / (1.0 + s) * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0.0);
        double prev = 1.0;
        for (std::size_t i = 0; i < p.t_max; ++i) {
            const double ab = f(static_cast<double>(i + 1)) / f0;
            double beta = 1.0 - ab / prev;
            beta = std::min(std::max(beta, p.beta_start), std::min(p.beta_end, 0.999));
            b[i] = beta;
            prev *= 1.0 - beta;
        }
    }
    return NoiseSchedule(std::move(b), p);
}

inline NoiseSchedule make_schedule(std::size_t t_max, double beta_start, double beta_end,
                                   ScheduleKind kind = ScheduleKind::linear) {
    return make_schedule(ScheduleParams{t_max, beta_start, beta_end, kind});
}

enum class SnrMatch { raw, db };

/// Step whose model SNR is closest to the observation SNR. Ties go to the
/// smaller t. `db` mode compares 10 log10 of both sides.
inline std::size_t match_t(double snr_obs, const NoiseSchedule &s, SnrMatch mode = SnrMatch::raw) {
    if (!(snr_obs > 0.0))
        throw PreconditionError("match_t: observation SNR must be positive");
    const double target = mode == SnrMatch::raw ? snr_obs : 10.0 * std::log10(snr_obs);
    std::size_t best = 1;
    double best_gap = INFINITY;
    for (std::size_t t = 1; t <= s.t_max(); ++t) {
        const double v = mode == SnrMatch::raw ? s.snr_dm(t) : 10.0 * std::log10(s.snr_dm(t));
        const double gap = std::abs(target - v);
        if (gap < best_gap) {
            best_gap = gap;
            best = t;
        }
    }
    return best;
}

} // namespace gramdiff
