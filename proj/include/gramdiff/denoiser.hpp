// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Noise-prediction backends, the Tweedie estimate and the deterministic
// reverse updates.

#pragma once

#include "mixture.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace gramdiff {

/// eps_theta(H~_t, t): predicted forward noise, same shape as the input.
/// Implementations are immutable and deterministic.
class DenoiserBackend {
  public:
    virtual ~DenoiserBackend() = default;
    virtual ComplexMatrix predict_noise(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s) const = 0;
    virtual std::string name() const = 0;
};

/// Always predicts zero noise.
class ZeroDenoiser final : public DenoiserBackend {
  public:
    ComplexMatrix predict_noise(const ComplexMatrix &ht, std::size_t, const NoiseSchedule &) const override {
        return ComplexMatrix(ht.rows(), ht.cols());
    }
    std::string name() const override { return "zero"; }
};

/// Exact MMSE denoiser for a diagonal Gaussian-mixture prior on H~_0.
///
/// Under component k, entry i of H~_t is CN(0, v_ki) with
/// v_ki = abar c_ki + (1 - abar), and its posterior mean is
/// sqrt(abar) c_ki / v_ki * h_i. Responsibilities use the full-matrix
/// likelihood, combined with log-sum-exp.
class AnalyticGMDenoiser final : public DenoiserBackend {
  public:
    explicit AnalyticGMDenoiser(DiagonalMixture prior) : prior_(std::move(prior)) {
        prior_.validate();
        log_w_.reserve(prior_.components());
        for (double w : prior_.weights)
            log_w_.push_back(std::log(w));
    }

    const DiagonalMixture &prior() const noexcept { return prior_; }

    /// E[H~_0 | H~_t] computed directly.
    ComplexMatrix posterior_mean(const ComplexMatrix &ht, double abar) const {
        check(ht);
        const std::size_t n = prior_.dim(), kc = prior_.components();
        const double sa = std::sqrt(abar);
        std::vector<double> mag2(n);
        for (std::size_t i = 0; i < n; ++i)
            mag2[i] = std::norm(ht.data()[i]);

        std::vector<double> logp(kc);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kc; ++k) {
            double ll = log_w_[k];
            const auto &c = prior_.variances[k];
            for (std::size_t i = 0; i < n; ++i) {
                const double v = abar * c[i] + (1.0 - abar);
                ll -= std::log(v) + mag2[i] / v;
            }
            logp[k] = ll;
            mx = std::max(mx, ll);
        }
        double z = 0.0;
        for (auto &l : logp)
            z += (l = std::exp(l - mx));

        ComplexMatrix out(ht.rows(), ht.cols());
        for (std::size_t i = 0; i < n; ++i) {
            double gain = 0.0;
            for (std::size_t k = 0; k < kc; ++k) {
                const double c = prior_.variances[k][i];
                gain += logp[k] * c / (abar * c + (1.0 - abar));
            }
            out.data()[i] = (sa * gain / z) * ht.data()[i];
        }
        return out;
    }

    ComplexMatrix predict_noise(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s) const override {
        const double abar = s.alpha_bar(t);
        ComplexMatrix eps = ht;
        eps.axpy(-std::sqrt(abar), posterior_mean(ht, abar));
        eps *= 1.0 / std::sqrt(1.0 - abar);
        return eps;
    }

    std::string name() const override { return "analytic-gm"; }

  private:
    void check(const ComplexMatrix &m) const {
        if (m.rows() != prior_.n_r || m.cols() != prior_.n_t)
            throw DimensionError("AnalyticGMDenoiser: expected " + std::to_string(prior_.n_r) + "x" +
                                 std::to_string(prior_.n_t) + " input");
    }

    DiagonalMixture prior_;
    std::vector<double> log_w_;
};

/// Wraps a backend and counts forward passes.
class CountingDenoiser final : public DenoiserBackend {
  public:
    explicit CountingDenoiser(const DenoiserBackend &inner) : inner_(inner) {}

    ComplexMatrix predict_noise(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s) const override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        return inner_.predict_noise(ht, t, s);
    }
    std::string name() const override { return inner_.name(); }
    std::size_t calls() const noexcept { return calls_.load(); }

  private:
    const DenoiserBackend &inner_;
    mutable std::atomic<std::size_t> calls_{0};
};

/// T(H~_t) = (H~_t - sqrt(1 - abar_t) eps) / sqrt(abar_t), given eps.
inline ComplexMatrix tweedie_from_noise(const ComplexMatrix &ht, const ComplexMatrix &eps, std::size_t t,
                                        const NoiseSchedule &s) {
    const double abar = s.alpha_bar(t);
    ComplexMatrix out = ht;
    out.axpy(-std::sqrt(1.0 - abar), eps);
    out *= 1.0 / std::sqrt(abar);
    return out;
}

inline ComplexMatrix tweedie(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s,
                             const DenoiserBackend &backend) {
    if (t < 1 || t > s.t_max())
        throw PreconditionError("tweedie: t out of range");
    return tweedie_from_noise(ht, backend.predict_noise(ht, t, s), t, s);
}

/// Noise implied by a clean estimate: (H~_t - sqrt(abar) T) / sqrt(1 - abar).
inline ComplexMatrix noise_from_tweedie(const ComplexMatrix &ht, const ComplexMatrix &clean, std::size_t t,
                                        const NoiseSchedule &s) {
    const double abar = s.alpha_bar(t);
    ComplexMatrix eps = ht;
    eps.axpy(-std::sqrt(abar), clean);
    eps *= 1.0 / std::sqrt(1.0 - abar);
    return eps;
}

/// Deterministic reverse update rules.
///
///  ddim:           sqrt(abar_{t-1}) T + sqrt(1 - abar_{t-1}) eps
///  posterior_mean: mean of q(H~_{t-1} | H~_t, H~_0 = T), i.e.
///                  (H~_t - beta_t / sqrt(1 - abar_t) eps) / sqrt(alpha_t)
///
/// Both return T at t = 1 and sqrt(abar_{t-1}/abar_t) H~_t when eps = 0.
/// Only posterior_mean keeps the Tweedie estimate of a unit Gaussian prior
/// fixed along the trajectory, so the truncated chain started from an
/// SNR-matched observation lands on the LMMSE estimate.
enum class ReverseRule { posterior_mean, ddim };

inline std::string to_string(ReverseRule r) { return r == ReverseRule::ddim ? "ddim" : "posterior-mean"; }

inline ReverseRule parse_reverse_rule(const std::string &s) {
    if (s == "posterior-mean" || s == "posterior_mean")
        return ReverseRule::posterior_mean;
    if (s == "ddim")
        return ReverseRule::ddim;
    throw ConfigError("unknown reverse rule '" + s + "' (expected posterior-mean|ddim)");
}

/// One reverse step given a precomputed noise prediction.
inline ComplexMatrix reverse_from_noise(const ComplexMatrix &ht, const ComplexMatrix &eps, std::size_t t,
                                        const NoiseSchedule &s, ReverseRule rule) {
    if (t < 1 || t > s.t_max())
        throw PreconditionError("reverse step: t out of range");
    if (rule == ReverseRule::ddim) {
        const double ab_prev = s.alpha_bar(t - 1);
        ComplexMatrix out = tweedie_from_noise(ht, eps, t, s);
        out *= std::sqrt(ab_prev);
        if (t > 1)
            out.axpy(std::sqrt(1.0 - ab_prev), eps);
        return out;
    }
    if (t == 1)
        return tweedie_from_noise(ht, eps, t, s);
    ComplexMatrix out = ht;
    out.axpy(-s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t)), eps);
    out *= 1.0 / std::sqrt(s.alpha(t));
    return out;
}

inline ComplexMatrix ddim_step(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s,
                               const DenoiserBackend &backend) {
    return reverse_from_noise(ht, backend.predict_noise(ht, t, s), t, s, ReverseRule::ddim);
}

inline ComplexMatrix posterior_mean_step(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s,
                                         const DenoiserBackend &backend) {
    return reverse_from_noise(ht, backend.predict_noise(ht, t, s), t, s, ReverseRule::posterior_mean);
}

inline ComplexMatrix reverse_step(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s,
                                  const DenoiserBackend &backend, ReverseRule rule) {
    return reverse_from_noise(ht, backend.predict_noise(ht, t, s), t, s, rule);
}

/// sqrt(abar_t) H~_0 + sqrt(1 - abar_t) eta, eta ~ CN(0, I).
inline ComplexMatrix forward_diffuse(const ComplexMatrix &h0, std::size_t t, const NoiseSchedule &s, Rng &rng) {
    const double abar = s.alpha_bar(t);
    ComplexMatrix out = complex_normal_matrix(h0.rows(), h0.cols(), rng, 1.0);
    out *= std::sqrt(1.0 - abar);
    out.axpy(std::sqrt(abar), h0);
    return out;
}

} // namespace gramdiff
