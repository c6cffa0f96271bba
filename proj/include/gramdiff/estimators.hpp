// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// End-to-end estimators: the Gram-guided diffusion estimator with its nested
// variants (DM, DM+likelihood, DM+Gram) and the genie-aided LMMSE baseline.

#pragma once

#include "denoiser.hpp"
#include "gram.hpp"
#include "guidance.hpp"
#include "link.hpp"
#include "mixture.hpp"
#include "observation.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace gramdiff {

enum class Variant { dm, dm_lik, dm_gram, gramdiff, genie_lmmse };

inline std::string to_string(Variant v) {
    switch (v) {
    case Variant::dm:
        return "dm";
    case Variant::dm_lik:
        return "dm+lik";
    case Variant::dm_gram:
        return "dm+gram";
    case Variant::gramdiff:
        return "gramdiff";
    case Variant::genie_lmmse:
        return "genie-lmmse";
    }
    return "?";
}

inline Variant parse_variant(const std::string &s) {
    if (s == "dm")
        return Variant::dm;
    if (s == "dm+lik")
        return Variant::dm_lik;
    if (s == "dm+gram")
        return Variant::dm_gram;
    if (s == "gramdiff")
        return Variant::gramdiff;
    if (s == "genie-lmmse" || s == "genie")
        return Variant::genie_lmmse;
    throw ConfigError("unknown variant '" + s + "' (expected dm|dm+lik|dm+gram|gramdiff|genie-lmmse)");
}

struct EstimatorConfig {
    Variant variant = Variant::gramdiff;
    GuidanceConfig guidance;
    GramSource gram_source = GramSource::estimated;
    ProjectionOptions projection;
    SnrMatch snr_match = SnrMatch::raw;
    ReverseRule reverse_rule = ReverseRule::posterior_mean;
    std::uint64_t seed = 1;

    bool uses_gram() const noexcept { return guidance.lambda_gram > 0.0 && gram_source != GramSource::none; }

    /// Tag label used in result tables, e.g. "gramdiff" or "gramdiff/oracle".
    std::string label() const {
        std::string s = to_string(variant);
        if (uses_gram() && gram_source == GramSource::oracle)
            s += "/oracle";
        return s;
    }

    void validate() const {
        guidance.validate();
        if (projection.shrinkage < 0.0 || projection.shrinkage > 1.0)
            throw ConfigError("estimator: shrinkage must lie in [0, 1]");
        const bool like = guidance.lambda_like > 0.0, gr = guidance.lambda_gram > 0.0;
        switch (variant) {
        case Variant::dm:
            if (like || gr)
                throw ConfigError("variant dm requires lambda_like = lambda_gram = 0");
            break;
        case Variant::dm_lik:
            if (gr)
                throw ConfigError("variant dm+lik requires lambda_gram = 0");
            break;
        case Variant::dm_gram:
            if (like)
                throw ConfigError("variant dm+gram requires lambda_like = 0");
            break;
        default:
            break;
        }
        if (gr && gram_source == GramSource::none && variant != Variant::genie_lmmse)
            throw ConfigError("lambda_gram > 0 needs a gram source (oracle|estimated)");
    }
};

/// Derive the configuration of a nested variant from the full guidance
/// settings: dm zeroes both scales, dm+lik zeroes the Gram scale, dm+gram
/// zeroes the likelihood scale.
inline EstimatorConfig make_variant(Variant v, const EstimatorConfig &full) {
    EstimatorConfig c = full;
    c.variant = v;
    switch (v) {
    case Variant::dm:
        c.guidance.lambda_like = 0.0;
        c.guidance.lambda_gram = 0.0;
        break;
    case Variant::dm_lik:
        c.guidance.lambda_gram = 0.0;
        break;
    case Variant::dm_gram:
        c.guidance.lambda_like = 0.0;
        break;
    case Variant::gramdiff:
    case Variant::genie_lmmse:
        break;
    }
    if (v == Variant::dm || v == Variant::dm_lik)
        c.gram_source = GramSource::none;
    return c;
}

struct Instrumentation {
    std::size_t denoiser_evals = 0;
    std::size_t likelihood_evals = 0;
    std::size_t gram_guidance_evals = 0;
    std::size_t gram_estimation_cmacs = 0; // complex multiply-accumulates
    std::size_t gram_guidance_cmacs = 0;
    std::size_t clipped_steps = 0;
};

struct EstimateResult {
    ComplexMatrix h_hat;         // spatial
    ComplexMatrix h_hat_angular; // H~_0
    std::size_t t_star = 0;
    std::optional<GramEstimate> gram;
    double lambda_gram_effective = 0.0;
};

struct EstimatorContext {
    const NoiseSchedule &schedule;
    const DenoiserBackend &backend;
    const AngularTransform &transform;
};

/// Gram-guided diffusion estimate.
///
/// Pilots are decorrelated and taken to the angular domain, the reverse chain
/// starts at the step whose model SNR matches 1/sigma^2 from the
/// variance-normalized observation, and every step adds
///   lambda_like,t g_like + clip(lambda_gram,t g_gram)
/// to the denoiser update. A guidance term with zero scale is skipped, so the
/// nested variants are reproduced bit for bit.
///
/// `true_h` is consulted only for the oracle Gram source.
inline EstimateResult estimate_gramdiff(const Frame &frame, const EstimatorContext &ctx, const EstimatorConfig &cfg,
                                        const ComplexMatrix *true_h = nullptr, Instrumentation *inst = nullptr) {
    cfg.validate();
    const auto &s = ctx.schedule;
    const auto &xf = ctx.transform;
    const AngularObservation obs = to_angular_observation(frame.y_p, frame.x_p, frame.sigma2, xf);

    EstimateResult res;
    if (frame.sigma2 == 0.0) {
        // noiseless pilots: the decorrelated observation is the channel
        res.h_hat_angular = obs.y_angular;
        res.h_hat = xf.inverse(obs.y_angular);
        return res;
    }

    res.t_star = match_t(obs.snr, s, cfg.snr_match);

    double lambda_gram = 0.0;
    if (cfg.uses_gram()) {
        if (cfg.gram_source == GramSource::oracle) {
            if (!true_h)
                throw PreconditionError("estimate_gramdiff: oracle Gram source needs the true channel");
            res.gram = oracle_gram(*true_h, xf);
            lambda_gram = cfg.guidance.lambda_gram;
        } else {
            if (frame.n_d == 0)
                throw InsufficientDataError("estimate_gramdiff: estimated Gram source needs n_d >= 1");
            res.gram = sample_gram(frame.y_d, frame.sigma2_d, frame.n_d, xf, cfg.projection);
            if (inst)
                inst->gram_estimation_cmacs += frame.y_d.rows() * frame.y_d.rows() * frame.n_d;
            lambda_gram = res.gram->low_confidence ? 0.0
                                                   : cfg.guidance.lambda_gram * cfg.guidance.adaptation.factor(frame.n_d);
        }
    }
    res.lambda_gram_effective = lambda_gram;
    GuidanceConfig g = cfg.guidance;
    g.lambda_gram = lambda_gram;

    ComplexMatrix h = obs.y_tilde;
    for (std::size_t t = res.t_star; t >= 1; --t) {
        const ComplexMatrix eps = ctx.backend.predict_noise(h, t, s);
        if (inst)
            ++inst->denoiser_evals;
        ComplexMatrix next = reverse_from_noise(h, eps, t, s, cfg.reverse_rule);

        const double ll = lambda_like_at(t, s, g, obs.snr);
        if (ll > 0.0) {
            const ComplexMatrix clean = tweedie_from_noise(h, eps, t, s);
            next.axpy(ll, likelihood_guidance(obs.y_angular, clean, frame.sigma2));
            if (inst)
                ++inst->likelihood_evals;
        }
        const double lg = lambda_gram_at(t, s, g);
        if (lg > 0.0) {
            ComplexMatrix step = gram_guidance(h, res.gram->r_angular);
            step *= lg;
            if (g.clip_enabled) {
                const double norm = fro_norm(step);
                if (inst && norm > g.clip_threshold)
                    ++inst->clipped_steps;
                step = clip_update(step, g.clip_threshold, g.clip_epsilon);
            }
            next += step;
            if (inst) {
                ++inst->gram_guidance_evals;
                inst->gram_guidance_cmacs += 2 * h.rows() * h.rows() * h.cols();
            }
        }
        if (!next.all_finite())
            throw DivergenceError(t, "estimate_gramdiff: non-finite state");
        h = std::move(next);
    }
    res.h_hat = xf.inverse(h);
    res.h_hat_angular = std::move(h);
    return res;
}

/// Per-entry LMMSE with the generating component's diagonal covariance:
/// h_i = c_i / (c_i + sigma^2) y_i on the decorrelated angular observation.
inline ComplexMatrix estimate_genie_lmmse(const Frame &frame, const DiagonalMixture &prior, std::size_t component,
                                          const AngularTransform &xf) {
    if (component >= prior.components())
        throw PreconditionError("estimate_genie_lmmse: component index " + std::to_string(component) +
                                " out of range");
    const AngularObservation obs = to_angular_observation(frame.y_p, frame.x_p, frame.sigma2, xf);
    ComplexMatrix ht = obs.y_angular;
    const auto &c = prior.variances[component];
    for (std::size_t i = 0; i < ht.size(); ++i)
        ht.data()[i] *= c[i] / (c[i] + frame.sigma2);
    return xf.inverse(ht);
}

/// Dense-covariance LMMSE on a vectorized observation: C (C + sigma^2 I)^{-1} y.
/// O(N^3); the diagonal estimator above is the production path.
inline ComplexMatrix lmmse_dense(const ComplexMatrix &y_vec, const ComplexMatrix &cov, double sigma2) {
    ComplexMatrix a = cov;
    for (std::size_t i = 0; i < a.rows(); ++i)
        a(i, i) += sigma2;
    return matmul(cov, solve_hpd(a, y_vec));
}

/// Conditional-mean estimate under the mixture prior given the angular
/// observation (component posterior times per-component LMMSE).
inline ComplexMatrix estimate_mixture_cme(const Frame &frame, const DiagonalMixture &prior,
                                          const AngularTransform &xf) {
    const AngularObservation obs = to_angular_observation(frame.y_p, frame.x_p, frame.sigma2, xf);
    const std::size_t n = prior.dim(), kc = prior.components();
    std::vector<double> logp(kc);
    double mx = -INFINITY;
    for (std::size_t k = 0; k < kc; ++k) {
        double ll = std::log(prior.weights[k]);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = prior.variances[k][i] + frame.sigma2;
            ll -= std::log(v) + std::norm(obs.y_angular.data()[i]) / v;
        }
        logp[k] = ll;
        mx = std::max(mx, ll);
    }
    double z = 0.0;
    for (auto &l : logp)
        z += (l = std::exp(l - mx));
    ComplexMatrix ht = obs.y_angular;
    for (std::size_t i = 0; i < n; ++i) {
        double gsum = 0.0;
        for (std::size_t k = 0; k < kc; ++k)
            gsum += logp[k] * prior.variances[k][i] / (prior.variances[k][i] + frame.sigma2);
        ht.data()[i] *= gsum / z;
    }
    return xf.inverse(ht);
}

struct OpCountReport {
    std::size_t t_star = 0;
    std::size_t denoiser_evals = 0;
    std::size_t likelihood_evals = 0;
    std::size_t gram_guidance_evals = 0;
    std::size_t gram_estimation_cmacs = 0;      // O(N_R^2 N_d), one time
    std::size_t gram_guidance_cmacs_per_step = 0; // O(N_R^2 N_T)
    std::size_t lmmse_cmacs = 0;                // O(N^3) dense genie solve
};

struct Dims {
    std::size_t n_r = 16;
    std::size_t n_t = 4;
    std::size_t n_d = 0;
};

/// Predicted online cost of one estimate, in the units counted by
/// Instrumentation. Assumes the Gram estimate is not degenerate.
inline OpCountReport op_count_report(const EstimatorConfig &cfg, const Dims &d, double sigma2,
                                     const NoiseSchedule &s) {
    OpCountReport r;
    const std::size_t n = d.n_r * d.n_t;
    if (cfg.variant == Variant::genie_lmmse) {
        r.lmmse_cmacs = n * n * n;
        return r;
    }
    if (sigma2 == 0.0)
        return r;
    r.t_star = match_t(1.0 / sigma2, s, cfg.snr_match);
    r.denoiser_evals = r.t_star;
    if (cfg.guidance.lambda_like > 0.0)
        r.likelihood_evals = r.t_star;
    if (cfg.uses_gram()) {
        double factor = 1.0;
        if (cfg.gram_source == GramSource::estimated) {
            r.gram_estimation_cmacs = d.n_r * d.n_r * d.n_d;
            factor = cfg.guidance.adaptation.factor(d.n_d);
        }
        if (factor > 0.0) {
            r.gram_guidance_evals = r.t_star;
            r.gram_guidance_cmacs_per_step = 2 * d.n_r * d.n_r * d.n_t;
        }
    }
    return r;
}

} // namespace gramdiff
