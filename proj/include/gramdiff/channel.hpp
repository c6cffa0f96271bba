// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Synthetic channel families.
//
//  - GMChannelModel: zero-mean complex Gaussian mixture, diagonal in the
//    angular domain. Each component concentrates its power on a few angular
//    bins, so a realization is angularly sparse while the mixture average is
//    flat (unit variance per entry).
//  - LOSChannelModel: a handful of clusters, each a blurred point in the
//    angular grid, with geometrically decaying powers. Its Gram matrix has a
//    concentrated eigen-spectrum.
//
// sample_channel() returns the spatial matrix H = idft2(H~).

#pragma once

#include "mixture.hpp"
#include "rng.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gramdiff {

struct GMProfileParams {
    std::size_t components = 8;
    std::uint64_t profile_seed = 20240611;
    double floor = 0.01;         // minimum relative power of any angular bin
    double rx_spread_min = 0.5;  // Laplacian spread (bins) of the receive profile
    double rx_spread_max = 2.0;
    double tx_spread_min = 0.5;
    double tx_spread_max = 1.5;
    double log_scale_sigma = 1.0; // lognormal component power
};

struct GMChannelModel {
    DiagonalMixture mixture;
    GMProfileParams profile;

    std::size_t n_r() const noexcept { return mixture.n_r; }
    std::size_t n_t() const noexcept { return mixture.n_t; }
};

namespace detail {

inline double circular_distance(double a, double b, double n) {
    double d = std::fmod(std::abs(a - b), n);
    return std::min(d, n - d);
}

} // namespace detail

/// Default GM family: covariances drawn once from a seeded heavy-tailed
/// profile, then rescaled to unit mixture-average variance per entry.
inline GMChannelModel make_gm_model(std::size_t n_r, std::size_t n_t, const GMProfileParams &p = {}) {
    if (n_r == 0 || n_t == 0)
        throw ConfigError("make_gm_model: dimensions must be positive");
    if (p.components == 0)
        throw ConfigError("make_gm_model: need at least one component");
    Rng rng = derive_rng(p.profile_seed, {n_r, n_t, p.components});
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);

    DiagonalMixture m;
    m.n_r = n_r;
    m.n_t = n_t;
    double wsum = 0.0;
    for (std::size_t k = 0; k < p.components; ++k) {
        const double mu_r = u01(rng) * static_cast<double>(n_r);
        const double s_r = p.rx_spread_min + u01(rng) * (p.rx_spread_max - p.rx_spread_min);
        const double mu_t = u01(rng) * static_cast<double>(n_t);
        const double s_t = p.tx_spread_min + u01(rng) * (p.tx_spread_max - p.tx_spread_min);
        const double scale = std::exp(p.log_scale_sigma * n01(rng));
        const double w = 0.5 + u01(rng);
        std::vector<double> var(n_r * n_t);
        for (std::size_t r = 0; r < n_r; ++r) {
            const double a =
                p.floor + std::exp(-detail::circular_distance(static_cast<double>(r), mu_r, static_cast<double>(n_r)) / s_r);
            for (std::size_t t = 0; t < n_t; ++t) {
                const double b = p.floor + std::exp(-detail::circular_distance(static_cast<double>(t), mu_t,
                                                                               static_cast<double>(n_t)) /
                                                    s_t);
                var[r * n_t + t] = scale * a * b;
            }
        }
        m.weights.push_back(w);
        m.variances.push_back(std::move(var));
        wsum += w;
    }
    for (auto &w : m.weights)
        w /= wsum;
    // make the weights sum to one to the last ulp
    double rest = 1.0;
    for (std::size_t k = 0; k + 1 < m.weights.size(); ++k)
        rest -= m.weights[k];
    m.weights.back() = rest;
    m.normalize_per_entry();
    m.validate();
    return GMChannelModel{std::move(m), p};
}

inline GMChannelModel make_single_gaussian_model(std::size_t n_r, std::size_t n_t) {
    GMProfileParams p;
    p.components = 1;
    return GMChannelModel{DiagonalMixture::unit_gaussian(n_r, n_t), p};
}

struct LOSChannelModel {
    std::size_t n_r = 16;
    std::size_t n_t = 4;
    std::size_t clusters = 2;   // rank profile
    double power_decay = 0.25;  // cluster l carries power decay^l (before normalization)
    double angular_spread = 0.5; // Gaussian blur, in angular bins
};

using ChannelModel = std::variant<GMChannelModel, LOSChannelModel>;

inline std::size_t model_n_r(const ChannelModel &m) {
    if (const auto *gm = std::get_if<GMChannelModel>(&m))
        return gm->n_r();
    return std::get<LOSChannelModel>(m).n_r;
}

inline std::size_t model_n_t(const ChannelModel &m) {
    if (const auto *gm = std::get_if<GMChannelModel>(&m))
        return gm->n_t();
    return std::get<LOSChannelModel>(m).n_t;
}

struct ChannelDraw {
    ComplexMatrix h;                     // spatial domain
    ComplexMatrix h_angular;             // dft2(h)
    std::optional<std::size_t> component; // generating GM component
};

inline ChannelDraw sample_channel(const GMChannelModel &model, Rng &rng, const AngularTransform &xf) {
    const auto &m = model.mixture;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double u = u01(rng);
    std::size_t k = 0;
    for (; k + 1 < m.components(); ++k) {
        if (u < m.weights[k])
            break;
        u -= m.weights[k];
    }
    ComplexMatrix ht(m.n_r, m.n_t);
    for (std::size_t i = 0; i < m.dim(); ++i)
        ht.data()[i] = complex_normal(rng, m.variances[k][i]);
    ChannelDraw d;
    d.h = xf.inverse(ht);
    d.h_angular = std::move(ht);
    d.component = k;
    return d;
}

inline ChannelDraw sample_channel(const LOSChannelModel &model, Rng &rng, const AngularTransform &xf) {
    if (model.clusters == 0)
        throw ConfigError("LOSChannelModel: clusters must be >= 1");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const std::size_t n_r = model.n_r, n_t = model.n_t;
    std::vector<double> powers(model.clusters);
    double psum = 0.0;
    for (std::size_t l = 0; l < model.clusters; ++l) {
        powers[l] = std::pow(model.power_decay, static_cast<double>(l));
        psum += powers[l];
    }
    auto signature = [&](std::size_t n, double center) {
        std::vector<double> a(n);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = detail::circular_distance(static_cast<double>(i), center, static_cast<double>(n));
            const double s = std::max(model.angular_spread, 1e-6);
            a[i] = std::exp(-d * d / (2.0 * s * s));
            norm += a[i] * a[i];
        }
        for (auto &v : a)
            v /= std::sqrt(norm);
        return a;
    };
    const double total = std::sqrt(static_cast<double>(n_r * n_t));
    ComplexMatrix ht(n_r, n_t);
    for (std::size_t l = 0; l < model.clusters; ++l) {
        const auto ar = signature(n_r, u01(rng) * static_cast<double>(n_r));
        const auto at = signature(n_t, u01(rng) * static_cast<double>(n_t));
        cplx g;
        if (l == 0) {
            const double ph = 2.0 * std::numbers::pi * u01(rng);
            g = {std::cos(ph), std::sin(ph)};
        } else {
            g = complex_normal(rng, 1.0);
        }
        g *= total * std::sqrt(powers[l] / psum);
        for (std::size_t r = 0; r < n_r; ++r)
            for (std::size_t t = 0; t < n_t; ++t)
                ht(r, t) += g * ar[r] * at[t];
    }
    ChannelDraw d;
    d.h = xf.inverse(ht);
    d.h_angular = std::move(ht);
    return d;
}

inline ChannelDraw sample_channel(const ChannelModel &model, Rng &rng, const AngularTransform &xf) {
    return std::visit([&](const auto &m) { return sample_channel(m, rng, xf); }, model);
}

inline ChannelDraw sample_channel(const ChannelModel &model, Rng &rng) {
    const AngularTransform xf(model_n_r(model), model_n_t(model));
    return sample_channel(model, rng, xf);
}

/// Per-entry angular-domain scaling to unit variance.
struct Normalizer {
    std::size_t n_r = 0;
    std::size_t n_t = 0;
    std::vector<double> scale;

    ComplexMatrix apply(const ComplexMatrix &ht) const {
        check(ht);
        ComplexMatrix out = ht;
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] *= scale[i];
        return out;
    }

    ComplexMatrix unapply(const ComplexMatrix &ht) const {
        check(ht);
        ComplexMatrix out = ht;
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] /= scale[i];
        return out;
    }

  private:
    void check(const ComplexMatrix &m) const {
        if (m.rows() != n_r || m.cols() != n_t)
            throw DimensionError("Normalizer: shape mismatch");
    }
};

/// scale[i] = 1 / std of angular entry i, where std^2 = mean |x - mean(x)|^2.
inline Normalizer fit_normalizer(std::span<const ComplexMatrix> angular) {
    if (angular.empty())
        throw InsufficientDataError("fit_normalizer: empty dataset");
    const std::size_t n_r = angular.front().rows(), n_t = angular.front().cols();
    const std::size_t n = n_r * n_t;
    std::vector<cplx> mean(n);
    for (const auto &m : angular) {
        if (m.rows() != n_r || m.cols() != n_t)
            throw DimensionError("fit_normalizer: inconsistent matrix shapes");
        for (std::size_t i = 0; i < n; ++i)
            mean[i] += m.data()[i];
    }
    const double count = static_cast<double>(angular.size());
    for (auto &v : mean)
        v /= count;
    std::vector<double> var(n);
    for (const auto &m : angular)
        for (std::size_t i = 0; i < n; ++i)
            var[i] += std::norm(m.data()[i] - mean[i]);
    Normalizer out{n_r, n_t, std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const double v = var[i] / count;
        if (!(v > 0.0) || !std::isfinite(v))
            throw DegenerateError("fit_normalizer: entry " + std::to_string(i) + " has zero variance");
        out.scale[i] = 1.0 / std::sqrt(v);
    }
    return out;
}

/// EM fit of a zero-mean diagonal complex Gaussian mixture to angular-domain
/// samples. Gives an analytic prior for families (LOS) that are not mixtures.
inline DiagonalMixture fit_diagonal_gm(std::span<const ComplexMatrix> angular, std::size_t components,
                                       std::size_t iterations, std::uint64_t seed, double variance_floor = 1e-4) {
    if (angular.empty())
        throw InsufficientDataError("fit_diagonal_gm: empty dataset");
    if (components == 0)
        throw ConfigError("fit_diagonal_gm: components must be >= 1");
    const std::size_t n_r = angular.front().rows(), n_t = angular.front().cols();
    const std::size_t n = n_r * n_t, m = angular.size();

    // init: component k starts from the power pattern of a random sample blended with the global mean
    std::vector<double> global(n);
    for (const auto &s : angular)
        for (std::size_t i = 0; i < n; ++i)
            global[i] += std::norm(s.data()[i]) / static_cast<double>(m);
    Rng rng = derive_rng(seed, {0xe1});
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    DiagonalMixture g{n_r, n_t, std::vector<double>(components, 1.0 / static_cast<double>(components)), {}};
    for (std::size_t k = 0; k < components; ++k) {
        const auto &s = angular[pick(rng)];
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i)
            v[i] = std::max(0.5 * std::norm(s.data()[i]) + 0.5 * global[i], variance_floor);
        g.variances.push_back(std::move(v));
    }

    std::vector<double> resp(m * components);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t j = 0; j < m; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < components; ++k) {
                double ll = std::log(g.weights[k]);
                for (std::size_t i = 0; i < n; ++i)
                    ll -= std::log(g.variances[k][i]) + std::norm(angular[j].data()[i]) / g.variances[k][i];
                resp[j * components + k] = ll;
                mx = std::max(mx, ll);
            }
            double z = 0.0;
            for (std::size_t k = 0; k < components; ++k)
                z += (resp[j * components + k] = std::exp(resp[j * components + k] - mx));
            for (std::size_t k = 0; k < components; ++k)
                resp[j * components + k] /= z;
        }
        for (std::size_t k = 0; k < components; ++k) {
            double nk = 0.0;
            std::vector<double> acc(n);
            for (std::size_t j = 0; j < m; ++j) {
                const double r = resp[j * components + k];
                nk += r;
                for (std::size_t i = 0; i < n; ++i)
                    acc[i] += r * std::norm(angular[j].data()[i]);
            }
            nk = std::max(nk, 1e-12);
            g.weights[k] = nk / static_cast<double>(m);
            for (std::size_t i = 0; i < n; ++i)
                g.variances[k][i] = std::max(acc[i] / nk, variance_floor);
        }
        double wsum = 0.0;
        for (auto &w : g.weights)
            wsum += (w = std::max(w, 1e-12));
        for (auto &w : g.weights)
            w /= wsum;
    }
    double rest = 1.0;
    for (std::size_t k = 0; k + 1 < components; ++k)
        rest -= g.weights[k];
    g.weights.back() = rest;
    g.validate();
    return g;
}

} // namespace gramdiff
