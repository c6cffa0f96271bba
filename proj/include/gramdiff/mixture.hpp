// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "errors.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace gramdiff {

/// Zero-mean complex Gaussian mixture over vec(H~) (row-major) with diagonal
/// component covariances. variances[k][i] is E|h_i|^2 under component k.
struct DiagonalMixture {
    std::size_t n_r = 0;
    std::size_t n_t = 0;
    std::vector<double> weights;
    std::vector<std::vector<double>> variances;

    std::size_t dim() const noexcept { return n_r * n_t; }
    std::size_t components() const noexcept { return weights.size(); }

    void validate() const {
        if (weights.empty())
            throw ConfigError("DiagonalMixture: no components");
        if (variances.size() != weights.size())
            throw ConfigError("DiagonalMixture: weights/variances length mismatch");
        double total = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (!(weights[k] > 0.0))
                throw ConfigError("DiagonalMixture: weights must be positive");
            total += weights[k];
            if (variances[k].size() != dim())
                throw ConfigError("DiagonalMixture: component " + std::to_string(k) + " has wrong dimension");
            for (double v : variances[k])
                if (!(v > 0.0) || !std::isfinite(v))
                    throw ConfigError("DiagonalMixture: variances must be positive and finite");
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("DiagonalMixture: weights must sum to 1");
    }

    /// Mixture-averaged variance of entry i.
    double mean_variance(std::size_t i) const {
        double s = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k)
            s += weights[k] * variances[k][i];
        return s;
    }

    /// Rescale every entry so its mixture-averaged variance is exactly one.
    void normalize_per_entry() {
        for (std::size_t i = 0; i < dim(); ++i) {
            const double m = mean_variance(i);
            for (auto &comp : variances)
                comp[i] /= m;
        }
    }

    static DiagonalMixture unit_gaussian(std::size_t n_r, std::size_t n_t) {
        return DiagonalMixture{n_r, n_t, {1.0}, {std::vector<double>(n_r * n_t, 1.0)}};
    }
};

} // namespace gramdiff
