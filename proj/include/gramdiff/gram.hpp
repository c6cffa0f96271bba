// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Channel Gram matrix R = H H^H: oracle value, estimate from the data part of
// a frame, and its angular-domain image Phi_R R Phi_R^H.

#pragma once

#include "eig.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <cmath>

namespace gramdiff {

enum class GramSource { none, oracle, estimated };

inline std::string to_string(GramSource s) {
    switch (s) {
    case GramSource::none:
        return "none";
    case GramSource::oracle:
        return "oracle";
    case GramSource::estimated:
        return "estimated";
    }
    return "?";
}

inline GramSource parse_gram_source(const std::string &s) {
    if (s == "none")
        return GramSource::none;
    if (s == "oracle")
        return GramSource::oracle;
    if (s == "estimated")
        return GramSource::estimated;
    throw ConfigError("unknown gram source '" + s + "' (expected none|oracle|estimated)");
}

struct GramEstimate {
    ComplexMatrix r_spatial;
    ComplexMatrix r_angular;
    GramSource source = GramSource::none;
    std::size_t n_d_used = 0;
    double shrinkage = 0.0;
    bool low_confidence = false; // projected estimate collapsed to zero
};

struct ProjectionOptions {
    double shrinkage = 0.0; // rho in [0, 1]: rho (tr/N) I + (1 - rho) clipped
};

/// Robustifying projection: Hermitian symmetrization, eigenvalue clipping at
/// zero, then optional linear shrinkage toward (trace / N) I.
inline ComplexMatrix project_psd(const ComplexMatrix &raw, const ProjectionOptions &opt = {}) {
    if (opt.shrinkage < 0.0 || opt.shrinkage > 1.0)
        throw ConfigError("project_psd: shrinkage must lie in [0, 1]");
    const HermitianEig e = hermitian_eig(raw);
    const std::size_t n = e.eigenvalues.size();
    ComplexMatrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = std::max(e.eigenvalues[k], 0.0);
        if (lam == 0.0)
            continue;
        for (std::size_t i = 0; i < n; ++i) {
            const cplx vik = lam * e.eigenvectors(i, k);
            for (std::size_t j = 0; j < n; ++j)
                out(i, j) += vik * std::conj(e.eigenvectors(j, k));
        }
    }
    out = hermitian_part(out);
    if (opt.shrinkage > 0.0) {
        const double mu = trace(out).real() / static_cast<double>(n);
        out *= 1.0 - opt.shrinkage;
        for (std::size_t i = 0; i < n; ++i)
            out(i, i) += opt.shrinkage * mu;
    }
    return out;
}

inline GramEstimate oracle_gram(const ComplexMatrix &h, const AngularTransform &xf) {
    GramEstimate g;
    g.r_spatial = gram(h);
    g.r_angular = xf.gram_forward(g.r_spatial);
    g.source = GramSource::oracle;
    return g;
}

inline GramEstimate oracle_gram(const ComplexMatrix &h) { return oracle_gram(h, AngularTransform(h.rows(), h.cols())); }

/// P((1/N_d) Y_d Y_d^H - sigma_d^2 I), then mapped to the angular domain.
inline GramEstimate sample_gram(const ComplexMatrix &y_d, double sigma2_d, std::size_t n_d,
                                const AngularTransform &xf, const ProjectionOptions &opt = {}) {
    if (n_d == 0)
        throw InsufficientDataError("sample_gram: no data symbols (n_d = 0)");
    if (y_d.cols() != n_d)
        throw DimensionError("sample_gram: y_d has " + std::to_string(y_d.cols()) + " columns, expected " +
                             std::to_string(n_d));
    ComplexMatrix raw = gram(y_d);
    raw *= 1.0 / static_cast<double>(n_d);
    for (std::size_t i = 0; i < raw.rows(); ++i)
        raw(i, i) -= sigma2_d;

    GramEstimate g;
    g.r_spatial = project_psd(raw, opt);
    g.source = GramSource::estimated;
    g.n_d_used = n_d;
    g.shrinkage = opt.shrinkage;
    if (!(trace(g.r_spatial).real() > 0.0)) {
        g.r_spatial = ComplexMatrix(raw.rows(), raw.cols());
        g.low_confidence = true;
    }
    g.r_angular = xf.gram_forward(g.r_spatial);
    g.r_angular = hermitian_part(g.r_angular);
    return g;
}

inline GramEstimate sample_gram(const ComplexMatrix &y_d, double sigma2_d, std::size_t n_d,
                                const ProjectionOptions &opt = {}) {
    // only Phi_R is needed; the transmit size is irrelevant here
    return sample_gram(y_d, sigma2_d, n_d, AngularTransform(y_d.rows(), 1), opt);
}

/// ||est - truth||_F^2 / ||truth||_F^2 for one realization.
inline double gram_nmse(const ComplexMatrix &est, const ComplexMatrix &truth) {
    est.require_same_shape(truth, "gram_nmse");
    const double den = fro_norm_sq(truth);
    if (!(den > 0.0))
        throw DegenerateError("gram_nmse: reference Gram matrix has zero norm");
    return fro_norm_sq(est - truth) / den;
}

} // namespace gramdiff
