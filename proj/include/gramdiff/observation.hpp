// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "tensor.hpp"

#include <cmath>

namespace gramdiff {

/// Pilot observation in the normalized angular additive-noise model.
struct AngularObservation {
    ComplexMatrix y_angular; // Phi_R Y_p X_p^H Phi_T^T  (H~ + Z~)
    ComplexMatrix y_tilde;   // y_angular / sqrt(1 + sigma2), unit variance per entry
    double sigma2 = 0.0;
    double snr = 0.0;   // 1 / sigma2
    double scale = 1.0; // 1 / sqrt(1 + sigma2)
};

/// Y_p X_p^H. Only orthonormal pilots are supported.
inline ComplexMatrix decorrelate(const ComplexMatrix &y_p, const ComplexMatrix &x_p, double tol = 1e-8) {
    if (y_p.cols() != x_p.cols())
        throw DimensionError("decorrelate: Y_p has " + std::to_string(y_p.cols()) + " columns, X_p has " +
                             std::to_string(x_p.cols()));
    const ComplexMatrix xxh = gram(x_p);
    if (!xxh.is_square() || fro_norm(xxh - ComplexMatrix::identity(xxh.rows())) > tol)
        throw PreconditionError("decorrelate: pilot matrix is not orthonormal (X_p X_p^H != I)");
    return matmul(y_p, adjoint(x_p));
}

inline AngularObservation to_angular_observation(const ComplexMatrix &y_p, const ComplexMatrix &x_p, double sigma2,
                                                 const AngularTransform &xf) {
    if (!(sigma2 >= 0.0))
        throw PreconditionError("to_angular_observation: sigma2 must be >= 0");
    AngularObservation o;
    o.y_angular = xf.forward(decorrelate(y_p, x_p));
    o.sigma2 = sigma2;
    o.snr = sigma2 > 0.0 ? 1.0 / sigma2 : INFINITY;
    o.scale = 1.0 / std::sqrt(1.0 + sigma2);
    o.y_tilde = o.y_angular * o.scale;
    return o;
}

inline AngularObservation to_angular_observation(const ComplexMatrix &y_p, const ComplexMatrix &x_p, double sigma2) {
    return to_angular_observation(y_p, x_p, sigma2, AngularTransform(y_p.rows(), x_p.rows()));
}

} // namespace gramdiff
