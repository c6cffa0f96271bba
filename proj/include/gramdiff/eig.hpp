// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace gramdiff {

struct HermitianEig {
    std::vector<double> eigenvalues; // descending
    ComplexMatrix eigenvectors;      // columns, unit norm

    ComplexMatrix reconstruct() const {
        const std::size_t n = eigenvalues.size();
        ComplexMatrix r(n, n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                const cplx vik = eigenvalues[k] * eigenvectors(i, k);
                for (std::size_t j = 0; j < n; ++j)
                    r(i, j) += vik * std::conj(eigenvectors(j, k));
            }
        return r;
    }
};

namespace detail {

inline double off_diagonal_norm_sq(const ComplexMatrix &a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j)
                s += std::norm(a(i, j));
    return s;
}

// Rotate column k so that its first entry with non-negligible magnitude is
// real and positive.
inline void normalize_phase(ComplexMatrix &v, std::size_t k) {
    const std::size_t n = v.rows();
    double maxabs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        maxabs = std::max(maxabs, std::abs(v(i, k)));
    for (std::size_t i = 0; i < n; ++i) {
        const double m = std::abs(v(i, k));
        if (m > 1e-10 * maxabs) {
            const cplx ph = std::conj(v(i, k)) / m;
            for (std::size_t r = 0; r < n; ++r)
                v(r, k) *= ph;
            v(i, k) = m;
            return;
        }
    }
}

inline bool lexicographically_less(const ComplexMatrix &v, std::size_t a, std::size_t b) {
    for (std::size_t i = 0; i < v.rows(); ++i) {
        const cplx x = v(i, a), y = v(i, b);
        if (x.real() != y.real())
            return x.real() < y.real();
        if (x.imag() != y.imag())
            return x.imag() < y.imag();
    }
    return false;
}

} // namespace detail

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
/// The input is symmetrized as (A + A^H)/2 first. Eigenvalues come out in
/// descending order; each eigenvector is phase-normalized so its first
/// significant entry is real positive, and ties within a degenerate cluster
/// are ordered lexicographically on the normalized vectors.
inline HermitianEig hermitian_eig(const ComplexMatrix &input, int max_sweeps = 100) {
    if (!input.is_square())
        throw DimensionError("hermitian_eig: matrix must be square, got " + std::to_string(input.rows()) + "x" +
                             std::to_string(input.cols()));
    const std::size_t n = input.rows();
    ComplexMatrix a = hermitian_part(input);
    ComplexMatrix v = ComplexMatrix::identity(n);

    const double scale = std::max(fro_norm_sq(a), 1e-300);
    const double tol = 1e-30 * scale;

    bool converged = n <= 1;
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        if (detail::off_diagonal_norm_sq(a) <= tol) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const cplx apq = a(p, q);
                const double mag = std::abs(apq);
                if (mag == 0.0 || mag * mag <= 1e-34 * scale)
                    continue;
                // Phase D = diag(1, e^{-i phi}) makes the (p,q) entry real, then a
                // real Jacobi rotation annihilates it. U = D R on the (p,q) plane.
                const cplx ph = std::conj(apq) / mag;
                const double app = a(p, p).real(), aqq = a(q, q).real();
                const double theta = (aqq - app) / (2.0 * mag);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const cplx upp = c, upq = s, uqp = -s * ph, uqq = c * ph;

                for (std::size_t k = 0; k < n; ++k) {
                    const cplx akp = a(k, p), akq = a(k, q);
                    a(k, p) = akp * upp + akq * uqp;
                    a(k, q) = akp * upq + akq * uqq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const cplx apk = a(p, k), aqk = a(q, k);
                    a(p, k) = std::conj(upp) * apk + std::conj(uqp) * aqk;
                    a(q, k) = std::conj(upq) * apk + std::conj(uqq) * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                a(p, p) = a(p, p).real();
                a(q, q) = a(q, q).real();
                for (std::size_t k = 0; k < n; ++k) {
                    const cplx vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = vkp * upp + vkq * uqp;
                    v(k, q) = vkp * upq + vkq * uqq;
                }
            }
    }
    if (!converged && detail::off_diagonal_norm_sq(a) > tol * 1e6)
        throw ConvergenceError("hermitian_eig: no convergence after " + std::to_string(max_sweeps) + " sweeps");

    for (std::size_t k = 0; k < n; ++k)
        detail::normalize_phase(v, k);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const double spread = [&] {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            m = std::max(m, std::abs(a(i, i).real()));
        return m;
    }();
    const double tie = 1e-12 * std::max(spread, 1e-300);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x).real() > a(y, y).real(); });
    for (std::size_t begin = 0; begin < n;) {
        std::size_t end = begin + 1;
        while (end < n && a(order[end - 1], order[end - 1]).real() - a(order[end], order[end]).real() <= tie)
            ++end;
        std::stable_sort(order.begin() + begin, order.begin() + end,
                         [&](std::size_t x, std::size_t y) { return detail::lexicographically_less(v, x, y); });
        begin = end;
    }

    HermitianEig out;
    out.eigenvalues.resize(n);
    out.eigenvectors = ComplexMatrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.eigenvalues[k] = a(order[k], order[k]).real();
        for (std::size_t i = 0; i < n; ++i)
            out.eigenvectors(i, k) = v(i, order[k]);
    }
    return out;
}

} // namespace gramdiff
