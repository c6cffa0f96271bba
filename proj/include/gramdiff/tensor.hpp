// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Dense complex matrices and the unitary DFT machinery used to move channels
// between the spatial and angular domains.

#pragma once

#include "errors.hpp"

#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace gramdiff {

using cplx = std::complex<double>;

/// Dense row-major complex matrix. Entries are stored interleaved (re, im).
class ComplexMatrix {
  public:
    ComplexMatrix() = default;

    ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw DimensionError("ComplexMatrix: data length " + std::to_string(data_.size()) + " != " +
                                 std::to_string(rows_) + "x" + std::to_string(cols_));
    }

    ComplexMatrix(std::initializer_list<std::initializer_list<cplx>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto &row : init) {
            if (row.size() != cols_)
                throw DimensionError("ComplexMatrix: ragged initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static ComplexMatrix identity(std::size_t n) {
        ComplexMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static ComplexMatrix zeros(std::size_t rows, std::size_t cols) { return ComplexMatrix(rows, cols); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    cplx &operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const cplx &operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<cplx> data() noexcept { return data_; }
    std::span<const cplx> data() const noexcept { return data_; }

    ComplexMatrix &operator+=(const ComplexMatrix &o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += o.data_[i];
        return *this;
    }

    ComplexMatrix &operator-=(const ComplexMatrix &o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] -= o.data_[i];
        return *this;
    }

    ComplexMatrix &operator*=(cplx s) noexcept {
        for (auto &v : data_)
            v *= s;
        return *this;
    }

    ComplexMatrix &operator*=(double s) noexcept {
        for (auto &v : data_)
            v *= s;
        return *this;
    }

    /// this += s * o
    ComplexMatrix &axpy(double s, const ComplexMatrix &o) {
        require_same_shape(o, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i)
            data_[i] += s * o.data_[i];
        return *this;
    }

    bool all_finite() const noexcept {
        for (const auto &v : data_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                return false;
        return true;
    }

    friend bool operator==(const ComplexMatrix &, const ComplexMatrix &) = default;

    void require_same_shape(const ComplexMatrix &o, const char *what) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_) + " vs " + std::to_string(o.rows_) + "x" +
                                 std::to_string(o.cols_));
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<cplx> data_;
};

inline ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix &b) { return a += b; }
inline ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix &b) { return a -= b; }
inline ComplexMatrix operator*(ComplexMatrix a, double s) { return a *= s; }
inline ComplexMatrix operator*(double s, ComplexMatrix a) { return a *= s; }
inline ComplexMatrix operator*(ComplexMatrix a, cplx s) { return a *= s; }
inline ComplexMatrix operator*(cplx s, ComplexMatrix a) { return a *= s; }

inline ComplexMatrix matmul(const ComplexMatrix &a, const ComplexMatrix &b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()));
    ComplexMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const cplx aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    return c;
}

/// Conjugate transpose.
inline ComplexMatrix adjoint(const ComplexMatrix &a) {
    ComplexMatrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            r(j, i) = std::conj(a(i, j));
    return r;
}

inline ComplexMatrix transpose(const ComplexMatrix &a) {
    ComplexMatrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            r(j, i) = a(i, j);
    return r;
}

inline ComplexMatrix conjugate(ComplexMatrix a) {
    for (auto &v : a.data())
        v = std::conj(v);
    return a;
}

/// A * A^H without forming the adjoint.
inline ComplexMatrix gram(const ComplexMatrix &a) {
    const std::size_t n = a.rows();
    ComplexMatrix g(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            cplx s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k)
                s += a(i, k) * std::conj(a(j, k));
            g(i, j) = s;
            g(j, i) = std::conj(s);
        }
    for (std::size_t i = 0; i < n; ++i)
        g(i, i) = g(i, i).real();
    return g;
}

inline double fro_norm_sq(const ComplexMatrix &a) noexcept {
    double s = 0.0;
    for (const auto &v : a.data())
        s += std::norm(v);
    return s;
}

inline double fro_norm(const ComplexMatrix &a) noexcept { return std::sqrt(fro_norm_sq(a)); }

inline cplx trace(const ComplexMatrix &a) {
    if (!a.is_square())
        throw DimensionError("trace: matrix is not square");
    cplx t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        t += a(i, i);
    return t;
}

/// (A + A^H) / 2
inline ComplexMatrix hermitian_part(const ComplexMatrix &a) {
    if (!a.is_square())
        throw DimensionError("hermitian_part: matrix is not square");
    ComplexMatrix h(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            h(i, j) = 0.5 * (a(i, j) + std::conj(a(j, i)));
    return h;
}

/// Unitary n-point DFT matrix, entries exp(-2 pi i jk / n) / sqrt(n).
inline ComplexMatrix dft_matrix(std::size_t n) {
    if (n == 0)
        throw DimensionError("dft_matrix: n must be >= 1");
    ComplexMatrix f(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
            // reduce jk mod n first so the twiddle argument stays small
            const std::size_t jk = (j * k) % n;
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(jk) / static_cast<double>(n);
            f(j, k) = scale * cplx(std::cos(ang), std::sin(ang));
        }
    return f;
}

/// Cached DFT pair for a fixed channel shape. The DFT matrix is symmetric, so
/// Phi^T = Phi and Phi^* = Phi^H.
class AngularTransform {
  public:
    AngularTransform(std::size_t n_r, std::size_t n_t)
        : phi_r_(dft_matrix(n_r)), phi_t_(dft_matrix(n_t)), phi_r_h_(adjoint(phi_r_)), phi_t_h_(adjoint(phi_t_)) {}

    std::size_t n_r() const noexcept { return phi_r_.rows(); }
    std::size_t n_t() const noexcept { return phi_t_.rows(); }

    /// Phi_R H Phi_T^T
    ComplexMatrix forward(const ComplexMatrix &h) const {
        check(h, "dft2");
        return matmul(matmul(phi_r_, h), phi_t_);
    }

    /// Phi_R^H Ht Phi_T^*
    ComplexMatrix inverse(const ComplexMatrix &ht) const {
        check(ht, "idft2");
        return matmul(matmul(phi_r_h_, ht), phi_t_h_);
    }

    /// Phi_R R Phi_R^H for an N_R x N_R Gram matrix.
    ComplexMatrix gram_forward(const ComplexMatrix &r) const {
        if (r.rows() != n_r() || r.cols() != n_r())
            throw DimensionError("gram_forward: expected " + std::to_string(n_r()) + "x" + std::to_string(n_r()));
        return matmul(matmul(phi_r_, r), phi_r_h_);
    }

    const ComplexMatrix &phi_r() const noexcept { return phi_r_; }
    const ComplexMatrix &phi_t() const noexcept { return phi_t_; }

  private:
    void check(const ComplexMatrix &m, const char *what) const {
        if (m.rows() != n_r() || m.cols() != n_t())
            throw DimensionError(std::string(what) + ": expected " + std::to_string(n_r()) + "x" +
                                 std::to_string(n_t()) + ", got " + std::to_string(m.rows()) + "x" +
                                 std::to_string(m.cols()));
    }

    ComplexMatrix phi_r_, phi_t_, phi_r_h_, phi_t_h_;
};

inline ComplexMatrix dft2(const ComplexMatrix &h) { return AngularTransform(h.rows(), h.cols()).forward(h); }

inline ComplexMatrix idft2(const ComplexMatrix &ht) { return AngularTransform(ht.rows(), ht.cols()).inverse(ht); }

/// Solves A x = b for Hermitian positive-definite A via Cholesky. b may have
/// several columns.
inline ComplexMatrix solve_hpd(const ComplexMatrix &a, const ComplexMatrix &b) {
    if (!a.is_square() || a.rows() != b.rows())
        throw DimensionError("solve_hpd: incompatible shapes");
    const std::size_t n = a.rows();
    ComplexMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j).real();
        for (std::size_t k = 0; k < j; ++k)
            d -= std::norm(l(j, k));
        if (!(d > 0.0))
            throw PreconditionError("solve_hpd: matrix is not positive definite");
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            cplx s = a(i, j);
            for (std::size_t k = 0; k < j; ++k)
                s -= l(i, k) * std::conj(l(j, k));
            l(i, j) = s / l(j, j).real();
        }
    }
    ComplexMatrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            cplx s = x(i, c);
            for (std::size_t k = 0; k < i; ++k)
                s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i).real();
        }
        for (std::size_t ii = n; ii-- > 0;) {
            cplx s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k)
                s -= std::conj(l(k, ii)) * x(k, c);
            x(ii, c) = s / l(ii, ii).real();
        }
    }
    return x;
}

/// Row-major vectorization into an N x 1 column.
inline ComplexMatrix vec(const ComplexMatrix &a) {
    return ComplexMatrix(a.size(), 1, std::vector<cplx>(a.data().begin(), a.data().end()));
}

inline ComplexMatrix unvec(const ComplexMatrix &v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols)
        throw DimensionError("unvec: size mismatch");
    return ComplexMatrix(rows, cols, std::vector<cplx>(v.data().begin(), v.data().end()));
}

} // namespace gramdiff
