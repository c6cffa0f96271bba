// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "rng.hpp"
#include "tensor.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gramdiff {

enum class PilotKind { dft, identity };

inline PilotKind parse_pilot_kind(const std::string &s) {
    if (s == "dft")
        return PilotKind::dft;
    if (s == "identity")
        return PilotKind::identity;
    throw ConfigError("unknown pilot kind '" + s + "' (expected dft|identity)");
}

/// Orthonormal N_T x N_T pilot block (N_p = N_T).
inline ComplexMatrix make_pilots(std::size_t n_t, PilotKind kind = PilotKind::dft) {
    if (n_t == 0)
        throw DimensionError("make_pilots: n_t must be >= 1");
    return kind == PilotKind::dft ? dft_matrix(n_t) : ComplexMatrix::identity(n_t);
}

/// Unit-energy square QAM alphabet.
class Constellation {
  public:
    static Constellation from_name(const std::string &name) {
        if (name == "qpsk" || name == "QPSK" || name == "4qam")
            return Constellation("qpsk", 2);
        if (name == "16qam" || name == "16QAM" || name == "qam16")
            return Constellation("16qam", 4);
        if (name == "64qam" || name == "64QAM" || name == "qam64")
            return Constellation("64qam", 8);
        throw ConfigError("unknown constellation '" + name + "' (expected qpsk|16qam|64qam)");
    }

    const std::string &name() const noexcept { return name_; }
    const std::vector<cplx> &points() const noexcept { return points_; }

  private:
    Constellation(std::string name, int side) : name_(std::move(name)) {
        // levels +-1, +-3, ...; E|x|^2 = 2 (side^2 - 1) / 3 before scaling
        const double norm = std::sqrt(2.0 * (side * side - 1) / 3.0);
        for (int i = 0; i < side; ++i)
            for (int q = 0; q < side; ++q)
                points_.emplace_back((2 * i - side + 1) / norm, (2 * q - side + 1) / norm);
    }

    std::string name_;
    std::vector<cplx> points_;
};

inline ComplexMatrix make_data(std::size_t n_t, std::size_t n_d, const Constellation &c, Rng &rng) {
    ComplexMatrix x(n_t, n_d);
    std::uniform_int_distribution<std::size_t> pick(0, c.points().size() - 1);
    for (auto &v : x.data())
        v = c.points()[pick(rng)];
    return x;
}

inline ComplexMatrix make_data(std::size_t n_t, std::size_t n_d, const std::string &constellation, Rng &rng) {
    return make_data(n_t, n_d, Constellation::from_name(constellation), rng);
}

struct Frame {
    ComplexMatrix x_p;
    ComplexMatrix x_d;
    ComplexMatrix y_p;
    ComplexMatrix y_d;
    double sigma2 = 0.0;   // pilot noise variance per complex component
    double sigma2_d = 0.0; // data noise variance
    std::size_t n_d = 0;
};

/// y_p = H x_p + Z_p, y_d = H x_d + Z_d with Z ~ CN(0, sigma2). The data
/// noise level defaults to the pilot one.
inline Frame transmit(const ComplexMatrix &h, const ComplexMatrix &x_p, const ComplexMatrix &x_d, double sigma2,
                      Rng &rng, std::optional<double> sigma2_d = {}) {
    if (h.cols() != x_p.rows() || (x_d.cols() > 0 && h.cols() != x_d.rows()))
        throw DimensionError("transmit: channel has " + std::to_string(h.cols()) + " transmit antennas, symbols have " +
                             std::to_string(x_p.rows()));
    if (!(sigma2 >= 0.0))
        throw PreconditionError("transmit: sigma2 must be >= 0");
    Frame f;
    f.sigma2 = sigma2;
    f.sigma2_d = sigma2_d.value_or(sigma2);
    f.x_p = x_p;
    f.x_d = x_d;
    f.n_d = x_d.cols();
    f.y_p = matmul(h, x_p);
    f.y_p += complex_normal_matrix(h.rows(), x_p.cols(), rng, sigma2);
    if (f.n_d > 0) {
        f.y_d = matmul(h, x_d);
        f.y_d += complex_normal_matrix(h.rows(), f.n_d, rng, f.sigma2_d);
    } else {
        f.y_d = ComplexMatrix(h.rows(), 0);
    }
    return f;
}

inline double sigma2_from_snr_db(double snr_db) { return std::pow(10.0, -snr_db / 10.0); }

} // namespace gramdiff
