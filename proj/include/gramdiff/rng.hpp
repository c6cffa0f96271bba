// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------

#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gramdiff {

using Rng = std::mt19937_64;

/// Independent stream for a (seed, id...) tuple. Used to give every Monte-Carlo
/// trial its own generator so results do not depend on scheduling.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 + 2 * ids.size());
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto id : ids)
        push(id);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Standard complex normal CN(0, variance): real and imaginary parts each
/// N(0, variance/2).
inline cplx complex_normal(Rng &rng, double variance = 1.0) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

inline ComplexMatrix complex_normal_matrix(std::size_t rows, std::size_t cols, Rng &rng, double variance = 1.0) {
    ComplexMatrix m(rows, cols);
    if (variance == 0.0)
        return m;
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    for (auto &v : m.data()) {
        const double re = n(rng);
        const double im = n(rng);
        v = {re, im};
    }
    return m;
}

/// 64-bit FNV-1a over raw bytes; used for pairing hashes and file checksums.
inline std::uint64_t fnv1a64(const void *bytes, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto *p = static_cast<const unsigned char *>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t matrix_hash(const ComplexMatrix &m) {
    std::uint64_t h = fnv1a64(nullptr, 0);
    const std::uint64_t dims[2] = {m.rows(), m.cols()};
    h = fnv1a64(dims, sizeof dims, h);
    return fnv1a64(m.data().data(), m.size() * sizeof(cplx), h);
}

} // namespace gramdiff
