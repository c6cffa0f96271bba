// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Portable forward pass of the "cnn3-film-v1" noise predictor and its weight
// file.
//
// Network (input: re/im planes of H~_t, N_R x N_T):
//   conv1  2 -> 32, 3x3, circular padding;  + FiLM bias(t);  SiLU
//   conv2 32 -> 32, 3x3, circular padding;  SiLU
//   conv3 32 -> 2,  3x3, circular padding   -> re/im planes of eps
//   FiLM:  emb(t/T) (16) -> fc1 (32) -> SiLU -> fc2 (32)
//   emb(s)[k] = sin(pi 2^k s), emb(s)[8+k] = cos(pi 2^k s), k = 0..7
// Convolutions are cross-correlations (PyTorch conv2d semantics), weights are
// [out, in, kh, kw] and fully connected weights [out, in], all row-major.
//
// Weight file:
//   "GDNN" | u32 header_len | header JSON (header_len bytes) | f32 LE blob
// The header carries version, arch, n_r, n_t, schedule_hash, blob_bytes, a
// checksum ("fnv1a64:<16 hex>") over the blob and a tensor table
// name -> {shape, dtype "f32", offset}, offsets in bytes from blob start.

#pragma once

#include "denoiser.hpp"
#include "rng.hpp"
#include "schedule.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace gramdiff {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> values;

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : shape)
            n *= d;
        return n;
    }
};

struct CnnWeights {
    static constexpr const char *arch = "cnn3-film-v1";
    static constexpr std::size_t hidden = 32;
    static constexpr std::size_t embed_dim = 16;

    std::size_t n_r = 0;
    std::size_t n_t = 0;
    std::uint64_t schedule_hash = 0;
    std::map<std::string, Tensor> tensors;

    static std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_shapes() {
        return {{"conv1.w", {hidden, 2, 3, 3}},        {"conv1.b", {hidden}},
                {"film.fc1.w", {hidden, embed_dim}},  {"film.fc1.b", {hidden}},
                {"film.fc2.w", {hidden, hidden}},     {"film.fc2.b", {hidden}},
                {"conv2.w", {hidden, hidden, 3, 3}},  {"conv2.b", {hidden}},
                {"conv3.w", {2, hidden, 3, 3}},       {"conv3.b", {2}}};
    }

    void validate() const {
        if (n_r == 0 || n_t == 0)
            throw FormatError("weights: n_r and n_t must be positive");
        for (const auto &[name, shape] : expected_shapes()) {
            auto it = tensors.find(name);
            if (it == tensors.end())
                throw FormatError("weights: missing tensor '" + name + "'");
            if (it->second.shape != shape)
                throw FormatError("weights: tensor '" + name + "' has unexpected shape");
            if (it->second.values.size() != it->second.numel())
                throw FormatError("weights: tensor '" + name + "' has wrong element count");
        }
    }

    /// Small random init (uniform, fan-in scaled); an untrained network.
    static CnnWeights random(std::size_t n_r, std::size_t n_t, std::uint64_t seed, std::uint64_t schedule_hash = 0) {
        CnnWeights w;
        w.n_r = n_r;
        w.n_t = n_t;
        w.schedule_hash = schedule_hash;
        Rng rng = derive_rng(seed, {0x77});
        for (const auto &[name, shape] : expected_shapes()) {
            Tensor t{shape, {}};
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i)
                fan_in *= shape[i];
            const double bound = 1.0 / std::sqrt(static_cast<double>(shape.size() > 1 ? fan_in : hidden));
            std::uniform_real_distribution<double> u(-bound, bound);
            t.values.resize(t.numel());
            for (auto &v : t.values)
                v = static_cast<float>(u(rng));
            w.tensors.emplace(name, std::move(t));
        }
        return w;
    }
};

inline std::array<double, CnnWeights::embed_dim> time_embedding(std::size_t t, std::size_t t_max) {
    std::array<double, CnnWeights::embed_dim> e{};
    const double s = static_cast<double>(t) / static_cast<double>(t_max);
    constexpr std::size_t half = CnnWeights::embed_dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double w = std::numbers::pi * std::ldexp(1.0, static_cast<int>(k));
        e[k] = std::sin(w * s);
        e[half + k] = std::cos(w * s);
    }
    return e;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

class NeuralDenoiser final : public DenoiserBackend {
  public:
    explicit NeuralDenoiser(CnnWeights w) : w_(std::move(w)) { w_.validate(); }

    const CnnWeights &weights() const noexcept { return w_; }

    ComplexMatrix predict_noise(const ComplexMatrix &ht, std::size_t t, const NoiseSchedule &s) const override {
        if (ht.rows() != w_.n_r || ht.cols() != w_.n_t)
            throw DimensionError("NeuralDenoiser: expected " + std::to_string(w_.n_r) + "x" + std::to_string(w_.n_t) +
                                 " input");
        const std::size_t nr = w_.n_r, nt = w_.n_t, hw = nr * nt;
        constexpr std::size_t H = CnnWeights::hidden;

        std::vector<double> x(2 * hw);
        for (std::size_t i = 0; i < hw; ++i) {
            x[i] = ht.data()[i].real();
            x[hw + i] = ht.data()[i].imag();
        }

        const auto emb = time_embedding(t, s.t_max());
        std::vector<double> f1(H), film(H);
        const auto &fc1w = tensor("film.fc1.w"), &fc1b = tensor("film.fc1.b");
        const auto &fc2w = tensor("film.fc2.w"), &fc2b = tensor("film.fc2.b");
        for (std::size_t o = 0; o < H; ++o) {
            double a = fc1b.values[o];
            for (std::size_t i = 0; i < CnnWeights::embed_dim; ++i)
                a += static_cast<double>(fc1w.values[o * CnnWeights::embed_dim + i]) * emb[i];
            f1[o] = silu(a);
        }
        for (std::size_t o = 0; o < H; ++o) {
            double a = fc2b.values[o];
            for (std::size_t i = 0; i < H; ++i)
                a += static_cast<double>(fc2w.values[o * H + i]) * f1[i];
            film[o] = a;
        }

        auto h1 = conv(x, 2, H, "conv1");
        for (std::size_t c = 0; c < H; ++c)
            for (std::size_t i = 0; i < hw; ++i)
                h1[c * hw + i] = silu(h1[c * hw + i] + film[c]);
        auto h2 = conv(h1, H, H, "conv2");
        for (auto &v : h2)
            v = silu(v);
        const auto out = conv(h2, H, 2, "conv3");

        ComplexMatrix eps(nr, nt);
        for (std::size_t i = 0; i < hw; ++i)
            eps.data()[i] = {out[i], out[hw + i]};
        return eps;
    }

    std::string name() const override { return "neural"; }

  private:
    const Tensor &tensor(const std::string &n) const { return w_.tensors.at(n); }

    std::vector<double> conv(const std::vector<double> &in, std::size_t cin, std::size_t cout,
                             const std::string &layer) const {
        const std::size_t nr = w_.n_r, nt = w_.n_t, hw = nr * nt;
        const auto &w = tensor(layer + ".w").values;
        const auto &b = tensor(layer + ".b").values;
        std::vector<double> out(cout * hw);
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t r = 0; r < nr; ++r)
                for (std::size_t c = 0; c < nt; ++c) {
                    double acc = b[o];
                    for (std::size_t i = 0; i < cin; ++i)
                        for (std::size_t kr = 0; kr < 3; ++kr) {
                            const std::size_t rr = (r + nr + kr - 1) % nr;
                            for (std::size_t kc = 0; kc < 3; ++kc) {
                                const std::size_t cc = (c + nt + kc - 1) % nt;
                                acc += static_cast<double>(w[((o * cin + i) * 3 + kr) * 3 + kc]) *
                                       in[i * hw + rr * nt + cc];
                            }
                        }
                    out[o * hw + r * nt + c] = acc;
                }
        return out;
    }

    CnnWeights w_;
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t parse_hex64(const std::string &s) {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos, 16);
    if (pos != s.size())
        throw FormatError("bad hex value '" + s + "'");
    return v;
}

inline void write_weight_file(const std::string &path, const CnnWeights &w) {
    w.validate();
    std::vector<float> blob;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto &[name, shape] : CnnWeights::expected_shapes()) {
        const auto &t = w.tensors.at(name);
        tensors[name] = {{"shape", t.shape}, {"dtype", "f32"}, {"offset", blob.size() * sizeof(float)}};
        blob.insert(blob.end(), t.values.begin(), t.values.end());
    }
    const std::size_t blob_bytes = blob.size() * sizeof(float);
    nlohmann::json header = {{"version", 1},
                             {"arch", CnnWeights::arch},
                             {"n_r", w.n_r},
                             {"n_t", w.n_t},
                             {"hidden", CnnWeights::hidden},
                             {"embed_dim", CnnWeights::embed_dim},
                             {"schedule_hash", hex64(w.schedule_hash)},
                             {"blob_bytes", blob_bytes},
                             {"checksum", "fnv1a64:" + hex64(fnv1a64(blob.data(), blob_bytes))},
                             {"tensors", tensors}};
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw IoError("cannot open '" + path + "' for writing");
    const std::uint32_t hl = static_cast<std::uint32_t>(hs.size());
    os.write("GDNN", 4);
    os.write(reinterpret_cast<const char *>(&hl), 4);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    os.write(reinterpret_cast<const char *>(blob.data()), static_cast<std::streamsize>(blob_bytes));
    if (!os)
        throw IoError("write failed for '" + path + "'");
}

inline CnnWeights read_weight_file(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open weight file '" + path + "'");
    char magic[4];
    std::uint32_t hl = 0;
    if (!is.read(magic, 4) || std::memcmp(magic, "GDNN", 4) != 0)
        throw FormatError("'" + path + "': not a weight file (bad magic)");
    if (!is.read(reinterpret_cast<char *>(&hl), 4) || hl > (1u << 24))
        throw FormatError("'" + path + "': bad header length");
    std::string hs(hl, '\0');
    if (!is.read(hs.data(), hl))
        throw FormatError("'" + path + "': truncated header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + path + "': header is not valid JSON: " + e.what());
    }
    CnnWeights w;
    try {
        if (h.at("arch").get<std::string>() != CnnWeights::arch)
            throw FormatError("'" + path + "': unsupported arch '" + h.at("arch").get<std::string>() + "'");
        if (h.at("version").get<int>() != 1)
            throw FormatError("'" + path + "': unsupported version");
        w.n_r = h.at("n_r").get<std::size_t>();
        w.n_t = h.at("n_t").get<std::size_t>();
        w.schedule_hash = parse_hex64(h.at("schedule_hash").get<std::string>());
        const auto blob_bytes = h.at("blob_bytes").get<std::size_t>();
        if (blob_bytes % sizeof(float) != 0 || blob_bytes > (std::size_t{1} << 31))
            throw FormatError("'" + path + "': bad blob size");
        std::vector<float> blob(blob_bytes / sizeof(float));
        if (!is.read(reinterpret_cast<char *>(blob.data()), static_cast<std::streamsize>(blob_bytes)))
            throw FormatError("'" + path + "': truncated blob");
        const std::string expect = h.at("checksum").get<std::string>();
        const std::string got = "fnv1a64:" + hex64(fnv1a64(blob.data(), blob_bytes));
        if (expect != got)
            throw FormatError("'" + path + "': checksum mismatch (header " + expect + ", blob " + got + ")");
        for (const auto &[name, meta] : h.at("tensors").items()) {
            if (meta.at("dtype").get<std::string>() != "f32")
                throw FormatError("'" + path + "': tensor '" + name + "' is not f32");
            Tensor t{meta.at("shape").get<std::vector<std::size_t>>(), {}};
            const auto off = meta.at("offset").get<std::size_t>();
            if (off % sizeof(float) != 0 || off + t.numel() * sizeof(float) > blob_bytes)
                throw FormatError("'" + path + "': tensor '" + name + "' lies outside the blob");
            const auto first = blob.begin() + static_cast<std::ptrdiff_t>(off / sizeof(float));
            t.values.assign(first, first + static_cast<std::ptrdiff_t>(t.numel()));
            w.tensors.emplace(name, std::move(t));
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + path + "': malformed header: " + e.what());
    }
    w.validate();
    return w;
}

} // namespace gramdiff
