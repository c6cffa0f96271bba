// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Binary channel datasets and denoiser golden vectors.
//
// Dataset ("GDCH"):
//   magic[4] | u16 version=1 | u16 n_r | u16 n_t | u32 count
//   count x (n_r*n_t complex, f64 LE (re, im) interleaved, row-major, spatial)
// Manifest: JSON text next to the dataset at <path>.manifest.json.
//
// Goldens ("GDGV"):
//   magic[4] | u16 version=1 | u16 n_r | u16 n_t | u32 count
//   count x (u32 t | input matrix | output matrix), matrices as in GDCH
//   u64 FNV-1a of every preceding byte

#pragma once

#include "channel.hpp"
#include "denoiser.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace gramdiff {

namespace detail {

class ByteWriter {
  public:
    template <class T> void put(T v) {
        const auto *p = reinterpret_cast<const char *>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void put_bytes(const char *p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
    void put_matrix(const ComplexMatrix &m) {
        for (const auto &v : m.data()) {
            put(v.real());
            put(v.imag());
        }
    }
    const std::vector<char> &bytes() const noexcept { return buf_; }

  private:
    std::vector<char> buf_;
};

class ByteReader {
  public:
    ByteReader(std::vector<char> bytes, std::string path) : buf_(std::move(bytes)), path_(std::move(path)) {}

    template <class T> T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void expect_magic(const char *magic) {
        need(4);
        if (std::memcmp(buf_.data() + pos_, magic, 4) != 0)
            throw FormatError("'" + path_ + "': bad magic, expected " + std::string(magic, 4));
        pos_ += 4;
    }
    ComplexMatrix get_matrix(std::size_t r, std::size_t c) {
        ComplexMatrix m(r, c);
        for (auto &v : m.data()) {
            const double re = get<double>();
            const double im = get<double>();
            v = {re, im};
        }
        return m;
    }
    std::size_t pos() const noexcept { return pos_; }
    std::size_t size() const noexcept { return buf_.size(); }
    const char *data() const noexcept { return buf_.data(); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size())
            throw FormatError("'" + path_ + "': truncated file at byte " + std::to_string(pos_));
    }
    std::vector<char> buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// write to <path>.tmp, then rename over <path>
inline void write_atomic(const std::string &path, const char *data, std::size_t n) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
            throw IoError("cannot open '" + tmp + "' for writing");
        os.write(data, static_cast<std::streamsize>(n));
        if (!os)
            throw IoError("write failed for '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

inline void write_atomic(const std::string &path, const std::string &text) {
    write_atomic(path, text.data(), text.size());
}

inline void check_u16(std::size_t v, const char *what) {
    if (v == 0 || v > 0xffff)
        throw DimensionError(std::string(what) + " must be in [1, 65535]");
}

} // namespace detail

struct Dataset {
    std::size_t n_r = 0;
    std::size_t n_t = 0;
    std::vector<ComplexMatrix> matrices; // spatial domain
};

inline void write_dataset(const std::string &path, const Dataset &d) {
    detail::check_u16(d.n_r, "dataset n_r");
    detail::check_u16(d.n_t, "dataset n_t");
    detail::ByteWriter w;
    w.put_bytes("GDCH", 4);
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(d.n_r));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(d.n_t));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.matrices.size()));
    for (const auto &m : d.matrices) {
        if (m.rows() != d.n_r || m.cols() != d.n_t)
            throw DimensionError("write_dataset: matrix shape differs from header");
        w.put_matrix(m);
    }
    detail::write_atomic(path, w.bytes().data(), w.bytes().size());
}

inline Dataset read_dataset(const std::string &path) {
    detail::ByteReader r(detail::slurp(path), path);
    r.expect_magic("GDCH");
    if (const auto v = r.get<std::uint16_t>(); v != 1)
        throw FormatError("'" + path + "': unsupported dataset version " + std::to_string(v));
    Dataset d;
    d.n_r = r.get<std::uint16_t>();
    d.n_t = r.get<std::uint16_t>();
    const std::uint32_t count = r.get<std::uint32_t>();
    const std::size_t expect = r.pos() + std::size_t{count} * d.n_r * d.n_t * 16;
    if (expect != r.size())
        throw FormatError("'" + path + "': size " + std::to_string(r.size()) + " does not match header (" +
                          std::to_string(expect) + ")");
    d.matrices.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i)
        d.matrices.push_back(r.get_matrix(d.n_r, d.n_t));
    return d;
}

inline nlohmann::json channel_model_to_json(const ChannelModel &model);

inline bool is_unit_gaussian(const DiagonalMixture &m) {
    if (m.components() != 1)
        return false;
    for (double v : m.variances[0])
        if (v != 1.0)
            return false;
    return true;
}

/// Draws `count` channels (sample i from stream (seed, i)) and writes the
/// dataset plus its manifest. Returns the manifest.
inline nlohmann::json generate_dataset(const ChannelModel &model, std::size_t count, std::uint64_t seed,
                                       const std::string &path) {
    if (count == 0)
        throw ConfigError("generate_dataset: count must be >= 1");
    if (count > 0xffffffffu)
        throw ConfigError("generate_dataset: count exceeds the u32 header field");
    Dataset d{model_n_r(model), model_n_t(model), {}};
    const AngularTransform xf(d.n_r, d.n_t);
    d.matrices.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = derive_rng(seed, {0xda7a, i});
        d.matrices.push_back(sample_channel(model, rng, xf).h);
    }
    write_dataset(path, d);
    nlohmann::json man = {{"format", "GDCH"},
                          {"version", 1},
                          {"domain", "spatial"},
                          {"n_r", d.n_r},
                          {"n_t", d.n_t},
                          {"count", count},
                          {"seed", seed},
                          {"channel_model", channel_model_to_json(model)}};
    detail::write_atomic(path + ".manifest.json", man.dump(2) + "\n");
    return man;
}

struct GoldenRecord {
    std::uint32_t t = 0;
    ComplexMatrix input;  // H~_t
    ComplexMatrix output; // eps prediction
};

struct GoldenSet {
    std::size_t n_r = 0;
    std::size_t n_t = 0;
    std::vector<GoldenRecord> records;
};

inline std::vector<char> encode_goldens(const GoldenSet &g) {
    detail::check_u16(g.n_r, "golden n_r");
    detail::check_u16(g.n_t, "golden n_t");
    detail::ByteWriter w;
    w.put_bytes("GDGV", 4);
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(g.n_r));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(g.n_t));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(g.records.size()));
    for (const auto &r : g.records) {
        if (r.input.rows() != g.n_r || r.input.cols() != g.n_t || r.output.rows() != g.n_r || r.output.cols() != g.n_t)
            throw DimensionError("encode_goldens: record shape differs from header");
        w.put<std::uint32_t>(r.t);
        w.put_matrix(r.input);
        w.put_matrix(r.output);
    }
    const auto &b = w.bytes();
    w.put<std::uint64_t>(fnv1a64(b.data(), b.size()));
    return w.bytes();
}

inline void write_goldens(const std::string &path, const GoldenSet &g) {
    const auto bytes = encode_goldens(g);
    detail::write_atomic(path, bytes.data(), bytes.size());
}

inline GoldenSet read_goldens(const std::string &path) {
    detail::ByteReader r(detail::slurp(path), path);
    if (r.size() < 8)
        throw FormatError("'" + path + "': truncated golden file");
    std::uint64_t stored;
    std::memcpy(&stored, r.data() + r.size() - 8, 8);
    if (fnv1a64(r.data(), r.size() - 8) != stored)
        throw FormatError("'" + path + "': checksum mismatch");
    r.expect_magic("GDGV");
    if (const auto v = r.get<std::uint16_t>(); v != 1)
        throw FormatError("'" + path + "': unsupported golden version " + std::to_string(v));
    GoldenSet g;
    g.n_r = r.get<std::uint16_t>();
    g.n_t = r.get<std::uint16_t>();
    const std::uint32_t count = r.get<std::uint32_t>();
    const std::size_t expect = r.pos() + std::size_t{count} * (4 + 2 * g.n_r * g.n_t * 16) + 8;
    if (expect != r.size())
        throw FormatError("'" + path + "': size does not match header");
    for (std::uint32_t i = 0; i < count; ++i) {
        GoldenRecord rec;
        rec.t = r.get<std::uint32_t>();
        rec.input = r.get_matrix(g.n_r, g.n_t);
        rec.output = r.get_matrix(g.n_r, g.n_t);
        g.records.push_back(std::move(rec));
    }
    return g;
}

/// Five distinct steps spread over the schedule (fewer if T < 5).
inline std::vector<std::size_t> golden_steps(std::size_t t_max) {
    std::vector<std::size_t> ts;
    for (std::size_t k = 0; k < 5; ++k) {
        const std::size_t t = 1 + (k * (t_max - 1)) / 4;
        if (ts.empty() || ts.back() != t)
            ts.push_back(t);
    }
    return ts;
}

/// Seeded unit-variance inputs, one per golden step, run through `backend`.
inline GoldenSet emit_goldens(const DenoiserBackend &backend, const NoiseSchedule &s, std::size_t n_r, std::size_t n_t,
                              std::uint64_t seed = 7) {
    GoldenSet g{n_r, n_t, {}};
    const auto ts = golden_steps(s.t_max());
    for (std::size_t k = 0; k < ts.size(); ++k) {
        Rng rng = derive_rng(seed, {0x601d, k});
        GoldenRecord rec;
        rec.t = static_cast<std::uint32_t>(ts[k]);
        rec.input = complex_normal_matrix(n_r, n_t, rng);
        rec.output = backend.predict_noise(rec.input, ts[k], s);
        g.records.push_back(std::move(rec));
    }
    return g;
}

/// Largest absolute deviation (over real and imaginary parts) between the
/// backend and the recorded outputs.
inline double golden_max_abs_error(const DenoiserBackend &backend, const NoiseSchedule &s, const GoldenSet &g) {
    double worst = 0.0;
    for (const auto &rec : g.records) {
        if (rec.t == 0 || rec.t > s.t_max())
            throw FormatError("golden record step " + std::to_string(rec.t) + " outside the schedule");
        const ComplexMatrix out = backend.predict_noise(rec.input, rec.t, s);
        for (std::size_t i = 0; i < out.size(); ++i) {
            worst = std::max(worst, std::abs(out.data()[i].real() - rec.output.data()[i].real()));
            worst = std::max(worst, std::abs(out.data()[i].imag() - rec.output.data()[i].imag()));
        }
    }
    return worst;
}

inline nlohmann::json channel_model_to_json(const ChannelModel &model) {
    if (const auto *gm = std::get_if<GMChannelModel>(&model)) {
        const auto &p = gm->profile;
        if (is_unit_gaussian(gm->mixture))
            return {{"family", "gaussian"}, {"n_r", gm->n_r()}, {"n_t", gm->n_t()}};
        return {{"family", "gm"},
                {"n_r", gm->n_r()},
                {"n_t", gm->n_t()},
                {"components", p.components},
                {"profile_seed", p.profile_seed},
                {"floor", p.floor},
                {"rx_spread", {p.rx_spread_min, p.rx_spread_max}},
                {"tx_spread", {p.tx_spread_min, p.tx_spread_max}},
                {"log_scale_sigma", p.log_scale_sigma}};
    }
    const auto &los = std::get<LOSChannelModel>(model);
    return {{"family", "los"},
            {"n_r", los.n_r},
            {"n_t", los.n_t},
            {"clusters", los.clusters},
            {"power_decay", los.power_decay},
            {"angular_spread", los.angular_spread}};
}

} // namespace gramdiff
