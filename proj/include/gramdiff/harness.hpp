// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Configuration, paired Monte-Carlo sweeps, NMSE statistics and CSV output.

#pragma once

#include "channel.hpp"
#include "estimators.hpp"
#include "io.hpp"
#include "neural.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace gramdiff {

/// ||H - H_hat||_F^2 / ||H||_F^2 for one realization.
inline double nmse_ch(const ComplexMatrix &h, const ComplexMatrix &h_hat) {
    h.require_same_shape(h_hat, "nmse_ch");
    const double den = fro_norm_sq(h);
    if (!(den > 0.0))
        throw DegenerateError("nmse_ch: true channel has zero norm");
    return fro_norm_sq(h - h_hat) / den;
}

/// -sum p log p / log N over the clipped eigenvalues of a PSD matrix.
inline double normalized_spectral_entropy(const ComplexMatrix &r) {
    const auto e = hermitian_eig(r);
    const std::size_t n = e.eigenvalues.size();
    if (n < 2)
        return 0.0;
    double total = 0.0;
    for (double l : e.eigenvalues)
        total += std::max(l, 0.0);
    if (!(total > 0.0))
        return 0.0;
    double h = 0.0;
    for (double l : e.eigenvalues) {
        const double p = std::max(l, 0.0) / total;
        if (p > 0.0)
            h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(n));
}

struct SpectrumStats {
    std::size_t samples = 0;
    double mean_entropy = 0.0;
    double var_entropy = 0.0; // unbiased
};

inline SpectrumStats gram_spectrum_stats(const ChannelModel &model, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0)
        throw ConfigError("gram_spectrum_stats: n_samples must be >= 1");
    const AngularTransform xf(model_n_r(model), model_n_t(model));
    std::vector<double> h(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        Rng rng = derive_rng(seed, {0x5bec, i});
        h[i] = normalized_spectral_entropy(gram(sample_channel(model, rng, xf).h));
    }
    SpectrumStats s;
    s.samples = n_samples;
    for (double v : h)
        s.mean_entropy += v;
    s.mean_entropy /= static_cast<double>(n_samples);
    if (n_samples > 1) {
        for (double v : h)
            s.var_entropy += (v - s.mean_entropy) * (v - s.mean_entropy);
        s.var_entropy /= static_cast<double>(n_samples - 1);
    }
    return s;
}

// ---------------------------------------------------------------- config

/// Calibrated guidance defaults (see calibration/ in the source tree).
inline GuidanceConfig default_guidance() {
    GuidanceConfig g;
    g.lambda_like = 0.1;
    g.lambda_gram = 5e-4;
    set_gate_db(g, -10.0, 2.0);
    return g;
}

struct ChannelSpec {
    std::string family = "gm"; // gm | los | gaussian
    GMProfileParams gm;
    LOSChannelModel los;

    ChannelModel build(std::size_t n_r, std::size_t n_t) const {
        if (family == "gm")
            return make_gm_model(n_r, n_t, gm);
        if (family == "gaussian")
            return make_single_gaussian_model(n_r, n_t);
        if (family == "los") {
            LOSChannelModel m = los;
            m.n_r = n_r;
            m.n_t = n_t;
            if (m.clusters == 0)
                throw ConfigError("channel_model: clusters must be >= 1");
            return m;
        }
        throw ConfigError("channel_model: unknown family '" + family + "' (expected gm|los|gaussian)");
    }
};

struct BackendSpec {
    std::string kind = "analytic-gm"; // analytic-gm | neural:<weights path>
    // analytic prior for families without a closed-form mixture (los)
    std::size_t fit_samples = 4000;
    std::size_t fit_components = 8;
    std::size_t fit_iterations = 40;
    std::uint64_t fit_seed = 11;
};

struct SweepSpec {
    std::vector<double> snr_grid_db{-15, -10, -5, 0, 5};
    std::size_t n_trials = 500;
    std::vector<std::string> variants{"dm", "dm+lik", "dm+gram", "gramdiff", "gramdiff/oracle", "genie-lmmse"};
    std::vector<std::size_t> n_d_grid{5, 20, 200, 2000};
    std::uint64_t master_seed = 2024;
    std::string output = "sweep.csv";
    std::string raw_output;     // per-trial records, empty = off
    std::string summary_output; // JSON summary, empty = off
    double divergence_threshold = std::numeric_limits<double>::infinity();
    std::string constellation = "qpsk";
    PilotKind pilots = PilotKind::dft;
    double data_noise_ratio = 1.0; // sigma_d^2 / sigma^2

    void validate() const {
        if (n_trials == 0)
            throw ConfigError("sweep: n_trials must be >= 1");
        if (snr_grid_db.empty())
            throw ConfigError("sweep: snr_grid_db is empty");
        if (variants.empty())
            throw ConfigError("sweep: no variants");
        if (n_d_grid.empty())
            throw ConfigError("sweep: n_d_grid is empty");
        for (auto nd : n_d_grid)
            if (nd == 0)
                throw ConfigError("sweep: n_d_grid entries must be >= 1");
        if (!(data_noise_ratio >= 0.0))
            throw ConfigError("sweep: data_noise_ratio must be >= 0");
        Constellation::from_name(constellation);
    }
};

struct AppConfig {
    std::size_t n_r = 16;
    std::size_t n_t = 4;
    ChannelSpec channel;
    ScheduleParams schedule;
    EstimatorConfig estimator;
    BackendSpec backend;
    SweepSpec sweep;

    AppConfig() { estimator.guidance = default_guidance(); }
};

namespace detail {

inline void reject_unknown(const nlohmann::json &j, const std::string &section, std::initializer_list<const char *> keys) {
    if (!j.is_object())
        throw ConfigError("config: section '" + section + "' must be an object");
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto &[k, v] : j.items())
        if (!known.count(k))
            throw ConfigError("config: unknown key '" + section + "." + k + "'");
}

template <class T> void read_key(const nlohmann::json &j, const char *key, T &out) {
    if (j.contains(key))
        out = j.at(key).get<T>();
}

inline double gate_db(double raw) { return 10.0 * std::log10(raw); }

} // namespace detail

inline void apply_config_json(AppConfig &c, const nlohmann::json &j) {
    using detail::read_key;
    try {
        detail::reject_unknown(j, "<root>", {"dims", "channel_model", "schedule", "guidance", "estimator", "sweep"});
        if (j.contains("dims")) {
            const auto &d = j["dims"];
            detail::reject_unknown(d, "dims", {"n_r", "n_t"});
            read_key(d, "n_r", c.n_r);
            read_key(d, "n_t", c.n_t);
        }
        if (j.contains("channel_model")) {
            const auto &m = j["channel_model"];
            detail::reject_unknown(m, "channel_model",
                                   {"family", "components", "profile_seed", "floor", "rx_spread", "tx_spread",
                                    "log_scale_sigma", "clusters", "power_decay", "angular_spread"});
            read_key(m, "family", c.channel.family);
            read_key(m, "components", c.channel.gm.components);
            read_key(m, "profile_seed", c.channel.gm.profile_seed);
            read_key(m, "floor", c.channel.gm.floor);
            if (m.contains("rx_spread")) {
                const auto v = m["rx_spread"].get<std::vector<double>>();
                if (v.size() != 2)
                    throw ConfigError("config: channel_model.rx_spread must be [min, max]");
                c.channel.gm.rx_spread_min = v[0];
                c.channel.gm.rx_spread_max = v[1];
            }
            if (m.contains("tx_spread")) {
                const auto v = m["tx_spread"].get<std::vector<double>>();
                if (v.size() != 2)
                    throw ConfigError("config: channel_model.tx_spread must be [min, max]");
                c.channel.gm.tx_spread_min = v[0];
                c.channel.gm.tx_spread_max = v[1];
            }
            read_key(m, "log_scale_sigma", c.channel.gm.log_scale_sigma);
            read_key(m, "clusters", c.channel.los.clusters);
            read_key(m, "power_decay", c.channel.los.power_decay);
            read_key(m, "angular_spread", c.channel.los.angular_spread);
        }
        if (j.contains("schedule")) {
            const auto &s = j["schedule"];
            detail::reject_unknown(s, "schedule", {"t_max", "beta_start", "beta_end", "kind"});
            read_key(s, "t_max", c.schedule.t_max);
            read_key(s, "beta_start", c.schedule.beta_start);
            read_key(s, "beta_end", c.schedule.beta_end);
            if (s.contains("kind"))
                c.schedule.kind = parse_schedule_kind(s["kind"].get<std::string>());
        }
        if (j.contains("guidance")) {
            const auto &g = j["guidance"];
            auto &gc = c.estimator.guidance;
            detail::reject_unknown(g, "guidance",
                                   {"lambda_like", "lambda_gram", "gating", "snr0_db", "delta_db", "clip",
                                    "clip_threshold", "clip_epsilon", "adaptation"});
            read_key(g, "lambda_like", gc.lambda_like);
            read_key(g, "lambda_gram", gc.lambda_gram);
            read_key(g, "gating", gc.gating_enabled);
            read_key(g, "clip", gc.clip_enabled);
            read_key(g, "clip_threshold", gc.clip_threshold);
            read_key(g, "clip_epsilon", gc.clip_epsilon);
            if (g.contains("snr0_db") || g.contains("delta_db")) {
                // delta is converted at the midpoint, so re-derive it whenever either moves
                const double old_snr0 = gc.snr0;
                double snr0_db = detail::gate_db(gc.snr0);
                double delta_db = detail::gate_db(1.0 + gc.delta / old_snr0);
                read_key(g, "snr0_db", snr0_db);
                read_key(g, "delta_db", delta_db);
                set_gate_db(gc, snr0_db, delta_db);
            }
            if (g.contains("adaptation")) {
                gc.adaptation.rows.clear();
                for (const auto &row : g["adaptation"]) {
                    if (!row.is_array() || row.size() != 2)
                        throw ConfigError("config: guidance.adaptation rows must be [min_n_d, factor]");
                    const double f = row[1].get<double>();
                    if (!(f >= 0.0))
                        throw ConfigError("config: guidance.adaptation factors must be >= 0");
                    gc.adaptation.rows.push_back({row[0].get<std::size_t>(), f});
                }
            }
        }
        if (j.contains("estimator")) {
            const auto &e = j["estimator"];
            detail::reject_unknown(e, "estimator",
                                   {"backend", "gram_source", "shrinkage", "snr_match", "reverse_rule", "seed",
                                    "fit_samples", "fit_components", "fit_iterations", "fit_seed"});
            read_key(e, "backend", c.backend.kind);
            if (e.contains("gram_source"))
                c.estimator.gram_source = parse_gram_source(e["gram_source"].get<std::string>());
            read_key(e, "shrinkage", c.estimator.projection.shrinkage);
            if (e.contains("snr_match")) {
                const auto m = e["snr_match"].get<std::string>();
                if (m != "raw" && m != "db")
                    throw ConfigError("config: estimator.snr_match must be raw|db");
                c.estimator.snr_match = m == "raw" ? SnrMatch::raw : SnrMatch::db;
            }
            if (e.contains("reverse_rule"))
                c.estimator.reverse_rule = parse_reverse_rule(e["reverse_rule"].get<std::string>());
            read_key(e, "seed", c.estimator.seed);
            read_key(e, "fit_samples", c.backend.fit_samples);
            read_key(e, "fit_components", c.backend.fit_components);
            read_key(e, "fit_iterations", c.backend.fit_iterations);
            read_key(e, "fit_seed", c.backend.fit_seed);
        }
        if (j.contains("sweep")) {
            const auto &s = j["sweep"];
            auto &sw = c.sweep;
            detail::reject_unknown(s, "sweep",
                                   {"snr_grid_db", "n_trials", "variants", "n_d_grid", "master_seed", "output",
                                    "raw_output", "summary_output", "divergence_threshold", "constellation", "pilots",
                                    "data_noise_ratio"});
            read_key(s, "snr_grid_db", sw.snr_grid_db);
            read_key(s, "n_trials", sw.n_trials);
            read_key(s, "variants", sw.variants);
            read_key(s, "n_d_grid", sw.n_d_grid);
            read_key(s, "master_seed", sw.master_seed);
            read_key(s, "output", sw.output);
            read_key(s, "raw_output", sw.raw_output);
            read_key(s, "summary_output", sw.summary_output);
            if (s.contains("divergence_threshold") && !s["divergence_threshold"].is_null())
                sw.divergence_threshold = s["divergence_threshold"].get<double>();
            read_key(s, "constellation", sw.constellation);
            if (s.contains("pilots"))
                sw.pilots = parse_pilot_kind(s["pilots"].get<std::string>());
            read_key(s, "data_noise_ratio", sw.data_noise_ratio);
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline nlohmann::json config_to_json(const AppConfig &c) {
    const auto &g = c.estimator.guidance;
    nlohmann::json adapt = nlohmann::json::array();
    for (const auto &r : g.adaptation.rows)
        adapt.push_back({r.min_n_d, r.factor});
    nlohmann::json cm = {{"family", c.channel.family}};
    if (c.channel.family == "gm") {
        const auto &p = c.channel.gm;
        cm.update({{"components", p.components},
                   {"profile_seed", p.profile_seed},
                   {"floor", p.floor},
                   {"rx_spread", {p.rx_spread_min, p.rx_spread_max}},
                   {"tx_spread", {p.tx_spread_min, p.tx_spread_max}},
                   {"log_scale_sigma", p.log_scale_sigma}});
    } else if (c.channel.family == "los") {
        cm.update({{"clusters", c.channel.los.clusters},
                   {"power_decay", c.channel.los.power_decay},
                   {"angular_spread", c.channel.los.angular_spread}});
    }
    const auto &sw = c.sweep;
    return {{"dims", {{"n_r", c.n_r}, {"n_t", c.n_t}}},
            {"channel_model", cm},
            {"schedule",
             {{"t_max", c.schedule.t_max},
              {"beta_start", c.schedule.beta_start},
              {"beta_end", c.schedule.beta_end},
              {"kind", to_string(c.schedule.kind)}}},
            {"guidance",
             {{"lambda_like", g.lambda_like},
              {"lambda_gram", g.lambda_gram},
              {"gating", g.gating_enabled},
              {"snr0_db", detail::gate_db(g.snr0)},
              {"delta_db", detail::gate_db(1.0 + g.delta / g.snr0)},
              {"clip", g.clip_enabled},
              {"clip_threshold", g.clip_threshold},
              {"clip_epsilon", g.clip_epsilon},
              {"adaptation", adapt}}},
            {"estimator",
             {{"backend", c.backend.kind},
              {"gram_source", to_string(c.estimator.gram_source)},
              {"shrinkage", c.estimator.projection.shrinkage},
              {"snr_match", c.estimator.snr_match == SnrMatch::raw ? "raw" : "db"},
              {"reverse_rule", to_string(c.estimator.reverse_rule)},
              {"seed", c.estimator.seed},
              {"fit_samples", c.backend.fit_samples},
              {"fit_components", c.backend.fit_components},
              {"fit_iterations", c.backend.fit_iterations},
              {"fit_seed", c.backend.fit_seed}}},
            {"sweep",
             {{"snr_grid_db", sw.snr_grid_db},
              {"n_trials", sw.n_trials},
              {"variants", sw.variants},
              {"n_d_grid", sw.n_d_grid},
              {"master_seed", sw.master_seed},
              {"output", sw.output},
              {"raw_output", sw.raw_output},
              {"summary_output", sw.summary_output},
              {"divergence_threshold",
               std::isfinite(sw.divergence_threshold) ? nlohmann::json(sw.divergence_threshold) : nlohmann::json()},
              {"constellation", sw.constellation},
              {"pilots", sw.pilots == PilotKind::dft ? "dft" : "identity"},
              {"data_noise_ratio", sw.data_noise_ratio}}}};
}

inline AppConfig load_config(const std::string &path) {
    const auto bytes = detail::slurp(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    AppConfig c;
    apply_config_json(c, j);
    return c;
}

// --------------------------------------------------------------- backends

/// Analytic prior for the configured family. GM families are exact; other
/// families get a diagonal mixture fitted by EM to seeded samples.
inline DiagonalMixture analytic_prior(const ChannelModel &model, const BackendSpec &b) {
    if (const auto *gm = std::get_if<GMChannelModel>(&model))
        return gm->mixture;
    const AngularTransform xf(model_n_r(model), model_n_t(model));
    std::vector<ComplexMatrix> samples;
    samples.reserve(b.fit_samples);
    for (std::size_t i = 0; i < b.fit_samples; ++i) {
        Rng rng = derive_rng(b.fit_seed, {0xf17, i});
        samples.push_back(sample_channel(model, rng, xf).h_angular);
    }
    return fit_diagonal_gm(samples, b.fit_components, b.fit_iterations, b.fit_seed);
}

inline std::unique_ptr<DenoiserBackend> make_backend(const AppConfig &c, const ChannelModel &model) {
    const std::string &k = c.backend.kind;
    if (k == "analytic-gm")
        return std::make_unique<AnalyticGMDenoiser>(analytic_prior(model, c.backend));
    if (k == "zero")
        return std::make_unique<ZeroDenoiser>();
    if (k.rfind("neural:", 0) == 0) {
        CnnWeights w = read_weight_file(k.substr(7));
        if (w.n_r != c.n_r || w.n_t != c.n_t)
            throw ConfigError("backend: weights are for " + std::to_string(w.n_r) + "x" + std::to_string(w.n_t) +
                              ", config is " + std::to_string(c.n_r) + "x" + std::to_string(c.n_t));
        if (w.schedule_hash != c.schedule.hash())
            throw ConfigError("backend: weight file schedule hash " + hex64(w.schedule_hash) +
                              " does not match the configured schedule (" + hex64(c.schedule.hash()) + ")");
        return std::make_unique<NeuralDenoiser>(std::move(w));
    }
    throw ConfigError("backend: unknown kind '" + k + "' (expected analytic-gm|zero|neural:<path>)");
}

// ------------------------------------------------------------------ sweep

struct VariantSpec {
    std::string label;
    EstimatorConfig config;
    bool per_n_d = false; // estimated Gram: one cell per n_d
};

/// "dm", "dm+lik", "dm+gram", "gramdiff", "genie-lmmse", optionally with
/// "/oracle" or "/estimated" for the Gram variants.
inline VariantSpec parse_variant_spec(const std::string &text, const EstimatorConfig &base) {
    const auto slash = text.find('/');
    const Variant v = parse_variant(text.substr(0, slash));
    VariantSpec s;
    s.config = make_variant(v, base);
    if (slash != std::string::npos) {
        const GramSource src = parse_gram_source(text.substr(slash + 1));
        if (v != Variant::dm_gram && v != Variant::gramdiff)
            throw ConfigError("variant '" + text + "': only dm+gram and gramdiff take a Gram source");
        s.config.gram_source = src;
    }
    s.config.validate();
    s.label = v == Variant::genie_lmmse ? to_string(v) : s.config.label();
    s.per_n_d = v != Variant::genie_lmmse && s.config.uses_gram() && s.config.gram_source == GramSource::estimated;
    return s;
}

struct RunRecord {
    std::string variant;
    double snr_db = 0.0;
    std::size_t n_d = 0;
    std::size_t trial = 0;
    double nmse_ch = 0.0;
    double gram_nmse = std::numeric_limits<double>::quiet_NaN(); // NaN when no Gram estimate
    std::size_t t_star = 0;
    bool diverged = false;
    std::size_t divergence_step = 0;
    double wall_ms = 0.0;
    std::uint64_t h_hash = 0;
};

struct CellSummary {
    std::string variant;
    double snr_db = 0.0;
    std::size_t n_d = 0;
    std::size_t trials = 0;
    double nmse_mean = 0.0;
    double nmse_stderr = 0.0;
    std::size_t divergences = 0;
    double mean_tstar = 0.0;
};

struct SweepResult {
    std::vector<RunRecord> records; // (cell, trial) order
    std::vector<CellSummary> cells;
    std::size_t divergences = 0;
    double wall_seconds = 0.0;
};

inline std::size_t worker_count() {
    if (const char *env = std::getenv("GRAMDIFF_THREADS")) {
        char *end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1)
            return static_cast<std::size_t>(v);
        throw ConfigError(std::string("GRAMDIFF_THREADS must be a positive integer, got '") + env + "'");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Pilot part from the pilot stream, data part from its own stream, so
/// every n_d shares the same pilot observation.
inline Frame make_frame(const ComplexMatrix &h, const ComplexMatrix &x_p, std::size_t n_d, double sigma2,
                        double sigma2_d, const Constellation &c, Rng &pilot_rng, Rng &data_rng) {
    Frame f = transmit(h, x_p, ComplexMatrix(h.cols(), 0), sigma2, pilot_rng, sigma2_d);
    if (n_d > 0) {
        f.x_d = make_data(h.cols(), n_d, c, data_rng);
        f.n_d = n_d;
        f.y_d = matmul(h, f.x_d);
        f.y_d += complex_normal_matrix(h.rows(), n_d, data_rng, sigma2_d);
    }
    return f;
}

class SweepRunner {
  public:
    SweepRunner(const AppConfig &cfg, const DenoiserBackend *backend = nullptr) : cfg_(cfg) {
        cfg_.sweep.validate();
        cfg_.estimator.validate();
        model_ = cfg_.channel.build(cfg_.n_r, cfg_.n_t);
        schedule_ = make_schedule(cfg_.schedule);
        if (backend) {
            backend_ = backend;
        } else {
            owned_ = make_backend(cfg_, model_);
            backend_ = owned_.get();
        }
        for (const auto &v : cfg_.sweep.variants) {
            variants_.push_back(parse_variant_spec(v, cfg_.estimator));
            if (variants_.back().config.variant == Variant::genie_lmmse && !std::holds_alternative<GMChannelModel>(model_))
                throw ConfigError("variant genie-lmmse needs a mixture channel family (gm|gaussian)");
        }
        // a cell is (variant, n_d, snr); cells of one variant are contiguous
        for (std::size_t v = 0; v < variants_.size(); ++v) {
            const std::vector<std::size_t> nds =
                variants_[v].per_n_d ? cfg_.sweep.n_d_grid : std::vector<std::size_t>{0};
            for (auto nd : nds)
                for (std::size_t s = 0; s < cfg_.sweep.snr_grid_db.size(); ++s)
                    cells_.push_back({v, nd, s});
        }
    }

    const ChannelModel &model() const noexcept { return model_; }
    const NoiseSchedule &schedule() const noexcept { return schedule_; }

    SweepResult run(std::size_t threads = 0) const {
        const auto t0 = std::chrono::steady_clock::now();
        const auto &sw = cfg_.sweep;
        const std::size_t n_snr = sw.snr_grid_db.size(), n_units = n_snr * sw.n_trials;
        if (threads == 0)
            threads = worker_count();
        threads = std::min(threads, n_units);

        // unit u = (snr index, trial) owns every cell entry for that pair
        std::vector<std::vector<RunRecord>> per_unit(n_units);
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mu;
        auto work = [&] {
            for (;;) {
                const std::size_t u = next.fetch_add(1);
                if (u >= n_units)
                    return;
                try {
                    per_unit[u] = run_unit(u % n_snr, u / n_snr);
                } catch (...) {
                    std::lock_guard lk(failure_mu);
                    if (!failure)
                        failure = std::current_exception();
                    next.store(n_units);
                    return;
                }
            }
        };
        if (threads <= 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < threads; ++i)
                pool.emplace_back(work);
            for (auto &th : pool)
                th.join();
        }
        if (failure)
            std::rethrow_exception(failure);

        SweepResult res;
        res.records.reserve(cells_.size() * sw.n_trials);
        for (std::size_t c = 0; c < cells_.size(); ++c) {
            CellSummary cs;
            cs.variant = variants_[cells_[c].variant].label;
            cs.snr_db = sw.snr_grid_db[cells_[c].snr];
            cs.n_d = cells_[c].n_d;
            double sum = 0.0, sum2 = 0.0, tsum = 0.0;
            std::size_t ok = 0;
            for (std::size_t trial = 0; trial < sw.n_trials; ++trial) {
                const auto &units = per_unit[trial * n_snr + cells_[c].snr];
                const RunRecord &r = units[entry_index(c)];
                res.records.push_back(r);
                ++cs.trials;
                tsum += static_cast<double>(r.t_star);
                if (r.diverged) {
                    ++cs.divergences;
                    continue;
                }
                ++ok;
                sum += r.nmse_ch;
                sum2 += r.nmse_ch * r.nmse_ch;
            }
            if (ok > 0) {
                cs.nmse_mean = sum / static_cast<double>(ok);
                if (ok > 1) {
                    const double var = std::max(0.0, (sum2 - sum * cs.nmse_mean) / static_cast<double>(ok - 1));
                    cs.nmse_stderr = std::sqrt(var / static_cast<double>(ok));
                }
            } else {
                cs.nmse_mean = std::numeric_limits<double>::quiet_NaN();
            }
            cs.mean_tstar = tsum / static_cast<double>(cs.trials);
            res.divergences += cs.divergences;
            res.cells.push_back(std::move(cs));
        }
        res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

  private:
    struct Cell {
        std::size_t variant;
        std::size_t n_d;
        std::size_t snr;
    };

    // position of cell c among the cells sharing its snr index
    std::size_t entry_index(std::size_t c) const {
        std::size_t k = 0;
        for (std::size_t i = 0; i < c; ++i)
            if (cells_[i].snr == cells_[c].snr)
                ++k;
        return k;
    }

    std::vector<RunRecord> run_unit(std::size_t snr_idx, std::size_t trial) const {
        const auto &sw = cfg_.sweep;
        const std::uint64_t seed = sw.master_seed;
        const AngularTransform xf(cfg_.n_r, cfg_.n_t);
        Rng ch_rng = derive_rng(seed, {1, trial});
        const ChannelDraw draw = sample_channel(model_, ch_rng, xf);
        const std::uint64_t hh = matrix_hash(draw.h);
        const ComplexMatrix x_p = make_pilots(cfg_.n_t, sw.pilots);
        const Constellation constellation = Constellation::from_name(sw.constellation);
        const double snr_db = sw.snr_grid_db[snr_idx];
        const double sigma2 = sigma2_from_snr_db(snr_db);
        const double sigma2_d = sigma2 * sw.data_noise_ratio;

        auto frame_for = [&](std::size_t n_d) {
            Rng p = derive_rng(seed, {2, trial, snr_idx});
            Rng d = derive_rng(seed, {3, trial, snr_idx, n_d});
            return make_frame(draw.h, x_p, n_d, sigma2, sigma2_d, constellation, p, d);
        };
        const EstimatorContext ctx{schedule_, *backend_, xf};

        std::vector<RunRecord> out;
        for (const auto &cell : cells_) {
            if (cell.snr != snr_idx)
                continue;
            const VariantSpec &vs = variants_[cell.variant];
            RunRecord r;
            r.variant = vs.label;
            r.snr_db = snr_db;
            r.n_d = cell.n_d;
            r.trial = trial;
            r.h_hash = hh;
            const auto t0 = std::chrono::steady_clock::now();
            const Frame frame = frame_for(cell.n_d);
            if (vs.config.variant == Variant::genie_lmmse) {
                const auto &gm = std::get<GMChannelModel>(model_);
                r.nmse_ch = nmse_ch(draw.h, estimate_genie_lmmse(frame, gm.mixture, *draw.component, xf));
            } else {
                EstimatorConfig ec = vs.config;
                ec.seed = seed;
                try {
                    const EstimateResult e = estimate_gramdiff(frame, ctx, ec, &draw.h);
                    r.nmse_ch = nmse_ch(draw.h, e.h_hat);
                    r.t_star = e.t_star;
                    if (e.gram)
                        r.gram_nmse = gram_nmse(e.gram->r_spatial, gram(draw.h));
                } catch (const DivergenceError &err) {
                    r.diverged = true;
                    r.divergence_step = err.step();
                    r.nmse_ch = std::numeric_limits<double>::quiet_NaN();
                    r.t_star = match_t(1.0 / sigma2, schedule_, ec.snr_match);
                }
            }
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            out.push_back(std::move(r));
        }
        return out;
    }

    AppConfig cfg_;
    ChannelModel model_;
    NoiseSchedule schedule_;
    std::unique_ptr<DenoiserBackend> owned_;
    const DenoiserBackend *backend_ = nullptr;
    std::vector<VariantSpec> variants_;
    std::vector<Cell> cells_;
};

inline SweepResult run_sweep(const AppConfig &cfg, std::size_t threads = 0) { return SweepRunner(cfg).run(threads); }

// ---------------------------------------------------------------- output

inline std::string fmt_num(double v) {
    if (std::isnan(v))
        return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline constexpr const char *kAggregateHeader = "variant,snr_db,n_d,trials,nmse_mean,nmse_stderr,divergences,mean_tstar";

inline std::string aggregate_csv(const std::vector<CellSummary> &cells) {
    std::ostringstream os;
    os << kAggregateHeader << '\n';
    for (const auto &c : cells)
        os << c.variant << ',' << fmt_num(c.snr_db) << ',' << c.n_d << ',' << c.trials << ',' << fmt_num(c.nmse_mean)
           << ',' << fmt_num(c.nmse_stderr) << ',' << c.divergences << ',' << fmt_num(c.mean_tstar) << '\n';
    return os.str();
}

inline std::string raw_csv(const std::vector<RunRecord> &records) {
    std::ostringstream os;
    os << "variant,snr_db,n_d,trial,nmse_ch,gram_nmse,t_star,diverged,divergence_step,h_hash,wall_ms\n";
    for (const auto &r : records)
        os << r.variant << ',' << fmt_num(r.snr_db) << ',' << r.n_d << ',' << r.trial << ',' << fmt_num(r.nmse_ch)
           << ',' << fmt_num(r.gram_nmse) << ',' << r.t_star << ',' << (r.diverged ? 1 : 0) << ','
           << r.divergence_step << ',' << hex64(r.h_hash) << ',' << fmt_num(r.wall_ms) << '\n';
    return os.str();
}

inline nlohmann::json summary_json(const AppConfig &cfg, const SweepResult &res) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto &c : res.cells)
        cells.push_back({{"variant", c.variant},
                         {"snr_db", c.snr_db},
                         {"n_d", c.n_d},
                         {"trials", c.trials},
                         {"nmse_mean", std::isnan(c.nmse_mean) ? nlohmann::json() : nlohmann::json(c.nmse_mean)},
                         {"nmse_stderr", c.nmse_stderr},
                         {"divergences", c.divergences},
                         {"mean_tstar", c.mean_tstar}});
    return {{"config", config_to_json(cfg)},
            {"schedule_hash", hex64(cfg.schedule.hash())},
            {"cells", cells},
            {"divergences", res.divergences},
            {"wall_seconds", res.wall_seconds}};
}

inline void write_sweep_outputs(const AppConfig &cfg, const SweepResult &res) {
    const auto &sw = cfg.sweep;
    detail::write_atomic(sw.output, aggregate_csv(res.cells));
    if (!sw.raw_output.empty())
        detail::write_atomic(sw.raw_output, raw_csv(res.records));
    if (!sw.summary_output.empty())
        detail::write_atomic(sw.summary_output, summary_json(cfg, res).dump(2) + "\n");
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::vector<CellSummary> read_aggregate_csv(const std::string &path) {
    const auto bytes = detail::slurp(path);
    std::istringstream is(std::string(bytes.begin(), bytes.end()));
    std::string line;
    if (!std::getline(is, line) || split_csv_line(line) != split_csv_line(kAggregateHeader))
        throw FormatError("'" + path + "': not an aggregate sweep CSV (header mismatch)");
    std::vector<CellSummary> cells;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty())
            continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8)
            throw FormatError("'" + path + "': line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                              " fields");
        try {
            CellSummary c;
            c.variant = f[0];
            c.snr_db = std::stod(f[1]);
            c.n_d = std::stoul(f[2]);
            c.trials = std::stoul(f[3]);
            c.nmse_mean = f[4] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[4]);
            c.nmse_stderr = f[5] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[5]);
            c.divergences = std::stoul(f[6]);
            c.mean_tstar = std::stod(f[7]);
            cells.push_back(std::move(c));
        } catch (const std::logic_error &) {
            throw FormatError("'" + path + "': bad number on line " + std::to_string(lineno));
        }
    }
    return cells;
}

/// Markdown table: one row per SNR, one column per (variant, n_d); optional
/// gain in dB of every column over `baseline` (a variant label at n_d 0).
inline std::string format_report(const std::vector<CellSummary> &cells, const std::string &baseline = "") {
    std::vector<std::string> cols;
    std::vector<double> snrs;
    auto col_name = [](const CellSummary &c) {
        return c.n_d == 0 ? c.variant : c.variant + "@" + std::to_string(c.n_d);
    };
    for (const auto &c : cells) {
        if (std::find(cols.begin(), cols.end(), col_name(c)) == cols.end())
            cols.push_back(col_name(c));
        if (std::find(snrs.begin(), snrs.end(), c.snr_db) == snrs.end())
            snrs.push_back(c.snr_db);
    }
    std::sort(snrs.begin(), snrs.end());
    auto lookup = [&](const std::string &col, double snr) -> const CellSummary * {
        for (const auto &c : cells)
            if (col_name(c) == col && c.snr_db == snr)
                return &c;
        return nullptr;
    };
    std::ostringstream os;
    os << "| SNR [dB] |";
    for (const auto &c : cols)
        os << ' ' << c << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i)
        os << "---|";
    os << '\n';
    for (double s : snrs) {
        os << "| " << fmt_num(s) << " |";
        const CellSummary *base = baseline.empty() ? nullptr : lookup(baseline, s);
        for (const auto &col : cols) {
            const CellSummary *c = lookup(col, s);
            if (!c) {
                os << " - |";
                continue;
            }
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.4f", c->nmse_mean);
            os << ' ' << buf;
            if (base && col != baseline && base->nmse_mean > 0.0 && c->nmse_mean > 0.0) {
                std::snprintf(buf, sizeof buf, " (%+.2f dB)", 10.0 * std::log10(base->nmse_mean / c->nmse_mean));
                os << buf;
            }
            if (c->divergences > 0)
                os << " [" << c->divergences << " div]";
            os << " |";
        }
        os << '\n';
    }
    return os.str();
}

} // namespace gramdiff
