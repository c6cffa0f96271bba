// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Command-line front end. Exit codes: 0 ok, 1 runtime/IO failure, 2 config
// error, 3 divergence count above the configured threshold.

#include <gramdiff/gramdiff.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

using namespace gramdiff;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

// Config-mirroring flags. Every flag writes the config key it mirrors into a
// JSON patch that is applied on top of --config.
struct ConfigFlags {
    std::string config_path;
    json patch = json::object();
    bool print_config = false;

    template <class T> void add(CLI::App *app, const std::string &flag, const char *section, const char *key,
                                const std::string &help) {
        app->add_option_function<T>(
            flag, [this, section, key](const T &v) { patch[section][key] = v; }, help);
    }

    void attach(CLI::App *app, bool with_sweep) {
        app->add_option("--config", config_path, "JSON config with sections dims, channel_model, schedule, "
                                                  "guidance, estimator, sweep");
        add<std::size_t>(app, "--n-r", "dims", "n_r", "receive antennas");
        add<std::size_t>(app, "--n-t", "dims", "n_t", "transmit antennas");
        add<std::string>(app, "--family", "channel_model", "family", "gm | los | gaussian");
        add<std::size_t>(app, "--components", "channel_model", "components", "GM component count");
        add<std::uint64_t>(app, "--profile-seed", "channel_model", "profile_seed", "GM profile seed");
        add<std::size_t>(app, "--clusters", "channel_model", "clusters", "LOS cluster count");
        add<double>(app, "--power-decay", "channel_model", "power_decay", "LOS per-cluster power decay");
        add<double>(app, "--angular-spread", "channel_model", "angular_spread", "LOS angular spread (bins)");
        add<std::size_t>(app, "--t-max", "schedule", "t_max", "diffusion steps T");
        add<double>(app, "--beta-start", "schedule", "beta_start", "first beta");
        add<double>(app, "--beta-end", "schedule", "beta_end", "last beta");
        add<std::string>(app, "--schedule", "schedule", "kind", "linear | cosine");
        add<double>(app, "--lambda-like", "guidance", "lambda_like", "likelihood guidance scale");
        add<double>(app, "--lambda-gram", "guidance", "lambda_gram", "Gram guidance scale");
        add<bool>(app, "--gating", "guidance", "gating", "SNR gate on likelihood guidance (true|false)");
        add<double>(app, "--snr0-db", "guidance", "snr0_db", "gate midpoint in dB");
        add<double>(app, "--delta-db", "guidance", "delta_db", "gate width in dB");
        add<bool>(app, "--clip", "guidance", "clip", "clip the Gram update (true|false)");
        add<double>(app, "--clip-threshold", "guidance", "clip_threshold", "clip threshold Th");
        add<double>(app, "--clip-epsilon", "guidance", "clip_epsilon", "clip epsilon");
        add<std::string>(app, "--backend", "estimator", "backend", "analytic-gm | zero | neural:<weights>");
        add<std::string>(app, "--gram-source", "estimator", "gram_source", "none | oracle | estimated");
        add<double>(app, "--shrinkage", "estimator", "shrinkage", "Gram shrinkage rho in [0,1]");
        add<std::string>(app, "--snr-match", "estimator", "snr_match", "raw | db");
        add<std::string>(app, "--reverse-rule", "estimator", "reverse_rule", "posterior-mean | ddim");
        if (!with_sweep)
            return;
        app->add_flag("--print-config", print_config, "print the effective config and exit");
        add<std::vector<double>>(app, "--snr-grid", "sweep", "snr_grid_db", "SNR points in dB");
        add<std::size_t>(app, "--trials", "sweep", "n_trials", "trials per cell");
        add<std::vector<std::string>>(app, "--variants", "sweep", "variants",
                                      "dm, dm+lik, dm+gram, gramdiff, genie-lmmse; /oracle or /estimated suffix");
        add<std::vector<std::size_t>>(app, "--n-d-grid", "sweep", "n_d_grid", "data block lengths");
        add<std::uint64_t>(app, "--seed", "sweep", "master_seed", "master seed");
        add<std::string>(app, "--out", "sweep", "output", "aggregate CSV path");
        add<std::string>(app, "--raw-out", "sweep", "raw_output", "per-trial CSV path");
        add<std::string>(app, "--summary-out", "sweep", "summary_output", "JSON summary path");
        add<double>(app, "--divergence-threshold", "sweep", "divergence_threshold",
                    "exit 3 when total divergences exceed this");
        add<std::string>(app, "--constellation", "sweep", "constellation", "qpsk | 16qam | 64qam");
        add<std::string>(app, "--pilots", "sweep", "pilots", "dft | identity");
        add<double>(app, "--data-noise-ratio", "sweep", "data_noise_ratio", "sigma_d^2 / sigma^2");
    }

    AppConfig resolve() const {
        AppConfig c = config_path.empty() ? AppConfig{} : load_config(config_path);
        apply_config_json(c, patch);
        return c;
    }
};

int cmd_gen_data(const ConfigFlags &f, const std::string &out, std::size_t count, std::uint64_t seed) {
    const AppConfig c = f.resolve();
    const ChannelModel m = c.channel.build(c.n_r, c.n_t);
    const json man = generate_dataset(m, count, seed, out);
    std::cout << man.dump(2) << "\n";
    return 0;
}

int cmd_fit_norm(const std::string &data, const std::string &out) {
    const Dataset d = read_dataset(data);
    if (d.matrices.empty())
        throw InsufficientDataError("fit-norm: dataset '" + data + "' is empty");
    const AngularTransform xf(d.n_r, d.n_t);
    std::vector<ComplexMatrix> ang;
    ang.reserve(d.matrices.size());
    for (const auto &m : d.matrices)
        ang.push_back(xf.forward(m));
    const Normalizer n = fit_normalizer(ang);
    // report the per-entry variance after normalization
    double lo = INFINITY, hi = 0.0;
    for (std::size_t i = 0; i < n.scale.size(); ++i) {
        double v = 0.0;
        cplx mean = 0.0;
        for (const auto &a : ang)
            mean += a.data()[i];
        mean /= static_cast<double>(ang.size());
        for (const auto &a : ang)
            v += std::norm((a.data()[i] - mean) * n.scale[i]);
        v /= static_cast<double>(ang.size());
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const json j = {{"n_r", n.n_r}, {"n_t", n.n_t}, {"domain", "angular"}, {"count", d.matrices.size()},
                    {"scale", n.scale}};
    detail::write_atomic(out, j.dump(2) + "\n");
    std::printf("normalizer: %zu samples, normalized entry variance in [%.6f, %.6f] -> %s\n", d.matrices.size(), lo,
                hi, out.c_str());
    return 0;
}

int cmd_sweep(const ConfigFlags &f, std::size_t threads) {
    const AppConfig c = f.resolve();
    if (f.print_config) {
        std::cout << config_to_json(c).dump(2) << "\n";
        return 0;
    }
    const SweepResult res = SweepRunner(c).run(threads);
    write_sweep_outputs(c, res);
    std::fprintf(stderr, "sweep: %zu cells, %zu records, %zu divergences, %.1f s -> %s\n", res.cells.size(),
                 res.records.size(), res.divergences, res.wall_seconds, c.sweep.output.c_str());
    if (static_cast<double>(res.divergences) > c.sweep.divergence_threshold)
        return kExitDiverged;
    return 0;
}

int cmd_estimate(const ConfigFlags &f, const std::string &variant, double snr_db, std::size_t n_d,
                 std::uint64_t seed) {
    AppConfig c = f.resolve();
    const ChannelModel model = c.channel.build(c.n_r, c.n_t);
    const auto backend = make_backend(c, model);
    const NoiseSchedule s = make_schedule(c.schedule);
    const AngularTransform xf(c.n_r, c.n_t);
    VariantSpec vs = parse_variant_spec(variant, c.estimator);

    Rng ch = derive_rng(seed, {1, 0});
    const ChannelDraw draw = sample_channel(model, ch, xf);
    Rng p = derive_rng(seed, {2, 0, 0}), d = derive_rng(seed, {3, 0, 0, n_d});
    const double sigma2 = sigma2_from_snr_db(snr_db);
    const Frame frame = make_frame(draw.h, make_pilots(c.n_t, c.sweep.pilots), n_d, sigma2,
                                   sigma2 * c.sweep.data_noise_ratio,
                                   Constellation::from_name(c.sweep.constellation), p, d);
    json out = {{"variant", vs.label}, {"snr_db", snr_db}, {"n_d", n_d}, {"seed", seed}};
    if (vs.config.variant == Variant::genie_lmmse) {
        const auto *gm = std::get_if<GMChannelModel>(&model);
        if (!gm)
            throw ConfigError("genie-lmmse needs a mixture channel family (gm|gaussian)");
        out["nmse"] = nmse_ch(draw.h, estimate_genie_lmmse(frame, gm->mixture, *draw.component, xf));
    } else {
        Instrumentation inst;
        const EstimateResult e = estimate_gramdiff(frame, {s, *backend, xf}, vs.config, &draw.h, &inst);
        out["nmse"] = nmse_ch(draw.h, e.h_hat);
        out["t_star"] = e.t_star;
        out["lambda_gram_effective"] = e.lambda_gram_effective;
        out["denoiser_evals"] = inst.denoiser_evals;
        out["likelihood_evals"] = inst.likelihood_evals;
        out["gram_guidance_evals"] = inst.gram_guidance_evals;
        out["clipped_steps"] = inst.clipped_steps;
        if (e.gram) {
            out["gram_nmse"] = gram_nmse(e.gram->r_spatial, gram(draw.h));
            out["gram_low_confidence"] = e.gram->low_confidence;
        }
        const OpCountReport rep = op_count_report(vs.config, {c.n_r, c.n_t, n_d}, sigma2, s);
        out["op_count"] = {{"t_star", rep.t_star},
                           {"denoiser_evals", rep.denoiser_evals},
                           {"likelihood_evals", rep.likelihood_evals},
                           {"gram_guidance_evals", rep.gram_guidance_evals},
                           {"gram_estimation_cmacs", rep.gram_estimation_cmacs},
                           {"gram_guidance_cmacs_per_step", rep.gram_guidance_cmacs_per_step}};
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_spectrum(const ConfigFlags &f, std::size_t samples, std::uint64_t seed) {
    const AppConfig c = f.resolve();
    const ChannelModel m = c.channel.build(c.n_r, c.n_t);
    const SpectrumStats st = gram_spectrum_stats(m, samples, seed);
    const json out = {{"family", c.channel.family},
                      {"n_r", c.n_r},
                      {"n_t", c.n_t},
                      {"samples", st.samples},
                      {"mean_normalized_entropy", st.mean_entropy},
                      {"var_normalized_entropy", st.var_entropy}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string> &inputs, const std::string &baseline) {
    for (const auto &path : inputs) {
        std::cout << "## " << path << "\n\n" << format_report(read_aggregate_csv(path), baseline) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"gramdiff: Gram-guided diffusion channel estimation simulator"};
    app.require_subcommand(1);

    ConfigFlags gen_flags, sweep_flags, est_flags, spec_flags, gold_flags, emit_flags, verify_flags;

    auto *gen = app.add_subcommand("gen-data", "sample channels into a GDCH dataset with a manifest");
    std::string gen_out;
    std::size_t gen_count = 1000;
    std::uint64_t gen_seed = 1;
    gen->add_option("--out", gen_out, "dataset path")->required();
    gen->add_option("--count", gen_count, "number of matrices");
    gen->add_option("--data-seed", gen_seed, "sampling seed");
    gen_flags.attach(gen, false);

    auto *fit = app.add_subcommand("fit-norm", "fit the per-entry angular normalizer of a dataset");
    std::string fit_data, fit_out;
    fit->add_option("--data", fit_data, "GDCH dataset")->required();
    fit->add_option("--out", fit_out, "normalizer JSON")->required();

    auto *sweep = app.add_subcommand("sweep", "paired Monte-Carlo NMSE sweep");
    std::size_t threads = 0;
    sweep->add_option("--threads", threads, "worker threads (default: GRAMDIFF_THREADS or hardware)");
    sweep_flags.attach(sweep, true);

    auto *est = app.add_subcommand("estimate", "estimate a single seeded frame and print its NMSE");
    std::string est_variant = "gramdiff";
    double est_snr = 0.0;
    std::size_t est_nd = 2000;
    std::uint64_t est_seed = 1;
    est->add_option("--variant", est_variant, "estimator variant");
    est->add_option("--snr-db", est_snr, "SNR in dB");
    est->add_option("--n-d", est_nd, "data block length");
    est->add_option("--frame-seed", est_seed, "seed of the frame");
    est_flags.attach(est, false);
    est_flags.add<std::string>(est, "--pilots", "sweep", "pilots", "dft | identity");
    est_flags.add<std::string>(est, "--constellation", "sweep", "constellation", "qpsk | 16qam | 64qam");

    auto *spec = app.add_subcommand("spectrum", "normalized Gram spectral entropy of a channel family");
    std::size_t spec_samples = 1000;
    std::uint64_t spec_seed = 1;
    spec->add_option("--samples", spec_samples, "number of channel draws");
    spec->add_option("--sample-seed", spec_seed, "sampling seed");
    spec_flags.attach(spec, false);

    auto *gold = app.add_subcommand("goldens", "denoiser weight files and golden vectors");
    gold->require_subcommand(1);
    auto *g_init = gold->add_subcommand("init-weights", "write randomly initialized cnn3-film-v1 weights");
    std::string gi_out;
    std::uint64_t gi_seed = 1;
    g_init->add_option("--out", gi_out, "weight file")->required();
    g_init->add_option("--weight-seed", gi_seed, "init seed");
    gold_flags.attach(g_init, false);
    auto *g_emit = gold->add_subcommand("emit", "run the neural denoiser on the 5 seeded golden inputs");
    std::string ge_weights, ge_out;
    std::uint64_t ge_seed = 7;
    g_emit->add_option("--weights", ge_weights, "weight file")->required();
    g_emit->add_option("--out", ge_out, "golden file")->required();
    g_emit->add_option("--input-seed", ge_seed, "seed of the golden inputs");
    emit_flags.attach(g_emit, false);
    auto *g_verify = gold->add_subcommand("verify", "compare the neural denoiser with a golden file");
    std::string gv_weights, gv_goldens;
    double gv_tol = 1e-4;
    g_verify->add_option("--weights", gv_weights, "weight file")->required();
    g_verify->add_option("--goldens", gv_goldens, "golden file")->required();
    g_verify->add_option("--tol", gv_tol, "max-abs tolerance");
    verify_flags.attach(g_verify, false);

    auto *rep = app.add_subcommand("report", "aggregate sweep CSVs into comparison tables");
    std::vector<std::string> rep_inputs;
    std::string rep_baseline;
    rep->add_option("csv", rep_inputs, "aggregate CSV files")->required();
    rep->add_option("--baseline", rep_baseline, "variant label to report dB gains against, e.g. dm");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen)
            return cmd_gen_data(gen_flags, gen_out, gen_count, gen_seed);
        if (*fit)
            return cmd_fit_norm(fit_data, fit_out);
        if (*sweep)
            return cmd_sweep(sweep_flags, threads);
        if (*est)
            return cmd_estimate(est_flags, est_variant, est_snr, est_nd, est_seed);
        if (*spec)
            return cmd_spectrum(spec_flags, spec_samples, spec_seed);
        if (*g_init) {
            const AppConfig c = gold_flags.resolve();
            write_weight_file(gi_out, CnnWeights::random(c.n_r, c.n_t, gi_seed, c.schedule.hash()));
            std::printf("wrote %s (%zux%zu, schedule %s)\n", gi_out.c_str(), c.n_r, c.n_t,
                        hex64(c.schedule.hash()).c_str());
            return 0;
        }
        if (*g_emit || *g_verify) {
            const CnnWeights w = read_weight_file(*g_emit ? ge_weights : gv_weights);
            const ScheduleParams sp = (*g_emit ? emit_flags : verify_flags).resolve().schedule;
            if (w.schedule_hash != sp.hash())
                throw ConfigError("weight schedule hash " + hex64(w.schedule_hash) +
                                  " does not match the configured schedule " + hex64(sp.hash()));
            const NoiseSchedule s = make_schedule(sp);
            const NeuralDenoiser net(w);
            if (*g_emit) {
                write_goldens(ge_out, emit_goldens(net, s, w.n_r, w.n_t, ge_seed));
                std::printf("wrote %s\n", ge_out.c_str());
                return 0;
            }
            const GoldenSet g = read_goldens(gv_goldens);
            if (g.n_r != w.n_r || g.n_t != w.n_t)
                throw ConfigError("goldens are " + std::to_string(g.n_r) + "x" + std::to_string(g.n_t) +
                                  ", weights are " + std::to_string(w.n_r) + "x" + std::to_string(w.n_t));
            const double err = golden_max_abs_error(net, s, g);
            const bool ok = err <= gv_tol;
            std::printf("%s golden parity: %zu records, max abs error %.3e (tol %.1e)\n", ok ? "PASS" : "FAIL",
                        g.records.size(), err, gv_tol);
            return ok ? 0 : 1;
        }
        if (*rep)
            return cmd_report(rep_inputs, rep_baseline);
    } catch (const ConfigError &e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
