// SPDX-License-Identifier: Apache-2.0
//
// gramdiff: Gram-matrix-guided diffusion channel estimation
// ------------------------------------------------------------------------
//
// Channel families, dataset files, frame synthesis and the angular observation.

#include "../oracles.hpp"

#include <gramdiff/channel.hpp>
#include <gramdiff/harness.hpp>
#include <gramdiff/io.hpp>
#include <gramdiff/link.hpp>
#include <gramdiff/observation.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gramdiff;

namespace {

std::string tmp_path(const std::string &name) {
    return (std::filesystem::temp_directory_path() / ("gramdiff_test_" + name)).string();
}

std::vector<char> file_bytes(const std::string &p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(GMModel, WeightsAndNormalization) {
    const GMChannelModel m = make_gm_model(16, 4);
    EXPECT_EQ(m.mixture.components(), 8u);
    double s = 0.0;
    for (double w : m.mixture.weights) {
        EXPECT_GT(w, 0.0);
        s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (std::size_t i = 0; i < m.mixture.dim(); ++i) {
        double avg = 0.0;
        for (std::size_t k = 0; k < 8; ++k) {
            EXPECT_GT(m.mixture.variances[k][i], 0.0);
            avg += m.mixture.weights[k] * m.mixture.variances[k][i];
        }
        EXPECT_NEAR(avg, 1.0, 1e-9);
    }
}

TEST(GMModel, ProfileIsSeeded) {
    EXPECT_EQ(make_gm_model(8, 2).mixture.variances, make_gm_model(8, 2).mixture.variances);
    GMProfileParams p;
    p.profile_seed = 99;
    EXPECT_NE(make_gm_model(8, 2, p).mixture.variances, make_gm_model(8, 2).mixture.variances);
}

TEST(GMModel, UnitComponentEntryVariance) {
    const ChannelModel m = make_single_gaussian_model(4, 2);
    const AngularTransform xf(4, 2);
    std::vector<double> acc(8);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(1, {static_cast<std::uint64_t>(i)});
        const ChannelDraw d = sample_channel(m, rng, xf);
        for (std::size_t j = 0; j < 8; ++j)
            acc[j] += std::norm(d.h_angular.data()[j]);
    }
    for (double v : acc) {
        EXPECT_GE(v / n, 0.95);
        EXPECT_LE(v / n, 1.05);
    }
}

TEST(GMModel, PerComponentCovarianceWithinFivePercent) {
    const GMChannelModel gm = make_gm_model(4, 2);
    const AngularTransform xf(4, 2);
    const std::size_t k = 0;
    // sample component 0 directly through a one-component copy
    const GMChannelModel one{DiagonalMixture{4, 2, {1.0}, {gm.mixture.variances[k]}}, gm.profile};
    std::vector<double> acc(8);
    const int n = 10000;
    Rng rng = derive_rng(2);
    for (int i = 0; i < n; ++i) {
        const ChannelDraw d = sample_channel(one, rng, xf);
        for (std::size_t j = 0; j < 8; ++j)
            acc[j] += std::norm(d.h_angular.data()[j]);
    }
    for (std::size_t j = 0; j < 8; ++j)
        EXPECT_NEAR(acc[j] / n / gm.mixture.variances[k][j], 1.0, 0.05) << j;
}

TEST(GMModel, ComponentFrequenciesFollowWeights) {
    const GMChannelModel gm = make_gm_model(4, 2);
    const AngularTransform xf(4, 2);
    std::vector<int> counts(gm.mixture.components());
    Rng rng = derive_rng(3);
    const int n = 20000;
    for (int i = 0; i < n; ++i)
        ++counts[*sample_channel(gm, rng, xf).component];
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double p = gm.mixture.weights[k];
        EXPECT_NEAR(counts[k] / double(n), p, 5.0 * std::sqrt(p * (1 - p) / n));
    }
}

TEST(Sampling, FixedSeedIsRepeatable) {
    const ChannelModel gm = make_gm_model(16, 4);
    Rng a = derive_rng(5, {1}), b = derive_rng(5, {1});
    EXPECT_EQ(sample_channel(gm, a).h, sample_channel(gm, b).h);
    const ChannelModel los = LOSChannelModel{};
    Rng c = derive_rng(5, {2}), d = derive_rng(5, {2});
    EXPECT_EQ(sample_channel(los, c).h, sample_channel(los, d).h);
}

TEST(Sampling, SpatialIsInverseDftOfAngular) {
    const ChannelModel gm = make_gm_model(8, 4);
    Rng rng = derive_rng(6);
    const ChannelDraw d = sample_channel(gm, rng);
    EXPECT_LT(oracle::max_abs_diff(oracle::dft2_sum(d.h), d.h_angular), 1e-12);
}

TEST(LOSModel, RankOneConcentratesEnergy) {
    LOSChannelModel m;
    m.clusters = 1;
    const AngularTransform xf(m.n_r, m.n_t);
    double frac = 0.0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(7, {static_cast<std::uint64_t>(i)});
        const auto e = hermitian_eig(gram(sample_channel(m, rng, xf).h_angular));
        double tr = 0.0;
        for (double l : e.eigenvalues)
            tr += l;
        frac += e.eigenvalues[0] / tr;
    }
    EXPECT_GE(frac / n, 0.9);
}

TEST(LOSModel, ZeroClustersRejected) {
    LOSChannelModel m;
    m.clusters = 0;
    Rng rng = derive_rng(1);
    EXPECT_THROW(sample_channel(m, rng, AngularTransform(16, 4)), ConfigError);
}

TEST(SpectralEntropy, Extremes) {
    ComplexMatrix r1(4, 4);
    r1(0, 0) = 2.0;
    EXPECT_NEAR(normalized_spectral_entropy(r1), 0.0, 1e-12);
    EXPECT_NEAR(normalized_spectral_entropy(ComplexMatrix::identity(4)), 1.0, 1e-12);
    auto rng = std::mt19937_64(1);
    const ComplexMatrix v = oracle::random_matrix(4, 1, rng);
    EXPECT_NEAR(normalized_spectral_entropy(oracle::matmul(v, oracle::adjoint(v))), 0.0, 1e-9);
}

TEST(SpectralEntropy, GMAboveLOS) {
    const SpectrumStats gm = gram_spectrum_stats(make_gm_model(16, 4), 300, 1);
    const SpectrumStats los = gram_spectrum_stats(LOSChannelModel{}, 300, 2);
    EXPECT_GT(gm.mean_entropy, los.mean_entropy);
    EXPECT_GE(gm.var_entropy, 0.0);
    EXPECT_THROW(gram_spectrum_stats(LOSChannelModel{}, 0, 1), ConfigError);
}

TEST(Normalizer, IdenticalMatricesAreDegenerate) {
    std::vector<ComplexMatrix> same(10, ComplexMatrix::identity(2));
    EXPECT_THROW(fit_normalizer(same), DegenerateError);
    EXPECT_THROW(fit_normalizer(std::vector<ComplexMatrix>{}), InsufficientDataError);
}

TEST(Normalizer, KnownVarianceGivesHalfScale) {
    std::vector<ComplexMatrix> data;
    Rng rng = derive_rng(8);
    for (int i = 0; i < 10000; ++i)
        data.push_back(complex_normal_matrix(2, 2, rng, 4.0));
    const Normalizer n = fit_normalizer(data);
    for (double s : n.scale)
        EXPECT_NEAR(s, 0.5, 0.01);
    const ComplexMatrix x = data[3];
    EXPECT_LT(oracle::max_abs_diff(n.unapply(n.apply(x)), x), 1e-12);
}

TEST(Normalizer, FittedDatasetHasUnitEntryVariance) {
    const ChannelModel gm = make_gm_model(8, 2);
    const AngularTransform xf(8, 2);
    std::vector<ComplexMatrix> data;
    for (int i = 0; i < 10000; ++i) {
        Rng rng = derive_rng(9, {static_cast<std::uint64_t>(i)});
        data.push_back(sample_channel(gm, rng, xf).h_angular * 3.0);
    }
    const Normalizer n = fit_normalizer(data);
    std::vector<double> var(16);
    for (const auto &d : data) {
        const ComplexMatrix a = n.apply(d);
        for (std::size_t i = 0; i < 16; ++i)
            var[i] += std::norm(a.data()[i]) / 10000.0;
    }
    for (double v : var) {
        EXPECT_GE(v, 0.9);
        EXPECT_LE(v, 1.1);
    }
}

TEST(Dataset, RoundTripAndManifestReproducibility) {
    const std::string p1 = tmp_path("ds1.gdch"), p2 = tmp_path("ds2.gdch");
    const ChannelModel gm = make_gm_model(4, 2);
    const auto man = generate_dataset(gm, 3, 42, p1);
    EXPECT_EQ(man["count"], 3);
    EXPECT_EQ(man["seed"], 42);
    EXPECT_EQ(man["channel_model"]["family"], "gm");
    const Dataset d = read_dataset(p1);
    ASSERT_EQ(d.matrices.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        Rng rng = derive_rng(42, {0xda7a, i});
        EXPECT_EQ(d.matrices[i], sample_channel(gm, rng).h);
    }
    generate_dataset(gm, 3, man["seed"].get<std::uint64_t>(), p2);
    EXPECT_EQ(file_bytes(p1), file_bytes(p2));
    EXPECT_TRUE(std::filesystem::exists(p1 + ".manifest.json"));
    // header layout: magic, version, n_r, n_t, count
    const auto b = file_bytes(p1);
    ASSERT_EQ(b.size(), 14u + 3 * 8 * 16);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "GDCH");
    EXPECT_EQ(static_cast<unsigned char>(b[6]), 4);
    EXPECT_EQ(static_cast<unsigned char>(b[8]), 2);
    EXPECT_EQ(static_cast<unsigned char>(b[10]), 3);
}

TEST(Dataset, CorruptionAndIoErrors) {
    const std::string p = tmp_path("ds3.gdch");
    generate_dataset(make_gm_model(4, 2), 2, 1, p);
    auto b = file_bytes(p);
    b.pop_back();
    std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    EXPECT_THROW(read_dataset(p), FormatError);
    b[0] = 'X';
    std::ofstream(p, std::ios::binary).write(b.data(), static_cast<std::streamsize>(b.size()));
    EXPECT_THROW(read_dataset(p), FormatError);
    EXPECT_THROW(read_dataset(tmp_path("does_not_exist")), IoError);
    EXPECT_THROW(generate_dataset(make_gm_model(4, 2), 1, 1, "/nonexistent_dir/x.gdch"), IoError);
    EXPECT_THROW(generate_dataset(make_gm_model(4, 2), 0, 1, p), ConfigError);
}

TEST(Pilots, Orthonormal) {
    EXPECT_EQ(make_pilots(1), ComplexMatrix::identity(1));
    const ComplexMatrix x = make_pilots(4);
    EXPECT_LT(oracle::max_abs_diff(oracle::matmul(x, oracle::adjoint(x)), ComplexMatrix::identity(4)), 1e-12);
    EXPECT_EQ(make_pilots(3, PilotKind::identity), ComplexMatrix::identity(3));
    EXPECT_THROW(make_pilots(0), DimensionError);
}

TEST(Data, QpskAlphabetAndEnergy) {
    Rng rng = derive_rng(10);
    const ComplexMatrix x = make_data(4, 10000, "qpsk", rng);
    const double s = 1.0 / std::sqrt(2.0);
    for (const auto &v : x.data()) {
        EXPECT_NEAR(std::abs(v.real()), s, 1e-15);
        EXPECT_NEAR(std::abs(v.imag()), s, 1e-15);
    }
    ComplexMatrix c = oracle::matmul(x, oracle::adjoint(x));
    c *= 1.0 / 10000.0;
    EXPECT_LT(std::sqrt(oracle::fro_sq(c - ComplexMatrix::identity(4))), 0.1);
    EXPECT_EQ(make_data(4, 0, "qpsk", rng).size(), 0u);
    EXPECT_THROW(make_data(4, 1, "8psk", rng), ConfigError);
}

TEST(Data, QamUnitEnergy) {
    for (const char *name : {"16qam", "64qam"}) {
        const auto c = Constellation::from_name(name);
        double e = 0.0;
        for (const auto &p : c.points())
            e += std::norm(p);
        EXPECT_NEAR(e / static_cast<double>(c.points().size()), 1.0, 1e-12) << name;
    }
}

TEST(Transmit, NoiselessPilots) {
    auto r = std::mt19937_64(11);
    const ComplexMatrix h = oracle::random_matrix(6, 3, r);
    Rng rng = derive_rng(11);
    const ComplexMatrix xp = make_pilots(3);
    const Frame f = transmit(h, xp, ComplexMatrix(3, 0), 0.0, rng);
    EXPECT_EQ(f.y_p, matmul(h, xp));
    EXPECT_EQ(f.n_d, 0u);
}

TEST(Transmit, DataNoiseVariance) {
    Rng rng = derive_rng(12);
    const ComplexMatrix h(4, 2);
    const ComplexMatrix xd = make_data(2, 10000, "qpsk", rng);
    const Frame f = transmit(h, make_pilots(2), xd, 0.7, rng);
    EXPECT_NEAR(oracle::fro_sq(f.y_d) / (4 * 10000), 0.7, 0.035);
}

TEST(Transmit, DeterministicAndChecked) {
    const ComplexMatrix h = ComplexMatrix::identity(2);
    Rng a = derive_rng(13), b = derive_rng(13);
    EXPECT_EQ(transmit(h, make_pilots(2), make_pilots(2), 0.3, a).y_d,
              transmit(h, make_pilots(2), make_pilots(2), 0.3, b).y_d);
    EXPECT_THROW(transmit(h, make_pilots(3), ComplexMatrix(3, 0), 0.1, a), DimensionError);
    EXPECT_THROW(transmit(h, make_pilots(2), ComplexMatrix(2, 0), -1.0, a), PreconditionError);
}

TEST(Transmit, NoiseWhiteness) {
    // empirical covariance of vec(Z) for a 2x2 block, 1e5 draws
    Rng rng = derive_rng(14);
    const double s2 = 0.5;
    ComplexMatrix cov(4, 4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const ComplexMatrix z = complex_normal_matrix(2, 2, rng, s2);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b)
                cov(a, b) += z.data()[a] * std::conj(z.data()[b]) / double(n);
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            EXPECT_NEAR(std::abs(cov(a, b) - (a == b ? s2 : 0.0)), 0.0, 0.05 * s2);
}

TEST(Observation, DecorrelateNoiseless) {
    auto r = std::mt19937_64(15);
    const ComplexMatrix h = oracle::random_matrix(5, 3, r);
    const ComplexMatrix xp = make_pilots(3);
    EXPECT_LT(oracle::max_abs_diff(decorrelate(oracle::matmul(h, xp), xp), h), 1e-12);
    const ComplexMatrix y = oracle::random_matrix(5, 3, r);
    EXPECT_EQ(decorrelate(y, ComplexMatrix::identity(3)), y);
}

TEST(Observation, RandomUnitaryPilots) {
    auto r = std::mt19937_64(16);
    // unitary via the eigenvectors of a random Hermitian matrix
    const ComplexMatrix a = oracle::random_matrix(4, 4, r);
    const ComplexMatrix u = hermitian_eig(a + oracle::adjoint(a)).eigenvectors;
    const ComplexMatrix h = oracle::random_matrix(6, 4, r);
    const ComplexMatrix y = oracle::matmul(h, u);
    EXPECT_LT(oracle::max_abs_diff(oracle::matmul(y, oracle::adjoint(u)), h), 1e-12);
    EXPECT_LT(oracle::max_abs_diff(decorrelate(y, u), h), 1e-12);
}

TEST(Observation, NonUnitaryPilotsRejected) {
    ComplexMatrix x = ComplexMatrix::identity(2);
    x(0, 1) = 0.5;
    EXPECT_THROW(decorrelate(ComplexMatrix(3, 2), x), PreconditionError);
    EXPECT_THROW(decorrelate(ComplexMatrix(3, 3), x), DimensionError);
}

TEST(Observation, NoiselessAngular) {
    auto r = std::mt19937_64(17);
    const ComplexMatrix h = oracle::random_matrix(4, 2, r);
    const ComplexMatrix xp = make_pilots(2);
    const AngularObservation o = to_angular_observation(oracle::matmul(h, xp), xp, 0.0);
    EXPECT_LT(oracle::max_abs_diff(o.y_tilde, oracle::dft2_sum(h)), 1e-12);
    EXPECT_EQ(o.scale, 1.0);
    EXPECT_TRUE(std::isinf(o.snr));
    const AngularObservation o1 = to_angular_observation(oracle::matmul(h, xp), xp, 1.0);
    EXPECT_DOUBLE_EQ(o1.scale, 1.0 / std::sqrt(2.0));
    EXPECT_EQ(o1.snr, 1.0);
    const AngularObservation o4 = to_angular_observation(oracle::matmul(h, xp), xp, 0.25);
    EXPECT_EQ(o4.snr, 4.0);
    EXPECT_THROW(to_angular_observation(h, xp, -0.1), PreconditionError);
}

TEST(Observation, NormalizedVarianceIsOne) {
    const ChannelModel gm = make_gm_model(4, 2);
    const AngularTransform xf(4, 2);
    const ComplexMatrix xp = make_pilots(2);
    std::vector<double> acc(8);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Rng rng = derive_rng(18, {static_cast<std::uint64_t>(i)});
        const ChannelDraw d = sample_channel(gm, rng, xf);
        const Frame f = transmit(d.h, xp, ComplexMatrix(2, 0), 0.5, rng);
        const AngularObservation o = to_angular_observation(f.y_p, f.x_p, f.sigma2, xf);
        for (std::size_t j = 0; j < 8; ++j)
            acc[j] += std::norm(o.y_tilde.data()[j]);
    }
    // pooled over entries: per-entry values carry ~2.5% Monte-Carlo spread
    double mean = 0.0;
    for (double v : acc)
        mean += v / n / 8.0;
    EXPECT_GE(mean, 0.95);
    EXPECT_LE(mean, 1.05);
}

TEST(Observation, AngularNoiseStaysWhite) {
    Rng rng = derive_rng(19);
    const std::size_t nr = 2, nt = 2;
    const ComplexMatrix xp = make_pilots(nt);
    const AngularTransform xf(nr, nt);
    const double s2 = 0.8;
    ComplexMatrix cov(4, 4);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const ComplexMatrix z = complex_normal_matrix(nr, nt, rng, s2);
        const ComplexMatrix d = decorrelate(z, xp);
        const ComplexMatrix zt = xf.forward(d);
        if (i < 10)
            EXPECT_NEAR(fro_norm(d), fro_norm(zt), 1e-10);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b)
                cov(a, b) += zt.data()[a] * std::conj(zt.data()[b]) / double(n);
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            EXPECT_NEAR(std::abs(cov(a, b) - (a == b ? s2 : 0.0)), 0.0, 0.05 * s2);
}
