// Copyright 2026 The saginmap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "saginmap/gdm.hpp"

namespace saginmap::gdm {
namespace {

const NoiseSchedule& default_schedule()
{
    static const NoiseSchedule s = linear_schedule(100, 1e-3, 0.2);
    return s;
}

const DatasetSplit& small_split()
{
    static const DatasetSplit s = generate_dataset(generate_scene({}, 7), 3000, 21);
    return s;
}

TrainConfig quick_config(int epochs = 10)
{
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 256;
    cfg.eval_draws = 2;
    cfg.seed = 3;
    return cfg;
}

const TrainResult& trained()
{
    static const TrainResult r = train(small_split().train, small_split().val, default_schedule(), quick_config(40));
    return r;
}

TEST(Schedule, TwoStepExample)
{
    const auto s = linear_schedule(2, 0.1, 0.1);
    EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
    EXPECT_NEAR(s.alpha_bar(2), 0.81, 1e-15);
}

TEST(Schedule, LongScheduleNearlyDestroysSignal)
{
    const auto s = linear_schedule(1000, 1e-4, 2e-2);
    long double prod = 1.0L;
    for (int i = 0; i < 1000; ++i) prod *= 1.0L - (1e-4L + (2e-2L - 1e-4L) * i / 999.0L);
    EXPECT_LT(s.alpha_bar(1000), 5e-5);
    EXPECT_NEAR(s.alpha_bar(1000), static_cast<double>(prod), 1e-15);
    EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.beta(1000), 2e-2);
}

TEST(Schedule, StrictlyDecreasing)
{
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const int steps = 2 + static_cast<int>(uniform_index(rng, 300));
        const double b0 = uniform(rng, 1e-5, 0.3);
        const double b1 = uniform(rng, b0, 0.9);
        const auto s = linear_schedule(steps, b0, b1);
        for (int t = 2; t <= steps; ++t) ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    }
}

TEST(Schedule, Validation)
{
    EXPECT_THROW(linear_schedule(1, 0.1, 0.1), ConfigError);
    EXPECT_THROW(linear_schedule(10, 0.0, 0.1), ConfigError);
    EXPECT_THROW(linear_schedule(10, 0.2, 0.1), ConfigError);
    EXPECT_THROW(linear_schedule(10, 0.1, 1.0), ConfigError);
    EXPECT_TRUE(default_schedule().fully_noising());
    EXPECT_FALSE(linear_schedule(100, 1e-4, 2e-2).fully_noising());
}

TEST(ForwardDiffuse, Limits)
{
    NoiseSchedule identity;
    identity.steps = 1;
    identity.betas = {0.0};
    identity.alpha_bars = {1.0};
    const VectorXd x0 = VectorXd::Random(5);
    const VectorXd eps = VectorXd::Random(5);
    EXPECT_EQ(forward_diffuse(x0, 1, eps, identity), x0);

    const auto& s = default_schedule();
    for (int t : {1, 50, 100}) {
        const VectorXd xt = forward_diffuse(x0, t, VectorXd::Zero(5), s);
        EXPECT_EQ(xt, (std::sqrt(s.alpha_bar(t)) * x0).eval());
    }
    EXPECT_THROW(forward_diffuse(x0, 0, eps, s), InputError);
    EXPECT_THROW(forward_diffuse(x0, 101, eps, s), InputError);
}

TEST(ForwardDiffuse, VariancePreservation)
{
    const auto& s = default_schedule();
    const MatrixXd z = small_split().train.matrix();
    const Eigen::Index d = z.rows();
    Rng rng(8);
    const int n = 100000;
    for (int t : {1, s.steps / 2, s.steps}) {
        VectorXd sum = VectorXd::Zero(d);
        VectorXd sq = VectorXd::Zero(d);
        VectorXd sum0 = VectorXd::Zero(d);
        VectorXd sq0 = VectorXd::Zero(d);
        VectorXd eps(d);
        for (int i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) eps[k] = standard_normal(rng);
            const VectorXd x0 = z.col(static_cast<Eigen::Index>(uniform_index(rng, z.cols())));
            const VectorXd xt = forward_diffuse(x0, t, eps, s);
            sum0 += x0;
            sq0 += x0.cwiseProduct(x0);
            sum += xt;
            sq += xt.cwiseProduct(xt);
        }
        for (Eigen::Index k = 0; k < d; ++k) {
            const double mean = sum[k] / n;
            const double var = sq[k] / n - mean * mean;
            const double mean0 = sum0[k] / n;
            const double var0 = sq0[k] / n - mean0 * mean0;
            EXPECT_NEAR(var, s.alpha_bar(t) * var0 + (1.0 - s.alpha_bar(t)), 1e-2) << "t=" << t << " k=" << k;
            if (t == s.steps) {
                EXPECT_NEAR(var, 1.0, 1e-2) << "k=" << k;
            }
        }
    }
}

TEST(TimeEmbedding, Frequencies)
{
    const VectorXd e = time_embedding(3, 4);
    EXPECT_NEAR(e[0], std::sin(3.0), 1e-15);
    EXPECT_NEAR(e[1], std::sin(3.0 / 100.0), 1e-15);
    EXPECT_NEAR(e[2], std::cos(3.0), 1e-15);
    EXPECT_NEAR(e[3], std::cos(3.0 / 100.0), 1e-15);
}

TEST(Denoiser, ZeroOutputLayer)
{
    const auto p = init_denoiser(DenoiserArch{}, 1, nn::OutputInit::Zero);
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        const VectorXd x = VectorXd::Random(7);
        const int t = 1 + static_cast<int>(uniform_index(rng, 100));
        EXPECT_EQ(denoise_predict(p, x, t, i % 2 ? LinkClass::Nlos : LinkClass::Los).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Denoiser, Pure)
{
    const auto p = init_denoiser(DenoiserArch{}, 4);
    const VectorXd x = VectorXd::Random(7);
    EXPECT_EQ(denoise_predict(p, x, 17, LinkClass::Nlos), denoise_predict(p, x, 17, LinkClass::Nlos));
    EXPECT_NE(denoise_predict(p, x, 17, LinkClass::Nlos), denoise_predict(p, x, 17, LinkClass::Los));
}

TEST(Denoiser, HandComputedSingleUnit)
{
    DenoiserArch a;
    a.data_dim = 1;
    a.time_embed_dim = 2;
    a.class_embed_dim = 1;
    a.hidden = {1};
    DenoiserParams p = init_denoiser(a, 1);
    p.tensors[0] = (MatrixXd(1, 4) << 0.5, -0.25, 0.75, 2.0).finished();
    p.tensors[1] = MatrixXd::Constant(1, 1, 0.1);
    p.tensors[2] = MatrixXd::Constant(1, 1, 1.5);
    p.tensors[3] = MatrixXd::Constant(1, 1, -0.2);
    p.tensors[4] = (MatrixXd(1, 2) << 0.3, -0.4).finished();
    // Input [x, sin t, cos t, emb(NLOS)] = [0.8, sin 2, cos 2, -0.4]:
    // z = 0.4 - 0.25 sin 2 + 0.75 cos 2 - 0.8 + 0.1 = -0.839434
    // silu(z) = z / (1 + e^0.839434) = -0.253219, out = 1.5 silu(z) - 0.2.
    const VectorXd out = denoise_predict(p, VectorXd::Constant(1, 0.8), 2, LinkClass::Nlos);
    EXPECT_NEAR(out[0], -0.579828, 1e-6);
}

TEST(Denoiser, WrongInputWidth)
{
    const auto p = init_denoiser(DenoiserArch{}, 1);
    EXPECT_THROW(denoise_predict(p, VectorXd::Zero(5), 3, LinkClass::Los), ConfigError);
}

TEST(Denoiser, LossGradientMatchesFiniteDifferences)
{
    DenoiserArch a;
    a.data_dim = 3;
    a.time_embed_dim = 4;
    a.class_embed_dim = 2;
    a.hidden = {4};
    Rng rng(31);
    const auto& s = default_schedule();
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        DenoiserParams p = init_denoiser(a, static_cast<std::uint64_t>(trial));
        for (auto& m : p.tensors)
            for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = standard_normal(rng);
        const int b = 5;
        MatrixXd xt(3, b);
        MatrixXd eps(3, b);
        std::vector<int> ts(b);
        std::vector<LinkClass> cs(b);
        for (int j = 0; j < b; ++j) {
            for (int k = 0; k < 3; ++k) {
                xt(k, j) = standard_normal(rng);
                eps(k, j) = standard_normal(rng);
            }
            ts[j] = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.steps)));
            cs[j] = j % 2 ? LinkClass::Nlos : LinkClass::Los;
        }
        nn::Tensors grads;
        noise_loss_and_grad(p, xt, ts, cs, eps, grads);
        const VectorXd analytic = nn::flatten(grads);
        const VectorXd flat = nn::flatten(p.tensors);
        VectorXd numeric(flat.size());
        const double h = 1e-5;
        nn::Tensors scratch;
        for (Eigen::Index i = 0; i < flat.size(); ++i) {
            DenoiserParams q = p;
            VectorXd f = flat;
            f[i] += h;
            nn::unflatten(f, q.tensors);
            const double up = noise_loss_and_grad(q, xt, ts, cs, eps, scratch);
            f[i] -= 2 * h;
            nn::unflatten(f, q.tensors);
            const double down = noise_loss_and_grad(q, xt, ts, cs, eps, scratch);
            numeric[i] = (up - down) / (2 * h);
        }
        const double rel = (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm());
        worst = std::max(worst, rel);
    }
    EXPECT_LT(worst, 1e-4);
}

/// Exact class-conditional denoiser for x0 ~ N(mu_c, I):
/// E[eps | x_t] = sqrt(1 - ab) (x_t - sqrt(ab) mu_c) / (ab + 1 - ab).
NoisePredictor gaussian_denoiser(const NoiseSchedule& s, VectorXd mu_los, VectorXd mu_nlos)
{
    return [&s, mu_los, mu_nlos](const MatrixXd& xt, std::span<const int> t, std::span<const LinkClass> c) {
        MatrixXd out(xt.rows(), xt.cols());
        for (Eigen::Index j = 0; j < xt.cols(); ++j) {
            const double ab = s.alpha_bar(t[static_cast<std::size_t>(j)]);
            const VectorXd& mu = c[static_cast<std::size_t>(j)] == LinkClass::Los ? mu_los : mu_nlos;
            out.col(j) = std::sqrt(1.0 - ab) * (xt.col(j) - std::sqrt(ab) * mu);
        }
        return out;
    };
}

/// Predictor that recovers the injected noise exactly, given the clean input.
NoisePredictor perfect_denoiser(const NoiseSchedule& s, VectorXd x0)
{
    return [&s, x0](const MatrixXd& xt, std::span<const int> t, std::span<const LinkClass>) {
        MatrixXd out(xt.rows(), xt.cols());
        for (Eigen::Index j = 0; j < xt.cols(); ++j) {
            const double ab = s.alpha_bar(t[static_cast<std::size_t>(j)]);
            out.col(j) = (xt.col(j) - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
        }
        return out;
    };
}

NoisePredictor zero_denoiser()
{
    return [](const MatrixXd& xt, std::span<const int>, std::span<const LinkClass>) {
        return MatrixXd::Zero(xt.rows(), xt.cols()).eval();
    };
}

TEST(ClassDenoisingError, PerfectOracleIsZero)
{
    const auto& s = default_schedule();
    const VectorXd x = VectorXd::Random(7);
    Rng rng(1);
    EXPECT_NEAR(class_denoising_error(perfect_denoiser(s, x), s, x, LinkClass::Los, 16, rng), 0.0, 1e-20);
}

TEST(ClassDenoisingError, ZeroPredictorIsChiSquareMean)
{
    const auto& s = default_schedule();
    const int d = 7;
    const int n_eval = 256;
    Rng rng(2);
    const double e = class_denoising_error(zero_denoiser(), s, VectorXd::Zero(d), LinkClass::Nlos, n_eval, rng);
    EXPECT_NEAR(e, d, 3.0 / std::sqrt(n_eval) * std::sqrt(2.0 * d));
}

TEST(ClassDenoisingError, VarianceShrinksWithDraws)
{
    const auto& p = trained().params;
    const auto pred = as_predictor(p);
    const VectorXd x = small_split().val.matrix().col(0);
    auto spread = [&](int n_eval) {
        std::vector<double> v;
        for (int r = 0; r < 100; ++r) {
            Rng rng = make_rng(77, Stream::Evaluation, n_eval, r);
            v.push_back(class_denoising_error(pred, default_schedule(), x, LinkClass::Los, n_eval, rng));
        }
        double m = 0;
        for (double e : v) m += e;
        m /= 100;
        double var = 0;
        for (double e : v) var += (e - m) * (e - m);
        return var / 99;
    };
    const double ratio = spread(8) / spread(64);
    EXPECT_GT(ratio, 4.0);
    EXPECT_LT(ratio, 16.0);
}

TEST(Posterior, SymmetricAndNormalized)
{
    const auto p = posterior_from_errors({1.3, 1.3}, 1.0);
    EXPECT_DOUBLE_EQ(p.prob[0], 0.5);
    EXPECT_DOUBLE_EQ(p.prob[1], 0.5);
    EXPECT_EQ(p.label, LinkClass::Los);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double a = uniform(rng, 0, 50);
        const double b = uniform(rng, 0, 50);
        const double tau = std::exp(uniform(rng, -14, 4));
        const auto q = posterior_from_errors({a, b}, tau);
        ASSERT_NEAR(q.prob[0] + q.prob[1], 1.0, 1e-12);
        ASSERT_EQ(q.label, b < a ? LinkClass::Nlos : LinkClass::Los);
    }
}

TEST(Posterior, LowTemperatureIsOneHot)
{
    const auto p = posterior_from_errors({2.0, 3.0}, 1e-6);
    EXPECT_GT(std::max(p.prob[0], p.prob[1]), 0.999);
    EXPECT_EQ(p.label, LinkClass::Los);
    const auto q = posterior_from_errors({4.0, 3.0}, 1e-6);
    EXPECT_GT(q.prob[1], 0.999);
    EXPECT_THROW(posterior_from_errors({1, 2}, 0.0), InputError);
}

TEST(Classify, TwoGaussianMatchesBayesRule)
{
    const auto& s = default_schedule();
    const int d = 2;
    const VectorXd mu0 = VectorXd::Constant(d, -1.5);
    const VectorXd mu1 = VectorXd::Constant(d, 1.5);
    const auto pred = gaussian_denoiser(s, mu0, mu1);
    Rng rng(10);
    int agree = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const VectorXd& mu = i % 2 ? mu1 : mu0;
        VectorXd x(d);
        for (int k = 0; k < d; ++k) x[k] = mu[k] + standard_normal(rng);
        const LinkClass bayes = (x - mu1).squaredNorm() < (x - mu0).squaredNorm() ? LinkClass::Nlos : LinkClass::Los;
        const Posterior p = classify(pred, s, x, 64, 1.0, rng);
        ASSERT_NEAR(p.prob[0] + p.prob[1], 1.0, 1e-12);
        agree += p.label == bayes;
    }
    EXPECT_GE(agree, 950);
}

TEST(Classify, PairedDrawInvariance)
{
    const auto pred = as_predictor(trained().params);
    const MatrixXd z = small_split().val.matrix().leftCols(std::min<Eigen::Index>(1000, small_split().val.size()));
    const auto a = classify_batch(pred, default_schedule(), z, 8, 1.0, 5);
    const auto b = classify_batch(pred, default_schedule(), z, 32, 1.0, 5);
    int changed = 0;
    for (std::size_t i = 0; i < a.size(); ++i) changed += a[i].label != b[i].label;
    EXPECT_LT(static_cast<double>(changed) / static_cast<double>(a.size()), 0.02);
}

TEST(Classify, BatchIndependentOfWorkers)
{
    const auto pred = as_predictor(trained().params);
    const MatrixXd z = small_split().val.matrix().leftCols(200);
    const auto a = classify_batch(pred, default_schedule(), z, 8, 1.0, 9, 1);
    const auto b = classify_batch(pred, default_schedule(), z, 8, 1.0, 9, 3);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].prob, b[i].prob);
        EXPECT_EQ(a[i].label, b[i].label);
    }
}

TEST(RmseStage, PerfectAndZeroPredictors)
{
    const auto& s = default_schedule();
    const auto& val = small_split().val;
    const Dataset one = make_dataset({val.samples[0]}, val.standardization);
    const VectorXd x0 = one.matrix().col(0);
    EXPECT_NEAR(rmse_stage(perfect_denoiser(s, x0), one, s, 64, 1), 0.0, 1e-9);

    const double d = static_cast<double>(val.standardization.dim());
    EXPECT_NEAR(rmse_stage(zero_denoiser(), val, s, 4, 1), std::sqrt(d), 0.05 * std::sqrt(d));
}

std::vector<double> median3(const std::vector<double>& v)
{
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i == 0 || i + 1 == v.size()) {
            out[i] = v[i];
            continue;
        }
        std::array<double, 3> w{v[i - 1], v[i], v[i + 1]};
        std::sort(w.begin(), w.end());
        out[i] = w[1];
    }
    return out;
}

TEST(Train, TenStagesSmoothedNonincreasing)
{
    const auto& log = trained().log;
    ASSERT_EQ(log.records.size(), 10u);
    std::vector<double> rmse;
    for (std::size_t i = 0; i < log.records.size(); ++i) {
        EXPECT_EQ(log.records[i].stage, static_cast<int>(i) + 1);
        rmse.push_back(log.records[i].rmse);
    }
    EXPECT_LT(rmse.back(), log.initial_rmse);
    const auto m = median3(rmse);
    for (std::size_t i = 1; i < m.size(); ++i) EXPECT_LE(m[i], m[i - 1] + 1e-12) << "stage " << i + 1;
}

TEST(Train, ZeroLearningRateKeepsRmse)
{
    TrainConfig cfg = quick_config(3);
    cfg.adam.learning_rate = 0.0;
    const auto r = train(small_split().train, small_split().val, default_schedule(), cfg);
    ASSERT_FALSE(r.log.records.empty());
    for (const auto& rec : r.log.records) EXPECT_EQ(rec.rmse, r.log.initial_rmse);
}

TEST(Train, Deterministic)
{
    const auto a = train(small_split().train, small_split().val, default_schedule(), quick_config(3));
    const auto b = train(small_split().train, small_split().val, default_schedule(), quick_config(3));
    ASSERT_EQ(a.log.records.size(), b.log.records.size());
    for (std::size_t i = 0; i < a.log.records.size(); ++i) {
        EXPECT_EQ(a.log.records[i].step, b.log.records[i].step);
        EXPECT_EQ(a.log.records[i].rmse, b.log.records[i].rmse);
    }
    for (std::size_t i = 0; i < a.params.tensors.size(); ++i) EXPECT_EQ(a.params.tensors[i], b.params.tensors[i]);
}

TEST(Train, RejectsWeakScheduleAndBadConfig)
{
    const auto& sp = small_split();
    EXPECT_THROW(train(sp.train, sp.val, linear_schedule(100, 1e-4, 2e-2), quick_config(1)), ConfigError);
    TrainConfig bad = quick_config(1);
    bad.batch_size = 0;
    EXPECT_THROW(train(sp.train, sp.val, default_schedule(), bad), ConfigError);
    bad = quick_config(1);
    bad.adam.learning_rate = -1;
    EXPECT_THROW(train(sp.train, sp.val, default_schedule(), bad), ConfigError);
}

TEST(Train, DivergenceIsReported)
{
    TrainConfig cfg = quick_config(10);
    cfg.adam.learning_rate = 50.0;
    cfg.adam.beta2 = 0.5;
    EXPECT_THROW(train(small_split().train, small_split().val, default_schedule(), cfg), TrainingFault);
}

TEST(StageLogCsv, Columns)
{
    StageLog log;
    log.records = {{1, 10, 0.5, 0.25}, {2, 20, 0.25, 0.5}};
    const std::string csv = stage_log_to_csv(log);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "stage,step,rmse,seconds");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Checkpoint, RoundTripAndArchitectureCheck)
{
    Checkpoint c{trained().params, default_schedule(), "abcdef0123456789"};
    const std::string text = checkpoint_to_json_text(c);
    const Checkpoint back = checkpoint_from_json_text(text, c.params.arch);
    EXPECT_EQ(back.params.arch, c.params.arch);
    ASSERT_EQ(back.params.tensors.size(), c.params.tensors.size());
    for (std::size_t i = 0; i < c.params.tensors.size(); ++i) EXPECT_EQ(back.params.tensors[i], c.params.tensors[i]);
    EXPECT_EQ(back.schedule.alpha_bars, c.schedule.alpha_bars);
    EXPECT_EQ(back.config_fingerprint, c.config_fingerprint);

    DenoiserArch other = c.params.arch;
    other.hidden = {32, 32};
    EXPECT_THROW(checkpoint_from_json_text(text, other), ParseError);
    EXPECT_THROW(checkpoint_from_json_text(text.substr(0, text.size() / 2)), ParseError);

    const auto dir = testing::temp_dir("ckpt");
    save_checkpoint(c, dir / "c.json");
    EXPECT_EQ(load_checkpoint(dir / "c.json").params.tensors.back(), c.params.tensors.back());
    EXPECT_THROW(load_checkpoint(dir / "missing.json"), IoError);
}

}  // namespace
}  // namespace saginmap::gdm
