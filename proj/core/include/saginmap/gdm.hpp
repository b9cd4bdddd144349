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

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saginmap/chansim.hpp"
#include "saginmap/nn.hpp"

/// Class-conditional denoising diffusion over standardized link features,
/// used as a zero-shot LOS/NLOS classifier through per-class denoising error.
namespace saginmap::gdm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Forward-process variances. Steps are 1-based: t in [1, steps].
struct NoiseSchedule {
    int steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;

    double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar(int t) const { return alpha_bars[static_cast<std::size_t>(t - 1)]; }
    /// alpha_bar at the last step is below 0.05.
    bool fully_noising() const { return !alpha_bars.empty() && alpha_bars.back() < 0.05; }
};

/// Linearly spaced betas including both endpoints. Throws ConfigError.
NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
VectorXd forward_diffuse(const VectorXd& x0, int t, const VectorXd& eps, const NoiseSchedule& sched);

struct DenoiserArch {
    int data_dim = 7;
    int time_embed_dim = 16;
    int class_embed_dim = 8;
    std::vector<int> hidden{64, 64};
    nn::Activation activation = nn::Activation::Silu;

    int input_width() const { return data_dim + time_embed_dim + class_embed_dim; }
    nn::MlpShape mlp_shape() const;
    std::size_t parameter_count() const;
    bool operator==(const DenoiserArch&) const = default;
};

/// MLP tensors followed by the (class_embed_dim x 2) class-embedding table.
struct DenoiserParams {
    DenoiserArch arch;
    nn::Tensors tensors;

    std::span<const MatrixXd> mlp() const { return {tensors.data(), tensors.size() - 1}; }
    const MatrixXd& class_embedding() const { return tensors.back(); }
    std::size_t parameter_count() const { return nn::total_size(tensors); }
};

DenoiserParams init_denoiser(const DenoiserArch& arch, std::uint64_t seed,
                             nn::OutputInit out = nn::OutputInit::Scaled);

/// Sinusoidal embedding [sin(t w_k), cos(t w_k)], w_k = 10000^(-k/(dim/2)).
VectorXd time_embedding(int t, int dim);

/// Batched noise prediction: column j of x_t is denoised at step t[j] under class c[j].
using NoisePredictor =
    std::function<MatrixXd(const MatrixXd& x_t, std::span<const int> t, std::span<const LinkClass> c)>;

MatrixXd denoise_batch(const DenoiserParams& params, const MatrixXd& x_t, std::span<const int> t,
                       std::span<const LinkClass> c);
VectorXd denoise_predict(const DenoiserParams& params, const VectorXd& x_t, int t, LinkClass c);
/// Predictor view of params (params must outlive the returned function).
NoisePredictor as_predictor(const DenoiserParams& params);

/// Mean over the batch of ||eps - eps_hat||^2 and its gradient, for the
/// fixed architecture. `grads` is overwritten.
double noise_loss_and_grad(const DenoiserParams& params, const MatrixXd& x_t, std::span<const int> t,
                           std::span<const LinkClass> c, const MatrixXd& eps, nn::Tensors& grads);

struct TrainConfig {
    int epochs = 60;
    int batch_size = 256;
    nn::AdamConfig adam{};
    /// Optimizer steps between validation logs; 0 picks total_steps / 10.
    int stage_interval = 0;
    /// (t, eps) draws per validation sample for the stage RMSE.
    int eval_draws = 4;
    std::uint64_t seed = 1;
};

struct StageRecord {
    int stage = 0;
    long step = 0;
    double rmse = 0.0;
    double seconds = 0.0;
};

struct StageLog {
    std::vector<StageRecord> records;
    /// Validation RMSE before the first update (not a stage).
    double initial_rmse = 0.0;
};

struct TrainResult {
    DenoiserParams params;
    StageLog log;
};

long total_steps(const TrainConfig& cfg, std::size_t train_size);

/// Noise-prediction training with Adam. Throws ConfigError on invalid config
/// or a schedule that is not fully noising, TrainingFault on divergence.
TrainResult train(const Dataset& train, const Dataset& val, const NoiseSchedule& sched, const TrainConfig& cfg,
                  std::optional<DenoiserArch> arch = std::nullopt);

/// Fixed (t, eps) draws over a validation matrix so successive stages are comparable.
class RmseProbe {
public:
    RmseProbe(const MatrixXd& x0, std::span<const LinkClass> labels, const NoiseSchedule& sched, int draws,
              std::uint64_t seed);
    double evaluate(const NoisePredictor& predictor) const;

private:
    MatrixXd x_t_;
    MatrixXd eps_;
    std::vector<int> t_;
    std::vector<LinkClass> c_;
};

double rmse_stage(const NoisePredictor& predictor, const Dataset& val, const NoiseSchedule& sched, int n_eval,
                  std::uint64_t seed);

/// Monte-Carlo E_{t,eps} ||eps - eps_hat(x_t, t, c)||^2.
double class_denoising_error(const NoisePredictor& predictor, const NoiseSchedule& sched, const VectorXd& x,
                             LinkClass c, int n_eval, Rng& rng);

/// Both class errors from one shared set of (t, eps) draws.
std::array<double, 2> paired_class_errors(const NoisePredictor& predictor, const NoiseSchedule& sched,
                                          const VectorXd& x, int n_eval, Rng& rng);

struct Posterior {
    std::array<double, 2> prob{0.5, 0.5};   // indexed by LinkClass
    std::array<double, 2> error{0.0, 0.0};  // per-dimension mean denoising error
    LinkClass label = LinkClass::Los;

    double los() const { return prob[0]; }
};

/// Softmax of -error/tau over per-dimension errors; ties resolve to LOS.
Posterior posterior_from_errors(std::array<double, 2> error_per_dim, double tau);

Posterior classify(const NoisePredictor& predictor, const NoiseSchedule& sched, const VectorXd& x, int n_eval,
                   double tau, Rng& rng);

/// Classifies every column of x; column i uses stream (seed, i).
std::vector<Posterior> classify_batch(const NoisePredictor& predictor, const NoiseSchedule& sched, const MatrixXd& x,
                                      int n_eval, double tau, std::uint64_t seed, int workers = 1);

// Checkpoint: JSON document with architecture, schedule, parameters and the
// training-config fingerprint.
struct Checkpoint {
    DenoiserParams params;
    NoiseSchedule schedule;
    std::string config_fingerprint;
};

std::string checkpoint_to_json_text(const Checkpoint& ckpt);
/// Throws ParseError on malformed input or when `expected` differs from the stored architecture.
Checkpoint checkpoint_from_json_text(std::string_view text, const std::optional<DenoiserArch>& expected = std::nullopt);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<DenoiserArch>& expected = std::nullopt);

/// Columns stage,step,rmse,seconds; only seconds varies between identical runs.
std::string stage_log_to_csv(const StageLog& log);

}  // namespace saginmap::gdm
