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

#include <map>
#include <string>
#include <vector>

#include "saginmap/chanmap.hpp"
#include "saginmap/nn.hpp"

/// Transmit-power allocation driven by a channel map, trained with PPO.
/// Observations come from one map; rewards from another (the ground truth).
namespace saginmap::ppoalloc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct EnvConfig {
    const Scene* scene = nullptr;
    chanmap::ChannelMap observation_map;
    chanmap::ChannelMap true_map;
    std::vector<Vec3> users;
    /// Candidate transmit powers (dBm), one sorted list per transmitter.
    std::vector<std::vector<double>> power_levels;
    double noise_floor_dbm = -100.0;
    int episode_length = 32;
    /// Per-step user random-walk std-dev, meters.
    double step_jitter_m = 2.0;
    /// Std-dev of the per-episode start offset around each user, meters.
    double reset_spread_m = 80.0;

    /// Throws ConfigError on violated invariants.
    void validate() const;
    std::size_t tx_count() const { return power_levels.size(); }
    std::size_t observation_dim() const { return users.size() * tx_count(); }
};

/// Nominal power offset by each of `offsets_db`, ascending.
std::vector<std::vector<double>> default_power_levels(const Scene& scene,
                                                      const std::vector<double>& offsets_db = {-40, -30, -20, -10, 0});

struct EnvState {
    std::vector<Vec3> users;
    int step = 0;
};

/// Per-transmitter power index.
using Action = std::vector<int>;

class Environment {
public:
    explicit Environment(EnvConfig cfg);

    const EnvConfig& config() const { return cfg_; }
    EnvState reset(Rng& rng) const;
    /// Map-derived gains of the observation map for each user x tx, standardized.
    VectorXd observe(const EnvState& s) const;
    /// Sum over users of log2(1 + SINR) from the true map.
    double reward(const EnvState& s, const Action& a) const;
    /// Applies `a`, advances the users, and returns the reward.
    double step(EnvState& s, const Action& a, Rng& rng) const;
    bool done(const EnvState& s) const { return s.step >= cfg_.episode_length; }

private:
    EnvConfig cfg_;
    std::vector<double> obs_mean_;
    std::vector<double> obs_std_;
};

struct PolicyParams {
    nn::MlpShape actor_shape;
    nn::Tensors actor;
    nn::MlpShape critic_shape;
    nn::Tensors critic;
    int levels = 5;
    std::size_t tx_count() const
    {
        return static_cast<std::size_t>(actor_shape.widths.back() / levels);
    }
};

PolicyParams policy_init(std::size_t obs_dim, std::size_t tx_count, int levels, const std::vector<int>& hidden,
                         std::uint64_t seed);
/// Per-transmitter action probabilities stacked in one column per observation
/// (tx_count * levels rows).
MatrixXd action_probabilities(const PolicyParams& p, const MatrixXd& obs);
VectorXd state_values(const PolicyParams& p, const MatrixXd& obs);

struct Rollout {
    MatrixXd observations;  // obs_dim x N
    std::vector<Action> actions;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;
    std::vector<double> advantages;
    std::vector<double> returns;
    std::size_t size() const { return rewards.size(); }
};

/// Generalized advantage estimation; `values` carries the bootstrap value last.
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
                        double lambda);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double clip_eps);

struct PpoConfig {
    double gamma = 0.99;
    double lambda = 0.95;
    double clip_eps = 0.2;
    int epochs = 4;
    int minibatch = 64;
    double learning_rate = 1e-3;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    int episodes_per_iter = 4;
    std::vector<int> hidden{64, 64};
    /// Rewards are multiplied by this before advantage and value fitting.
    double reward_scale = 0.1;
};

class PolicyOptimizer {
public:
    PolicyOptimizer(const PolicyParams& p, double learning_rate);
    nn::Adam actor;
    nn::Adam critic;
};

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

/// Clipped-surrogate PPO update; `rollout.advantages` must already be
/// normalized. Throws TrainingFault on a non-finite loss.
UpdateStats ppo_update(PolicyParams& p, const Rollout& rollout, const PpoConfig& cfg, PolicyOptimizer& opt, Rng& rng);

/// Centered moving average; window w spans (w-1)/2 left and w/2 right, both
/// truncated at the edges.
std::vector<double> smooth(const std::vector<double>& series, int window);

struct TrainResult {
    std::vector<double> curve;  // mean episode reward per iteration
    PolicyParams policy;
};

TrainResult train_policy(const Environment& env, int iterations, std::uint64_t seed, const PpoConfig& cfg = {},
                         int workers = 1);

struct RunSummary {
    std::string map;
    std::uint64_t seed = 0;
    std::vector<double> curve;
    std::vector<double> smoothed;
    double first_mean = 0.0;  // mean smoothed reward over the first 10 iterations
    double final_mean = 0.0;  // mean smoothed reward over the last 50 iterations
};

struct Comparison {
    std::vector<RunSummary> runs;
    /// wins[a][b]: seeds on which map a's final reward >= map b's.
    std::map<std::string, std::map<std::string, int>> wins;
    const RunSummary& run(const std::string& map, std::uint64_t seed) const;
};

struct CompareConfig {
    int iterations = 300;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int smooth_window = 15;
    PpoConfig ppo;
    std::vector<double> power_offsets_db{-40, -30, -20, -10, 0};
    double noise_floor_dbm = -100.0;
    int episode_length = 32;
    double step_jitter_m = 2.0;
    double reset_spread_m = 80.0;
};

/// Trains one policy per (observation map, seed), rewards always from `true_map`.
Comparison compare_maps(const Scene& scene, const chanmap::ChannelMap& true_map,
                        const std::vector<std::pair<std::string, chanmap::ChannelMap>>& maps, const CompareConfig& cfg,
                        int workers = 1);

std::string curve_to_csv(const RunSummary& run);
std::string comparison_to_json_text(const Comparison& c);

}  // namespace saginmap::ppoalloc
