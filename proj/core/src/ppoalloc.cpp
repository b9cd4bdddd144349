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

#include "saginmap/ppoalloc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "saginmap/parallel.hpp"

namespace saginmap::ppoalloc {

namespace {

bool same_grid(const chanmap::ChannelMap& a, const chanmap::ChannelMap& b)
{
    return a.nx == b.nx && a.ny == b.ny && a.resolution == b.resolution && a.origin_x == b.origin_x &&
           a.origin_y == b.origin_y && a.tx_ids == b.tx_ids;
}

double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

}  // namespace

void EnvConfig::validate() const
{
    if (scene == nullptr) throw ConfigError("env: scene is required");
    if (users.empty()) throw ConfigError("env: at least one user is required");
    for (const auto& u : users)
        if (!scene->bounds.contains(u)) throw ConfigError("env: user outside scene bounds");
    if (power_levels.empty() || power_levels.size() != scene->transmitters.size())
        throw ConfigError("env: need one power set per transmitter");
    for (const auto& levels : power_levels) {
        if (levels.empty()) throw ConfigError("env: power set must be non-empty");
        if (levels.size() != power_levels.front().size())
            throw ConfigError("env: all transmitters need the same number of power levels");
        if (!std::is_sorted(levels.begin(), levels.end())) throw ConfigError("env: power set must be sorted");
    }
    if (observation_map.tx_count() != power_levels.size() || observation_map.cells.empty())
        throw ConfigError("env: observation map does not cover the scene transmitters");
    if (!same_grid(observation_map, true_map)) throw ConfigError("env: observation and true maps differ in grid");
    if (episode_length < 1) throw ConfigError("env: episode_length must be >= 1");
    if (!(step_jitter_m >= 0.0) || !(reset_spread_m >= 0.0)) throw ConfigError("env: jitter must be non-negative");
}

std::vector<std::vector<double>> default_power_levels(const Scene& scene, const std::vector<double>& offsets_db)
{
    std::vector<double> sorted = offsets_db;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::vector<double>> out;
    for (const auto& tx : scene.transmitters) {
        auto& levels = out.emplace_back();
        for (double o : sorted) levels.push_back(tx.tx_power_dbm + o);
    }
    return out;
}

Environment::Environment(EnvConfig cfg) : cfg_(std::move(cfg))
{
    cfg_.validate();
    const auto& m = cfg_.observation_map;
    const std::size_t ntx = m.tx_count();
    obs_mean_.assign(ntx, 0.0);
    obs_std_.assign(ntx, 0.0);
    const double cells = static_cast<double>(m.cells.size() / ntx);
    for (std::size_t i = 0; i < m.cells.size(); ++i) obs_mean_[i % ntx] += m.cells[i].est_gain_db / cells;
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
        const double d = m.cells[i].est_gain_db - obs_mean_[i % ntx];
        obs_std_[i % ntx] += d * d / cells;
    }
    for (auto& s : obs_std_) s = std::max(std::sqrt(s), 1e-6);
}

EnvState Environment::reset(Rng& rng) const
{
    const auto& b = cfg_.scene->bounds;
    EnvState s;
    for (const auto& u : cfg_.users) {
        const double x = std::clamp(u.x() + cfg_.reset_spread_m * standard_normal(rng), b.min_x, b.max_x);
        const double y = std::clamp(u.y() + cfg_.reset_spread_m * standard_normal(rng), b.min_y, b.max_y);
        s.users.emplace_back(x, y, u.z());
    }
    return s;
}

VectorXd Environment::observe(const EnvState& s) const
{
    const auto& m = cfg_.observation_map;
    const std::size_t ntx = m.tx_count();
    VectorXd obs(static_cast<Eigen::Index>(s.users.size() * ntx));
    for (std::size_t u = 0; u < s.users.size(); ++u) {
        const auto [ix, iy] = m.locate(s.users[u].x(), s.users[u].y());
        for (std::size_t k = 0; k < ntx; ++k)
            obs(static_cast<Eigen::Index>(u * ntx + k)) = (m.at(ix, iy, k).est_gain_db - obs_mean_[k]) / obs_std_[k];
    }
    return obs;
}

double Environment::reward(const EnvState& s, const Action& a) const
{
    const auto& m = cfg_.true_map;
    const std::size_t ntx = m.tx_count();
    if (a.size() != ntx) throw InputError("env: action size mismatch");
    for (std::size_t k = 0; k < ntx; ++k)
        if (a[k] < 0 || static_cast<std::size_t>(a[k]) >= cfg_.power_levels[k].size())
            throw InputError("env: power index out of range");
    const double noise = dbm_to_mw(cfg_.noise_floor_dbm);
    double total = 0.0;
    std::vector<double> rx(ntx);
    for (const auto& u : s.users) {
        const auto [ix, iy] = m.locate(u.x(), u.y());
        std::size_t serving = 0;
        for (std::size_t k = 0; k < ntx; ++k) {
            const auto& c = m.at(ix, iy, k);
            rx[k] = dbm_to_mw(cfg_.power_levels[k][static_cast<std::size_t>(a[k])] + c.est_gain_db - m.tx_power_dbm[k]);
            if (c.est_gain_db > m.at(ix, iy, serving).est_gain_db) serving = k;
        }
        double interference = 0.0;
        for (std::size_t k = 0; k < ntx; ++k)
            if (k != serving) interference += rx[k];
        total += std::log2(1.0 + rx[serving] / (noise + interference));
    }
    return total;
}

double Environment::step(EnvState& s, const Action& a, Rng& rng) const
{
    const double r = reward(s, a);
    const auto& b = cfg_.scene->bounds;
    for (auto& u : s.users) {
        u.x() = std::clamp(u.x() + cfg_.step_jitter_m * standard_normal(rng), b.min_x, b.max_x);
        u.y() = std::clamp(u.y() + cfg_.step_jitter_m * standard_normal(rng), b.min_y, b.max_y);
    }
    ++s.step;
    return r;
}

// --- Policy -------------------------------------------------------------------

PolicyParams policy_init(std::size_t obs_dim, std::size_t tx_count, int levels, const std::vector<int>& hidden,
                         std::uint64_t seed)
{
    if (obs_dim == 0 || tx_count == 0 || levels < 1) throw ConfigError("policy: empty observation or action space");
    PolicyParams p;
    p.levels = levels;
    p.actor_shape.widths.push_back(static_cast<int>(obs_dim));
    p.actor_shape.widths.insert(p.actor_shape.widths.end(), hidden.begin(), hidden.end());
    p.actor_shape.widths.push_back(static_cast<int>(tx_count) * levels);
    p.actor_shape.activation = nn::Activation::Tanh;
    p.critic_shape = p.actor_shape;
    p.critic_shape.widths.back() = 1;
    Rng rng = make_rng(seed, Stream::Policy);
    p.actor = nn::mlp_init(p.actor_shape, rng, nn::OutputInit::Zero);
    p.critic = nn::mlp_init(p.critic_shape, rng, nn::OutputInit::Zero);
    return p;
}

MatrixXd action_probabilities(const PolicyParams& p, const MatrixXd& obs)
{
    return nn::grouped_softmax(nn::mlp_forward(p.actor_shape, p.actor, obs), p.levels);
}

VectorXd state_values(const PolicyParams& p, const MatrixXd& obs)
{
    return nn::mlp_forward(p.critic_shape, p.critic, obs).row(0).transpose();
}

namespace {

/// Log-softmax per group of one column.
VectorXd log_softmax(const VectorXd& z, int levels)
{
    VectorXd out(z.size());
    for (Eigen::Index g = 0; g < z.size(); g += levels) {
        const auto seg = z.segment(g, levels);
        const double m = seg.maxCoeff();
        const double lse = m + std::log((seg.array() - m).exp().sum());
        out.segment(g, levels) = seg.array() - lse;
    }
    return out;
}

double action_log_prob(const VectorXd& logp, const Action& a, int levels)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += logp(static_cast<Eigen::Index>(k) * levels + a[k]);
    return s;
}

}  // namespace

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma,
                        double lambda)
{
    if (values.size() != rewards.size() + 1) throw InputError("gae: need one more value than rewards");
    std::vector<double> adv(rewards.size());
    double next = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        const double delta = rewards[i] + gamma * values[i + 1] - values[i];
        next = delta + gamma * lambda * next;
        adv[i] = next;
    }
    return adv;
}

double clipped_surrogate(double ratio, double advantage, double clip_eps)
{
    return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage);
}

PolicyOptimizer::PolicyOptimizer(const PolicyParams& p, double learning_rate)
    : actor(nn::AdamConfig{learning_rate}, p.actor), critic(nn::AdamConfig{learning_rate}, p.critic)
{
}

UpdateStats ppo_update(PolicyParams& p, const Rollout& r, const PpoConfig& cfg, PolicyOptimizer& opt, Rng& rng)
{
    const std::size_t n = r.size();
    if (n == 0 || r.actions.size() != n || r.log_probs.size() != n || r.advantages.size() != n ||
        r.returns.size() != n || static_cast<std::size_t>(r.observations.cols()) != n)
        throw InputError("ppo_update: inconsistent rollout");
    if (cfg.epochs < 1 || cfg.minibatch < 1) throw ConfigError("ppo_update: epochs and minibatch must be >= 1");
    const int levels = p.levels;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    UpdateStats stats;
    std::size_t batches = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.minibatch)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.minibatch));
            const auto bsz = static_cast<Eigen::Index>(end - start);
            MatrixXd obs(r.observations.rows(), bsz);
            for (Eigen::Index j = 0; j < bsz; ++j) obs.col(j) = r.observations.col(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(j)]));

            nn::MlpTape atape;
            const MatrixXd logits = nn::mlp_forward(p.actor_shape, p.actor, obs, &atape);
            MatrixXd dlogits = MatrixXd::Zero(logits.rows(), bsz);
            nn::MlpTape ctape;
            const MatrixXd v = nn::mlp_forward(p.critic_shape, p.critic, obs, &ctape);
            MatrixXd dv(1, bsz);
            double pl = 0.0;
            double vl = 0.0;
            double ent = 0.0;
            const double inv = 1.0 / static_cast<double>(bsz);
            for (Eigen::Index j = 0; j < bsz; ++j) {
                const std::size_t i = order[start + static_cast<std::size_t>(j)];
                const VectorXd logp = log_softmax(logits.col(j), levels);
                const VectorXd prob = logp.array().exp();
                const double ratio = std::exp(action_log_prob(logp, r.actions[i], levels) - r.log_probs[i]);
                const double a = r.advantages[i];
                pl -= clipped_surrogate(ratio, a, cfg.clip_eps) * inv;
                const bool clipped = (a > 0.0 && ratio > 1.0 + cfg.clip_eps) || (a < 0.0 && ratio < 1.0 - cfg.clip_eps);
                const double g = clipped ? 0.0 : -a * ratio * inv;
                for (std::size_t k = 0; k < r.actions[i].size(); ++k) {
                    const auto off = static_cast<Eigen::Index>(k) * levels;
                    const auto seg_p = prob.segment(off, levels);
                    const auto seg_l = logp.segment(off, levels);
                    const double h = -(seg_p.array() * seg_l.array()).sum();
                    ent += h * inv;
                    for (int l = 0; l < levels; ++l) {
                        const double onehot = l == r.actions[i][k] ? 1.0 : 0.0;
                        dlogits(off + l, j) += g * (onehot - seg_p(l)) +
                                               cfg.entropy_coef * inv * seg_p(l) * (seg_l(l) + h);
                    }
                }
                const double diff = v(0, j) - r.returns[i];
                vl += 0.5 * diff * diff * inv;
                dv(0, j) = cfg.value_coef * diff * inv;
            }
            const double loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent;
            if (!std::isfinite(loss)) throw TrainingFault("ppo_update: non-finite loss");
            nn::Tensors ga = nn::zeros_like(p.actor);
            nn::mlp_backward(p.actor_shape, p.actor, atape, dlogits, ga);
            nn::Tensors gc = nn::zeros_like(p.critic);
            nn::mlp_backward(p.critic_shape, p.critic, ctape, dv, gc);
            opt.actor.step(p.actor, ga);
            opt.critic.step(p.critic, gc);
            stats.policy_loss += pl;
            stats.value_loss += vl;
            stats.entropy += ent;
            ++batches;
        }
    }
    stats.policy_loss /= static_cast<double>(batches);
    stats.value_loss /= static_cast<double>(batches);
    stats.entropy /= static_cast<double>(batches);
    if (!nn::all_finite(p.actor) || !nn::all_finite(p.critic)) throw TrainingFault("ppo_update: non-finite parameters");
    return stats;
}

std::vector<double> smooth(const std::vector<double>& series, int window)
{
    if (window < 1) throw InputError("smooth: window must be >= 1");
    const auto n = static_cast<std::ptrdiff_t>(series.size());
    const std::ptrdiff_t left = (window - 1) / 2;
    const std::ptrdiff_t right = window / 2;
    std::vector<double> out(series.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - left);
        const std::ptrdiff_t hi = std::min(n - 1, i + right);
        double s = 0.0;
        for (std::ptrdiff_t j = lo; j <= hi; ++j) s += series[static_cast<std::size_t>(j)];
        out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

namespace {

struct Episode {
    MatrixXd obs;
    std::vector<Action> actions;
    std::vector<double> log_probs;
    std::vector<double> rewards;
    std::vector<double> values;  // one extra bootstrap value
};

Episode run_episode(const Environment& env, const PolicyParams& p, Rng& rng)
{
    const int len = env.config().episode_length;
    const std::size_t ntx = env.config().tx_count();
    Episode ep;
    ep.obs.resize(static_cast<Eigen::Index>(env.config().observation_dim()), len);
    EnvState s = env.reset(rng);
    for (int t = 0; t < len; ++t) {
        const VectorXd o = env.observe(s);
        ep.obs.col(t) = o;
        const VectorXd logp = log_softmax(nn::mlp_forward(p.actor_shape, p.actor, o).col(0), p.levels);
        Action a(ntx);
        for (std::size_t k = 0; k < ntx; ++k) {
            const double u = uniform(rng, 0.0, 1.0);
            double acc = 0.0;
            int choice = p.levels - 1;
            for (int l = 0; l < p.levels; ++l) {
                acc += std::exp(logp(static_cast<Eigen::Index>(k) * p.levels + l));
                if (u < acc) {
                    choice = l;
                    break;
                }
            }
            a[k] = choice;
        }
        ep.log_probs.push_back(action_log_prob(logp, a, p.levels));
        ep.values.push_back(state_values(p, o)(0));
        ep.rewards.push_back(env.step(s, a, rng));
        ep.actions.push_back(std::move(a));
    }
    ep.values.push_back(state_values(p, env.observe(s))(0));
    return ep;
}

}  // namespace

TrainResult train_policy(const Environment& env, int iterations, std::uint64_t seed, const PpoConfig& cfg, int workers)
{
    if (iterations < 1) throw ConfigError("train_policy: iterations must be >= 1");
    if (cfg.episodes_per_iter < 1) throw ConfigError("train_policy: episodes_per_iter must be >= 1");
    const auto levels = static_cast<int>(env.config().power_levels.front().size());
    TrainResult res;
    res.policy = policy_init(env.config().observation_dim(), env.config().tx_count(), levels, cfg.hidden, seed);
    PolicyOptimizer opt(res.policy, cfg.learning_rate);
    const auto neps = static_cast<std::size_t>(cfg.episodes_per_iter);
    const int len = env.config().episode_length;
    for (int it = 0; it < iterations; ++it) {
        std::vector<Episode> eps(neps);
        parallel_for(neps, workers, [&](std::size_t e) {
            Rng rng = make_rng(seed, Stream::Episode, static_cast<std::uint64_t>(it), e);
            eps[e] = run_episode(env, res.policy, rng);
        });
        Rollout r;
        r.observations.resize(static_cast<Eigen::Index>(env.config().observation_dim()),
                              static_cast<Eigen::Index>(neps) * len);
        double total = 0.0;
        for (std::size_t e = 0; e < neps; ++e) {
            auto& ep = eps[e];
            r.observations.middleCols(static_cast<Eigen::Index>(e) * len, len) = ep.obs;
            std::vector<double> scaled(ep.rewards.size());
            for (std::size_t t = 0; t < scaled.size(); ++t) scaled[t] = ep.rewards[t] * cfg.reward_scale;
            const auto adv = gae(scaled, ep.values, cfg.gamma, cfg.lambda);
            for (std::size_t t = 0; t < adv.size(); ++t) {
                r.actions.push_back(std::move(ep.actions[t]));
                r.log_probs.push_back(ep.log_probs[t]);
                r.rewards.push_back(ep.rewards[t]);
                r.values.push_back(ep.values[t]);
                r.advantages.push_back(adv[t]);
                r.returns.push_back(adv[t] + ep.values[t]);
                total += ep.rewards[t];
            }
        }
        res.curve.push_back(total / static_cast<double>(neps));

        const double n = static_cast<double>(r.size());
        const double mean = std::accumulate(r.advantages.begin(), r.advantages.end(), 0.0) / n;
        double var = 0.0;
        for (double a : r.advantages) var += (a - mean) * (a - mean) / n;
        const double sd = std::sqrt(var) + 1e-8;
        for (double& a : r.advantages) a = (a - mean) / sd;
        Rng rng = make_rng(seed, Stream::Policy, static_cast<std::uint64_t>(it) + 1);
        ppo_update(res.policy, r, cfg, opt, rng);
    }
    return res;
}

const RunSummary& Comparison::run(const std::string& map, std::uint64_t seed) const
{
    for (const auto& r : runs)
        if (r.map == map && r.seed == seed) return r;
    throw InputError(fmt::format("comparison has no run for map '{}' seed {}", map, seed));
}

namespace {

double mean_of(const std::vector<double>& v, std::size_t first, std::size_t count)
{
    double s = 0.0;
    for (std::size_t i = first; i < first + count; ++i) s += v[i];
    return s / static_cast<double>(count);
}

}  // namespace

Comparison compare_maps(const Scene& scene, const chanmap::ChannelMap& true_map,
                        const std::vector<std::pair<std::string, chanmap::ChannelMap>>& maps, const CompareConfig& cfg,
                        int workers)
{
    if (maps.size() < 2) throw ConfigError("compare_maps: need at least two maps");
    if (cfg.seeds.empty()) throw ConfigError("compare_maps: need at least one seed");
    Comparison c;
    for (const auto& [name, map] : maps) {
        EnvConfig ec;
        ec.scene = &scene;
        ec.observation_map = map;
        ec.true_map = true_map;
        ec.users = scene.users;
        ec.power_levels = default_power_levels(scene, cfg.power_offsets_db);
        ec.noise_floor_dbm = cfg.noise_floor_dbm;
        ec.episode_length = cfg.episode_length;
        ec.step_jitter_m = cfg.step_jitter_m;
        ec.reset_spread_m = cfg.reset_spread_m;
        const Environment env(std::move(ec));
        for (const auto seed : cfg.seeds) {
            RunSummary s;
            s.map = name;
            s.seed = seed;
            s.curve = train_policy(env, cfg.iterations, seed, cfg.ppo, workers).curve;
            s.smoothed = smooth(s.curve, cfg.smooth_window);
            const std::size_t n = s.smoothed.size();
            s.first_mean = mean_of(s.smoothed, 0, std::min<std::size_t>(10, n));
            const std::size_t tail = std::min<std::size_t>(50, n);
            s.final_mean = mean_of(s.smoothed, n - tail, tail);
            c.runs.push_back(std::move(s));
        }
    }
    for (const auto& [a, ma] : maps) {
        for (const auto& [b, mb] : maps) {
            if (a == b) continue;
            int w = 0;
            for (const auto seed : cfg.seeds) w += c.run(a, seed).final_mean >= c.run(b, seed).final_mean ? 1 : 0;
            c.wins[a][b] = w;
        }
    }
    return c;
}

std::string curve_to_csv(const RunSummary& run)
{
    std::string out = "iteration,raw,smoothed\n";
    for (std::size_t i = 0; i < run.curve.size(); ++i)
        out += fmt::format("{},{:.17g},{:.17g}\n", i + 1, run.curve[i], run.smoothed[i]);
    return out;
}

std::string comparison_to_json_text(const Comparison& c)
{
    nlohmann::ordered_json j;
    j["runs"] = nlohmann::ordered_json::array();
    for (const auto& r : c.runs)
        j["runs"].push_back({{"map", r.map}, {"seed", r.seed}, {"first_mean", r.first_mean}, {"final_mean", r.final_mean}});
    nlohmann::ordered_json w = nlohmann::ordered_json::object();
    for (const auto& [a, row] : c.wins)
        for (const auto& [b, n] : row) w[a][b] = n;
    j["wins"] = w;
    return j.dump(2) + "\n";
}

}  // namespace saginmap::ppoalloc
