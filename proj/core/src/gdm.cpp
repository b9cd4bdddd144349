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

#include "saginmap/gdm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "saginmap/parallel.hpp"

namespace saginmap::gdm {

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end)
{
    if (steps < 2) throw ConfigError("linear_schedule: need at least 2 steps");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw ConfigError(fmt::format("linear_schedule: require 0 < beta_start <= beta_end < 1 (got {}, {})",
                                      beta_start, beta_end));
    NoiseSchedule s;
    s.steps = steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(static_cast<std::size_t>(steps));
    s.alpha_bars.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
        const double beta = beta_start + frac * (beta_end - beta_start);
        s.betas[static_cast<std::size_t>(i)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

VectorXd forward_diffuse(const VectorXd& x0, int t, const VectorXd& eps, const NoiseSchedule& sched)
{
    if (t < 1 || t > sched.steps) throw InputError(fmt::format("forward_diffuse: step {} outside [1, {}]", t, sched.steps));
    if (x0.size() != eps.size()) throw InputError("forward_diffuse: x0 and eps differ in size");
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

nn::MlpShape DenoiserArch::mlp_shape() const
{
    nn::MlpShape s;
    s.widths.push_back(input_width());
    s.widths.insert(s.widths.end(), hidden.begin(), hidden.end());
    s.widths.push_back(data_dim);
    s.activation = activation;
    return s;
}

std::size_t DenoiserArch::parameter_count() const
{
    return mlp_shape().parameter_count() + static_cast<std::size_t>(class_embed_dim) * 2;
}

DenoiserParams init_denoiser(const DenoiserArch& arch, std::uint64_t seed, nn::OutputInit out)
{
    if (arch.data_dim < 1 || arch.time_embed_dim < 2 || arch.time_embed_dim % 2 != 0 || arch.class_embed_dim < 1)
        throw ConfigError("denoiser: invalid architecture");
    Rng rng = make_rng(seed, Stream::Training, 0);
    DenoiserParams p;
    p.arch = arch;
    p.tensors = nn::mlp_init(arch.mlp_shape(), rng, out);
    MatrixXd emb(arch.class_embed_dim, 2);
    for (Eigen::Index j = 0; j < emb.cols(); ++j)
        for (Eigen::Index i = 0; i < emb.rows(); ++i) emb(i, j) = standard_normal(rng);
    p.tensors.push_back(std::move(emb));
    return p;
}

VectorXd time_embedding(int t, int dim)
{
    const int half = dim / 2;
    VectorXd e(dim);
    for (int k = 0; k < half; ++k) {
        const double w = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        e[k] = std::sin(static_cast<double>(t) * w);
        e[half + k] = std::cos(static_cast<double>(t) * w);
    }
    return e;
}

namespace {

MatrixXd assemble_input(const DenoiserParams& p, const MatrixXd& x_t, std::span<const int> t,
                        std::span<const LinkClass> c)
{
    const auto& a = p.arch;
    if (x_t.rows() != a.data_dim)
        throw ConfigError(fmt::format("denoiser expects {} features, got {}", a.data_dim, x_t.rows()));
    if (static_cast<std::size_t>(x_t.cols()) != t.size() || t.size() != c.size())
        throw InputError("denoiser: batch sizes differ");
    MatrixXd in(a.input_width(), x_t.cols());
    in.topRows(a.data_dim) = x_t;
    const MatrixXd& emb = p.class_embedding();
    for (Eigen::Index j = 0; j < x_t.cols(); ++j) {
        const auto cls = static_cast<int>(c[static_cast<std::size_t>(j)]);
        if (cls != 0 && cls != 1) throw InputError("denoiser: class must be LOS or NLOS");
        in.col(j).segment(a.data_dim, a.time_embed_dim) = time_embedding(t[static_cast<std::size_t>(j)], a.time_embed_dim);
        in.col(j).tail(a.class_embed_dim) = emb.col(cls);
    }
    return in;
}

}  // namespace

MatrixXd denoise_batch(const DenoiserParams& params, const MatrixXd& x_t, std::span<const int> t,
                       std::span<const LinkClass> c)
{
    MatrixXd out = nn::mlp_forward(params.arch.mlp_shape(), params.mlp(), assemble_input(params, x_t, t, c));
    if (!out.allFinite()) throw NumericFault("denoiser produced a non-finite activation");
    return out;
}

VectorXd denoise_predict(const DenoiserParams& params, const VectorXd& x_t, int t, LinkClass c)
{
    const int ts[1] = {t};
    const LinkClass cs[1] = {c};
    return denoise_batch(params, x_t, ts, cs).col(0);
}

NoisePredictor as_predictor(const DenoiserParams& params)
{
    return [&params](const MatrixXd& x_t, std::span<const int> t, std::span<const LinkClass> c) {
        return denoise_batch(params, x_t, t, c);
    };
}

double noise_loss_and_grad(const DenoiserParams& params, const MatrixXd& x_t, std::span<const int> t,
                           std::span<const LinkClass> c, const MatrixXd& eps, nn::Tensors& grads)
{
    const auto shape = params.arch.mlp_shape();
    const MatrixXd in = assemble_input(params, x_t, t, c);
    nn::MlpTape tape;
    const MatrixXd out = nn::mlp_forward(shape, params.mlp(), in, &tape);
    const MatrixXd diff = out - eps;
    const double batch = static_cast<double>(x_t.cols());
    const double loss = diff.squaredNorm() / batch;

    grads = nn::zeros_like(params.tensors);
    const MatrixXd g_in =
        nn::mlp_backward(shape, params.mlp(), tape, (2.0 / batch) * diff, {grads.data(), grads.size() - 1});
    const auto& a = params.arch;
    MatrixXd& g_emb = grads.back();
    for (Eigen::Index j = 0; j < x_t.cols(); ++j)
        g_emb.col(static_cast<int>(c[static_cast<std::size_t>(j)])) += g_in.col(j).tail(a.class_embed_dim);
    return loss;
}

long total_steps(const TrainConfig& cfg, std::size_t train_size)
{
    const auto b = static_cast<std::size_t>(std::max(cfg.batch_size, 1));
    return static_cast<long>(cfg.epochs) * static_cast<long>((train_size + b - 1) / b);
}

// --- RMSE probe ----------------------------------------------------------------

namespace {

void draw_step_and_noise(const NoiseSchedule& sched, Rng& rng, int& t, Eigen::Ref<VectorXd> eps)
{
    t = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(sched.steps)));
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = standard_normal(rng);
}

}  // namespace

RmseProbe::RmseProbe(const MatrixXd& x0, std::span<const LinkClass> labels, const NoiseSchedule& sched, int draws,
                     std::uint64_t seed)
{
    if (x0.cols() == 0) throw InputError("rmse probe: empty validation set");
    if (draws < 1) throw ConfigError("rmse probe: need at least one draw per sample");
    const Eigen::Index n = x0.cols() * draws;
    x_t_.resize(x0.rows(), n);
    eps_.resize(x0.rows(), n);
    t_.resize(static_cast<std::size_t>(n));
    c_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < x0.cols(); ++i) {
        Rng rng = make_rng(seed, Stream::Evaluation, i);
        for (int k = 0; k < draws; ++k) {
            const Eigen::Index col = i * draws + k;
            int t = 1;
            draw_step_and_noise(sched, rng, t, eps_.col(col));
            const double ab = sched.alpha_bar(t);
            x_t_.col(col) = std::sqrt(ab) * x0.col(i) + std::sqrt(1.0 - ab) * eps_.col(col);
            t_[static_cast<std::size_t>(col)] = t;
            c_[static_cast<std::size_t>(col)] = labels[static_cast<std::size_t>(i)];
        }
    }
}

double RmseProbe::evaluate(const NoisePredictor& predictor) const
{
    constexpr Eigen::Index kChunk = 4096;
    double sum = 0.0;
    for (Eigen::Index lo = 0; lo < x_t_.cols(); lo += kChunk) {
        const Eigen::Index len = std::min(kChunk, x_t_.cols() - lo);
        const auto lo_u = static_cast<std::size_t>(lo);
        const auto len_u = static_cast<std::size_t>(len);
        const MatrixXd pred = predictor(x_t_.middleCols(lo, len), std::span(t_).subspan(lo_u, len_u),
                                        std::span(c_).subspan(lo_u, len_u));
        sum += (pred - eps_.middleCols(lo, len)).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(x_t_.cols()));
}

double rmse_stage(const NoisePredictor& predictor, const Dataset& val, const NoiseSchedule& sched, int n_eval,
                  std::uint64_t seed)
{
    if (val.size() == 0) throw InputError("rmse_stage: empty validation set");
    const auto labels = val.labels();
    return RmseProbe(val.matrix(), labels, sched, n_eval, seed).evaluate(predictor);
}

// --- Training ---------------------------------------------------------------------

TrainResult train(const Dataset& train_set, const Dataset& val, const NoiseSchedule& sched, const TrainConfig& cfg,
                  std::optional<DenoiserArch> arch)
{
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.eval_draws < 1 || cfg.stage_interval < 0)
        throw ConfigError("gdm train: epochs, batch size and eval draws must be positive");
    if (!(cfg.adam.learning_rate >= 0.0) || !(cfg.adam.beta1 > 0.0 && cfg.adam.beta1 < 1.0) ||
        !(cfg.adam.beta2 > 0.0 && cfg.adam.beta2 < 1.0) || !(cfg.adam.epsilon > 0.0))
        throw ConfigError("gdm train: invalid optimizer hyper-parameters");
    if (!sched.fully_noising())
        throw ConfigError(fmt::format("gdm train: schedule keeps alpha_bar_T = {:.4g} >= 0.05", sched.alpha_bars.back()));
    if (train_set.count(LinkClass::Los) == 0 || train_set.count(LinkClass::Nlos) == 0)
        throw ConfigError("gdm train: both classes must be present in the training set");
    if (val.size() == 0) throw ConfigError("gdm train: empty validation set");

    const long steps = total_steps(cfg, train_set.size());
    const long interval = cfg.stage_interval > 0 ? cfg.stage_interval : std::max(1L, steps / 10);
    if (interval > steps) throw ConfigError("gdm train: stage interval exceeds total steps");

    DenoiserArch a = arch.value_or(DenoiserArch{});
    if (!arch) a.data_dim = static_cast<int>(train_set.standardization.dim());
    if (static_cast<std::size_t>(a.data_dim) != train_set.standardization.dim())
        throw ConfigError("gdm train: architecture input width does not match the dataset");

    TrainResult result;
    result.params = init_denoiser(a, cfg.seed);
    DenoiserParams& params = result.params;
    const auto predictor = as_predictor(params);

    const MatrixXd x = train_set.matrix();
    const auto labels = train_set.labels();
    const auto val_labels = val.labels();
    const RmseProbe probe(val.matrix(), val_labels, sched, cfg.eval_draws,
                          stream_seed(cfg.seed, static_cast<std::uint64_t>(Stream::Evaluation)));
    result.log.initial_rmse = probe.evaluate(predictor);

    nn::Adam adam(cfg.adam, params.tensors);
    Rng rng = make_rng(cfg.seed, Stream::Training, 1);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const auto t0 = std::chrono::steady_clock::now();
    const auto d = static_cast<Eigen::Index>(a.data_dim);
    nn::Tensors grads;
    long step = 0;
    int stage = 0;
    int diverged = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            const auto b = static_cast<Eigen::Index>(hi - lo);
            MatrixXd xt(d, b);
            MatrixXd eps(d, b);
            std::vector<int> ts(static_cast<std::size_t>(b));
            std::vector<LinkClass> cs(static_cast<std::size_t>(b));
            for (Eigen::Index j = 0; j < b; ++j) {
                const std::size_t idx = order[lo + static_cast<std::size_t>(j)];
                int t = 1;
                draw_step_and_noise(sched, rng, t, eps.col(j));
                const double ab = sched.alpha_bar(t);
                xt.col(j) = std::sqrt(ab) * x.col(static_cast<Eigen::Index>(idx)) + std::sqrt(1.0 - ab) * eps.col(j);
                ts[static_cast<std::size_t>(j)] = t;
                cs[static_cast<std::size_t>(j)] = labels[idx];
            }
            const double loss = noise_loss_and_grad(params, xt, ts, cs, eps, grads);
            if (!std::isfinite(loss) || !nn::all_finite(grads))
                throw TrainingFault(fmt::format("gdm train: non-finite loss at step {}", step));
            adam.step(params.tensors, grads);
            ++step;

            if (step % interval == 0) {
                const double rmse = probe.evaluate(predictor);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                result.log.records.push_back({++stage, step, rmse, secs});
                diverged = rmse > 10.0 * result.log.initial_rmse ? diverged + 1 : 0;
                if (diverged >= 3)
                    throw TrainingFault(fmt::format(
                        "gdm train diverged: stage {} RMSE {:.4g} exceeds 10x initial {:.4g} for 3 stages", stage, rmse,
                        result.log.initial_rmse));
            }
        }
    }
    return result;
}

// --- Classification -----------------------------------------------------------------

std::array<double, 2> paired_class_errors(const NoisePredictor& predictor, const NoiseSchedule& sched,
                                          const VectorXd& x, int n_eval, Rng& rng)
{
    if (n_eval < 1) throw InputError("class errors: n_eval must be >= 1");
    const Eigen::Index d = x.size();
    MatrixXd eps(d, n_eval);
    MatrixXd xt(d, 2 * n_eval);
    std::vector<int> ts(static_cast<std::size_t>(2 * n_eval));
    std::vector<LinkClass> cs(static_cast<std::size_t>(2 * n_eval));
    for (int k = 0; k < n_eval; ++k) {
        int t = 1;
        draw_step_and_noise(sched, rng, t, eps.col(k));
        const double ab = sched.alpha_bar(t);
        xt.col(k) = std::sqrt(ab) * x + std::sqrt(1.0 - ab) * eps.col(k);
        xt.col(n_eval + k) = xt.col(k);
        ts[static_cast<std::size_t>(k)] = t;
        ts[static_cast<std::size_t>(n_eval + k)] = t;
        cs[static_cast<std::size_t>(k)] = LinkClass::Los;
        cs[static_cast<std::size_t>(n_eval + k)] = LinkClass::Nlos;
    }
    const MatrixXd pred = predictor(xt, ts, cs);
    const double n = static_cast<double>(n_eval);
    return {(pred.leftCols(n_eval) - eps).squaredNorm() / n, (pred.rightCols(n_eval) - eps).squaredNorm() / n};
}

double class_denoising_error(const NoisePredictor& predictor, const NoiseSchedule& sched, const VectorXd& x,
                             LinkClass c, int n_eval, Rng& rng)
{
    return paired_class_errors(predictor, sched, x, n_eval, rng)[static_cast<std::size_t>(c)];
}

Posterior posterior_from_errors(std::array<double, 2> e, double tau)
{
    if (!(tau > 0.0)) throw InputError("classify: tau must be positive");
    Posterior p;
    p.error = e;
    p.label = e[1] < e[0] ? LinkClass::Nlos : LinkClass::Los;
    // Two-class softmax written as a logistic so the pair sums to one exactly.
    const double p_nlos = 1.0 / (1.0 + std::exp((e[1] - e[0]) / tau));
    p.prob = {1.0 - p_nlos, p_nlos};
    return p;
}

Posterior classify(const NoisePredictor& predictor, const NoiseSchedule& sched, const VectorXd& x, int n_eval,
                   double tau, Rng& rng)
{
    if (!(tau > 0.0)) throw InputError("classify: tau must be positive");
    auto e = paired_class_errors(predictor, sched, x, n_eval, rng);
    const double d = static_cast<double>(x.size());
    return posterior_from_errors({e[0] / d, e[1] / d}, tau);
}

std::vector<Posterior> classify_batch(const NoisePredictor& predictor, const NoiseSchedule& sched, const MatrixXd& x,
                                      int n_eval, double tau, std::uint64_t seed, int workers)
{
    std::vector<Posterior> out(static_cast<std::size_t>(x.cols()));
    parallel_for(out.size(), workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, Stream::Classification, i);
        out[i] = classify(predictor, sched, x.col(static_cast<Eigen::Index>(i)), n_eval, tau, rng);
    });
    return out;
}

// --- Checkpoints ------------------------------------------------------------------------

namespace {

using nlohmann::json;

json arch_json(const DenoiserArch& a)
{
    return {{"data_dim", a.data_dim},
            {"time_embed_dim", a.time_embed_dim},
            {"class_embed_dim", a.class_embed_dim},
            {"hidden", a.hidden},
            {"activation", nn::to_string(a.activation)}};
}

DenoiserArch arch_from_json(const json& j)
{
    DenoiserArch a;
    a.data_dim = j.at("data_dim").get<int>();
    a.time_embed_dim = j.at("time_embed_dim").get<int>();
    a.class_embed_dim = j.at("class_embed_dim").get<int>();
    a.hidden = j.at("hidden").get<std::vector<int>>();
    a.activation = nn::activation_from_string(j.at("activation").get<std::string>());
    return a;
}

}  // namespace

std::string checkpoint_to_json_text(const Checkpoint& ckpt)
{
    json doc;
    doc["format"] = "saginmap-gdm-checkpoint";
    doc["version"] = 1;
    doc["architecture"] = arch_json(ckpt.params.arch);
    doc["schedule"] = {{"steps", ckpt.schedule.steps},
                       {"beta_start", ckpt.schedule.beta_start},
                       {"beta_end", ckpt.schedule.beta_end}};
    doc["config_fingerprint"] = ckpt.config_fingerprint;
    doc["tensors"] = json::array();
    for (const auto& t : ckpt.params.tensors) {
        std::vector<double> data(t.data(), t.data() + t.size());
        doc["tensors"].push_back({{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}});
    }
    return doc.dump() + "\n";
}

Checkpoint checkpoint_from_json_text(std::string_view text, const std::optional<DenoiserArch>& expected)
{
    Checkpoint ck;
    try {
        const json doc = json::parse(text);
        if (doc.at("format").get<std::string>() != "saginmap-gdm-checkpoint")
            throw ParseError("checkpoint: unexpected format tag");
        ck.params.arch = arch_from_json(doc.at("architecture"));
        const auto& s = doc.at("schedule");
        ck.schedule = linear_schedule(s.at("steps").get<int>(), s.at("beta_start").get<double>(),
                                      s.at("beta_end").get<double>());
        ck.config_fingerprint = doc.at("config_fingerprint").get<std::string>();
        for (const auto& t : doc.at("tensors")) {
            const auto rows = t.at("rows").get<Eigen::Index>();
            const auto cols = t.at("cols").get<Eigen::Index>();
            const auto data = t.at("data").get<std::vector<double>>();
            if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
                throw ParseError("checkpoint: tensor size mismatch");
            ck.params.tensors.emplace_back(Eigen::Map<const MatrixXd>(data.data(), rows, cols));
        }
    } catch (const json::exception& e) {
        throw ParseError(fmt::format("checkpoint: {}", e.what()));
    } catch (const ConfigError& e) {
        throw ParseError(fmt::format("checkpoint: {}", e.what()));
    }

    if (expected && !(*expected == ck.params.arch))
        throw ParseError("checkpoint: architecture descriptor does not match the requested architecture");
    // Shapes must agree with the stored descriptor.
    const auto shape = ck.params.arch.mlp_shape();
    if (ck.params.tensors.size() != shape.tensor_count() + 1)
        throw ParseError("checkpoint: tensor count does not match the architecture");
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        if (ck.params.tensors[2 * l].rows() != shape.widths[l + 1] || ck.params.tensors[2 * l].cols() != shape.widths[l] ||
            ck.params.tensors[2 * l + 1].rows() != shape.widths[l + 1] || ck.params.tensors[2 * l + 1].cols() != 1)
            throw ParseError(fmt::format("checkpoint: layer {} shape does not match the architecture", l));
    }
    if (ck.params.tensors.back().rows() != ck.params.arch.class_embed_dim || ck.params.tensors.back().cols() != 2)
        throw ParseError("checkpoint: class embedding shape does not match the architecture");
    if (!nn::all_finite(ck.params.tensors)) throw ParseError("checkpoint: non-finite parameter");
    return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << checkpoint_to_json_text(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<DenoiserArch>& expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json_text(ss.str(), expected);
}

std::string stage_log_to_csv(const StageLog& log)
{
    std::string out = "stage,step,rmse,seconds\n";
    for (const auto& r : log.records) out += fmt::format("{},{},{:.17g},{:.6f}\n", r.stage, r.step, r.rmse, r.seconds);
    return out;
}

}  // namespace saginmap::gdm
