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

#include "saginmap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace saginmap::baselines {

namespace {

double label_value(LinkClass c) { return c == LinkClass::Nlos ? 1.0 : 0.0; }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

// --- KNN ----------------------------------------------------------------------

KnnModel knn_fit(const Dataset& train, int k)
{
    if (k < 1 || k % 2 == 0) throw ConfigError(fmt::format("knn: k must be odd and positive (got {})", k));
    if (static_cast<std::size_t>(k) > train.size()) throw ConfigError("knn: k exceeds the training size");
    return KnnModel{k, train.matrix(), train.labels()};
}

namespace {

std::vector<std::size_t> nearest(const KnnModel& m, const VectorXd& x)
{
    if (x.size() != m.points.rows()) throw ConfigError("knn: feature dimension mismatch");
    const Eigen::RowVectorXd d2 = (m.points.colwise() - x).colwise().squaredNorm();
    std::vector<std::pair<double, std::size_t>> cand(static_cast<std::size_t>(d2.size()));
    for (Eigen::Index i = 0; i < d2.size(); ++i) cand[static_cast<std::size_t>(i)] = {d2[i], static_cast<std::size_t>(i)};
    const auto k = static_cast<std::size_t>(m.k);
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(cand[i].second);
    return out;
}

}  // namespace

double knn_nlos_fraction(const KnnModel& model, const VectorXd& x)
{
    const auto idx = nearest(model, x);
    double nlos = 0.0;
    for (auto i : idx) nlos += label_value(model.labels[i]);
    return nlos / static_cast<double>(idx.size());
}

LinkClass knn_predict(const KnnModel& model, const VectorXd& x)
{
    return knn_nlos_fraction(model, x) > 0.5 ? LinkClass::Nlos : LinkClass::Los;
}

// --- GBT ----------------------------------------------------------------------

namespace {

double mean_log_loss(const std::vector<double>& f, const std::vector<double>& y)
{
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        // log(1 + e^f) - y f, computed stably.
        const double z = f[i];
        s += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y[i] * z;
    }
    return s / static_cast<double>(f.size());
}

}  // namespace

GbtModel gbt_train(const MatrixXd& x, const std::vector<LinkClass>& labels, int rounds, double learning_rate)
{
    if (rounds < 0) throw ConfigError("gbt: rounds must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("gbt: learning rate must be positive");
    const auto n = static_cast<std::size_t>(x.cols());
    if (n != labels.size() || n == 0) throw InputError("gbt: sample and label counts differ");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = label_value(labels[i]);
    const double prior = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    if (prior <= 0.0 || prior >= 1.0) throw ConfigError("gbt: both classes must be present");

    GbtModel m;
    m.learning_rate = learning_rate;
    m.base_score = std::log(prior / (1.0 - prior));

    const auto dims = static_cast<int>(x.rows());
    std::vector<std::vector<std::size_t>> sorted(static_cast<std::size_t>(dims));
    for (int f = 0; f < dims; ++f) {
        auto& o = sorted[static_cast<std::size_t>(f)];
        o.resize(n);
        std::iota(o.begin(), o.end(), std::size_t{0});
        std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
            return x(f, static_cast<Eigen::Index>(a)) < x(f, static_cast<Eigen::Index>(b));
        });
    }

    std::vector<double> score(n, m.base_score);
    std::vector<double> grad(n);
    m.loss_history.push_back(mean_log_loss(score, y));
    for (int r = 0; r < rounds; ++r) {
        for (std::size_t i = 0; i < n; ++i) grad[i] = y[i] - sigmoid(score[i]);
        const double total = std::accumulate(grad.begin(), grad.end(), 0.0);
        const double base_fit = total * total / static_cast<double>(n);

        Stump best{0, std::numeric_limits<double>::infinity(), total / static_cast<double>(n),
                   total / static_cast<double>(n)};
        double best_gain = 0.0;
        for (int f = 0; f < dims; ++f) {
            const auto& o = sorted[static_cast<std::size_t>(f)];
            double left = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left += grad[o[i]];
                const double v = x(f, static_cast<Eigen::Index>(o[i]));
                const double v_next = x(f, static_cast<Eigen::Index>(o[i + 1]));
                if (!(v < v_next)) continue;
                const double nl = static_cast<double>(i + 1);
                const double nr = static_cast<double>(n - i - 1);
                const double right = total - left;
                const double gain = left * left / nl + right * right / nr - base_fit;
                if (gain > best_gain) {
                    best_gain = gain;
                    best = Stump{f, 0.5 * (v + v_next), left / nl, right / nr};
                }
            }
        }
        m.stumps.push_back(best);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = x(best.feature, static_cast<Eigen::Index>(i));
            score[i] += learning_rate * (v <= best.threshold ? best.left : best.right);
        }
        m.loss_history.push_back(mean_log_loss(score, y));
    }
    return m;
}

GbtModel gbt_train(const Dataset& train, int rounds, double learning_rate)
{
    return gbt_train(train.matrix(), train.labels(), rounds, learning_rate);
}

GbtPrediction gbt_predict(const GbtModel& model, const VectorXd& x)
{
    double f = model.base_score;
    for (const auto& s : model.stumps) {
        if (s.feature >= x.size()) throw ConfigError("gbt: feature dimension mismatch");
        f += model.learning_rate * (x[s.feature] <= s.threshold ? s.left : s.right);
    }
    GbtPrediction p;
    p.nlos_probability = sigmoid(f);
    p.label = p.nlos_probability > 0.5 ? LinkClass::Nlos : LinkClass::Los;
    return p;
}

// --- Neural baseline ----------------------------------------------------------------

NeuralBaseline neural_init(int input_dim, const NeuralConfig& cfg)
{
    NeuralBaseline m;
    m.config = cfg;
    m.shape.widths.push_back(input_dim);
    m.shape.widths.insert(m.shape.widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    m.shape.widths.push_back(2);
    Rng rng = make_rng(cfg.seed, Stream::Baseline, 0);
    m.tensors = nn::mlp_init(m.shape, rng, nn::OutputInit::Zero);
    return m;
}

namespace {

MatrixXd softmax_cols(const MatrixXd& logits) { return nn::grouped_softmax(logits, static_cast<int>(logits.rows())); }

}  // namespace

double neural_mean_cross_entropy(const NeuralBaseline& model, const MatrixXd& x, const std::vector<LinkClass>& y)
{
    const MatrixXd p = softmax_cols(nn::mlp_forward(model.shape, model.tensors, x));
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j)
        s -= std::log(std::max(p(static_cast<int>(y[static_cast<std::size_t>(j)]), j), 1e-300));
    return s / static_cast<double>(p.cols());
}

NeuralBaseline neural_train(const Dataset& train, const NeuralConfig& cfg, const Dataset* val)
{
    if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("neural baseline: epochs and batch size must be positive");
    if (train.count(LinkClass::Los) == 0 || train.count(LinkClass::Nlos) == 0)
        throw ConfigError("neural baseline: both classes must be present");

    NeuralBaseline m = neural_init(static_cast<int>(train.standardization.dim()), cfg);
    const MatrixXd x = train.matrix();
    const auto y = train.labels();
    MatrixXd vx;
    std::vector<LinkClass> vy;
    if (val) {
        vx = val->matrix();
        vy = val->labels();
    }

    nn::Adam adam(cfg.adam, m.tensors);
    Rng rng = make_rng(cfg.seed, Stream::Baseline, 1);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::Tensors grads;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            const auto b = static_cast<Eigen::Index>(hi - lo);
            MatrixXd xb(x.rows(), b);
            MatrixXd onehot = MatrixXd::Zero(2, b);
            for (Eigen::Index j = 0; j < b; ++j) {
                const auto idx = order[lo + static_cast<std::size_t>(j)];
                xb.col(j) = x.col(static_cast<Eigen::Index>(idx));
                onehot(static_cast<int>(y[idx]), j) = 1.0;
            }
            nn::MlpTape tape;
            const MatrixXd p = softmax_cols(nn::mlp_forward(m.shape, m.tensors, xb, &tape));
            const double loss = -(onehot.array() * p.array().max(1e-300).log()).sum() / static_cast<double>(b);
            if (!std::isfinite(loss)) throw TrainingFault(fmt::format("neural baseline diverged at step {}", step));
            grads = nn::zeros_like(m.tensors);
            nn::mlp_backward(m.shape, m.tensors, tape, (p - onehot) / static_cast<double>(b), grads);
            adam.step(m.tensors, grads);
            ++step;
            if (val && cfg.log_interval > 0 && step % cfg.log_interval == 0)
                m.history.emplace_back(step, neural_mean_cross_entropy(m, vx, vy));
        }
    }
    if (!nn::all_finite(m.tensors)) throw TrainingFault("neural baseline: non-finite parameters");
    return m;
}

std::array<double, 2> neural_predict(const NeuralBaseline& model, const VectorXd& x)
{
    if (x.size() != model.shape.widths.front()) throw ConfigError("neural baseline: feature dimension mismatch");
    const MatrixXd logits = nn::mlp_forward(model.shape, model.tensors, x);
    const double p_nlos = 1.0 / (1.0 + std::exp(logits(0, 0) - logits(1, 0)));
    return {1.0 - p_nlos, p_nlos};
}

// --- Metrics ----------------------------------------------------------------------

MetricsReport evaluate(const std::vector<LinkClass>& pred, const std::vector<LinkClass>& truth)
{
    if (pred.size() != truth.size()) throw InputError("evaluate: prediction and truth lengths differ");
    if (pred.empty()) throw InputError("evaluate: empty input");
    MetricsReport r;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == LinkClass::Nlos;
        const bool t = truth[i] == LinkClass::Nlos;
        if (p && t) ++r.true_positive;
        else if (!p && !t) ++r.true_negative;
        else if (p) ++r.false_positive;
        else ++r.false_negative;
    }
    const auto tp = static_cast<double>(r.true_positive);
    r.accuracy = static_cast<double>(r.true_positive + r.true_negative) / static_cast<double>(pred.size());
    const std::size_t pred_pos = r.true_positive + r.false_positive;
    const std::size_t real_pos = r.true_positive + r.false_negative;
    r.degenerate = pred_pos == 0 || real_pos == 0;
    r.precision = pred_pos ? tp / static_cast<double>(pred_pos) : 0.0;
    r.recall = real_pos ? tp / static_cast<double>(real_pos) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

std::string metrics_to_json_text(const std::map<std::string, MetricsReport>& table)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, r] : table) {
        j[name] = {{"accuracy", r.accuracy},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"true_positive", r.true_positive},
                   {"true_negative", r.true_negative},
                   {"false_positive", r.false_positive},
                   {"false_negative", r.false_negative},
                   {"degenerate", r.degenerate}};
    }
    return j.dump(2) + "\n";
}

std::map<std::string, MetricsReport> metrics_from_json_text(std::string_view text)
{
    std::map<std::string, MetricsReport> out;
    try {
        const auto j = nlohmann::json::parse(text);
        for (const auto& [name, v] : j.items()) {
            MetricsReport r;
            r.accuracy = v.at("accuracy").get<double>();
            r.precision = v.at("precision").get<double>();
            r.recall = v.at("recall").get<double>();
            r.f1 = v.at("f1").get<double>();
            r.true_positive = v.at("true_positive").get<std::size_t>();
            r.true_negative = v.at("true_negative").get<std::size_t>();
            r.false_positive = v.at("false_positive").get<std::size_t>();
            r.false_negative = v.at("false_negative").get<std::size_t>();
            r.degenerate = v.at("degenerate").get<bool>();
            out.emplace(name, r);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("metrics report: {}", e.what()));
    }
    return out;
}

namespace {

nlohmann::json tensors_to_json(const nn::Tensors& ts)
{
    auto arr = nlohmann::json::array();
    for (const auto& t : ts) {
        std::vector<double> data(t.data(), t.data() + t.size());
        arr.push_back({{"rows", t.rows()}, {"cols", t.cols()}, {"data", data}});
    }
    return arr;
}

nn::Tensors tensors_from_json(const nlohmann::json& arr)
{
    nn::Tensors out;
    for (const auto& t : arr) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto data = t.at("data").get<std::vector<double>>();
        if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
            throw ParseError("baseline bundle: tensor size mismatch");
        out.emplace_back(Eigen::Map<const MatrixXd>(data.data(), rows, cols));
    }
    return out;
}

}  // namespace

std::string bundle_to_json_text(const BaselineBundle& b)
{
    nlohmann::json j;
    j["format"] = "saginmap-baselines";
    j["version"] = 1;
    j["knn"] = {{"k", b.knn_k}};
    auto stumps = nlohmann::json::array();
    for (const auto& st : b.gbt.stumps) {
        nlohmann::json threshold = st.threshold;
        if (!std::isfinite(st.threshold)) threshold = nullptr;
        stumps.push_back({{"feature", st.feature}, {"threshold", threshold}, {"left", st.left}, {"right", st.right}});
    }
    j["gbt"] = {{"base_score", b.gbt.base_score},
                {"learning_rate", b.gbt.learning_rate},
                {"stumps", stumps},
                {"loss_history", b.gbt.loss_history}};
    const auto& n = b.neural;
    j["neural"] = {{"widths", n.shape.widths},
                   {"activation", nn::to_string(n.shape.activation)},
                   {"epochs", n.config.epochs},
                   {"batch_size", n.config.batch_size},
                   {"learning_rate", n.config.adam.learning_rate},
                   {"seed", n.config.seed},
                   {"tensors", tensors_to_json(n.tensors)}};
    return j.dump(1) + "\n";
}

BaselineBundle bundle_from_json_text(std::string_view text)
{
    BaselineBundle b;
    try {
        const auto j = nlohmann::json::parse(text);
        if (j.at("format").get<std::string>() != "saginmap-baselines" || j.at("version").get<int>() != 1)
            throw ParseError("baseline bundle: unsupported format");
        b.knn_k = j.at("knn").at("k").get<int>();
        const auto& g = j.at("gbt");
        b.gbt.base_score = g.at("base_score").get<double>();
        b.gbt.learning_rate = g.at("learning_rate").get<double>();
        b.gbt.loss_history = g.at("loss_history").get<std::vector<double>>();
        for (const auto& st : g.at("stumps")) {
            Stump s;
            s.feature = st.at("feature").get<int>();
            s.threshold = st.at("threshold").is_null() ? std::numeric_limits<double>::infinity()
                                                       : st.at("threshold").get<double>();
            s.left = st.at("left").get<double>();
            s.right = st.at("right").get<double>();
            b.gbt.stumps.push_back(s);
        }
        const auto& n = j.at("neural");
        b.neural.shape.widths = n.at("widths").get<std::vector<int>>();
        b.neural.shape.activation = nn::activation_from_string(n.at("activation").get<std::string>());
        b.neural.config.epochs = n.at("epochs").get<int>();
        b.neural.config.batch_size = n.at("batch_size").get<int>();
        b.neural.config.adam.learning_rate = n.at("learning_rate").get<double>();
        b.neural.config.seed = n.at("seed").get<std::uint64_t>();
        b.neural.config.hidden.assign(b.neural.shape.widths.begin() + 1, b.neural.shape.widths.end() - 1);
        b.neural.tensors = tensors_from_json(n.at("tensors"));
        if (b.neural.shape.widths.size() < 2 || b.neural.tensors.size() != b.neural.shape.tensor_count())
            throw ParseError("baseline bundle: neural tensors do not match widths");
        for (std::size_t l = 0; l < b.neural.shape.layer_count(); ++l) {
            const auto& w = b.neural.tensors[2 * l];
            const auto& bias = b.neural.tensors[2 * l + 1];
            if (w.rows() != b.neural.shape.widths[l + 1] || w.cols() != b.neural.shape.widths[l] ||
                bias.rows() != w.rows() || bias.cols() != 1)
                throw ParseError("baseline bundle: neural tensor shape mismatch");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("baseline bundle: {}", e.what()));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(fmt::format("baseline bundle: {}", e.what()));
    }
    return b;
}

}  // namespace saginmap::baselines
