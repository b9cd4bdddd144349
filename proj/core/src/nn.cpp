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

#include "saginmap/nn.hpp"

#include <cmath>

#include <fmt/format.h>

namespace saginmap::nn {

std::string to_string(Activation a)
{
    switch (a) {
    case Activation::Silu: return "silu";
    case Activation::Tanh: return "tanh";
    }
    return "?";
}

Activation activation_from_string(const std::string& s)
{
    if (s == "silu") return Activation::Silu;
    if (s == "tanh") return Activation::Tanh;
    throw ParseError(fmt::format("unknown activation '{}'", s));
}

std::size_t MlpShape::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        n += static_cast<std::size_t>(widths[l + 1]) * static_cast<std::size_t>(widths[l] + 1);
    return n;
}

double activate(Activation a, double x)
{
    switch (a) {
    case Activation::Silu: return x / (1.0 + std::exp(-x));
    case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

double activate_grad(Activation a, double x)
{
    switch (a) {
    case Activation::Silu: {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
    }
    case Activation::Tanh: {
        const double t = std::tanh(x);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

Tensors mlp_init(const MlpShape& shape, Rng& rng, OutputInit out)
{
    if (shape.widths.size() < 2) throw ConfigError("mlp needs at least an input and an output width");
    for (int w : shape.widths)
        if (w < 1) throw ConfigError("mlp widths must be positive");
    Tensors t;
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        const int fan_in = shape.widths[l];
        const int fan_out = shape.widths[l + 1];
        MatrixXd w(fan_out, fan_in);
        const bool last = l + 1 == shape.layer_count();
        if (last && out == OutputInit::Zero) {
            w.setZero();
        } else {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng, -limit, limit);
        }
        t.push_back(std::move(w));
        t.push_back(MatrixXd::Zero(fan_out, 1));
    }
    return t;
}

MatrixXd mlp_forward(const MlpShape& shape, std::span<const MatrixXd> tensors, const MatrixXd& input, MlpTape* tape)
{
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
    }
    MatrixXd h = input;
    const std::size_t layers = shape.layer_count();
    for (std::size_t l = 0; l < layers; ++l) {
        const MatrixXd& w = tensors[2 * l];
        const MatrixXd& b = tensors[2 * l + 1];
        MatrixXd z = w * h;
        z.colwise() += b.col(0);
        if (tape) tape->inputs.push_back(h);
        if (l + 1 == layers) return z;
        if (tape) tape->pre.push_back(z);
        h = z.unaryExpr([a = shape.activation](double x) { return activate(a, x); });
    }
    return h;
}

MatrixXd mlp_backward(const MlpShape& shape, std::span<const MatrixXd> tensors, const MlpTape& tape,
                      const MatrixXd& grad_output, std::span<MatrixXd> grads)
{
    MatrixXd g = grad_output;
    for (std::size_t l = shape.layer_count(); l-- > 0;) {
        grads[2 * l].noalias() += g * tape.inputs[l].transpose();
        grads[2 * l + 1].col(0) += g.rowwise().sum();
        g = tensors[2 * l].transpose() * g;
        if (l > 0) {
            const MatrixXd& z = tape.pre[l - 1];
            g.array() *= z.unaryExpr([a = shape.activation](double x) { return activate_grad(a, x); }).array();
        }
    }
    return g;
}

Tensors zeros_like(std::span<const MatrixXd> tensors)
{
    Tensors out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) out.push_back(MatrixXd::Zero(t.rows(), t.cols()));
    return out;
}

std::size_t total_size(std::span<const MatrixXd> tensors)
{
    std::size_t n = 0;
    for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
    return n;
}

Eigen::VectorXd flatten(std::span<const MatrixXd> tensors)
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(total_size(tensors)));
    Eigen::Index k = 0;
    for (const auto& t : tensors) {
        out.segment(k, t.size()) = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
        k += t.size();
    }
    return out;
}

void unflatten(const Eigen::VectorXd& flat, std::span<MatrixXd> tensors)
{
    if (static_cast<std::size_t>(flat.size()) != total_size(tensors))
        throw InputError("unflatten: size mismatch");
    Eigen::Index k = 0;
    for (auto& t : tensors) {
        Eigen::Map<Eigen::VectorXd>(t.data(), t.size()) = flat.segment(k, t.size());
        k += t.size();
    }
}

bool all_finite(std::span<const MatrixXd> tensors)
{
    for (const auto& t : tensors)
        if (!t.allFinite()) return false;
    return true;
}

Adam::Adam(const AdamConfig& cfg, std::span<const MatrixXd> like) : cfg_(cfg), m_(zeros_like(like)), v_(zeros_like(like))
{
}

void Adam::step(std::span<MatrixXd> params, std::span<const MatrixXd> grads)
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
        params[i].array() -= cfg_.learning_rate * (m_[i].array() / bc1) /
                             ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
    }
}

MatrixXd grouped_softmax(const MatrixXd& logits, int group)
{
    MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        for (Eigen::Index g0 = 0; g0 < logits.rows(); g0 += group) {
            const auto seg = logits.col(c).segment(g0, group);
            const double mx = seg.maxCoeff();
            const Eigen::VectorXd e = (seg.array() - mx).exp();
            p.col(c).segment(g0, group) = e / e.sum();
        }
    }
    return p;
}

}  // namespace saginmap::nn
