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

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "saginmap/common.hpp"

/// Small dense networks with hand-derived reverse-mode gradients.
///
/// Tensors are stored as a flat list [W0, b0, W1, b1, ...] with W_l of shape
/// (widths[l+1] x widths[l]) and b_l a column. Batches are column-major: one
/// sample per column. Hidden layers use the activation, the last layer is
/// affine.
namespace saginmap::nn {

using Eigen::MatrixXd;

enum class Activation { Silu, Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpShape {
    std::vector<int> widths;  // input, hidden..., output
    Activation activation = Activation::Silu;

    std::size_t layer_count() const { return widths.size() - 1; }
    std::size_t tensor_count() const { return 2 * layer_count(); }
    std::size_t parameter_count() const;
    bool operator==(const MlpShape&) const = default;
};

using Tensors = std::vector<MatrixXd>;

enum class OutputInit { Scaled, Zero };

/// Glorot-uniform hidden weights, zero biases; output layer per `out`.
Tensors mlp_init(const MlpShape& shape, Rng& rng, OutputInit out = OutputInit::Scaled);

/// Intermediate values of a forward pass needed by backward.
struct MlpTape {
    std::vector<MatrixXd> inputs;  // input of each layer
    std::vector<MatrixXd> pre;     // pre-activation of hidden layers
};

MatrixXd mlp_forward(const MlpShape& shape, std::span<const MatrixXd> tensors, const MatrixXd& input,
                     MlpTape* tape = nullptr);

/// Accumulates dL/dtensors into `grads` (same layout, pre-sized) and returns dL/dinput.
MatrixXd mlp_backward(const MlpShape& shape, std::span<const MatrixXd> tensors, const MlpTape& tape,
                      const MatrixXd& grad_output, std::span<MatrixXd> grads);

Tensors zeros_like(std::span<const MatrixXd> tensors);
std::size_t total_size(std::span<const MatrixXd> tensors);
Eigen::VectorXd flatten(std::span<const MatrixXd> tensors);
void unflatten(const Eigen::VectorXd& flat, std::span<MatrixXd> tensors);
bool all_finite(std::span<const MatrixXd> tensors);

double activate(Activation a, double x);
double activate_grad(Activation a, double x);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive moment estimation over a tensor list.
class Adam {
public:
    Adam() = default;
    Adam(const AdamConfig& cfg, std::span<const MatrixXd> like);

    void step(std::span<MatrixXd> params, std::span<const MatrixXd> grads);
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
    const AdamConfig& config() const { return cfg_; }
    long steps() const { return t_; }

private:
    AdamConfig cfg_;
    Tensors m_;
    Tensors v_;
    long t_ = 0;
};

/// Row-wise (per column sample) softmax over groups of `group` consecutive
/// rows; used for factored categorical outputs.
MatrixXd grouped_softmax(const MatrixXd& logits, int group);

}  // namespace saginmap::nn
