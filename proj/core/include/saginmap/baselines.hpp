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
#include <optional>
#include <string>
#include <vector>

#include "saginmap/chansim.hpp"
#include "saginmap/nn.hpp"

/// Reference LOS/NLOS classifiers and shared metrics. All operate on
/// standardized feature vectors; NLOS is the positive class.
namespace saginmap::baselines {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- K nearest neighbours ------------------------------------------------

struct KnnModel {
    int k = 5;
    MatrixXd points;  // d x n, standardized
    std::vector<LinkClass> labels;
};

/// Throws ConfigError unless k is odd and <= training size.
KnnModel knn_fit(const Dataset& train, int k);
/// Majority label of the k nearest (Euclidean); distance ties go to the lower index.
LinkClass knn_predict(const KnnModel& model, const VectorXd& x);
/// Fraction of the k nearest that are NLOS.
double knn_nlos_fraction(const KnnModel& model, const VectorXd& x);

// --- Gradient-boosted stumps ---------------------------------------------

struct Stump {
    int feature = 0;
    double threshold = 0.0;  // x[feature] <= threshold goes left
    double left = 0.0;
    double right = 0.0;
};

struct GbtModel {
    double base_score = 0.0;  // prior log-odds of NLOS
    double learning_rate = 0.1;
    std::vector<Stump> stumps;
    /// Mean training logistic loss after 0, 1, ..., rounds stumps.
    std::vector<double> loss_history;
};

/// First-order logistic-loss boosting with depth-1 trees.
GbtModel gbt_train(const MatrixXd& x, const std::vector<LinkClass>& y, int rounds, double learning_rate);
GbtModel gbt_train(const Dataset& train, int rounds, double learning_rate);

struct GbtPrediction {
    LinkClass label = LinkClass::Los;
    double nlos_probability = 0.5;
};
GbtPrediction gbt_predict(const GbtModel& model, const VectorXd& x);

// --- Feed-forward neural baseline ----------------------------------------

struct NeuralConfig {
    std::vector<int> hidden{64, 64};
    int epochs = 20;
    int batch_size = 256;
    nn::AdamConfig adam{};
    std::uint64_t seed = 1;
    /// Optimizer steps between validation-loss records (0 = never).
    int log_interval = 50;
};

struct NeuralBaseline {
    nn::MlpShape shape;
    nn::Tensors tensors;
    NeuralConfig config;
    /// (optimizer step, validation cross-entropy) records.
    std::vector<std::pair<long, double>> history;
};

NeuralBaseline neural_init(int input_dim, const NeuralConfig& cfg);
/// Cross-entropy training with Adam; `val`, if given, feeds `history`.
NeuralBaseline neural_train(const Dataset& train, const NeuralConfig& cfg, const Dataset* val = nullptr);
/// Probability vector indexed by LinkClass; sums to one.
std::array<double, 2> neural_predict(const NeuralBaseline& model, const VectorXd& x);
double neural_mean_cross_entropy(const NeuralBaseline& model, const MatrixXd& x, const std::vector<LinkClass>& y);

// --- Metrics ----------------------------------------------------------------

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positive = 0;
    std::size_t true_negative = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    /// Set when precision or recall had an empty denominator and was defined as 0.
    bool degenerate = false;

    std::size_t total() const { return true_positive + true_negative + false_positive + false_negative; }
};

/// Throws InputError on a length mismatch or empty input.
MetricsReport evaluate(const std::vector<LinkClass>& predictions, const std::vector<LinkClass>& truth);

std::string metrics_to_json_text(const std::map<std::string, MetricsReport>& table);
std::map<std::string, MetricsReport> metrics_from_json_text(std::string_view text);

// --- Persistence ------------------------------------------------------------

/// Trained baseline models. KNN keeps only k; its reference points are the
/// training split itself.
struct BaselineBundle {
    int knn_k = 5;
    GbtModel gbt;
    NeuralBaseline neural;
};

std::string bundle_to_json_text(const BaselineBundle& b);
/// Throws ParseError on malformed input.
BaselineBundle bundle_from_json_text(std::string_view text);

}  // namespace saginmap::baselines
