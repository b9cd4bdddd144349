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

#include "saginmap/nn.hpp"

namespace saginmap::nn {
namespace {

TEST(Activation, DerivativesMatchDifferences)
{
    for (Activation a : {Activation::Silu, Activation::Tanh})
        for (double x = -6.0; x <= 6.0; x += 0.37) {
            const double h = 1e-6;
            const double fd = (activate(a, x + h) - activate(a, x - h)) / (2 * h);
            EXPECT_NEAR(activate_grad(a, x), fd, 1e-8) << to_string(a) << " at " << x;
        }
    EXPECT_EQ(activation_from_string("tanh"), Activation::Tanh);
    EXPECT_EQ(activation_from_string(to_string(Activation::Silu)), Activation::Silu);
}

TEST(Mlp, ZeroOutputInitGivesZero)
{
    const MlpShape shape{{5, 8, 3}, Activation::Silu};
    Rng rng(1);
    const Tensors t = mlp_init(shape, rng, OutputInit::Zero);
    const MatrixXd out = mlp_forward(shape, t, MatrixXd::Random(5, 10));
    EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(total_size(t), shape.parameter_count());
    EXPECT_EQ(shape.parameter_count(), 5u * 8 + 8 + 8 * 3 + 3);
}

TEST(Mlp, BackwardMatchesCentralDifferences)
{
    for (Activation act : {Activation::Silu, Activation::Tanh}) {
        const MlpShape shape{{3, 4, 5, 2}, act};
        Rng rng(4);
        Tensors t = mlp_init(shape, rng);
        for (auto& m : t) m.setRandom();
        const MatrixXd x = MatrixXd::Random(3, 6);
        const MatrixXd target = MatrixXd::Random(2, 6);
        auto loss = [&](const Tensors& p) { return 0.5 * (mlp_forward(shape, p, x) - target).squaredNorm(); };

        MlpTape tape;
        const MatrixXd out = mlp_forward(shape, t, x, &tape);
        Tensors grads = zeros_like(t);
        const MatrixXd g_in = mlp_backward(shape, t, tape, out - target, grads);

        const Eigen::VectorXd flat = flatten(t);
        const Eigen::VectorXd g = flatten(grads);
        for (Eigen::Index i = 0; i < flat.size(); ++i) {
            Tensors p = t;
            Eigen::VectorXd f = flat;
            const double h = 1e-6;
            f[i] += h;
            unflatten(f, p);
            const double up = loss(p);
            f[i] -= 2 * h;
            unflatten(f, p);
            const double down = loss(p);
            EXPECT_NEAR(g[i], (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(g[i])));
        }
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                const double h = 1e-6;
                MatrixXd xp = x;
                xp(r, c) += h;
                const double up = 0.5 * (mlp_forward(shape, t, xp) - target).squaredNorm();
                xp(r, c) -= 2 * h;
                const double down = 0.5 * (mlp_forward(shape, t, xp) - target).squaredNorm();
                EXPECT_NEAR(g_in(r, c), (up - down) / (2 * h), 1e-6);
            }
    }
}

TEST(Adam, FirstStepIsSignedLearningRate)
{
    Tensors p{MatrixXd::Constant(2, 2, 1.0)};
    Tensors g{(MatrixXd(2, 2) << 0.5, -2.0, 1e-3, -7.0).finished()};
    Adam opt(AdamConfig{0.01, 0.9, 0.999, 1e-8}, p);
    opt.step(p, g);
    for (Eigen::Index i = 0; i < 4; ++i) {
        const double gi = g[0](i);
        EXPECT_NEAR(p[0](i), 1.0 - 0.01 * gi / (std::abs(gi) + 1e-8), 1e-12);
    }
    EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, ZeroLearningRateKeepsParameters)
{
    Tensors p{MatrixXd::Random(3, 3)};
    const Tensors before = p;
    Tensors g{MatrixXd::Random(3, 3)};
    Adam opt(AdamConfig{0.0}, p);
    for (int i = 0; i < 5; ++i) opt.step(p, g);
    EXPECT_EQ(p[0], before[0]);
}

TEST(GroupedSoftmax, GroupsSumToOne)
{
    const MatrixXd logits = 10.0 * MatrixXd::Random(6, 4);
    const MatrixXd p = grouped_softmax(logits, 3);
    for (Eigen::Index c = 0; c < 4; ++c) {
        EXPECT_NEAR(p.col(c).head(3).sum(), 1.0, 1e-12);
        EXPECT_NEAR(p.col(c).tail(3).sum(), 1.0, 1e-12);
    }
    const MatrixXd big = MatrixXd::Constant(2, 1, 1000.0);
    EXPECT_NEAR(grouped_softmax(big, 2)(0, 0), 0.5, 1e-15);
}

TEST(Tensors, FlattenRoundTrip)
{
    Tensors t{MatrixXd::Random(2, 3), MatrixXd::Random(4, 1)};
    Tensors u = zeros_like(t);
    unflatten(flatten(t), u);
    EXPECT_EQ(u[0], t[0]);
    EXPECT_EQ(u[1], t[1]);
    EXPECT_TRUE(all_finite(t));
    t[1](2) = std::nan("");
    EXPECT_FALSE(all_finite(t));
}

}  // namespace
}  // namespace saginmap::nn
