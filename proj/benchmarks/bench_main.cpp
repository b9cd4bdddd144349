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

#include <benchmark/benchmark.h>

#include "saginmap/baselines.hpp"
#include "saginmap/gdm.hpp"
#include "saginmap/scene.hpp"

namespace {

using namespace saginmap;
using Eigen::MatrixXd;

void BM_LosTest(benchmark::State& state)
{
    const Scene scene = generate_scene(SceneGenParams{}, 7);
    Rng rng(1);
    const auto& r = scene.bounds;
    std::vector<std::pair<Vec3, Vec3>> pairs;
    for (int i = 0; i < 1024; ++i)
        pairs.emplace_back(Vec3(uniform(rng, r.min_x, r.max_x), uniform(rng, r.min_y, r.max_y), 1.5),
                           Vec3(uniform(rng, r.min_x, r.max_x), uniform(rng, r.min_y, r.max_y), 120.0));
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& [a, b] = pairs[i++ & 1023];
        benchmark::DoNotOptimize(los_test(scene, a, b));
    }
}
BENCHMARK(BM_LosTest);

void BM_DenoiseBatch(benchmark::State& state)
{
    const auto batch = static_cast<int>(state.range(0));
    const gdm::DenoiserParams params = gdm::init_denoiser(gdm::DenoiserArch{}, 1);
    const MatrixXd x = MatrixXd::Random(params.arch.data_dim, batch);
    std::vector<int> t(static_cast<std::size_t>(batch), 50);
    std::vector<LinkClass> c(static_cast<std::size_t>(batch), LinkClass::Nlos);
    for (auto _ : state) benchmark::DoNotOptimize(gdm::denoise_batch(params, x, t, c));
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenoiseBatch)->Arg(1)->Arg(64)->Arg(256);

void BM_KnnPredict(benchmark::State& state)
{
    const DatasetSplit split = generate_dataset(generate_scene(SceneGenParams{}, 7), 4000, 1);
    const auto model = baselines::knn_fit(split.train, 5);
    const MatrixXd q = split.val.matrix();
    Eigen::Index i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(baselines::knn_predict(model, q.col(i)));
        i = (i + 1) % q.cols();
    }
}
BENCHMARK(BM_KnnPredict);

}  // namespace

BENCHMARK_MAIN();
