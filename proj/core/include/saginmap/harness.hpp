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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "saginmap/baselines.hpp"
#include "saginmap/chanmap.hpp"
#include "saginmap/chansim.hpp"
#include "saginmap/gdm.hpp"
#include "saginmap/ppoalloc.hpp"
#include "saginmap/scene.hpp"

/// Experiment configuration and orchestration: scene, dataset, GDM and
/// baseline training, evaluation, maps, power-allocation comparison, report.
namespace saginmap::harness {

namespace fs = std::filesystem;

struct RunConfig {
    // scene
    std::string scene_path;  // empty: generate
    std::uint64_t scene_seed = 7;
    SceneGenParams scene_gen;

    // dataset
    std::size_t dataset_size = 20000;
    std::uint64_t dataset_seed = 1;
    double train_frac = 0.75;
    DatasetGenConfig dataset_gen;

    // gdm
    int diffusion_steps = 100;
    double beta_start = 1e-3;
    double beta_end = 0.2;
    gdm::DenoiserArch arch;
    gdm::TrainConfig gdm_train;
    int n_eval = 8;
    double tau = 1.0;
    std::uint64_t classify_seed = 1;

    // baselines
    int knn_k = 5;
    int gbt_rounds = 200;
    double gbt_learning_rate = 0.1;
    baselines::NeuralConfig neural;

    // maps
    chanmap::MapBuildConfig map;
    double flip_fraction = 0.3;
    std::uint64_t flip_seed = 1;

    // power allocation
    bool rl_enabled = true;
    std::vector<std::string> rl_maps{"oracle", "gdm", "knn", "flipped"};
    ppoalloc::CompareConfig rl;

    // runtime; not part of the fingerprint
    std::string output_dir = "run";
    int workers = 1;
};

/// Full resolved configuration as JSON text.
std::string config_to_json_text(const RunConfig& cfg);
/// Missing keys take defaults. Throws ConfigError on unknown keys, wrong
/// types, or failed validation.
RunConfig config_from_json_text(std::string_view text);
RunConfig load_config(const fs::path& path);
/// Throws ConfigError when an invariant fails or a referenced path is missing.
void validate(const RunConfig& cfg);
/// Sets every seed to `seed`; seed lists become seed, seed + 1, ...
void override_seeds(RunConfig& cfg, std::uint64_t seed);
/// Stable 16-hex-digit hash of the resolved config, runtime fields excluded.
std::string fingerprint(const RunConfig& cfg);

gdm::NoiseSchedule schedule_of(const RunConfig& cfg);

/// Wraps a failure inside a named pipeline stage.
class StageFault : public Error {
public:
    StageFault(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage))
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

// --- Stages -------------------------------------------------------------------
// Each stage reads its inputs from and writes its artifacts to the run
// directory `dir`, so subcommands can be chained.

struct Paths {
    fs::path dir;
    fs::path scene() const { return dir / "scene.json"; }
    fs::path train_csv() const { return dir / "dataset" / "train.csv"; }
    fs::path val_csv() const { return dir / "dataset" / "val.csv"; }
    fs::path standardization() const { return dir / "dataset" / "standardization.json"; }
    fs::path checkpoint() const { return dir / "gdm" / "checkpoint.json"; }
    fs::path stage_log() const { return dir / "gdm" / "stage_log.csv"; }
    fs::path baselines() const { return dir / "baselines" / "models.json"; }
    fs::path neural_history() const { return dir / "baselines" / "neural_history.csv"; }
    fs::path metrics() const { return dir / "metrics.json"; }
    fs::path map(const std::string& name) const { return dir / "maps" / ("map_" + name + ".txt"); }
    fs::path heatmap(const std::string& tx) const { return dir / "heatmaps" / ("visibility_" + tx + ".csv"); }
    fs::path curve(const std::string& map, std::uint64_t seed) const
    {
        return dir / "rl" / ("curve_" + map + "_seed" + std::to_string(seed) + ".csv");
    }
    fs::path comparison() const { return dir / "rl" / "comparison.json"; }
    fs::path report() const { return dir / "report.json"; }
};

/// Classifier names accepted by build-map.
inline const std::vector<std::string> kMapNames{"oracle", "gdm", "knn", "gbt", "neural", "flipped"};

Scene run_scene(const RunConfig& cfg, const Paths& p);
DatasetSplit run_dataset(const RunConfig& cfg, const Paths& p);
gdm::TrainResult run_train_gdm(const RunConfig& cfg, const Paths& p);
baselines::BaselineBundle run_train_baselines(const RunConfig& cfg, const Paths& p);
std::map<std::string, baselines::MetricsReport> run_eval(const RunConfig& cfg, const Paths& p);
std::map<std::string, chanmap::ChannelMap> run_build_maps(const RunConfig& cfg, const Paths& p,
                                                          const std::vector<std::string>& names);
std::vector<fs::path> run_heatmaps(const RunConfig& cfg, const Paths& p);
/// Trains one policy per configured seed on map `name`; rewards from the oracle map.
std::vector<ppoalloc::RunSummary> run_rl_train(const RunConfig& cfg, const Paths& p, const std::string& name);
ppoalloc::Comparison run_compare(const RunConfig& cfg, const Paths& p, const std::vector<std::string>& maps);

/// Writes report.json summarizing whatever artifacts exist in `p.dir`.
void write_report(const RunConfig& cfg, const Paths& p);

/// Full pipeline; a failing stage raises StageFault naming it, and artifacts
/// of completed stages stay on disk.
void run_pipeline(const RunConfig& cfg);

struct ReportBundle {
    std::map<std::string, std::vector<fs::path>> groups;
    /// Groups the report has no entries for (e.g. RL disabled).
    std::vector<std::string> absent;
    /// Files the report references that do not exist.
    std::vector<std::string> missing;
};

/// Emits stage_rmse.csv, metrics_bar.csv, heatmaps/ and reward_curves/ plus
/// manifest.json into `out`.
ReportBundle run_report(const fs::path& report_path, const fs::path& out);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);

}  // namespace saginmap::harness
