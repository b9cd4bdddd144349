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

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "saginmap/harness.hpp"

namespace {

using namespace saginmap;
using namespace saginmap::harness;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitIo = 4;

struct CommonFlags {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    int workers = 0;
    bool print_config = false;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config, "run configuration (JSON); defaults apply to missing keys");
    sub->add_option_function<std::uint64_t>(
        "--seed", [&f](std::uint64_t s) { f.seed = s, f.seed_set = true; }, "override every seed in the config");
    sub->add_option("--out", f.out, "run directory (overrides runtime.output_dir)");
    sub->add_option("--workers", f.workers, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
    sub->add_flag("--print-resolved-config", f.print_config, "print the fully resolved config and exit");
}

RunConfig resolve(const CommonFlags& f)
{
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.seed_set) override_seeds(cfg, f.seed);
    if (!f.out.empty()) cfg.output_dir = f.out;
    if (f.workers > 0) cfg.workers = f.workers;
    validate(cfg);
    return cfg;
}

template <typename Fn>
void as_stage(const char* name, Fn&& fn)
{
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const IoError&) {
        throw;
    } catch (const StageFault&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFault(name, e.what());
    }
}

void print_metrics(const std::map<std::string, baselines::MetricsReport>& table)
{
    fmt::print("{:<8} {:>9} {:>9} {:>9} {:>9}\n", "model", "accuracy", "precision", "recall", "f1");
    for (const auto& [name, m] : table)
        fmt::print("{:<8} {:>9.4f} {:>9.4f} {:>9.4f} {:>9.4f}\n", name, m.accuracy, m.precision, m.recall, m.f1);
}

void print_runs(const std::vector<ppoalloc::RunSummary>& runs)
{
    for (const auto& r : runs)
        fmt::print("{:<8} seed {:<4} first10 {:>10.3f} final50 {:>10.3f}\n", r.map, r.seed, r.first_mean, r.final_mean);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"saginmap: diffusion-model channel information maps for space-air-ground networks"};
    app.require_subcommand(1);
    CommonFlags flags;

    auto* scene_gen = app.add_subcommand("scene-gen", "generate (or copy) the scene into <out>/scene.json");
    auto* dataset_gen = app.add_subcommand("dataset-gen", "synthesize the labeled link dataset and split it");
    auto* train_gdm = app.add_subcommand("train-gdm", "train the diffusion denoiser, write checkpoint and stage log");
    auto* train_base = app.add_subcommand("train-baselines", "train the KNN, GBT and neural baselines");
    auto* eval = app.add_subcommand("eval", "classify the validation split with every model, write metrics.json");
    auto* build_map = app.add_subcommand("build-map", "build channel maps");
    std::vector<std::string> map_names;
    build_map->add_option("--classifier", map_names, "map(s) to build: oracle, gdm, knn, gbt, neural, flipped")
        ->check(CLI::IsMember(kMapNames));
    auto* heatmap = app.add_subcommand("heatmap", "write per-transmitter visibility heatmaps");
    auto* rl_train = app.add_subcommand("rl-train", "train power-allocation policies observing one map");
    std::string rl_map = "gdm";
    rl_train->add_option("--map", rl_map, "observation map")->check(CLI::IsMember(kMapNames));
    auto* compare = app.add_subcommand("compare", "compare maps by downstream power-allocation reward");
    std::vector<std::string> compare_maps;
    compare->add_option("--maps", compare_maps, "maps to compare (default: rl.maps)")
        ->delimiter(',')
        ->check(CLI::IsMember(kMapNames));
    auto* pipeline = app.add_subcommand("pipeline", "run every stage end to end and write report.json");
    auto* report = app.add_subcommand("report", "turn a report into plot-ready CSV files");
    std::string report_path;
    report->add_option("--report", report_path, "report.json (default: <out>/report.json)");

    for (auto* sub : app.get_subcommands({})) add_common(sub, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        const RunConfig cfg = resolve(flags);
        if (flags.print_config) {
            std::cout << config_to_json_text(cfg);
            return kExitOk;
        }
        const Paths p{cfg.output_dir};

        if (scene_gen->parsed()) {
            as_stage("scene", [&] { run_scene(cfg, p); });
            fmt::print("wrote {}\n", p.scene().string());
        } else if (dataset_gen->parsed()) {
            as_stage("dataset", [&] {
                const auto split = run_dataset(cfg, p);
                fmt::print("train {} rows, val {} rows in {}\n", split.train.size(), split.val.size(),
                           p.train_csv().parent_path().string());
            });
        } else if (train_gdm->parsed()) {
            as_stage("train-gdm", [&] {
                const auto res = run_train_gdm(cfg, p);
                fmt::print("initial rmse {:.4f}\n", res.log.initial_rmse);
                for (const auto& r : res.log.records)
                    fmt::print("stage {:>2} step {:>6} rmse {:.4f} ({:.1f}s)\n", r.stage, r.step, r.rmse, r.seconds);
            });
        } else if (train_base->parsed()) {
            as_stage("train-baselines", [&] { run_train_baselines(cfg, p); });
            fmt::print("wrote {}\n", p.baselines().string());
        } else if (eval->parsed()) {
            as_stage("eval", [&] { print_metrics(run_eval(cfg, p)); });
        } else if (build_map->parsed()) {
            as_stage("build-map", [&] {
                const auto maps = run_build_maps(cfg, p, map_names.empty() ? kMapNames : map_names);
                for (const auto& [name, m] : maps) fmt::print("wrote {}\n", p.map(name).string());
            });
        } else if (heatmap->parsed()) {
            as_stage("heatmap", [&] {
                for (const auto& f : run_heatmaps(cfg, p)) fmt::print("wrote {}\n", f.string());
            });
        } else if (rl_train->parsed()) {
            as_stage("rl-train", [&] { print_runs(run_rl_train(cfg, p, rl_map)); });
        } else if (compare->parsed()) {
            as_stage("compare", [&] {
                const auto c = run_compare(cfg, p, compare_maps.empty() ? cfg.rl_maps : compare_maps);
                print_runs(c.runs);
                for (const auto& [a, row] : c.wins)
                    for (const auto& [b, w] : row) fmt::print("{} >= {} on {}/{} seeds\n", a, b, w, cfg.rl.seeds.size());
            });
        } else if (pipeline->parsed()) {
            run_pipeline(cfg);
            fmt::print("fingerprint {}\nreport {}\n", fingerprint(cfg), p.report().string());
        } else if (report->parsed()) {
            const fs::path rp = report_path.empty() ? p.report() : fs::path(report_path);
            const fs::path out = rp.parent_path() / "plots";
            if (!fs::exists(rp)) throw IoError(fmt::format("report not found: {}", rp.string()));
            const auto bundle = run_report(rp, out);
            for (const auto& [g, files] : bundle.groups) fmt::print("{}: {} file(s)\n", g, files.size());
            for (const auto& g : bundle.absent) fmt::print("{}: absent from report\n", g);
            if (!bundle.missing.empty()) {
                for (const auto& m : bundle.missing) fmt::print(stderr, "missing artifact: {}\n", m);
                return kExitIo;
            }
        }
    } catch (const ConfigError& e) {
        fmt::print(stderr, "config error: {}\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        fmt::print(stderr, "i/o error: {}\n", e.what());
        return kExitIo;
    } catch (const StageFault& e) {
        fmt::print(stderr, "stage '{}' failed: {}\n", e.stage(), e.what());
        return kExitStage;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitStage;
    }
    return kExitOk;
}
