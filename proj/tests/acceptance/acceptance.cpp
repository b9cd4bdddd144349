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

// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "saginmap/harness.hpp"

namespace {

using namespace saginmap;
using harness::Paths;
using harness::RunConfig;
using nlohmann::json;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail)
{
    fmt::print("[{}] {}. {}: {}\n", ok ? "PASS" : "FAIL", id, name, detail);
    std::fflush(stdout);
    failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig config_at(const fs::path& dir, int workers)
{
    RunConfig c;
    c.output_dir = dir.string();
    c.workers = workers;
    return c;
}

// --- 1. Classification ordering -------------------------------------------

void classification_ordering(const fs::path& root, const RunConfig& base, double seed1_seconds)
{
    std::vector<std::map<std::string, baselines::MetricsReport>> tables;
    tables.push_back(baselines::metrics_from_json_text(harness::read_text(Paths{base.output_dir}.metrics())));
    double seconds = seed1_seconds;
    for (std::uint64_t seed : {2u, 3u}) {
        RunConfig c = base;
        c.output_dir = (root / fmt::format("seed{}", seed)).string();
        c.dataset_seed = seed;
        c.gdm_train.seed = seed;
        c.classify_seed = seed;
        c.neural.seed = seed;
        fs::remove_all(c.output_dir);
        const Paths p{c.output_dir};
        const auto t0 = std::chrono::steady_clock::now();
        harness::run_eval(c, p);
        seconds += seconds_since(t0);
        tables.push_back(baselines::metrics_from_json_text(harness::read_text(p.metrics())));
    }
    std::map<std::string, std::array<double, 3>> avg;  // accuracy, f1, recall
    for (const auto& t : tables)
        for (const auto& [name, m] : t) {
            auto& a = avg[name];
            a[0] += m.accuracy / static_cast<double>(tables.size());
            a[1] += m.f1 / static_cast<double>(tables.size());
            a[2] += m.recall / static_cast<double>(tables.size());
        }
    const auto& g = avg.at("gdm");
    bool ok = g[0] >= 0.85;
    std::string detail;
    const char* names[] = {"accuracy", "f1", "recall"};
    for (int k = 0; k < 3; ++k) {
        double best = 0.0;
        for (const auto& n : {"knn", "gbt", "neural"}) best = std::max(best, avg.at(n)[static_cast<std::size_t>(k)]);
        ok = ok && g[static_cast<std::size_t>(k)] >= best - 0.02;
        detail += fmt::format("{} gdm {:.4f} vs best baseline {:.4f}; ", names[k], g[static_cast<std::size_t>(k)], best);
    }
    detail += fmt::format("3 seeds, {:.0f} s", seconds);
    verdict(1, "classification ordering", ok, detail);
}

// --- 2, 3. Stage log --------------------------------------------------------

struct StageRow {
    int stage;
    long step;
    double rmse;
};

std::vector<StageRow> read_stage_log(const fs::path& f)
{
    std::istringstream in(harness::read_text(f));
    std::string line;
    std::getline(in, line);
    std::vector<StageRow> rows;
    while (std::getline(in, line)) {
        StageRow r{};
        char c = 0;
        std::istringstream ls(line);
        ls >> r.stage >> c >> r.step >> c >> r.rmse;
        rows.push_back(r);
    }
    return rows;
}

void rmse_shape(const std::vector<StageRow>& log)
{
    if (log.size() < 2) {
        verdict(2, "rmse trajectory shape", false, "stage log has fewer than 2 stages");
        return;
    }
    std::vector<double> smooth(log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        std::vector<double> w;
        for (std::size_t j = i == 0 ? 0 : i - 1; j <= std::min(log.size() - 1, i + 1); ++j) w.push_back(log[j].rmse);
        std::sort(w.begin(), w.end());
        smooth[i] = w[w.size() / 2];
    }
    bool monotone = true;
    for (std::size_t i = 1; i < smooth.size(); ++i) monotone = monotone && smooth[i] <= smooth[i - 1];
    const double ratio = log.back().rmse / log.front().rmse;
    verdict(2, "rmse trajectory shape", ratio <= 0.15 && monotone,
            fmt::format("final/stage1 = {:.4f}/{:.4f} = {:.3f} (need <= 0.15); smoothed nonincreasing: {}",
                        log.back().rmse, log.front().rmse, ratio, monotone ? "yes" : "no"));
}

void convergence(const std::vector<StageRow>& log, const fs::path& neural_history)
{
    const double final_rmse = log.back().rmse;
    int stage = -1;
    long gdm_steps = -1;
    for (const auto& r : log)
        if (r.rmse <= 1.1 * final_rmse) {
            stage = r.stage;
            gdm_steps = r.step;
            break;
        }
    std::istringstream in(harness::read_text(neural_history));
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<long, double>> hist;
    while (std::getline(in, line)) {
        long step = 0;
        double ce = 0.0;
        char c = 0;
        std::istringstream ls(line);
        ls >> step >> c >> ce;
        hist.emplace_back(step, ce);
    }
    long neural_steps = -1;
    if (!hist.empty())
        for (const auto& [step, ce] : hist)
            if (ce <= 1.1 * hist.back().second) {
                neural_steps = step;
                break;
            }
    verdict(3, "convergence speed", stage >= 1 && stage <= 10,
            fmt::format("gdm within 10% of final rmse at stage {} (step {}); neural within 10% of final val loss at "
                        "step {} (report only)",
                        stage, gdm_steps, neural_steps));
}

// --- 4. Diffusion correctness -----------------------------------------------

void diffusion_correctness(const Paths& p, const gdm::NoiseSchedule& s)
{
    const auto stats = standardization_from_json_text(harness::read_text(p.standardization()));
    const Dataset train = make_dataset(csv_to_samples(p.train_csv()), stats);
    const MatrixXd z = train.matrix();
    const Eigen::Index d = z.rows();
    Rng rng(8);
    const int n = 100000;
    double worst_var = 0.0;
    double worst_unit = 0.0;
    for (int t : {1, s.steps / 2, s.steps}) {
        VectorXd sum = VectorXd::Zero(d);
        VectorXd sq = VectorXd::Zero(d);
        VectorXd sum0 = VectorXd::Zero(d);
        VectorXd sq0 = VectorXd::Zero(d);
        VectorXd eps(d);
        for (int i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < d; ++k) eps[k] = standard_normal(rng);
            const VectorXd x0 = z.col(static_cast<Eigen::Index>(uniform_index(rng, z.cols())));
            const VectorXd xt = gdm::forward_diffuse(x0, t, eps, s);
            sum0 += x0;
            sq0 += x0.cwiseProduct(x0);
            sum += xt;
            sq += xt.cwiseProduct(xt);
        }
        for (Eigen::Index k = 0; k < d; ++k) {
            const double mean = sum[k] / n;
            const double var = sq[k] / n - mean * mean;
            const double mean0 = sum0[k] / n;
            const double var0 = sq0[k] / n - mean0 * mean0;
            worst_var = std::max(worst_var, std::abs(var - (s.alpha_bar(t) * var0 + 1.0 - s.alpha_bar(t))));
            if (t == s.steps) worst_unit = std::max(worst_unit, std::abs(var - 1.0));
        }
    }

    gdm::DenoiserArch a;
    a.data_dim = 3;
    a.time_embed_dim = 4;
    a.class_embed_dim = 2;
    a.hidden = {4};
    double worst_grad = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        gdm::DenoiserParams prm = gdm::init_denoiser(a, static_cast<std::uint64_t>(trial));
        for (auto& m : prm.tensors)
            for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = standard_normal(rng);
        const int b = 5;
        MatrixXd xt(3, b);
        MatrixXd eps(3, b);
        std::vector<int> ts(b);
        std::vector<LinkClass> cs(b);
        for (int j = 0; j < b; ++j) {
            for (int k = 0; k < 3; ++k) {
                xt(k, j) = standard_normal(rng);
                eps(k, j) = standard_normal(rng);
            }
            ts[static_cast<std::size_t>(j)] = 1 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(s.steps)));
            cs[static_cast<std::size_t>(j)] = j % 2 ? LinkClass::Nlos : LinkClass::Los;
        }
        nn::Tensors grads;
        gdm::noise_loss_and_grad(prm, xt, ts, cs, eps, grads);
        const VectorXd analytic = nn::flatten(grads);
        const VectorXd flat = nn::flatten(prm.tensors);
        VectorXd numeric(flat.size());
        const double h = 1e-5;
        nn::Tensors scratch;
        for (Eigen::Index i = 0; i < flat.size(); ++i) {
            gdm::DenoiserParams q = prm;
            VectorXd f = flat;
            f[i] += h;
            nn::unflatten(f, q.tensors);
            const double up = gdm::noise_loss_and_grad(q, xt, ts, cs, eps, scratch);
            f[i] -= 2 * h;
            nn::unflatten(f, q.tensors);
            const double down = gdm::noise_loss_and_grad(q, xt, ts, cs, eps, scratch);
            numeric[i] = (up - down) / (2 * h);
        }
        worst_grad = std::max(worst_grad, (analytic - numeric).norm() / std::max(analytic.norm(), numeric.norm()));
    }
    verdict(4, "diffusion correctness", worst_var <= 1e-2 && worst_unit <= 1e-2 && worst_grad < 1e-4,
            fmt::format("max |Var(x_t) - (ab Var(x0) + 1 - ab)| = {:.2e} over t in {{1, {}, {}}}; max |Var(x_T) - 1| = "
                        "{:.2e}; max gradient relative error = {:.2e}",
                        worst_var, s.steps / 2, s.steps, worst_unit, worst_grad));
}

// --- 5. Two-Gaussian zero-shot agreement --------------------------------------

void two_gaussian(const gdm::NoiseSchedule& s)
{
    // Exact class-conditional noise predictor for x0 ~ N(mu_c, I).
    const int d = 2;
    const VectorXd mu0 = VectorXd::Constant(d, -1.5);
    const VectorXd mu1 = VectorXd::Constant(d, 1.5);
    const gdm::NoisePredictor pred = [&](const MatrixXd& xt, std::span<const int> t, std::span<const LinkClass> c) {
        MatrixXd out(xt.rows(), xt.cols());
        for (Eigen::Index j = 0; j < xt.cols(); ++j) {
            const double ab = s.alpha_bar(t[static_cast<std::size_t>(j)]);
            const VectorXd& mu = c[static_cast<std::size_t>(j)] == LinkClass::Los ? mu0 : mu1;
            out.col(j) = std::sqrt(1.0 - ab) * (xt.col(j) - std::sqrt(ab) * mu);
        }
        return out;
    };
    Rng rng(10);
    int agree = 0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const VectorXd& mu = i % 2 ? mu1 : mu0;
        VectorXd x(d);
        for (int k = 0; k < d; ++k) x[k] = mu[k] + standard_normal(rng);
        const LinkClass bayes = (x - mu1).squaredNorm() < (x - mu0).squaredNorm() ? LinkClass::Nlos : LinkClass::Los;
        agree += gdm::classify(pred, s, x, 64, 1.0, rng).label == bayes;
    }
    verdict(5, "zero-shot oracle agreement", agree >= 950, fmt::format("{}/{} agree with the Bayes rule", agree, n));
}

// --- 6. Geometry oracles and GAE --------------------------------------------

void geometry_and_gae()
{
    constexpr double kBand = 1e-6;
    Rng rng(20260101);
    int seg_checked = 0;
    int seg_bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 lo(uniform(rng, 0, 8), uniform(rng, 0, 8), uniform(rng, 0, 8));
        const Vec3 hi = lo + Vec3(uniform(rng, 0.5, 4), uniform(rng, 0.5, 4), uniform(rng, 0.5, 4));
        const Aabb b{lo, hi};
        const Vec3 p0(uniform(rng, -4, 16), uniform(rng, -4, 16), uniform(rng, -4, 16));
        const Vec3 p1(uniform(rng, -4, 16), uniform(rng, -4, 16), uniform(rng, -4, 16));
        const double depth = testing::max_depth_along(p0, p1, b);
        if (std::abs(depth) < kBand) continue;
        ++seg_checked;
        seg_bad += segment_intersects_aabb(p0, p1, b) != (depth > 0);
    }

    const Scene scene = generate_scene(SceneGenParams{}, 11);
    const auto& r = scene.bounds;
    int los_checked = 0;
    int los_bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const Vec3 a(uniform(rng, r.min_x, r.max_x), uniform(rng, r.min_y, r.max_y), uniform(rng, 0, 80));
        const Vec3 b(uniform(rng, r.min_x, r.max_x), uniform(rng, r.min_y, r.max_y), uniform(rng, 0, 80));
        bool clear = true;
        bool in_band = false;
        for (const auto& bld : scene.buildings) {
            const double depth = testing::max_depth_along(a, b, bld);
            in_band = in_band || std::abs(depth) < kBand;
            clear = clear && depth <= 0;
        }
        if (in_band) continue;
        ++los_checked;
        los_bad += los_test(scene, a, b) != clear;
    }

    double gae_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 50);
        const double gamma = uniform(rng, 0.5, 1.0);
        const double lambda = uniform(rng, 0.0, 1.0);
        std::vector<double> rew(n);
        std::vector<double> v(n + 1);
        for (auto& x : rew) x = standard_normal(rng);
        for (auto& x : v) x = standard_normal(rng);
        const auto adv = ppoalloc::gae(rew, v, gamma, lambda);
        for (std::size_t t = 0; t < n; ++t) {
            double direct = 0.0;
            for (std::size_t k = 0; t + k < n; ++k)
                direct += std::pow(gamma * lambda, static_cast<double>(k)) * (rew[t + k] + gamma * v[t + k + 1] - v[t + k]);
            gae_err = std::max(gae_err, std::abs(adv[t] - direct));
        }
    }
    verdict(6, "geometry oracles", seg_bad == 0 && los_bad == 0 && gae_err <= 1e-12,
            fmt::format("segment/aabb {} mismatches in {}; los_test {} mismatches in {}; max GAE error {:.1e}", seg_bad,
                        seg_checked, los_bad, los_checked, gae_err));
}

// --- 7. Map fidelity ----------------------------------------------------------

void map_fidelity(const RunConfig& cfg, const Paths& p)
{
    const Scene scene = load_scene(p.scene());
    const auto oracle = chanmap::import_map(p.map("oracle")).map;
    const auto gdm_map = chanmap::import_map(p.map("gdm")).map;
    const double agree = chanmap::label_agreement(gdm_map, oracle);
    const auto g = chanmap::grid_for(scene, cfg.map.grid_res_m);
    std::size_t mismatch = 0;
    for (int iy = 0; iy < oracle.ny; ++iy)
        for (int ix = 0; ix < oracle.nx; ++ix)
            for (std::size_t k = 0; k < scene.transmitters.size(); ++k) {
                const bool los = los_test(scene, scene.transmitters[k].position,
                                          chanmap::cell_center(scene, g, ix, iy, cfg.map.rx_height_m));
                mismatch += (oracle.at(ix, iy, k).label == LinkClass::Los) != los;
            }
    verdict(7, "map fidelity", agree >= 0.9 && mismatch == 0,
            fmt::format("gdm/oracle agreement {:.4f} over {} cells; oracle vs los_test mismatches {}", agree,
                        oracle.cells.size(), mismatch));
}

// --- 8. Downstream ordering ---------------------------------------------------

void downstream(const Paths& p, double seconds)
{
    const json doc = json::parse(harness::read_text(p.comparison()));
    std::map<std::string, std::map<std::uint64_t, std::pair<double, double>>> runs;
    for (const auto& r : doc.at("runs"))
        runs[r.at("map").get<std::string>()][r.at("seed").get<std::uint64_t>()] = {r.at("first_mean").get<double>(),
                                                                                    r.at("final_mean").get<double>()};
    const auto& truth = runs.at("oracle");
    const auto& gdm_runs = runs.at("gdm");
    const auto& flipped = runs.at("flipped");
    int true_ge_gdm = 0;
    int gdm_ge_flip = 0;
    bool growth = true;
    std::string ratios;
    for (const auto& [seed, tr] : truth) {
        true_ge_gdm += tr.second >= gdm_runs.at(seed).second;
        gdm_ge_flip += gdm_runs.at(seed).second >= flipped.at(seed).second;
        const double ratio = tr.second / tr.first;
        growth = growth && tr.first > 0 && ratio >= 1.5;
        ratios += fmt::format(" {:.2f}", ratio);
    }
    const int n = static_cast<int>(truth.size());
    const bool ok = 3 * true_ge_gdm >= 2 * n && 3 * gdm_ge_flip >= 2 * n && growth;
    verdict(8, "downstream ordering", ok,
            fmt::format("true>=gdm {}/{}; gdm>=flipped {}/{}; true-map final50/first10 ratios{}; pipeline {:.0f} s",
                        true_ge_gdm, n, gdm_ge_flip, n, ratios, seconds));
}

// --- 9. Determinism -----------------------------------------------------------

std::string stage_projection(const fs::path& f)
{
    std::string out;
    for (const auto& r : read_stage_log(f)) out += fmt::format("{},{},{:.17g}\n", r.stage, r.step, r.rmse);
    return out;
}

void determinism(const Paths& a, const Paths& b)
{
    std::vector<fs::path> files{a.train_csv(), a.val_csv(), a.standardization(), a.metrics()};
    for (const auto& n : harness::kMapNames) files.push_back(a.map(n));
    std::vector<std::string> differing;
    for (const auto& f : files) {
        const fs::path other = b.dir / f.lexically_relative(a.dir);
        if (!fs::exists(f) || !fs::exists(other) || harness::read_text(f) != harness::read_text(other))
            differing.push_back(f.lexically_relative(a.dir).generic_string());
    }
    if (stage_projection(a.stage_log()) != stage_projection(b.stage_log())) differing.push_back("gdm/stage_log.csv");
    verdict(9, "determinism", differing.empty(),
            differing.empty() ? fmt::format("{} artifacts identical across workers 1 and 3", files.size() + 1)
                              : fmt::format("differ: {}", fmt::join(differing, ", ")));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"saginmap acceptance suite"};
    std::string workdir = (fs::temp_directory_path() / "saginmap_acceptance").string();
    app.add_option("--workdir", workdir, "scratch directory for pipeline runs");
    CLI11_PARSE(app, argc, argv);

    const fs::path root = workdir;
    try {
        fs::remove_all(root);
        const RunConfig cfg_a = config_at(root / "a", 1);
        const RunConfig cfg_b = config_at(root / "b", 3);
        const Paths pa{cfg_a.output_dir};
        const Paths pb{cfg_b.output_dir};

        auto t0 = std::chrono::steady_clock::now();
        harness::run_pipeline(cfg_a);
        const double seconds_a = seconds_since(t0);
        fmt::print("pipeline (workers 1) finished in {:.0f} s\n", seconds_a);
        t0 = std::chrono::steady_clock::now();
        harness::run_pipeline(cfg_b);
        fmt::print("pipeline (workers 3) finished in {:.0f} s\n", seconds_since(t0));
        std::fflush(stdout);

        classification_ordering(root, cfg_a, seconds_a);
        const auto log = read_stage_log(pa.stage_log());
        rmse_shape(log);
        convergence(log, pa.neural_history());
        diffusion_correctness(pa, harness::schedule_of(cfg_a));
        two_gaussian(harness::schedule_of(cfg_a));
        geometry_and_gae();
        map_fidelity(cfg_a, pa);
        downstream(pa, seconds_a);
        determinism(pa, pb);
    } catch (const std::exception& e) {
        fmt::print("acceptance aborted: {}\n", e.what());
        return 1;
    }
    fmt::print("{} of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
