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

#include "saginmap/harness.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "saginmap/parallel.hpp"

namespace saginmap::harness {

using json = nlohmann::ordered_json;
using Eigen::MatrixXd;

// --- Config binding -----------------------------------------------------------

namespace {

/// Calls f(pointer, field) for every config field.
template <typename Cfg, typename F>
void visit_fields(Cfg& c, F&& f)
{
    f("/scene/path", c.scene_path);
    f("/scene/seed", c.scene_seed);
    f("/scene/width_m", c.scene_gen.width_m);
    f("/scene/depth_m", c.scene_gen.depth_m);
    f("/scene/building_count", c.scene_gen.building_count);
    f("/scene/min_footprint_m", c.scene_gen.min_footprint_m);
    f("/scene/max_footprint_m", c.scene_gen.max_footprint_m);
    f("/scene/min_height_m", c.scene_gen.min_height_m);
    f("/scene/max_height_m", c.scene_gen.max_height_m);
    f("/scene/street_clearance_m", c.scene_gen.street_clearance_m);
    f("/scene/user_count", c.scene_gen.user_count);
    f("/scene/user_height_m", c.scene_gen.user_height_m);
    f("/scene/satellite_altitude_m", c.scene_gen.satellite_altitude_m);
    f("/scene/satellite_elevation_deg", c.scene_gen.satellite_elevation_deg);
    f("/scene/uav_altitude_m", c.scene_gen.uav_altitude_m);
    f("/scene/ground_ap_height_m", c.scene_gen.ground_ap_height_m);
    f("/scene/max_attempts", c.scene_gen.max_attempts);

    f("/dataset/size", c.dataset_size);
    f("/dataset/seed", c.dataset_seed);
    f("/dataset/train_frac", c.train_frac);
    f("/dataset/rx_jitter_m", c.dataset_gen.rx_jitter_m);
    f("/dataset/time_steps", c.dataset_gen.time_steps);
    f("/dataset/time_step_s", c.dataset_gen.time_step_s);
    f("/dataset/gps_time_origin_s", c.dataset_gen.gps_time_origin_s);
    auto& ch = c.dataset_gen.channel;
    f("/dataset/channel/los_delay_sigma_ns", ch.los_delay_sigma_ns);
    f("/dataset/channel/los_pr_sigma_m", ch.los_pr_sigma_m);
    f("/dataset/channel/nlos_pr_sigma_m", ch.nlos_pr_sigma_m);
    f("/dataset/channel/reflection_loss_db", ch.reflection_loss_db);
    f("/dataset/channel/penetration_loss_per_building_db", ch.penetration_loss_per_building_db);
    f("/dataset/channel/penetration_only_loss_db", ch.penetration_only_loss_db);
    f("/dataset/channel/cn0_noise_db", ch.cn0_noise_db);
    f("/dataset/channel/fspl_slope", ch.fspl_slope);
    f("/dataset/channel/cn0_min_dbhz", ch.cn0_min_dbhz);
    f("/dataset/channel/cn0_max_dbhz", ch.cn0_max_dbhz);
    f("/dataset/channel/cn0_ref_dbhz", ch.cn0_ref_dbhz);
    f("/dataset/channel/ref_distance_m", ch.ref_distance_m);
    f("/dataset/channel/satellite_doppler_hz", ch.satellite_doppler_hz);
    f("/dataset/channel/satellite_doppler_period_s", ch.satellite_doppler_period_s);
    f("/dataset/channel/uav_doppler_hz", ch.uav_doppler_hz);
    f("/dataset/channel/ground_doppler_hz", ch.ground_doppler_hz);
    f("/dataset/channel/doppler_noise_hz", ch.doppler_noise_hz);
    f("/dataset/channel/los_l1l2_mean_m", ch.los_l1l2_mean_m);
    f("/dataset/channel/los_l1l2_sigma_m", ch.los_l1l2_sigma_m);
    f("/dataset/channel/nlos_l1l2_mean_m", ch.nlos_l1l2_mean_m);
    f("/dataset/channel/nlos_l1l2_sigma_m", ch.nlos_l1l2_sigma_m);

    f("/gdm/diffusion_steps", c.diffusion_steps);
    f("/gdm/beta_start", c.beta_start);
    f("/gdm/beta_end", c.beta_end);
    f("/gdm/time_embed_dim", c.arch.time_embed_dim);
    f("/gdm/class_embed_dim", c.arch.class_embed_dim);
    f("/gdm/hidden", c.arch.hidden);
    f("/gdm/activation", c.arch.activation);
    f("/gdm/epochs", c.gdm_train.epochs);
    f("/gdm/batch_size", c.gdm_train.batch_size);
    f("/gdm/learning_rate", c.gdm_train.adam.learning_rate);
    f("/gdm/beta1", c.gdm_train.adam.beta1);
    f("/gdm/beta2", c.gdm_train.adam.beta2);
    f("/gdm/adam_epsilon", c.gdm_train.adam.epsilon);
    f("/gdm/stage_interval", c.gdm_train.stage_interval);
    f("/gdm/eval_draws", c.gdm_train.eval_draws);
    f("/gdm/seed", c.gdm_train.seed);
    f("/gdm/n_eval", c.n_eval);
    f("/gdm/tau", c.tau);
    f("/gdm/classify_seed", c.classify_seed);

    f("/baselines/knn_k", c.knn_k);
    f("/baselines/gbt_rounds", c.gbt_rounds);
    f("/baselines/gbt_learning_rate", c.gbt_learning_rate);
    f("/baselines/neural/hidden", c.neural.hidden);
    f("/baselines/neural/epochs", c.neural.epochs);
    f("/baselines/neural/batch_size", c.neural.batch_size);
    f("/baselines/neural/learning_rate", c.neural.adam.learning_rate);
    f("/baselines/neural/seed", c.neural.seed);
    f("/baselines/neural/log_interval", c.neural.log_interval);

    f("/map/grid_res_m", c.map.grid_res_m);
    f("/map/samples_per_cell", c.map.samples_per_cell);
    f("/map/seed", c.map.seed);
    f("/map/rx_height_m", c.map.rx_height_m);
    f("/map/nlos_penalty_db", c.map.nlos_penalty_db);
    f("/map/flip_fraction", c.flip_fraction);
    f("/map/flip_seed", c.flip_seed);

    f("/rl/enabled", c.rl_enabled);
    f("/rl/maps", c.rl_maps);
    f("/rl/iterations", c.rl.iterations);
    f("/rl/seeds", c.rl.seeds);
    f("/rl/smooth_window", c.rl.smooth_window);
    f("/rl/power_offsets_db", c.rl.power_offsets_db);
    f("/rl/noise_floor_dbm", c.rl.noise_floor_dbm);
    f("/rl/episode_length", c.rl.episode_length);
    f("/rl/step_jitter_m", c.rl.step_jitter_m);
    f("/rl/reset_spread_m", c.rl.reset_spread_m);
    auto& ppo = c.rl.ppo;
    f("/rl/ppo/gamma", ppo.gamma);
    f("/rl/ppo/lambda", ppo.lambda);
    f("/rl/ppo/clip_eps", ppo.clip_eps);
    f("/rl/ppo/epochs", ppo.epochs);
    f("/rl/ppo/minibatch", ppo.minibatch);
    f("/rl/ppo/learning_rate", ppo.learning_rate);
    f("/rl/ppo/value_coef", ppo.value_coef);
    f("/rl/ppo/entropy_coef", ppo.entropy_coef);
    f("/rl/ppo/episodes_per_iter", ppo.episodes_per_iter);
    f("/rl/ppo/hidden", ppo.hidden);
    f("/rl/ppo/reward_scale", ppo.reward_scale);

    f("/runtime/output_dir", c.output_dir);
    f("/runtime/workers", c.workers);
}

struct Writer {
    json& doc;
    template <typename T>
    void operator()(const char* ptr, const T& v)
    {
        doc[json::json_pointer(ptr)] = v;
    }
    void operator()(const char* ptr, const nn::Activation& a) { doc[json::json_pointer(ptr)] = nn::to_string(a); }
};

std::string dotted(std::string_view ptr)
{
    std::string s(ptr.empty() ? ptr : ptr.substr(1));
    std::replace(s.begin(), s.end(), '/', '.');
    return s;
}

template <typename T>
bool type_ok(const json& v)
{
    if constexpr (std::is_same_v<T, bool>)
        return v.is_boolean();
    else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>)
        return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    else if constexpr (std::is_integral_v<T>)
        return v.is_number_integer();
    else if constexpr (std::is_floating_point_v<T>)
        return v.is_number();
    else if constexpr (std::is_same_v<T, std::string>)
        return v.is_string();
    else
        return true;
}

template <typename T>
struct ElementOf {
    using type = void;
};
template <typename T>
struct ElementOf<std::vector<T>> {
    using type = T;
};
template <typename T, std::size_t N>
struct ElementOf<std::array<T, N>> {
    using type = T;
};

struct Reader {
    const json& doc;
    std::set<std::string>& known;

    template <typename T>
    void operator()(const char* ptr, T& v)
    {
        known.insert(ptr);
        const json::json_pointer jp(ptr);
        if (!doc.contains(jp)) return;
        const json& node = doc.at(jp);
        using E = typename ElementOf<T>::type;
        bool ok = true;
        if constexpr (!std::is_void_v<E>) {
            ok = node.is_array();
            if (ok)
                for (const auto& e : node) ok = ok && type_ok<E>(e);
        } else {
            ok = type_ok<T>(node);
        }
        if (!ok) throw ConfigError(fmt::format("config {}: wrong type ({})", dotted(ptr), node.type_name()));
        try {
            v = node.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(fmt::format("config {}: {}", dotted(ptr), e.what()));
        }
    }
    void operator()(const char* ptr, nn::Activation& a)
    {
        std::string s = nn::to_string(a);
        (*this)(ptr, s);
        try {
            a = nn::activation_from_string(s);
        } catch (const Error& e) {
            throw ConfigError(fmt::format("config {}: {}", dotted(ptr), e.what()));
        }
    }
};

json config_json(const RunConfig& cfg)
{
    json doc = json::object();
    visit_fields(cfg, Writer{doc});
    return doc;
}

}  // namespace

std::string config_to_json_text(const RunConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

RunConfig config_from_json_text(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config: {}", e.what()));
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    RunConfig cfg;
    std::set<std::string> known;
    visit_fields(cfg, Reader{doc, known});
    const json flat = doc.flatten();
    for (const auto& [key, value] : flat.items()) {
        bool matched = false;
        for (const auto& k : known) {
            if (key == k || (key.size() > k.size() && key.compare(0, k.size(), k) == 0 && key[k.size()] == '/')) {
                matched = true;
                break;
            }
        }
        // Empty objects flatten to null; accept them at the root or for sections that exist.
        if (!matched && value.is_null()) {
            matched = key.empty();
            for (const auto& k : known) matched = matched || k.compare(0, key.size() + 1, key + "/") == 0;
        }
        if (!matched) throw ConfigError(fmt::format("config: unknown key {}", dotted(key)));
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("cannot read config {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

void validate(const RunConfig& c)
{
    auto require = [](bool ok, std::string_view what) {
        if (!ok) throw ConfigError(fmt::format("config: {}", what));
    };
    if (!c.scene_path.empty()) require(fs::exists(c.scene_path), "scene.path does not exist: " + c.scene_path);
    const auto& g = c.scene_gen;
    require(g.width_m > 0 && g.depth_m > 0, "scene width_m and depth_m must be positive");
    require(g.building_count >= 0, "scene.building_count must be >= 0");
    require(g.min_footprint_m > 0 && g.min_footprint_m <= g.max_footprint_m, "scene footprint range invalid");
    require(g.min_height_m > 0 && g.min_height_m <= g.max_height_m, "scene height range invalid");
    require(g.user_count >= 1, "scene.user_count must be >= 1");
    require(g.max_attempts >= 1, "scene.max_attempts must be >= 1");

    require(c.dataset_size >= 4, "dataset.size must be >= 4");
    require(c.train_frac > 0.0 && c.train_frac < 1.0, "dataset.train_frac must be in (0, 1)");
    require(c.dataset_gen.rx_jitter_m >= 0.0, "dataset.rx_jitter_m must be >= 0");
    require(c.dataset_gen.time_steps >= 1 && c.dataset_gen.time_step_s > 0.0, "dataset time grid invalid");

    require(c.diffusion_steps >= 1, "gdm.diffusion_steps must be >= 1");
    require(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0,
            "gdm betas must satisfy 0 < beta_start <= beta_end < 1");
    require(schedule_of(c).fully_noising(), "gdm schedule must drive alpha_bar_T below 0.05");
    require(c.arch.time_embed_dim >= 2 && c.arch.time_embed_dim % 2 == 0, "gdm.time_embed_dim must be even");
    require(c.arch.class_embed_dim >= 1, "gdm.class_embed_dim must be >= 1");
    require(!c.arch.hidden.empty() && std::all_of(c.arch.hidden.begin(), c.arch.hidden.end(), [](int w) { return w > 0; }),
            "gdm.hidden must list positive widths");
    require(c.gdm_train.epochs >= 1 && c.gdm_train.batch_size >= 1, "gdm epochs and batch_size must be >= 1");
    require(c.gdm_train.adam.learning_rate > 0.0, "gdm.learning_rate must be positive");
    require(c.gdm_train.stage_interval >= 0 && c.gdm_train.eval_draws >= 1, "gdm stage settings invalid");
    require(c.n_eval >= 1 && c.tau > 0.0, "gdm n_eval must be >= 1 and tau positive");

    require(c.knn_k >= 1 && c.knn_k % 2 == 1, "baselines.knn_k must be odd");
    require(c.gbt_rounds >= 0 && c.gbt_learning_rate > 0.0, "baselines gbt settings invalid");
    require(c.neural.epochs >= 1 && c.neural.batch_size >= 1 && c.neural.adam.learning_rate > 0.0,
            "baselines.neural settings invalid");

    require(c.map.grid_res_m > 0.0 && c.map.samples_per_cell >= 1, "map grid_res_m and samples_per_cell invalid");
    require(c.flip_fraction >= 0.0 && c.flip_fraction <= 1.0, "map.flip_fraction must be in [0, 1]");

    require(c.rl.iterations >= 1 && !c.rl.seeds.empty() && c.rl.smooth_window >= 1, "rl iteration settings invalid");
    require(!c.rl.power_offsets_db.empty(), "rl.power_offsets_db must be non-empty");
    require(c.rl.episode_length >= 1 && c.rl.ppo.episodes_per_iter >= 1, "rl episode settings invalid");
    require(c.rl.ppo.epochs >= 1 && c.rl.ppo.minibatch >= 1 && c.rl.ppo.learning_rate > 0.0, "rl.ppo settings invalid");
    for (const auto& m : c.rl_maps)
        require(std::find(kMapNames.begin(), kMapNames.end(), m) != kMapNames.end(), "rl.maps has unknown map " + m);
    require(!c.rl_enabled || c.rl_maps.size() >= 2, "rl.maps needs at least two maps");

    require(c.workers >= 1, "runtime.workers must be >= 1");
}

void override_seeds(RunConfig& c, std::uint64_t seed)
{
    c.scene_seed = seed;
    c.dataset_seed = seed;
    c.gdm_train.seed = seed;
    c.classify_seed = seed;
    c.neural.seed = seed;
    c.map.seed = seed;
    c.flip_seed = seed;
    for (std::size_t i = 0; i < c.rl.seeds.size(); ++i) c.rl.seeds[i] = seed + i;
}

std::string fingerprint(const RunConfig& cfg)
{
    json doc = config_json(cfg);
    doc.erase("runtime");
    const std::string text = doc.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

gdm::NoiseSchedule schedule_of(const RunConfig& cfg)
{
    return gdm::linear_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
}

// --- File helpers -------------------------------------------------------------

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, std::string_view text)
{
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

// --- Stages -------------------------------------------------------------------

namespace {

Scene scene_artifact(const RunConfig& cfg, const Paths& p)
{
    if (fs::exists(p.scene())) return load_scene(p.scene());
    return run_scene(cfg, p);
}

struct LoadedData {
    Dataset train;
    Dataset val;
};

LoadedData dataset_artifact(const RunConfig& cfg, const Paths& p)
{
    if (!fs::exists(p.train_csv()) || !fs::exists(p.val_csv()) || !fs::exists(p.standardization())) {
        auto split = run_dataset(cfg, p);
        return {std::move(split.train), std::move(split.val)};
    }
    const auto stats = standardization_from_json_text(read_text(p.standardization()));
    return {make_dataset(csv_to_samples(p.train_csv()), stats), make_dataset(csv_to_samples(p.val_csv()), stats)};
}

gdm::Checkpoint checkpoint_artifact(const RunConfig& cfg, const Paths& p)
{
    if (!fs::exists(p.checkpoint())) run_train_gdm(cfg, p);
    return gdm::load_checkpoint(p.checkpoint());
}

baselines::BaselineBundle baselines_artifact(const RunConfig& cfg, const Paths& p)
{
    if (!fs::exists(p.baselines())) return run_train_baselines(cfg, p);
    return baselines::bundle_from_json_text(read_text(p.baselines()));
}

chanmap::Provenance provenance_for(const RunConfig& cfg, const std::string& name)
{
    return {name, cfg.dataset_seed, fingerprint(cfg)};
}

chanmap::ChannelMap map_artifact(const RunConfig& cfg, const Paths& p, const std::string& name)
{
    if (fs::exists(p.map(name))) {
        auto imported = chanmap::import_map(p.map(name));
        return std::move(imported.map);
    }
    return run_build_maps(cfg, p, {name}).at(name);
}

ppoalloc::RunSummary summarize(std::string map, std::uint64_t seed, std::vector<double> curve, int window)
{
    ppoalloc::RunSummary s;
    s.map = std::move(map);
    s.seed = seed;
    s.curve = std::move(curve);
    s.smoothed = ppoalloc::smooth(s.curve, window);
    const std::size_t n = s.smoothed.size();
    const std::size_t head = std::min<std::size_t>(10, n);
    const std::size_t tail = std::min<std::size_t>(50, n);
    for (std::size_t i = 0; i < head; ++i) s.first_mean += s.smoothed[i] / static_cast<double>(head);
    for (std::size_t i = n - tail; i < n; ++i) s.final_mean += s.smoothed[i] / static_cast<double>(tail);
    return s;
}

}  // namespace

Scene run_scene(const RunConfig& cfg, const Paths& p)
{
    Scene scene = cfg.scene_path.empty() ? generate_scene(cfg.scene_gen, cfg.scene_seed) : load_scene(cfg.scene_path);
    scene.validate();
    write_text(p.scene(), scene_to_json_text(scene));
    return scene;
}

DatasetSplit run_dataset(const RunConfig& cfg, const Paths& p)
{
    const Scene scene = scene_artifact(cfg, p);
    auto split = generate_dataset(scene, cfg.dataset_size, cfg.dataset_seed, cfg.train_frac, cfg.dataset_gen, cfg.workers);
    write_text(p.train_csv(), samples_to_csv_text(split.train.samples));
    write_text(p.val_csv(), samples_to_csv_text(split.val.samples));
    write_text(p.standardization(), standardization_to_json_text(split.train.standardization));
    return split;
}

gdm::TrainResult run_train_gdm(const RunConfig& cfg, const Paths& p)
{
    const auto data = dataset_artifact(cfg, p);
    const auto sched = schedule_of(cfg);
    gdm::DenoiserArch arch = cfg.arch;
    arch.data_dim = static_cast<int>(data.train.standardization.dim());
    auto res = gdm::train(data.train, data.val, sched, cfg.gdm_train, arch);
    gdm::save_checkpoint({res.params, sched, fingerprint(cfg)}, p.checkpoint());
    write_text(p.stage_log(), gdm::stage_log_to_csv(res.log));
    return res;
}

baselines::BaselineBundle run_train_baselines(const RunConfig& cfg, const Paths& p)
{
    const auto data = dataset_artifact(cfg, p);
    baselines::BaselineBundle b;
    b.knn_k = baselines::knn_fit(data.train, cfg.knn_k).k;
    b.gbt = baselines::gbt_train(data.train, cfg.gbt_rounds, cfg.gbt_learning_rate);
    b.neural = baselines::neural_train(data.train, cfg.neural, &data.val);
    write_text(p.baselines(), baselines::bundle_to_json_text(b));
    std::string hist = "step,val_cross_entropy\n";
    for (const auto& [step, ce] : b.neural.history) hist += fmt::format("{},{:.17g}\n", step, ce);
    write_text(p.neural_history(), hist);
    return b;
}

std::map<std::string, baselines::MetricsReport> run_eval(const RunConfig& cfg, const Paths& p)
{
    const auto data = dataset_artifact(cfg, p);
    const auto ckpt = checkpoint_artifact(cfg, p);
    const auto bundle = baselines_artifact(cfg, p);
    const MatrixXd x = data.val.matrix();
    const auto truth = data.val.labels();
    const auto n = static_cast<std::size_t>(x.cols());

    std::map<std::string, std::vector<LinkClass>> pred;
    {
        const auto post = gdm::classify_batch(gdm::as_predictor(ckpt.params), ckpt.schedule, x, cfg.n_eval, cfg.tau,
                                              cfg.classify_seed, cfg.workers);
        auto& v = pred["gdm"];
        for (const auto& q : post) v.push_back(q.label);
    }
    const auto knn = baselines::knn_fit(data.train, bundle.knn_k);
    pred["knn"].resize(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
        pred["knn"][i] = baselines::knn_predict(knn, x.col(static_cast<Eigen::Index>(i)));
    });
    auto& gbt = pred["gbt"];
    auto& neural = pred["neural"];
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = x.col(static_cast<Eigen::Index>(i));
        gbt.push_back(baselines::gbt_predict(bundle.gbt, col).label);
        const auto prob = baselines::neural_predict(bundle.neural, col);
        neural.push_back(prob[1] > prob[0] ? LinkClass::Nlos : LinkClass::Los);
    }
    std::map<std::string, baselines::MetricsReport> table;
    for (const auto& [name, v] : pred) table[name] = baselines::evaluate(v, truth);
    write_text(p.metrics(), baselines::metrics_to_json_text(table));
    return table;
}

std::map<std::string, chanmap::ChannelMap> run_build_maps(const RunConfig& cfg, const Paths& p,
                                                          const std::vector<std::string>& names)
{
    const Scene scene = scene_artifact(cfg, p);
    const auto data = dataset_artifact(cfg, p);
    const auto& stats = data.train.standardization;
    chanmap::MapBuildConfig mc = cfg.map;
    mc.sampling = cfg.dataset_gen;

    std::map<std::string, chanmap::ChannelMap> out;
    for (const auto& name : names) {
        chanmap::ChannelMap m;
        if (name == "oracle") {
            m = chanmap::build_map(scene, chanmap::GeometryOracle{}, stats, mc, provenance_for(cfg, name), cfg.workers);
        } else if (name == "gdm") {
            const auto ckpt = checkpoint_artifact(cfg, p);
            const chanmap::GdmClassifier c(ckpt.params, ckpt.schedule, cfg.n_eval, cfg.tau);
            m = chanmap::build_map(scene, c, stats, mc, provenance_for(cfg, name), cfg.workers);
        } else if (name == "knn") {
            const auto bundle = baselines_artifact(cfg, p);
            const chanmap::KnnClassifier c(baselines::knn_fit(data.train, bundle.knn_k));
            m = chanmap::build_map(scene, c, stats, mc, provenance_for(cfg, name), cfg.workers);
        } else if (name == "gbt") {
            const chanmap::GbtClassifier c(baselines_artifact(cfg, p).gbt, stats.dim());
            m = chanmap::build_map(scene, c, stats, mc, provenance_for(cfg, name), cfg.workers);
        } else if (name == "neural") {
            const chanmap::NeuralClassifier c(baselines_artifact(cfg, p).neural);
            m = chanmap::build_map(scene, c, stats, mc, provenance_for(cfg, name), cfg.workers);
        } else if (name == "flipped") {
            const auto oracle = out.contains("oracle") ? out.at("oracle") : map_artifact(cfg, p, "oracle");
            m = chanmap::flip_labels(oracle, cfg.flip_fraction, cfg.flip_seed, mc.nlos_penalty_db);
            m.provenance = provenance_for(cfg, name);
        } else {
            throw ConfigError(fmt::format("unknown map '{}'", name));
        }
        std::error_code ec;
        fs::create_directories(p.map(name).parent_path(), ec);
        chanmap::export_map(m, p.map(name));
        out.emplace(name, std::move(m));
    }
    return out;
}

std::vector<fs::path> run_heatmaps(const RunConfig& cfg, const Paths& p)
{
    const Scene scene = scene_artifact(cfg, p);
    std::vector<fs::path> files;
    for (const auto& tx : scene.transmitters) {
        const auto h = chanmap::visibility_heatmap(scene, tx, cfg.map.grid_res_m, cfg.map.rx_height_m);
        write_text(p.heatmap(tx.id), chanmap::heatmap_to_csv(h));
        files.push_back(p.heatmap(tx.id));
    }
    return files;
}

namespace {

ppoalloc::EnvConfig env_config(const RunConfig& cfg, const Scene& scene, const chanmap::ChannelMap& obs,
                               const chanmap::ChannelMap& truth)
{
    ppoalloc::EnvConfig ec;
    ec.scene = &scene;
    ec.observation_map = obs;
    ec.true_map = truth;
    ec.users = scene.users;
    ec.power_levels = ppoalloc::default_power_levels(scene, cfg.rl.power_offsets_db);
    ec.noise_floor_dbm = cfg.rl.noise_floor_dbm;
    ec.episode_length = cfg.rl.episode_length;
    ec.step_jitter_m = cfg.rl.step_jitter_m;
    ec.reset_spread_m = cfg.rl.reset_spread_m;
    return ec;
}

}  // namespace

std::vector<ppoalloc::RunSummary> run_rl_train(const RunConfig& cfg, const Paths& p, const std::string& name)
{
    const Scene scene = scene_artifact(cfg, p);
    const auto truth = map_artifact(cfg, p, "oracle");
    const auto obs = name == "oracle" ? truth : map_artifact(cfg, p, name);
    const ppoalloc::Environment env(env_config(cfg, scene, obs, truth));
    std::vector<ppoalloc::RunSummary> runs;
    for (const auto seed : cfg.rl.seeds) {
        auto curve = ppoalloc::train_policy(env, cfg.rl.iterations, seed, cfg.rl.ppo, cfg.workers).curve;
        runs.push_back(summarize(name, seed, std::move(curve), cfg.rl.smooth_window));
        write_text(p.curve(name, seed), ppoalloc::curve_to_csv(runs.back()));
    }
    return runs;
}

ppoalloc::Comparison run_compare(const RunConfig& cfg, const Paths& p, const std::vector<std::string>& maps)
{
    const Scene scene = scene_artifact(cfg, p);
    const auto truth = map_artifact(cfg, p, "oracle");
    std::vector<std::pair<std::string, chanmap::ChannelMap>> named;
    for (const auto& m : maps) named.emplace_back(m, m == "oracle" ? truth : map_artifact(cfg, p, m));
    const auto c = ppoalloc::compare_maps(scene, truth, named, cfg.rl, cfg.workers);
    for (const auto& r : c.runs) write_text(p.curve(r.map, r.seed), ppoalloc::curve_to_csv(r));
    write_text(p.comparison(), ppoalloc::comparison_to_json_text(c));
    return c;
}

// --- Report -------------------------------------------------------------------

namespace {

std::string rel(const Paths& p, const fs::path& f) { return f.lexically_relative(p.dir).generic_string(); }

}  // namespace

void write_report(const RunConfig& cfg, const Paths& p)
{
    json doc;
    doc["format"] = "saginmap-report";
    doc["version"] = 1;
    doc["fingerprint"] = fingerprint(cfg);
    json resolved = config_json(cfg);
    resolved.erase("runtime");
    doc["config"] = resolved;

    json heat = json::array();
    if (fs::exists(p.scene()))
        for (const auto& tx : load_scene(p.scene()).transmitters)
            if (fs::exists(p.heatmap(tx.id))) heat.push_back(rel(p, p.heatmap(tx.id)));
    doc["heatmaps"] = heat;

    doc["stage_log"] = fs::exists(p.stage_log()) ? json(rel(p, p.stage_log())) : json(nullptr);
    doc["metrics"] = fs::exists(p.metrics()) ? json::parse(read_text(p.metrics())) : json(nullptr);

    json maps = json::object();
    for (const auto& n : kMapNames)
        if (fs::exists(p.map(n))) maps[n] = rel(p, p.map(n));
    doc["maps"] = maps;

    if (fs::exists(p.comparison())) {
        json rl = json::parse(read_text(p.comparison()));
        json curves = json::array();
        for (const auto& r : rl.at("runs"))
            curves.push_back(rel(p, p.curve(r.at("map").get<std::string>(), r.at("seed").get<std::uint64_t>())));
        rl["curves"] = curves;
        doc["rl"] = rl;
    } else {
        doc["rl"] = nullptr;
    }
    write_text(p.report(), doc.dump(2) + "\n");
}

void run_pipeline(const RunConfig& cfg)
{
    validate(cfg);
    const Paths p{cfg.output_dir};
    std::error_code ec;
    fs::create_directories(p.dir, ec);
    if (ec) throw IoError(fmt::format("cannot create {}: {}", p.dir.string(), ec.message()));
    write_text(p.dir / "config.json", config_to_json_text(cfg));

    auto stage = [](const char* name, auto&& fn) {
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
    };
    stage("scene", [&] { run_scene(cfg, p); });
    stage("dataset", [&] { run_dataset(cfg, p); });
    stage("train-gdm", [&] { run_train_gdm(cfg, p); });
    stage("train-baselines", [&] { run_train_baselines(cfg, p); });
    stage("eval", [&] { run_eval(cfg, p); });
    stage("heatmap", [&] { run_heatmaps(cfg, p); });
    stage("build-map", [&] { run_build_maps(cfg, p, kMapNames); });
    if (cfg.rl_enabled) stage("compare", [&] { run_compare(cfg, p, cfg.rl_maps); });
    stage("report", [&] { write_report(cfg, p); });
}

ReportBundle run_report(const fs::path& report_path, const fs::path& out)
{
    const json doc = [&] {
        try {
            return json::parse(read_text(report_path));
        } catch (const json::exception& e) {
            throw ParseError(fmt::format("{}: {}", report_path.string(), e.what()));
        }
    }();
    const fs::path base = report_path.parent_path();
    ReportBundle b;
    auto copy_group = [&](const std::string& group, const std::string& ref, const fs::path& dest) {
        const fs::path src = base / ref;
        if (!fs::exists(src)) {
            b.missing.push_back(ref);
            return;
        }
        write_text(dest, read_text(src));
        b.groups[group].push_back(dest);
    };

    if (doc.contains("stage_log") && doc["stage_log"].is_string())
        copy_group("stage_rmse", doc["stage_log"].get<std::string>(), out / "stage_rmse.csv");
    else
        b.absent.push_back("stage_rmse");

    std::vector<std::string> classifiers;
    if (doc.contains("metrics") && doc["metrics"].is_object()) {
        std::string csv = "classifier_index,accuracy,precision,recall,f1\n";
        std::size_t i = 0;
        for (const auto& [name, m] : doc["metrics"].items()) {
            classifiers.push_back(name);
            csv += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", i++, m.at("accuracy").get<double>(),
                               m.at("precision").get<double>(), m.at("recall").get<double>(), m.at("f1").get<double>());
        }
        write_text(out / "metrics_bar.csv", csv);
        b.groups["metrics_bar"].push_back(out / "metrics_bar.csv");
    } else {
        b.absent.push_back("metrics_bar");
    }

    if (doc.contains("heatmaps") && doc["heatmaps"].is_array() && !doc["heatmaps"].empty()) {
        for (const auto& h : doc["heatmaps"]) {
            const auto ref = h.get<std::string>();
            copy_group("heatmaps", ref, out / "heatmaps" / fs::path(ref).filename());
        }
    } else {
        b.absent.push_back("heatmaps");
    }

    if (doc.contains("rl") && doc["rl"].is_object()) {
        for (const auto& c : doc["rl"].at("curves")) {
            const auto ref = c.get<std::string>();
            copy_group("reward_curves", ref, out / "reward_curves" / fs::path(ref).filename());
        }
    } else {
        b.absent.push_back("reward_curves");
    }

    json manifest;
    manifest["report"] = report_path.generic_string();
    manifest["fingerprint"] = doc.value("fingerprint", "");
    json groups = json::object();
    for (const auto& [g, files] : b.groups) {
        json list = json::array();
        for (const auto& f : files) list.push_back(f.lexically_relative(out).generic_string());
        groups[g] = list;
    }
    manifest["groups"] = groups;
    manifest["absent_groups"] = b.absent;
    manifest["missing_files"] = b.missing;
    manifest["metrics_bar_classifiers"] = classifiers;
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    return b;
}

}  // namespace saginmap::harness
