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

#include "saginmap/chansim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "saginmap/parallel.hpp"

namespace saginmap {

Eigen::VectorXd Standardization::apply(const LinkSample& s) const
{
    Eigen::VectorXd z(static_cast<Eigen::Index>(active.size()));
    for (std::size_t j = 0; j < active.size(); ++j)
        z[static_cast<Eigen::Index>(j)] = (s.features[active[j]] - mean[j]) / stddev[j];
    return z;
}

Standardization fit_standardization(const std::vector<LinkSample>& samples)
{
    Standardization st;
    if (samples.empty()) return st;
    const double n = static_cast<double>(samples.size());
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s.features[f];
        mean /= n;
        double var = 0.0;
        for (const auto& s : samples) {
            const double d = s.features[f] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / n);
        if (sd < 1e-12) continue;
        st.active.push_back(f);
        st.mean.push_back(mean);
        st.stddev.push_back(sd);
    }
    return st;
}

Eigen::MatrixXd Dataset::matrix() const
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(standardization.dim()), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i)
        m.col(static_cast<Eigen::Index>(i)) = standardization.apply(samples[i]);
    return m;
}

std::vector<LinkClass> Dataset::labels() const
{
    std::vector<LinkClass> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

std::size_t Dataset::count(LinkClass c) const
{
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [c](const LinkSample& s) { return s.label == c; }));
}

Dataset make_dataset(std::vector<LinkSample> samples, const Standardization& stats)
{
    Dataset ds;
    ds.samples = std::move(samples);
    ds.standardization = stats;
    for (std::size_t f : stats.active) ds.feature_names.emplace_back(kFeatureNames[f]);
    return ds;
}

double free_space_path_loss_db(double d_m, double f_hz)
{
    if (!(d_m > 0.0) || !(f_hz > 0.0) || !std::isfinite(d_m) || !std::isfinite(f_hz))
        throw InputError("free_space_path_loss_db: distance and frequency must be positive");
    return 20.0 * std::log10(4.0 * std::numbers::pi * d_m * f_hz / kSpeedOfLight);
}

namespace {

std::size_t kind_index(TxKind k) { return static_cast<std::size_t>(k); }

std::string sat_code_for(const Scene& scene, const Transmitter& tx)
{
    std::size_t idx = 0;
    for (std::size_t i = 0; i < scene.transmitters.size(); ++i)
        if (scene.transmitters[i].id == tx.id) idx = i;
    const char prefix = tx.kind == TxKind::Satellite ? 'S' : tx.kind == TxKind::Uav ? 'U' : 'A';
    return fmt::format("{}{:02d}", prefix, idx + 1);
}

}  // namespace

LinkSample synthesize_link(const Scene& scene, const Transmitter& tx, const Vec3& rx, double t_s, Rng& rng,
                           const ChannelSimConfig& cfg)
{
    if (!rx.allFinite() || !scene.bounds.contains(rx))
        throw InputError(fmt::format("synthesize_link: receiver ({}, {}, {}) outside scene bounds", rx.x(), rx.y(),
                                     rx.z()));

    LinkSample s;
    s.gps_time_s = t_s;
    s.tx_id = tx.id;
    s.sat_code = sat_code_for(scene, tx);
    s.rx_truth = rx;

    const Vec3 d = tx.position - rx;
    const double direct = d.norm();
    const double horiz = std::hypot(d.x(), d.y());
    const double elevation = std::clamp(std::atan2(d.z(), horiz) * 180.0 / std::numbers::pi, 0.0, 90.0);
    double azimuth = std::atan2(d.x(), d.y()) * 180.0 / std::numbers::pi;
    if (azimuth < 0.0) azimuth += 360.0;

    const std::size_t k = kind_index(tx.kind);
    const double fspl_excess =
        free_space_path_loss_db(direct, tx.carrier_hz) - free_space_path_loss_db(cfg.ref_distance_m[k], tx.carrier_hz);
    const double cn0_base = cfg.cn0_ref_dbhz[k] - cfg.fspl_slope * fspl_excess;

    const bool los = los_test(scene, tx.position, rx);
    double excess_delay = 0.0;
    double pr_error = 0.0;
    double cn0 = 0.0;
    if (los) {
        excess_delay = std::abs(cfg.los_delay_sigma_ns * standard_normal(rng));
        pr_error = cfg.los_pr_sigma_m * standard_normal(rng);
        cn0 = cn0_base - cfg.cn0_noise_db * standard_normal(rng);
    } else {
        const auto paths = reflected_paths(scene, tx.position, rx);
        const double receiver_delay = std::abs(cfg.los_delay_sigma_ns * standard_normal(rng));
        const double pr_noise = cfg.nlos_pr_sigma_m * standard_normal(rng);
        const double cn0_noise = cfg.cn0_noise_db * standard_normal(rng);
        if (!paths.empty()) {
            const double path = paths.front().length_m;
            excess_delay = excess_delay_ns(direct, path) + receiver_delay;
            pr_error = (path - direct) + pr_noise;
            const double blockers = static_cast<double>(count_blockers(scene, tx.position, rx));
            cn0 = cn0_base - cfg.reflection_loss_db - cfg.penetration_loss_per_building_db * blockers - cn0_noise;
        } else {
            // No specular path: the signal only arrives through the obstruction.
            excess_delay = receiver_delay;
            pr_error = pr_noise;
            cn0 = cn0_base - cfg.penetration_only_loss_db - cn0_noise;
        }
    }
    cn0 = std::clamp(cn0, cfg.cn0_min_dbhz, cfg.cn0_max_dbhz);

    double doppler = 0.0;
    switch (tx.kind) {
    case TxKind::Satellite:
        doppler = cfg.satellite_doppler_hz * std::sin(2.0 * std::numbers::pi * t_s / cfg.satellite_doppler_period_s);
        break;
    case TxKind::Uav: doppler = uniform(rng, -cfg.uav_doppler_hz, cfg.uav_doppler_hz); break;
    case TxKind::Ground: doppler = uniform(rng, -cfg.ground_doppler_hz, cfg.ground_doppler_hz); break;
    }
    doppler += cfg.doppler_noise_hz * standard_normal(rng);

    const double l1l2 = los ? cfg.los_l1l2_mean_m + cfg.los_l1l2_sigma_m * standard_normal(rng)
                            : cfg.nlos_l1l2_mean_m + cfg.nlos_l1l2_sigma_m * standard_normal(rng);

    s.features = {elevation, azimuth, cn0, excess_delay, doppler, pr_error, l1l2};
    s.label = los ? LinkClass::Los : LinkClass::Nlos;
    return s;
}

DatasetSplit generate_dataset(const Scene& scene, std::size_t n, std::uint64_t seed, double train_frac,
                              const DatasetGenConfig& cfg, int workers)
{
    if (n < 8) throw ConfigError("generate_dataset: n must be at least 8");
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("generate_dataset: train_frac must be in (0, 1)");
    if (scene.users.empty() || scene.transmitters.empty())
        throw ConfigError("generate_dataset: scene needs at least one user and one transmitter");
    if (cfg.time_steps < 1) throw ConfigError("generate_dataset: time_steps must be positive");

    std::vector<LinkSample> all(n);
    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, Stream::Sample, i);
        const Vec3& user = scene.users[uniform_index(rng, scene.users.size())];
        const Transmitter& tx = scene.transmitters[uniform_index(rng, scene.transmitters.size())];
        const auto step = uniform_index(rng, static_cast<std::size_t>(cfg.time_steps));
        Vec3 rx = user;
        for (int attempt = 0; attempt < 64; ++attempt) {
            Vec3 cand = user;
            cand.x() += cfg.rx_jitter_m * standard_normal(rng);
            cand.y() += cfg.rx_jitter_m * standard_normal(rng);
            if (!scene.bounds.contains(cand)) continue;
            if (std::any_of(scene.buildings.begin(), scene.buildings.end(),
                            [&](const Aabb& b) { return b.contains_strictly(cand); }))
                continue;
            rx = cand;
            break;
        }
        const double t = cfg.gps_time_origin_s + static_cast<double>(step) * cfg.time_step_s;
        all[i] = synthesize_link(scene, tx, rx, t, rng, cfg.channel);
    });

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng = make_rng(seed, Stream::Split);
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * train_frac));
    if (n_train == 0 || n_train >= n) throw ConfigError("generate_dataset: split leaves an empty partition");

    DatasetSplit out;
    out.train_index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train_index.begin(), out.train_index.end());
    std::sort(out.val_index.begin(), out.val_index.end());

    std::vector<LinkSample> train;
    std::vector<LinkSample> val;
    for (auto i : out.train_index) train.push_back(all[i]);
    for (auto i : out.val_index) val.push_back(all[i]);

    const auto has = [&](LinkClass c) {
        return std::any_of(train.begin(), train.end(), [c](const LinkSample& s) { return s.label == c; });
    };
    if (!has(LinkClass::Los) || !has(LinkClass::Nlos))
        throw GenerationError(fmt::format("training split of seed {} lacks a class; reseed", seed));

    const Standardization stats = fit_standardization(train);
    out.train = make_dataset(std::move(train), stats);
    out.val = make_dataset(std::move(val), stats);
    return out;
}

// --- CSV --------------------------------------------------------------------

std::string samples_to_csv_text(const std::vector<LinkSample>& samples)
{
    std::string out = kDatasetCsvHeader;
    out += '\n';
    for (const auto& s : samples) {
        out += fmt::format("{:.17g},{},{}", s.gps_time_s, s.sat_code, s.tx_id);
        for (double f : s.features) out += fmt::format(",{:.17g}", f);
        out += fmt::format(",{},{:.17g},{:.17g},{:.17g}\n", static_cast<int>(s.label), s.rx_truth.x(),
                           s.rx_truth.y(), s.rx_truth.z());
    }
    return out;
}

void dataset_to_csv(const std::vector<LinkSample>& samples, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << samples_to_csv_text(samples);
    if (!out) throw IoError(fmt::format("write failed for {}", path.string()));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(std::string_view tok, std::size_t line_no, std::string_view column)
{
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end || tok.empty() || !std::isfinite(v))
        throw ParseError(fmt::format("row {}: column {}: invalid number '{}'", line_no, column, tok));
    return v;
}

}  // namespace

std::vector<LinkSample> samples_from_csv_text(std::string_view text)
{
    std::vector<LinkSample> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != kDatasetCsvHeader) throw ParseError("row 1: header does not match the dataset schema");
            header_seen = true;
            continue;
        }
        const auto tok = split_commas(line);
        if (tok.size() != 14)
            throw ParseError(fmt::format("row {}: expected 14 columns, found {}", line_no, tok.size()));
        LinkSample s;
        s.gps_time_s = parse_double(tok[0], line_no, "gps_time");
        s.sat_code = std::string(tok[1]);
        s.tx_id = std::string(tok[2]);
        if (s.sat_code.empty() || s.tx_id.empty())
            throw ParseError(fmt::format("row {}: empty identifier", line_no));
        for (std::size_t f = 0; f < kFeatureCount; ++f) s.features[f] = parse_double(tok[3 + f], line_no, kFeatureNames[f]);
        if (tok[10] == "0")
            s.label = LinkClass::Los;
        else if (tok[10] == "1")
            s.label = LinkClass::Nlos;
        else
            throw ParseError(fmt::format("row {}: los_label must be 0 or 1, found '{}'", line_no, tok[10]));
        s.rx_truth = Vec3(parse_double(tok[11], line_no, "rx_x"), parse_double(tok[12], line_no, "rx_y"),
                          parse_double(tok[13], line_no, "rx_z"));
        out.push_back(std::move(s));
    }
    if (!header_seen) throw ParseError("row 1: missing header");
    return out;
}

std::vector<LinkSample> csv_to_samples(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return samples_from_csv_text(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

Dataset csv_to_dataset(const std::filesystem::path& path)
{
    auto samples = csv_to_samples(path);
    const auto stats = fit_standardization(samples);
    return make_dataset(std::move(samples), stats);
}

std::string standardization_to_json_text(const Standardization& s)
{
    nlohmann::json j;
    j["active"] = s.active;
    j["mean"] = s.mean;
    j["stddev"] = s.stddev;
    std::vector<std::string> names;
    for (auto f : s.active) names.emplace_back(kFeatureNames[f]);
    j["feature_names"] = names;
    return j.dump(2) + "\n";
}

Standardization standardization_from_json_text(std::string_view text)
{
    Standardization s;
    try {
        const auto j = nlohmann::json::parse(text);
        s.active = j.at("active").get<std::vector<std::size_t>>();
        s.mean = j.at("mean").get<std::vector<double>>();
        s.stddev = j.at("stddev").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("standardization: {}", e.what()));
    }
    if (s.mean.size() != s.active.size() || s.stddev.size() != s.active.size())
        throw ParseError("standardization: array lengths differ");
    for (std::size_t i = 0; i < s.active.size(); ++i)
        if (s.active[i] >= kFeatureCount || !(s.stddev[i] > 0.0))
            throw ParseError(fmt::format("standardization: entry {} invalid", i));
    return s;
}

}  // namespace saginmap
