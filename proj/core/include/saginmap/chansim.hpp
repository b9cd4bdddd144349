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

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "saginmap/scene.hpp"

namespace saginmap {

/// Class labels. LOS is encoded as 0, NLOS as 1 everywhere (files, models).
enum class LinkClass : int { Los = 0, Nlos = 1 };

inline constexpr std::size_t kFeatureCount = 7;

/// Feature order of LinkSample::features.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames{
    "elevation_deg", "azimuth_deg",         "cn0_dbhz",      "excess_delay_ns",
    "doppler_hz",    "pseudorange_error_m", "l1_l2_delta_m",
};

struct LinkSample {
    double gps_time_s = 0.0;
    std::string tx_id;
    std::string sat_code;
    std::array<double, kFeatureCount> features{};
    LinkClass label = LinkClass::Los;
    Vec3 rx_truth = Vec3::Zero();

    bool operator==(const LinkSample& o) const
    {
        return gps_time_s == o.gps_time_s && tx_id == o.tx_id && sat_code == o.sat_code && features == o.features &&
               label == o.label && rx_truth == o.rx_truth;
    }
};

/// Per-feature z-score statistics over the active (non-degenerate) features.
struct Standardization {
    std::vector<std::size_t> active;  // indices into LinkSample::features
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dim() const { return active.size(); }
    Eigen::VectorXd apply(const LinkSample& s) const;
    bool operator==(const Standardization&) const = default;
};

/// Fits z-score statistics (population standard deviation). Features whose
/// standard deviation is below 1e-12 are dropped from `active`.
Standardization fit_standardization(const std::vector<LinkSample>& samples);

struct Dataset {
    std::vector<LinkSample> samples;
    std::vector<std::string> feature_names;
    Standardization standardization;

    std::size_t size() const { return samples.size(); }
    /// Standardized features, one column per sample.
    Eigen::MatrixXd matrix() const;
    std::vector<LinkClass> labels() const;
    std::size_t count(LinkClass c) const;
};

/// Attaches (already fitted) standardization and the matching feature names.
Dataset make_dataset(std::vector<LinkSample> samples, const Standardization& stats);

/// Free-space path loss 20 log10(4 pi d f / c), dB.
double free_space_path_loss_db(double d_m, double f_hz);

/// Channel synthesis constants. Defaults are urban-canyon heuristics.
struct ChannelSimConfig {
    double los_delay_sigma_ns = 3.0;
    double los_pr_sigma_m = 1.0;
    double nlos_pr_sigma_m = 2.0;
    double reflection_loss_db = 6.0;
    double penetration_loss_per_building_db = 20.0;
    double penetration_only_loss_db = 40.0;
    double cn0_noise_db = 1.0;
    double fspl_slope = 0.05;
    double cn0_min_dbhz = 10.0;
    double cn0_max_dbhz = 60.0;
    /// Reference C/N0 and reference distance per kind: {satellite, uav, ground}.
    std::array<double, 3> cn0_ref_dbhz{45.0, 50.0, 55.0};
    std::array<double, 3> ref_distance_m{550e3, 100.0, 10.0};
    double satellite_doppler_hz = 40e3;
    double satellite_doppler_period_s = 5400.0;
    double uav_doppler_hz = 200.0;
    double ground_doppler_hz = 10.0;
    double doppler_noise_hz = 5.0;
    double los_l1l2_mean_m = 0.0;
    double los_l1l2_sigma_m = 0.2;
    double nlos_l1l2_mean_m = 1.0;
    double nlos_l1l2_sigma_m = 0.5;
};

/// One transmitter->receiver measurement with geometric ground truth.
/// Throws InputError if rx is outside the scene bounds.
LinkSample synthesize_link(const Scene& scene, const Transmitter& tx, const Vec3& rx, double t_s, Rng& rng,
                           const ChannelSimConfig& cfg = {});

struct DatasetGenConfig {
    /// Std-dev of the horizontal receiver offset around a user, meters.
    double rx_jitter_m = 100.0;
    int time_steps = 3600;
    double time_step_s = 1.0;
    double gps_time_origin_s = 0.0;
    ChannelSimConfig channel;
};

struct DatasetSplit {
    Dataset train;
    Dataset val;
    /// Original draw indices of the split members, in split order.
    std::vector<std::size_t> train_index;
    std::vector<std::size_t> val_index;
};

/// Draws n samples over (jittered user positions x transmitters x time
/// steps), splits by a seeded shuffle, and standardizes with training
/// statistics. Output is independent of `workers`. Throws GenerationError
/// when a class is missing from the training split.
DatasetSplit generate_dataset(const Scene& scene, std::size_t n, std::uint64_t seed, double train_frac = 0.75,
                              const DatasetGenConfig& cfg = {}, int workers = 1);

/// Exact CSV header used by dataset files.
inline constexpr const char* kDatasetCsvHeader =
    "gps_time,sat_code,tx_id,elevation_deg,azimuth_deg,cn0_dbhz,excess_delay_ns,doppler_hz,"
    "pseudorange_error_m,l1_l2_delta_m,los_label,rx_x,rx_y,rx_z";

void dataset_to_csv(const std::vector<LinkSample>& samples, const std::filesystem::path& path);
std::string samples_to_csv_text(const std::vector<LinkSample>& samples);
/// Throws ParseError naming the 1-based line of the first malformed row.
std::vector<LinkSample> samples_from_csv_text(std::string_view text);
std::vector<LinkSample> csv_to_samples(const std::filesystem::path& path);

inline void dataset_to_csv(const Dataset& ds, const std::filesystem::path& path) { dataset_to_csv(ds.samples, path); }
/// Reads samples and fits standardization on them.
Dataset csv_to_dataset(const std::filesystem::path& path);

std::string standardization_to_json_text(const Standardization& s);
Standardization standardization_from_json_text(std::string_view text);

}  // namespace saginmap
