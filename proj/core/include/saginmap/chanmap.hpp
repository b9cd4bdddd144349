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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saginmap/baselines.hpp"
#include "saginmap/chansim.hpp"
#include "saginmap/gdm.hpp"

namespace saginmap::chanmap {

using Eigen::MatrixXd;

/// Anything that scores link samples. `z` holds standardized features (one
/// column per sample); sample i may draw from stream (seed, i).
class LinkClassifier {
public:
    virtual ~LinkClassifier() = default;
    virtual std::string name() const = 0;
    /// Expected standardized feature dimension, or 0 if features are ignored.
    virtual std::size_t feature_dim() const = 0;
    virtual std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z,
                                              std::uint64_t seed, int workers) const = 0;
};

/// Reads the geometric ground truth carried by each sample.
class GeometryOracle final : public LinkClassifier {
public:
    std::string name() const override { return "oracle"; }
    std::size_t feature_dim() const override { return 0; }
    std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z, std::uint64_t seed,
                                      int workers) const override;
};

class GdmClassifier final : public LinkClassifier {
public:
    GdmClassifier(gdm::DenoiserParams params, gdm::NoiseSchedule sched, int n_eval, double tau)
        : params_(std::move(params)), sched_(std::move(sched)), n_eval_(n_eval), tau_(tau)
    {
    }
    std::string name() const override { return "gdm"; }
    std::size_t feature_dim() const override { return static_cast<std::size_t>(params_.arch.data_dim); }
    std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z, std::uint64_t seed,
                                      int workers) const override;
    std::vector<gdm::Posterior> classify(const MatrixXd& z, std::uint64_t seed, int workers) const;

private:
    gdm::DenoiserParams params_;
    gdm::NoiseSchedule sched_;
    int n_eval_;
    double tau_;
};

class KnnClassifier final : public LinkClassifier {
public:
    explicit KnnClassifier(baselines::KnnModel m) : model_(std::move(m)) {}
    std::string name() const override { return "knn"; }
    std::size_t feature_dim() const override { return static_cast<std::size_t>(model_.points.rows()); }
    std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z, std::uint64_t seed,
                                      int workers) const override;

private:
    baselines::KnnModel model_;
};

class GbtClassifier final : public LinkClassifier {
public:
    GbtClassifier(baselines::GbtModel m, std::size_t dim) : model_(std::move(m)), dim_(dim) {}
    std::string name() const override { return "gbt"; }
    std::size_t feature_dim() const override { return dim_; }
    std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z, std::uint64_t seed,
                                      int workers) const override;

private:
    baselines::GbtModel model_;
    std::size_t dim_;
};

class NeuralClassifier final : public LinkClassifier {
public:
    explicit NeuralClassifier(baselines::NeuralBaseline m) : model_(std::move(m)) {}
    std::string name() const override { return "neural"; }
    std::size_t feature_dim() const override { return static_cast<std::size_t>(model_.shape.widths.front()); }
    std::vector<double> posterior_los(const std::vector<LinkSample>& samples, const MatrixXd& z, std::uint64_t seed,
                                      int workers) const override;

private:
    baselines::NeuralBaseline model_;
};

struct MapCell {
    double posterior_los = 0.0;
    LinkClass label = LinkClass::Los;
    double est_gain_db = 0.0;
    bool operator==(const MapCell&) const = default;
};

struct Provenance {
    std::string classifier;
    std::uint64_t dataset_seed = 0;
    std::string config_fingerprint;
    bool operator==(const Provenance&) const = default;
};

/// Grid of cells x transmitters. Cells are row-major (iy outer, ix inner),
/// transmitters innermost.
struct ChannelMap {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double resolution = 1.0;
    int nx = 0;
    int ny = 0;
    std::vector<std::string> tx_ids;
    std::vector<double> tx_power_dbm;
    std::vector<MapCell> cells;
    Provenance provenance;

    std::size_t tx_count() const { return tx_ids.size(); }
    std::size_t index(int ix, int iy, std::size_t tx) const
    {
        return (static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(ix)) *
                   tx_count() + tx;
    }
    const MapCell& at(int ix, int iy, std::size_t tx) const { return cells[index(ix, iy, tx)]; }
    MapCell& at(int ix, int iy, std::size_t tx) { return cells[index(ix, iy, tx)]; }
    /// Cell containing (x, y), clamped to the grid.
    std::pair<int, int> locate(double x, double y) const;
    bool operator==(const ChannelMap&) const = default;
};

struct GridSpec {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double resolution = 1.0;
    int nx = 0;
    int ny = 0;
};

/// Grid of `res`-sized cells covering the scene bounds.
GridSpec grid_for(const Scene& scene, double res);
/// Receiver point at a cell centre, clamped into the scene bounds.
Vec3 cell_center(const Scene& scene, const GridSpec& grid, int ix, int iy, double rx_height_m);

struct MapBuildConfig {
    double grid_res_m = 10.0;
    int samples_per_cell = 4;
    std::uint64_t seed = 1;
    double rx_height_m = 1.5;
    /// 6 dB reflection + 20 dB penetration, mirroring the channel simulator.
    double nlos_penalty_db = 26.0;
    DatasetGenConfig sampling;
};

/// Classifies samples_per_cell synthetic measurements at each cell centre and
/// transmitter and averages the LOS posteriors. Throws ConfigError when the
/// classifier's feature dimension does not match `stats`.
ChannelMap build_map(const Scene& scene, const LinkClassifier& classifier, const Standardization& stats,
                     const MapBuildConfig& cfg, Provenance provenance = {}, int workers = 1);

/// Fraction of cell x transmitter labels on which two same-grid maps agree.
double label_agreement(const ChannelMap& a, const ChannelMap& b);

/// Copy of `map` with a seeded random `fraction` of cell x transmitter
/// labels inverted (posterior and gain updated consistently).
ChannelMap flip_labels(const ChannelMap& map, double fraction, std::uint64_t seed, double nlos_penalty_db = 26.0);

struct Heatmap {
    std::string tx_id;
    GridSpec grid;
    MatrixXd weights;  // ny x nx
};

/// Fraction of 16 stratified points per cell (4 x 4 pattern) with LOS to tx.
Heatmap visibility_heatmap(const Scene& scene, const Transmitter& tx, double grid_res_m, double rx_height_m = 1.5);
std::string heatmap_to_csv(const Heatmap& h);

std::string map_to_text(const ChannelMap& map);
struct MapImport {
    ChannelMap map;
    std::vector<std::string> warnings;
};
/// Throws ParseError on malformed or truncated text. A provenance mismatch
/// against `expected` is reported as a warning.
MapImport map_from_text(std::string_view text, const std::optional<Provenance>& expected = std::nullopt);
void export_map(const ChannelMap& map, const std::filesystem::path& path);
MapImport import_map(const std::filesystem::path& path, const std::optional<Provenance>& expected = std::nullopt);

}  // namespace saginmap::chanmap
