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

#include "saginmap/chanmap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "saginmap/parallel.hpp"

namespace saginmap::chanmap {

std::vector<double> GeometryOracle::posterior_los(const std::vector<LinkSample>& samples, const MatrixXd&,
                                                  std::uint64_t, int) const
{
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label == LinkClass::Los ? 1.0 : 0.0);
    return out;
}

std::vector<gdm::Posterior> GdmClassifier::classify(const MatrixXd& z, std::uint64_t seed, int workers) const
{
    return gdm::classify_batch(gdm::as_predictor(params_), sched_, z, n_eval_, tau_, seed, workers);
}

std::vector<double> GdmClassifier::posterior_los(const std::vector<LinkSample>&, const MatrixXd& z,
                                                 std::uint64_t seed, int workers) const
{
    const auto post = classify(z, seed, workers);
    std::vector<double> out;
    out.reserve(post.size());
    for (const auto& p : post) out.push_back(p.los());
    return out;
}

std::vector<double> KnnClassifier::posterior_los(const std::vector<LinkSample>&, const MatrixXd& z, std::uint64_t,
                                                 int workers) const
{
    std::vector<double> out(static_cast<std::size_t>(z.cols()));
    parallel_for(out.size(), workers, [&](std::size_t i) {
        out[i] = 1.0 - baselines::knn_nlos_fraction(model_, z.col(static_cast<Eigen::Index>(i)));
    });
    return out;
}

std::vector<double> GbtClassifier::posterior_los(const std::vector<LinkSample>&, const MatrixXd& z, std::uint64_t,
                                                 int) const
{
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index i = 0; i < z.cols(); ++i) out.push_back(1.0 - baselines::gbt_predict(model_, z.col(i)).nlos_probability);
    return out;
}

std::vector<double> NeuralClassifier::posterior_los(const std::vector<LinkSample>&, const MatrixXd& z, std::uint64_t,
                                                    int) const
{
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index i = 0; i < z.cols(); ++i) out.push_back(baselines::neural_predict(model_, z.col(i))[0]);
    return out;
}

std::pair<int, int> ChannelMap::locate(double x, double y) const
{
    const int ix = std::clamp(static_cast<int>(std::floor((x - origin_x) / resolution)), 0, nx - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((y - origin_y) / resolution)), 0, ny - 1);
    return {ix, iy};
}

GridSpec grid_for(const Scene& scene, double res)
{
    if (!(res > 0.0) || !std::isfinite(res)) throw ConfigError("grid resolution must be positive");
    GridSpec g;
    g.origin_x = scene.bounds.min_x;
    g.origin_y = scene.bounds.min_y;
    g.resolution = res;
    g.nx = std::max(1, static_cast<int>(std::ceil(scene.bounds.width() / res - 1e-9)));
    g.ny = std::max(1, static_cast<int>(std::ceil(scene.bounds.height() / res - 1e-9)));
    return g;
}

Vec3 cell_center(const Scene& scene, const GridSpec& g, int ix, int iy, double rx_height_m)
{
    return {std::min(g.origin_x + (ix + 0.5) * g.resolution, scene.bounds.max_x),
            std::min(g.origin_y + (iy + 0.5) * g.resolution, scene.bounds.max_y), rx_height_m};
}

ChannelMap build_map(const Scene& scene, const LinkClassifier& classifier, const Standardization& stats,
                     const MapBuildConfig& cfg, Provenance provenance, int workers)
{
    if (cfg.samples_per_cell < 1) throw ConfigError("build_map: samples_per_cell must be >= 1");
    if (classifier.feature_dim() != 0 && classifier.feature_dim() != stats.dim())
        throw ConfigError(fmt::format("build_map: classifier '{}' expects {} features, standardization has {}",
                                      classifier.name(), classifier.feature_dim(), stats.dim()));
    if (cfg.sampling.time_steps < 1) throw ConfigError("build_map: time_steps must be positive");
    const GridSpec g = grid_for(scene, cfg.grid_res_m);

    ChannelMap map;
    map.origin_x = g.origin_x;
    map.origin_y = g.origin_y;
    map.resolution = g.resolution;
    map.nx = g.nx;
    map.ny = g.ny;
    for (const auto& tx : scene.transmitters) {
        map.tx_ids.push_back(tx.id);
        map.tx_power_dbm.push_back(tx.tx_power_dbm);
    }
    if (provenance.classifier.empty()) provenance.classifier = classifier.name();
    map.provenance = provenance;

    const std::size_t ntx = scene.transmitters.size();
    const std::size_t entries = static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny) * ntx;
    const auto spc = static_cast<std::size_t>(cfg.samples_per_cell);
    std::vector<LinkSample> samples(entries * spc);
    parallel_for(entries, workers, [&](std::size_t e) {
        const std::size_t cell = e / ntx;
        const std::size_t k = e % ntx;
        const int ix = static_cast<int>(cell % static_cast<std::size_t>(g.nx));
        const int iy = static_cast<int>(cell / static_cast<std::size_t>(g.nx));
        const Vec3 rx = cell_center(scene, g, ix, iy, cfg.rx_height_m);
        for (std::size_t s = 0; s < spc; ++s) {
            Rng rng = make_rng(cfg.seed, Stream::Map, e, s);
            const auto step = uniform_index(rng, static_cast<std::size_t>(cfg.sampling.time_steps));
            const double t = cfg.sampling.gps_time_origin_s + static_cast<double>(step) * cfg.sampling.time_step_s;
            samples[e * spc + s] = synthesize_link(scene, scene.transmitters[k], rx, t, rng, cfg.sampling.channel);
        }
    });

    MatrixXd z(static_cast<Eigen::Index>(stats.dim()), static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) z.col(static_cast<Eigen::Index>(i)) = stats.apply(samples[i]);
    const auto post = classifier.posterior_los(samples, z, stream_seed(cfg.seed, static_cast<std::uint64_t>(Stream::Classification)),
                                               workers);

    map.cells.resize(entries);
    for (std::size_t e = 0; e < entries; ++e) {
        double sum = 0.0;
        for (std::size_t s = 0; s < spc; ++s) sum += post[e * spc + s];
        MapCell& c = map.cells[e];
        c.posterior_los = std::clamp(sum / static_cast<double>(spc), 0.0, 1.0);
        c.label = c.posterior_los >= 0.5 ? LinkClass::Los : LinkClass::Nlos;
        const std::size_t cell = e / ntx;
        const auto& tx = scene.transmitters[e % ntx];
        const Vec3 rx = cell_center(scene, g, static_cast<int>(cell % static_cast<std::size_t>(g.nx)),
                                    static_cast<int>(cell / static_cast<std::size_t>(g.nx)), cfg.rx_height_m);
        c.est_gain_db = tx.tx_power_dbm - free_space_path_loss_db((tx.position - rx).norm(), tx.carrier_hz) -
                        (c.label == LinkClass::Los ? 0.0 : cfg.nlos_penalty_db);
    }
    return map;
}

double label_agreement(const ChannelMap& a, const ChannelMap& b)
{
    if (a.nx != b.nx || a.ny != b.ny || a.tx_ids != b.tx_ids) throw InputError("label_agreement: grids differ");
    if (a.cells.empty()) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.cells.size(); ++i) same += a.cells[i].label == b.cells[i].label;
    return static_cast<double>(same) / static_cast<double>(a.cells.size());
}

ChannelMap flip_labels(const ChannelMap& map, double fraction, std::uint64_t seed, double nlos_penalty_db)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("flip_labels: fraction must be in [0, 1]");
    ChannelMap out = map;
    std::vector<std::size_t> idx(out.cells.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, Stream::Flip);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < n; ++i) {
        MapCell& c = out.cells[idx[i]];
        c.posterior_los = 1.0 - c.posterior_los;
        if (c.label == LinkClass::Los) {
            c.label = LinkClass::Nlos;
            c.est_gain_db -= nlos_penalty_db;
        } else {
            c.label = LinkClass::Los;
            c.est_gain_db += nlos_penalty_db;
        }
    }
    out.provenance.classifier += fmt::format("+flip{:g}", fraction);
    return out;
}

Heatmap visibility_heatmap(const Scene& scene, const Transmitter& tx, double grid_res_m, double rx_height_m)
{
    Heatmap h;
    h.tx_id = tx.id;
    h.grid = grid_for(scene, grid_res_m);
    h.weights.resize(h.grid.ny, h.grid.nx);
    constexpr int kSub = 4;
    for (int iy = 0; iy < h.grid.ny; ++iy) {
        for (int ix = 0; ix < h.grid.nx; ++ix) {
            int visible = 0;
            for (int sy = 0; sy < kSub; ++sy) {
                for (int sx = 0; sx < kSub; ++sx) {
                    // Multi-jittered: one point per stratum, all 16 x and y offsets distinct.
                    const double jx = (sx + (sy + 0.5) / kSub) / kSub;
                    const double jy = (sy + (sx + 0.5) / kSub) / kSub;
                    const Vec3 p(h.grid.origin_x + (ix + jx) * grid_res_m, h.grid.origin_y + (iy + jy) * grid_res_m,
                                 rx_height_m);
                    visible += los_test(scene, tx.position, p) ? 1 : 0;
                }
            }
            h.weights(iy, ix) = static_cast<double>(visible) / (kSub * kSub);
        }
    }
    return h;
}

std::string heatmap_to_csv(const Heatmap& h)
{
    std::string out;
    for (Eigen::Index r = 0; r < h.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.weights.cols(); ++c) {
            if (c) out += ',';
            out += fmt::format("{:.17g}", h.weights(r, c));
        }
        out += '\n';
    }
    return out;
}

// --- Map file -------------------------------------------------------------------

namespace {

constexpr const char* kMagic = "# saginmap channel map v1";

std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
T parse_num(std::string_view tok, std::size_t line)
{
    T v{};
    const auto* end = tok.data() + tok.size();
    const auto [ptr, ec] = std::from_chars(tok.data(), end, v);
    if (ec != std::errc{} || ptr != end || tok.empty())
        throw ParseError(fmt::format("map line {}: invalid number '{}'", line, tok));
    return v;
}

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}
    std::string_view next()
    {
        if (pos_ >= text_.size()) throw ParseError(fmt::format("map line {}: unexpected end of file", line_ + 1));
        auto nl = text_.find('\n', pos_);
        if (nl == std::string_view::npos) nl = text_.size();
        std::string_view l = text_.substr(pos_, nl - pos_);
        pos_ = nl + 1;
        ++line_;
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
        return l;
    }
    std::vector<std::string_view> keyed(std::string_view key, std::size_t min_fields)
    {
        auto f = split(next());
        if (f.empty() || f[0] != key || f.size() < min_fields)
            throw ParseError(fmt::format("map line {}: expected '{}' record", line_, key));
        return f;
    }
    std::size_t line() const { return line_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

}  // namespace

std::string map_to_text(const ChannelMap& m)
{
    std::string out = kMagic;
    out += '\n';
    out += fmt::format("origin,{:.17g},{:.17g}\n", m.origin_x, m.origin_y);
    out += fmt::format("resolution,{:.17g}\n", m.resolution);
    out += fmt::format("dims,{},{}\n", m.nx, m.ny);
    out += "transmitters";
    for (std::size_t k = 0; k < m.tx_ids.size(); ++k) out += fmt::format(",{},{:.17g}", m.tx_ids[k], m.tx_power_dbm[k]);
    out += '\n';
    out += fmt::format("provenance,{},{},{}\n", m.provenance.classifier, m.provenance.dataset_seed,
                       m.provenance.config_fingerprint);
    out += fmt::format("records,{}\n", m.cells.size());
    out += "ix,iy,tx,posterior_los,los_label,est_gain_db\n";
    for (int iy = 0; iy < m.ny; ++iy)
        for (int ix = 0; ix < m.nx; ++ix)
            for (std::size_t k = 0; k < m.tx_count(); ++k) {
                const auto& c = m.at(ix, iy, k);
                out += fmt::format("{},{},{},{:.17g},{},{:.17g}\n", ix, iy, m.tx_ids[k], c.posterior_los,
                                   static_cast<int>(c.label), c.est_gain_db);
            }
    out += "end\n";
    return out;
}

MapImport map_from_text(std::string_view text, const std::optional<Provenance>& expected)
{
    LineReader r(text);
    if (r.next() != kMagic) throw ParseError("map line 1: not a saginmap channel map");
    MapImport res;
    ChannelMap& m = res.map;
    auto f = r.keyed("origin", 3);
    m.origin_x = parse_num<double>(f[1], r.line());
    m.origin_y = parse_num<double>(f[2], r.line());
    f = r.keyed("resolution", 2);
    m.resolution = parse_num<double>(f[1], r.line());
    f = r.keyed("dims", 3);
    m.nx = parse_num<int>(f[1], r.line());
    m.ny = parse_num<int>(f[2], r.line());
    if (m.nx < 1 || m.ny < 1 || !(m.resolution > 0.0)) throw ParseError(fmt::format("map line {}: invalid grid", r.line()));
    f = r.keyed("transmitters", 1);
    if ((f.size() - 1) % 2 != 0) throw ParseError(fmt::format("map line {}: transmitter list malformed", r.line()));
    for (std::size_t i = 1; i < f.size(); i += 2) {
        m.tx_ids.emplace_back(f[i]);
        m.tx_power_dbm.push_back(parse_num<double>(f[i + 1], r.line()));
    }
    f = r.keyed("provenance", 4);
    m.provenance.classifier = std::string(f[1]);
    m.provenance.dataset_seed = parse_num<std::uint64_t>(f[2], r.line());
    m.provenance.config_fingerprint = std::string(f[3]);
    f = r.keyed("records", 2);
    const auto count = parse_num<std::size_t>(f[1], r.line());
    const std::size_t expected_count = static_cast<std::size_t>(m.nx) * static_cast<std::size_t>(m.ny) * m.tx_count();
    if (count != expected_count)
        throw ParseError(fmt::format("map line {}: record count {} does not match grid ({})", r.line(), count,
                                     expected_count));
    if (r.next() != "ix,iy,tx,posterior_los,los_label,est_gain_db")
        throw ParseError(fmt::format("map line {}: missing record header", r.line()));
    m.cells.resize(count);
    for (int iy = 0; iy < m.ny; ++iy)
        for (int ix = 0; ix < m.nx; ++ix)
            for (std::size_t k = 0; k < m.tx_count(); ++k) {
                const auto rec = split(r.next());
                if (rec.size() != 6) throw ParseError(fmt::format("map line {}: expected 6 fields", r.line()));
                if (parse_num<int>(rec[0], r.line()) != ix || parse_num<int>(rec[1], r.line()) != iy ||
                    rec[2] != m.tx_ids[k])
                    throw ParseError(fmt::format("map line {}: record out of order", r.line()));
                MapCell& c = m.at(ix, iy, k);
                c.posterior_los = parse_num<double>(rec[3], r.line());
                const int label = parse_num<int>(rec[4], r.line());
                if (label != 0 && label != 1) throw ParseError(fmt::format("map line {}: label must be 0 or 1", r.line()));
                c.label = static_cast<LinkClass>(label);
                c.est_gain_db = parse_num<double>(rec[5], r.line());
                if (!(c.posterior_los >= 0.0 && c.posterior_los <= 1.0) || !std::isfinite(c.est_gain_db))
                    throw ParseError(fmt::format("map line {}: value out of range", r.line()));
            }
    if (r.next() != "end") throw ParseError(fmt::format("map line {}: missing end marker", r.line()));

    if (expected && !(*expected == m.provenance))
        res.warnings.push_back(fmt::format(
            "provenance mismatch: map built by '{}' (dataset seed {}, config {}), run expects '{}' (dataset seed {}, "
            "config {})",
            m.provenance.classifier, m.provenance.dataset_seed, m.provenance.config_fingerprint, expected->classifier,
            expected->dataset_seed, expected->config_fingerprint));
    return res;
}

void export_map(const ChannelMap& map, const std::filesystem::path& path)
{
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << map_to_text(map);
}

MapImport import_map(const std::filesystem::path& path, const std::optional<Provenance>& expected)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    return map_from_text(ss.str(), expected);
}

}  // namespace saginmap::chanmap
