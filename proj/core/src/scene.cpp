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

#include "saginmap/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace saginmap {

namespace {

bool finite3(const Vec3& v) { return v.allFinite(); }

void require_finite(const Vec3& v, const char* what)
{
    if (!finite3(v)) throw InputError(fmt::format("{}: non-finite coordinate", what));
}

}  // namespace

bool Aabb::valid() const
{
    return finite3(min_corner) && finite3(max_corner) && (min_corner.array() < max_corner.array()).all();
}

bool Aabb::contains_strictly(const Vec3& p) const
{
    return (p.array() > min_corner.array()).all() && (p.array() < max_corner.array()).all();
}

std::string_view to_string(TxKind kind)
{
    switch (kind) {
    case TxKind::Satellite: return "satellite";
    case TxKind::Uav: return "uav";
    case TxKind::Ground: return "ground";
    }
    return "?";
}

TxKind tx_kind_from_string(std::string_view s)
{
    if (s == "satellite") return TxKind::Satellite;
    if (s == "uav") return TxKind::Uav;
    if (s == "ground") return TxKind::Ground;
    throw InputError(fmt::format("unknown transmitter kind '{}'", s));
}

void Scene::validate() const
{
    if (!(std::isfinite(bounds.min_x) && std::isfinite(bounds.max_x) && std::isfinite(bounds.min_y) &&
          std::isfinite(bounds.max_y)) ||
        !(bounds.min_x < bounds.max_x && bounds.min_y < bounds.max_y))
        throw InputError("bounds: min must be strictly below max");

    for (std::size_t i = 0; i < buildings.size(); ++i) {
        const auto& b = buildings[i];
        if (!b.valid()) throw InputError(fmt::format("buildings[{}]: min_corner must be < max_corner", i));
        if (b.min_corner.x() < bounds.min_x || b.max_corner.x() > bounds.max_x ||
            b.min_corner.y() < bounds.min_y || b.max_corner.y() > bounds.max_y)
            throw InputError(fmt::format("buildings[{}]: footprint outside bounds", i));
    }

    std::set<std::string, std::less<>> ids;
    for (std::size_t i = 0; i < transmitters.size(); ++i) {
        const auto& tx = transmitters[i];
        if (tx.id.empty() || tx.id.find_first_of(",\n\r\"") != std::string::npos)
            throw InputError(fmt::format("transmitters[{}]: id must be non-empty without , or quotes", i));
        if (!ids.insert(tx.id).second)
            throw InputError(fmt::format("transmitters[{}]: duplicate id '{}'", i, tx.id));
        if (!finite3(tx.position)) throw InputError(fmt::format("transmitters[{}]: non-finite position", i));
        const double z = tx.position.z();
        switch (tx.kind) {
        case TxKind::Satellite:
            if (z < 100e3) throw InputError(fmt::format("transmitters[{}]: satellite altitude below 100 km", i));
            break;
        case TxKind::Uav:
            if (z < 20.0 || z > 20e3)
                throw InputError(fmt::format("transmitters[{}]: uav altitude outside [20 m, 20 km]", i));
            break;
        case TxKind::Ground:
            if (z > 100.0) throw InputError(fmt::format("transmitters[{}]: ground altitude above 100 m", i));
            break;
        }
        if (!(tx.tx_power_dbm >= -30.0 && tx.tx_power_dbm <= 60.0))
            throw InputError(fmt::format("transmitters[{}]: tx_power_dbm outside [-30, 60]", i));
        if (!(tx.carrier_hz > 0.0 && std::isfinite(tx.carrier_hz)))
            throw InputError(fmt::format("transmitters[{}]: carrier_hz must be positive", i));
    }

    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto& u = users[i];
        if (!finite3(u)) throw InputError(fmt::format("users[{}]: non-finite position", i));
        if (!bounds.contains(u)) throw InputError(fmt::format("users[{}]: outside bounds", i));
        for (std::size_t b = 0; b < buildings.size(); ++b)
            if (buildings[b].contains_strictly(u))
                throw InputError(fmt::format("users[{}]: inside buildings[{}]", i, b));
    }
}

const Transmitter& Scene::transmitter(std::string_view id) const
{
    for (const auto& tx : transmitters)
        if (tx.id == id) return tx;
    throw InputError(fmt::format("no transmitter with id '{}'", id));
}

bool segment_intersects_aabb(const Vec3& p0, const Vec3& p1, const Aabb& box)
{
    require_finite(p0, "segment start");
    require_finite(p1, "segment end");
    if (!box.valid()) throw InputError("invalid box");

    // Slab clipping against the box shrunk by the tolerance, so that contact
    // with a face never registers as a crossing.
    double t_enter = 0.0;
    double t_exit = 1.0;
    const Vec3 dir = p1 - p0;
    for (int a = 0; a < 3; ++a) {
        const double lo = box.min_corner[a] + kGeomTolerance;
        const double hi = box.max_corner[a] - kGeomTolerance;
        if (dir[a] == 0.0) {
            if (p0[a] <= lo || p0[a] >= hi) return false;
            continue;
        }
        double t0 = (lo - p0[a]) / dir[a];
        double t1 = (hi - p0[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        t_enter = std::max(t_enter, t0);
        t_exit = std::min(t_exit, t1);
        if (t_enter >= t_exit) return false;
    }
    return t_enter < t_exit;
}

std::size_t count_blockers(const Scene& scene, const Vec3& a, const Vec3& b)
{
    return static_cast<std::size_t>(std::count_if(scene.buildings.begin(), scene.buildings.end(),
                                                  [&](const Aabb& box) { return segment_intersects_aabb(a, b, box); }));
}

bool los_test(const Scene& scene, const Vec3& tx_pos, const Vec3& rx_pos)
{
    require_finite(tx_pos, "tx position");
    require_finite(rx_pos, "rx position");
    return std::none_of(scene.buildings.begin(), scene.buildings.end(),
                        [&](const Aabb& box) { return segment_intersects_aabb(tx_pos, rx_pos, box); });
}

namespace {

struct FaceGeom {
    int axis;       // axis of the face normal (0 = x, 1 = y)
    double plane;   // coordinate of the face plane along `axis`
    double normal;  // +1 or -1, outward
};

FaceGeom face_geom(const Aabb& b, Face f)
{
    switch (f) {
    case Face::MinX: return {0, b.min_corner.x(), -1.0};
    case Face::MaxX: return {0, b.max_corner.x(), +1.0};
    case Face::MinY: return {1, b.min_corner.y(), -1.0};
    case Face::MaxY: return {1, b.max_corner.y(), +1.0};
    }
    return {0, 0.0, 1.0};
}

bool leg_clear(const Scene& scene, const Vec3& a, const Vec3& b)
{
    for (const auto& box : scene.buildings)
        if (segment_intersects_aabb(a, b, box)) return false;
    return true;
}

}  // namespace

std::vector<PropPath> reflected_paths(const Scene& scene, const Vec3& tx_pos, const Vec3& rx_pos)
{
    require_finite(tx_pos, "tx position");
    require_finite(rx_pos, "rx position");

    constexpr std::array faces{Face::MinX, Face::MaxX, Face::MinY, Face::MaxY};
    std::vector<PropPath> out;
    for (std::size_t bi = 0; bi < scene.buildings.size(); ++bi) {
        const Aabb& box = scene.buildings[bi];
        for (Face f : faces) {
            const FaceGeom g = face_geom(box, f);
            const int a = g.axis;
            const int other = 1 - a;
            // Both endpoints must be strictly in front of the face.
            if ((tx_pos[a] - g.plane) * g.normal <= kGeomTolerance) continue;
            if ((rx_pos[a] - g.plane) * g.normal <= kGeomTolerance) continue;

            Vec3 image = tx_pos;
            image[a] = 2.0 * g.plane - tx_pos[a];
            const double s = (g.plane - image[a]) / (rx_pos[a] - image[a]);
            Vec3 hit = image + s * (rx_pos - image);
            hit[a] = g.plane;
            if (hit[other] < box.min_corner[other] || hit[other] > box.max_corner[other]) continue;
            if (hit.z() < box.min_corner.z() || hit.z() > box.max_corner.z()) continue;
            if (!leg_clear(scene, tx_pos, hit) || !leg_clear(scene, hit, rx_pos)) continue;

            PropPath p;
            p.kind = PropPath::Kind::Reflected;
            p.length_m = (image - rx_pos).norm();
            p.reflect_face = FaceId{bi, f};
            p.reflection_point = hit;
            out.push_back(p);
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const PropPath& l, const PropPath& r) { return l.length_m < r.length_m; });
    return out;
}

double excess_delay_ns(double direct_m, double path_m)
{
    if (!(std::isfinite(direct_m) && std::isfinite(path_m)) || !(direct_m > 0.0))
        throw InputError("excess_delay_ns: lengths must be finite and positive");
    if (path_m < direct_m) throw InputError("excess_delay_ns: path shorter than direct distance");
    return (path_m - direct_m) / kSpeedOfLight * 1e9;
}

// --- JSON I/O ---------------------------------------------------------------

namespace {

using nlohmann::json;

const json& field(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object()) throw ParseError(fmt::format("{}: expected an object", where));
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(fmt::format("{}: missing key '{}'", where, key));
    return *it;
}

double number(const json& v, const std::string& where)
{
    if (!v.is_number()) throw ParseError(fmt::format("{}: expected a number", where));
    return v.get<double>();
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != N) throw ParseError(fmt::format("{}: expected an array of {} numbers", where, N));
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) out[i] = number(v[i], fmt::format("{}[{}]", where, i));
    return out;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

Scene scene_from_json_text(std::string_view text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(fmt::format("scene: {}", e.what()));
    }

    Scene s;
    const json& bounds = field(doc, "bounds", "scene");
    const auto bmin = vec<2>(field(bounds, "min", "bounds"), "bounds.min");
    const auto bmax = vec<2>(field(bounds, "max", "bounds"), "bounds.max");
    s.bounds = Rect{bmin.x(), bmin.y(), bmax.x(), bmax.y()};

    const json& buildings = field(doc, "buildings", "scene");
    if (!buildings.is_array()) throw ParseError("buildings: expected an array");
    for (std::size_t i = 0; i < buildings.size(); ++i) {
        const std::string where = fmt::format("buildings[{}]", i);
        Aabb b;
        b.min_corner = vec<3>(field(buildings[i], "min", where), where + ".min");
        b.max_corner = vec<3>(field(buildings[i], "max", where), where + ".max");
        s.buildings.push_back(b);
    }

    const json& txs = field(doc, "transmitters", "scene");
    if (!txs.is_array()) throw ParseError("transmitters: expected an array");
    for (std::size_t i = 0; i < txs.size(); ++i) {
        const std::string where = fmt::format("transmitters[{}]", i);
        Transmitter tx;
        const json& id = field(txs[i], "id", where);
        if (!id.is_string()) throw ParseError(where + ".id: expected a string");
        tx.id = id.get<std::string>();
        const json& kind = field(txs[i], "kind", where);
        if (!kind.is_string()) throw ParseError(where + ".kind: expected a string");
        try {
            tx.kind = tx_kind_from_string(kind.get<std::string>());
        } catch (const InputError& e) {
            throw ParseError(fmt::format("{}.kind: {}", where, e.what()));
        }
        tx.position = vec<3>(field(txs[i], "position", where), where + ".position");
        tx.tx_power_dbm = number(field(txs[i], "tx_power_dbm", where), where + ".tx_power_dbm");
        tx.carrier_hz = number(field(txs[i], "carrier_hz", where), where + ".carrier_hz");
        s.transmitters.push_back(tx);
    }

    const json& users = field(doc, "users", "scene");
    if (!users.is_array()) throw ParseError("users: expected an array");
    for (std::size_t i = 0; i < users.size(); ++i) s.users.push_back(vec<3>(users[i], fmt::format("users[{}]", i)));

    try {
        s.validate();
    } catch (const InputError& e) {
        throw ParseError(e.what());
    }
    return s;
}

std::string scene_to_json_text(const Scene& s)
{
    json doc;
    doc["bounds"] = {{"min", {s.bounds.min_x, s.bounds.min_y}}, {"max", {s.bounds.max_x, s.bounds.max_y}}};
    doc["buildings"] = json::array();
    for (const auto& b : s.buildings)
        doc["buildings"].push_back({{"min", vec_json(b.min_corner)}, {"max", vec_json(b.max_corner)}});
    doc["transmitters"] = json::array();
    for (const auto& tx : s.transmitters)
        doc["transmitters"].push_back({{"id", tx.id},
                                       {"kind", std::string(to_string(tx.kind))},
                                       {"position", vec_json(tx.position)},
                                       {"tx_power_dbm", tx.tx_power_dbm},
                                       {"carrier_hz", tx.carrier_hz}});
    doc["users"] = json::array();
    for (const auto& u : s.users) doc["users"].push_back(vec_json(u));
    return doc.dump(2) + "\n";
}

Scene load_scene(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open scene file {}", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return scene_from_json_text(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void save_scene(const Scene& scene, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write scene file {}", path.string()));
    out << scene_to_json_text(scene);
}

// --- Generation -------------------------------------------------------------

namespace {

bool footprints_clear(const Aabb& a, const Aabb& b, double gap)
{
    return a.max_corner.x() + gap <= b.min_corner.x() || b.max_corner.x() + gap <= a.min_corner.x() ||
           a.max_corner.y() + gap <= b.min_corner.y() || b.max_corner.y() + gap <= a.min_corner.y();
}

bool in_street(const Scene& s, double x, double y, double clearance)
{
    for (const auto& b : s.buildings)
        if (x > b.min_corner.x() - clearance && x < b.max_corner.x() + clearance &&
            y > b.min_corner.y() - clearance && y < b.max_corner.y() + clearance)
            return false;
    return true;
}

}  // namespace

Scene generate_scene(const SceneGenParams& p, std::uint64_t seed)
{
    if (p.building_count < 0 || p.user_count < 0 || !(p.width_m > 0.0 && p.depth_m > 0.0) ||
        !(p.min_footprint_m > 0.0 && p.min_footprint_m <= p.max_footprint_m) ||
        !(p.min_height_m > 0.0 && p.min_height_m <= p.max_height_m) || p.max_attempts < 1)
        throw ConfigError("scene generation: invalid parameters");
    if (p.max_footprint_m + 2.0 * p.street_clearance_m > std::min(p.width_m, p.depth_m))
        throw ConfigError("scene generation: footprint does not fit the area");

    Rng rng = make_rng(seed, Stream::Scene);
    Scene s;
    s.bounds = Rect{0.0, 0.0, p.width_m, p.depth_m};

    int attempts = 0;
    while (static_cast<int>(s.buildings.size()) < p.building_count) {
        if (++attempts > p.max_attempts)
            throw GenerationError(fmt::format("could not place {} buildings after {} attempts", p.building_count,
                                              p.max_attempts));
        const double w = uniform(rng, p.min_footprint_m, p.max_footprint_m);
        const double d = uniform(rng, p.min_footprint_m, p.max_footprint_m);
        const double h = uniform(rng, p.min_height_m, p.max_height_m);
        const double x = uniform(rng, p.street_clearance_m, p.width_m - p.street_clearance_m - w);
        const double y = uniform(rng, p.street_clearance_m, p.depth_m - p.street_clearance_m - d);
        Aabb b{Vec3(x, y, 0.0), Vec3(x + w, y + d, h)};
        const bool ok = std::all_of(s.buildings.begin(), s.buildings.end(), [&](const Aabb& o) {
            return footprints_clear(b, o, 2.0 * p.street_clearance_m);
        });
        if (ok) s.buildings.push_back(b);
    }

    auto street_point = [&](double z, double clearance) {
        for (int i = 0; i < p.max_attempts; ++i) {
            const double x = uniform(rng, 0.0, p.width_m);
            const double y = uniform(rng, 0.0, p.depth_m);
            if (in_street(s, x, y, clearance)) return Vec3(x, y, z);
        }
        throw GenerationError("could not find a street position");
    };

    const double cx = 0.5 * p.width_m;
    const double cy = 0.5 * p.depth_m;
    const double az = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double elev = p.satellite_elevation_deg * std::numbers::pi / 180.0;
    const double horiz = p.satellite_altitude_m / std::tan(elev);
    s.transmitters.push_back({"sat-1", TxKind::Satellite,
                              Vec3(cx + horiz * std::sin(az), cy + horiz * std::cos(az), p.satellite_altitude_m),
                              50.0, 1.57542e9});
    s.transmitters.push_back({"uav-1", TxKind::Uav,
                              Vec3(uniform(rng, 0.25, 0.75) * p.width_m, uniform(rng, 0.25, 0.75) * p.depth_m,
                                   p.uav_altitude_m),
                              20.0, 2.4e9});
    s.transmitters.push_back({"ap-1", TxKind::Ground, street_point(p.ground_ap_height_m, 1.0), 30.0, 3.5e9});

    for (int i = 0; i < p.user_count; ++i) s.users.push_back(street_point(p.user_height_m, 1.0));

    s.validate();
    return s;
}

}  // namespace saginmap
