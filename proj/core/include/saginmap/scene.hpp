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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saginmap/common.hpp"

namespace saginmap {

/// Axis-aligned building volume.
struct Aabb {
    Vec3 min_corner = Vec3::Zero();
    Vec3 max_corner = Vec3::Zero();

    bool valid() const;
    /// Strict interior test (points on a face are outside).
    bool contains_strictly(const Vec3& p) const;
};

enum class TxKind { Satellite, Uav, Ground };

std::string_view to_string(TxKind kind);
TxKind tx_kind_from_string(std::string_view s);

struct Transmitter {
    std::string id;
    TxKind kind = TxKind::Ground;
    Vec3 position = Vec3::Zero();
    double tx_power_dbm = 0.0;
    double carrier_hz = 1.0;
};

/// Horizontal service area.
struct Rect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    bool contains(const Vec3& p) const
    {
        return p.x() >= min_x && p.x() <= max_x && p.y() >= min_y && p.y() <= max_y;
    }
    double width() const { return max_x - min_x; }
    double height() const { return max_y - min_y; }
};

struct Scene {
    Rect bounds;
    std::vector<Aabb> buildings;
    std::vector<Transmitter> transmitters;
    std::vector<Vec3> users;

    /// Throws InputError naming the first violated invariant.
    void validate() const;
    const Transmitter& transmitter(std::string_view id) const;
};

enum class Face { MinX, MaxX, MinY, MaxY };

struct FaceId {
    std::size_t building = 0;
    Face face = Face::MinX;
    bool operator==(const FaceId&) const = default;
};

struct PropPath {
    enum class Kind { Direct, Reflected };
    Kind kind = Kind::Direct;
    double length_m = 0.0;
    std::optional<FaceId> reflect_face;
    /// Specular point for reflected paths.
    Vec3 reflection_point = Vec3::Zero();
};

/// Boundary tolerance for intersection tests, meters.
inline constexpr double kGeomTolerance = 1e-9;

/// True iff the open segment (p0, p1) passes through the interior of `box`.
/// Touching a face within kGeomTolerance does not count.
bool segment_intersects_aabb(const Vec3& p0, const Vec3& p1, const Aabb& box);

/// Number of buildings that block the segment.
std::size_t count_blockers(const Scene& scene, const Vec3& a, const Vec3& b);

/// Line-of-sight between tx and rx. rx must lie within the scene bounds.
bool los_test(const Scene& scene, const Vec3& tx_pos, const Vec3& rx_pos);

/// First-order specular reflections off vertical building faces (image
/// method), sorted by ascending path length.
std::vector<PropPath> reflected_paths(const Scene& scene, const Vec3& tx_pos, const Vec3& rx_pos);

/// Extra propagation delay of a path over the direct one, in nanoseconds.
double excess_delay_ns(double direct_m, double path_m);

// Scene file I/O (JSON). See docs in README for the schema.
Scene scene_from_json_text(std::string_view text);
std::string scene_to_json_text(const Scene& scene);
Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

struct SceneGenParams {
    double width_m = 400.0;
    double depth_m = 400.0;
    int building_count = 20;
    double min_footprint_m = 20.0;
    double max_footprint_m = 60.0;
    double min_height_m = 15.0;
    double max_height_m = 60.0;
    double street_clearance_m = 6.0;
    int user_count = 4;
    double user_height_m = 1.5;
    double satellite_altitude_m = 550e3;
    double satellite_elevation_deg = 35.0;
    double uav_altitude_m = 120.0;
    double ground_ap_height_m = 12.0;
    int max_attempts = 10000;
};

/// Random urban layout with one satellite, one UAV, one ground AP.
/// Throws GenerationError if placement fails within max_attempts.
Scene generate_scene(const SceneGenParams& params, std::uint64_t seed);

}  // namespace saginmap
