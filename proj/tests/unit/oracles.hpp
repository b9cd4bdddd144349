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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "saginmap/scene.hpp"

namespace saginmap::testing {

/// Depth of p inside box: positive inside, negative outside (min over the
/// six face distances).
inline double inside_depth(const Vec3& p, const Aabb& b)
{
    double d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) d = std::min({d, p[i] - b.min_corner[i], b.max_corner[i] - p[i]});
    return d;
}

/// Maximum inside_depth along the segment: 1000-point uniform sampling, then
/// golden-section refinement around the best sample (the depth is concave in
/// the segment parameter, so the refinement finds the true maximum).
inline double max_depth_along(const Vec3& p0, const Vec3& p1, const Aabb& b)
{
    constexpr int kSamples = 1000;
    auto at = [&](double s) { return inside_depth(p0 + s * (p1 - p0), b); };
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kSamples; ++i) {
        const double v = at(static_cast<double>(i) / kSamples);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    double lo = std::max(0.0, (best - 1.0) / kSamples);
    double hi = std::min(1.0, (best + 1.0) / kSamples);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
        const double a = hi - g * (hi - lo);
        const double c = lo + g * (hi - lo);
        if (at(a) < at(c))
            lo = a;
        else
            hi = c;
    }
    return std::max(best_v, at(0.5 * (lo + hi)));
}

inline std::filesystem::path temp_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("saginmap_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace saginmap::testing
