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

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace saginmap {

using Vec3 = Eigen::Vector3d;

/// Speed of light in vacuum, m/s.
inline constexpr double kSpeedOfLight = 299'792'458.0;

// Error hierarchy. Each category maps onto one CLI exit code (see tools/).

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied a value outside the operation's domain.
class InputError : public Error {
public:
    using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents; the message carries the position.
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite value appeared during a numeric computation.
class NumericFault : public Error {
public:
    using Error::Error;
};

class TrainingFault : public Error {
public:
    using Error::Error;
};

/// Randomized generation could not satisfy its constraints (reseed and retry).
class GenerationError : public Error {
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a list of
/// indices, e.g. stream_seed(seed, sample_index). Order of arguments matters.
template <typename... Ts>
constexpr std::uint64_t stream_seed(std::uint64_t base, Ts... keys) noexcept
{
    std::uint64_t h = mix64(base);
    ((h = mix64(h ^ mix64(static_cast<std::uint64_t>(keys)))), ...);
    return h;
}

/// Named stream tags, so that e.g. training and evaluation never share draws.
enum class Stream : std::uint64_t {
    Scene = 0x5C3E,
    Sample = 0x5A3B,
    Split = 0x5B17,
    Training = 0x7A41,
    Evaluation = 0xE7A1,
    Classification = 0xC1A5,
    Baseline = 0xBA5E,
    Map = 0x3A9,
    Policy = 0x9011,
    Episode = 0xE915,
    Flip = 0xF119,
};

template <typename... Ts>
Rng make_rng(std::uint64_t base, Stream tag, Ts... keys)
{
    return Rng(stream_seed(base, static_cast<std::uint64_t>(tag), keys...));
}

inline double standard_normal(Rng& rng)
{
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace saginmap
