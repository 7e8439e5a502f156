// Copyright 2026 The PPCC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Seeded synthetic galleries.
//
// Every identity (credited cast and distractors) owns one unit anchor in face
// space and one in body space. A portrait is its face anchor displaced by
// `portrait_gap`. A tracklet picks an identity, walks through body space from
// the body anchor with step `body_drift`, and emits one instance per step:
//
//   body_t = normalize(walk_t + noise * g)
//   face_t = normalize(face_anchor + noise * g), visible with probability q
//
// where g is a standard normal vector scaled by 1/sqrt(d), so `noise` and
// `body_drift` are expected displacement norms.
//
// Randomness: std::mt19937_64 with one stream per entity, keyed by
// std::seed_seq{seed_lo, seed_hi, kind, index}. Normals come from Box-Muller
// over 53-bit uniforms, so output is identical across standard libraries and
// independent of generation order.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppcc/dataset.hpp"

namespace ppcc {

struct SynthConfig {
  int num_classes = 5;
  int num_tracklets = 50;
  int num_movies = 2;
  int num_distractors = 5;  // identities behind OTHERS tracklets
  int face_dim = 64;
  int body_dim = 64;
  int min_instances = 2;
  int max_instances = 10;
  double face_visible = 0.3;     // q
  double body_drift = 0.3;       // random-walk step along a tracklet
  double noise = 0.2;            // per-instance noise
  double others_fraction = 0.2;  // rho
  double portrait_gap = 0.6;     // portrait face vs. gallery face anchor
  double portrait_body_gap = 1.0;
  bool portrait_body = true;     // emit a body row for portraits
  std::uint64_t seed = 7;

  bool operator==(const SynthConfig&) const = default;
};

/// Named presets: "easy" (noise-free), "hard", "noisy".
SynthConfig synth_preset(const std::string& name);

/// Human-readable invariant violations; empty when the config is usable.
std::vector<std::string> check_config(const SynthConfig& cfg);

/// Throws std::invalid_argument when check_config reports anything.
Dataset generate(const SynthConfig& cfg);

void to_json(nlohmann::json& j, const SynthConfig& cfg);
/// Missing keys keep the values already in `cfg`.
void from_json(const nlohmann::json& j, SynthConfig& cfg);

/// Portable per-entity random stream.
class EntityStream {
 public:
  enum class Kind : std::uint32_t { kIdentity = 1, kPortrait = 2, kTracklet = 3 };

  EntityStream(std::uint64_t seed, Kind kind, std::uint64_t index);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ppcc
