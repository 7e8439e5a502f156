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

#include "ppcc/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace ppcc {

namespace {

using Vec = Vector<double>;

Vec gaussian(EntityStream& rng, int dim) {
  Vec g(dim);
  for (int i = 0; i < dim; ++i) g[i] = rng.normal();
  return g / std::sqrt(static_cast<double>(dim));
}

Vec unit_anchor(EntityStream& rng, int dim) {
  Vec v = gaussian(rng, dim);
  while (v.norm() == 0.0) v = gaussian(rng, dim);
  return v.normalized();
}

Vec perturb(const Vec& base, double scale, EntityStream& rng) {
  Vec g = gaussian(rng, static_cast<int>(base.size()));
  Vec v = base + scale * g;
  const double n = v.norm();
  return n > 0.0 ? Vec(v / n) : base;
}

struct Identity {
  Vec face;
  Vec body;
};

struct TrackletDraw {
  int identity = 0;  // index into identities; >= C means distractor
  int gt = kOthers;
  int movie = 0;
  std::vector<Vec> face;
  std::vector<std::uint8_t> face_visible;
  std::vector<Vec> body;
};

std::string padded(const char* prefix, int value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%02d", prefix, value);
  return buf;
}

}  // namespace

EntityStream::EntityStream(std::uint64_t seed, Kind kind, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(kind),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  engine_.seed(seq);
}

double EntityStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int EntityStream::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(engine_() % span);
}

double EntityStream::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SynthConfig synth_preset(const std::string& name) {
  SynthConfig cfg;
  if (name == "easy") {
    cfg.face_visible = 1.0;
    cfg.body_drift = 0.0;
    cfg.noise = 0.0;
    cfg.others_fraction = 0.0;
    cfg.portrait_gap = 0.0;
    cfg.portrait_body_gap = 0.0;
  } else if (name == "hard") {
    cfg.face_dim = 12;
    cfg.body_dim = 128;
    cfg.min_instances = 1;
    cfg.max_instances = 4;
    cfg.face_visible = 0.3;
    cfg.body_drift = 1.0;
    cfg.noise = 0.3;
    cfg.others_fraction = 0.4;
    cfg.portrait_gap = 0.8;
    cfg.portrait_body_gap = 4.0;
  } else if (name == "noisy") {
    cfg.num_classes = 10;
    cfg.num_tracklets = 400;
    cfg.num_movies = 4;
    cfg.face_dim = 12;
    cfg.body_dim = 128;
    cfg.min_instances = 1;
    cfg.max_instances = 8;
    cfg.face_visible = 0.9;
    cfg.body_drift = 0.5;
    cfg.noise = 0.5;
    cfg.others_fraction = 0.3;
    cfg.portrait_gap = 1.5;
    cfg.portrait_body_gap = 4.0;
  } else {
    throw std::invalid_argument("unknown synth preset: " + name);
  }
  return cfg;
}

std::vector<std::string> check_config(const SynthConfig& cfg) {
  std::vector<std::string> out;
  auto need = [&](bool ok, const char* what) {
    if (!ok) out.emplace_back(what);
  };
  need(cfg.num_classes >= 1, "num_classes must be >= 1");
  need(cfg.num_tracklets >= 1, "num_tracklets must be >= 1");
  need(cfg.num_movies >= 1, "num_movies must be >= 1");
  need(cfg.num_distractors >= 0, "num_distractors must be >= 0");
  need(cfg.face_dim >= 1 && cfg.face_dim <= 65535, "face_dim must be in [1, 65535]");
  need(cfg.body_dim >= 1 && cfg.body_dim <= 65535, "body_dim must be in [1, 65535]");
  need(cfg.min_instances >= 1, "min_instances must be >= 1");
  need(cfg.max_instances >= cfg.min_instances, "max_instances must be >= min_instances");
  need(cfg.face_visible >= 0.0 && cfg.face_visible <= 1.0, "face_visible must be in [0, 1]");
  need(cfg.others_fraction >= 0.0 && cfg.others_fraction < 1.0,
       "others_fraction must be in [0, 1)");
  need(cfg.body_drift >= 0.0, "body_drift must be >= 0");
  need(cfg.noise >= 0.0, "noise must be >= 0");
  need(cfg.portrait_gap >= 0.0, "portrait_gap must be >= 0");
  need(cfg.portrait_body_gap >= 0.0, "portrait_body_gap must be >= 0");
  need(cfg.others_fraction == 0.0 || cfg.num_distractors >= 1,
       "others_fraction > 0 needs at least one distractor identity");
  return out;
}

Dataset generate(const SynthConfig& cfg) {
  if (auto errors = check_config(cfg); !errors.empty()) {
    std::string msg = "invalid synth config:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
  const int C = cfg.num_classes;
  const int M = cfg.num_tracklets;
  const std::uint64_t seed = cfg.seed;
  using Kind = EntityStream::Kind;

  std::vector<Identity> identities;
  for (int i = 0; i < C + cfg.num_distractors; ++i) {
    EntityStream rng(seed, Kind::kIdentity, i);
    Identity id;
    id.face = unit_anchor(rng, cfg.face_dim);
    id.body = unit_anchor(rng, cfg.body_dim);
    identities.push_back(std::move(id));
  }

  // Every (class, movie) pair gets one guaranteed tracklet when M allows it,
  // so each credited cast member has positives in every movie.
  const bool cover_all = M >= C * cfg.num_movies;
  std::vector<TrackletDraw> draws(M);
  for (int k = 0; k < M; ++k) {
    EntityStream rng(seed, Kind::kTracklet, k);
    TrackletDraw& d = draws[k];
    d.movie = k % cfg.num_movies;
    if (cover_all && k < C * cfg.num_movies) {
      d.identity = k / cfg.num_movies;
    } else if (rng.bernoulli(cfg.others_fraction)) {
      d.identity = C + rng.uniform_int(0, cfg.num_distractors - 1);
    } else {
      d.identity = rng.uniform_int(0, C - 1);
    }
    d.gt = d.identity < C ? d.identity : kOthers;
    const Identity& id = identities[d.identity];
    const int n = rng.uniform_int(cfg.min_instances, cfg.max_instances);
    Vec walk = perturb(id.body, cfg.body_drift, rng);
    for (int t = 0; t < n; ++t) {
      if (t > 0) walk = perturb(walk, cfg.body_drift, rng);
      d.body.push_back(perturb(walk, cfg.noise, rng));
      d.face.push_back(perturb(id.face, cfg.noise, rng));
      d.face_visible.push_back(rng.bernoulli(cfg.face_visible) ? 1 : 0);
    }
  }

  std::int64_t rows = C;
  for (const auto& d : draws) rows += static_cast<std::int64_t>(d.body.size());

  Dataset ds;
  ds.manifest.split = "synthetic";
  ds.manifest.num_classes = C;
  ds.manifest.num_tracklets = M;
  ds.face.channel = Channel::kFace;
  ds.face.values = RowMatrix<float>::Zero(rows, cfg.face_dim);
  ds.face.present.assign(rows, 0);
  ds.body.channel = Channel::kBody;
  ds.body.values = RowMatrix<float>::Zero(rows, cfg.body_dim);
  ds.body.present.assign(rows, 0);

  for (int c = 0; c < C; ++c) {
    EntityStream rng(seed, Kind::kPortrait, c);
    ds.face.values.row(c) =
        perturb(identities[c].face, cfg.portrait_gap, rng).cast<float>().transpose();
    ds.face.present[c] = 1;
    Portrait p;
    p.cast_id = padded("cast", c);
    p.class_index = c;
    p.face_row = c;
    if (cfg.portrait_body) {
      ds.body.values.row(c) = perturb(identities[c].body, cfg.portrait_body_gap, rng)
                                  .cast<float>()
                                  .transpose();
      ds.body.present[c] = 1;
      p.body_row = c;
    }
    ds.portraits.push_back(std::move(p));
  }

  std::int64_t row = C;
  for (int k = 0; k < M; ++k) {
    const TrackletDraw& d = draws[k];
    Tracklet t;
    t.id = k;
    t.movie = padded("m", d.movie);
    t.row_start = row;
    t.gt = d.gt;
    for (std::size_t i = 0; i < d.body.size(); ++i, ++row) {
      ds.body.values.row(row) = d.body[i].cast<float>().transpose();
      ds.body.present[row] = 1;
      if (d.face_visible[i]) {
        ds.face.values.row(row) = d.face[i].cast<float>().transpose();
        ds.face.present[row] = 1;
      }
    }
    t.row_end = row;
    ds.tracklets.push_back(std::move(t));
  }
  return ds;
}

void to_json(nlohmann::json& j, const SynthConfig& cfg) {
  j = nlohmann::json{
      {"num_classes", cfg.num_classes},
      {"num_tracklets", cfg.num_tracklets},
      {"num_movies", cfg.num_movies},
      {"num_distractors", cfg.num_distractors},
      {"face_dim", cfg.face_dim},
      {"body_dim", cfg.body_dim},
      {"min_instances", cfg.min_instances},
      {"max_instances", cfg.max_instances},
      {"face_visible", cfg.face_visible},
      {"body_drift", cfg.body_drift},
      {"noise", cfg.noise},
      {"others_fraction", cfg.others_fraction},
      {"portrait_gap", cfg.portrait_gap},
      {"portrait_body_gap", cfg.portrait_body_gap},
      {"portrait_body", cfg.portrait_body},
      {"seed", cfg.seed},
  };
}

void from_json(const nlohmann::json& j, SynthConfig& cfg) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("num_classes", cfg.num_classes);
  get("num_tracklets", cfg.num_tracklets);
  get("num_movies", cfg.num_movies);
  get("num_distractors", cfg.num_distractors);
  get("face_dim", cfg.face_dim);
  get("body_dim", cfg.body_dim);
  get("min_instances", cfg.min_instances);
  get("max_instances", cfg.max_instances);
  get("face_visible", cfg.face_visible);
  get("body_drift", cfg.body_drift);
  get("noise", cfg.noise);
  get("others_fraction", cfg.others_fraction);
  get("portrait_gap", cfg.portrait_gap);
  get("portrait_body_gap", cfg.portrait_body_gap);
  get("portrait_body", cfg.portrait_body);
  get("seed", cfg.seed);
}

}  // namespace ppcc
