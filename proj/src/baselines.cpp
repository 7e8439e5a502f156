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

#include "ppcc/baselines.hpp"

#include <optional>
#include <stdexcept>

namespace ppcc {

namespace {

std::optional<Vector<double>> mean_feature(const FeatureStore& store, const Tracklet& t) {
  Vector<double> sum = Vector<double>::Zero(store.dim());
  int n = 0;
  for (auto r = t.row_start; r < t.row_end; ++r) {
    if (!store.is_present(r)) continue;
    sum += store.values.row(r).cast<double>().transpose();
    ++n;
  }
  if (n == 0 || sum.norm() == 0.0) return std::nullopt;
  return sum / n;
}

/// Cosine to each portrait; nullopt entries where either side is missing.
std::vector<std::optional<double>> portrait_scores(const Dataset& ds, Channel channel,
                                                   const Tracklet& t) {
  std::vector<std::optional<double>> out(ds.num_classes());
  const FeatureStore& store = ds.store(channel);
  const auto mean = mean_feature(store, t);
  if (!mean) return out;
  for (const Portrait& p : ds.portraits) {
    const auto row = channel == Channel::kFace ? std::optional(p.face_row) : p.body_row;
    if (!row || !store.is_present(*row)) continue;
    out[p.class_index] = cosine_affinity(*mean, store.values.row(*row).transpose());
  }
  return out;
}

}  // namespace

const char* to_string(MatchChannel channel) {
  switch (channel) {
    case MatchChannel::kFace: return "face";
    case MatchChannel::kIde: return "ide";
    case MatchChannel::kFaceIde: return "face+ide";
  }
  return "face";
}

MatchChannel parse_match_channel(const std::string& name) {
  if (name == "face") return MatchChannel::kFace;
  if (name == "ide") return MatchChannel::kIde;
  if (name == "face+ide") return MatchChannel::kFaceIde;
  throw std::invalid_argument("unknown matching channel: " + name);
}

BeliefState match_portraits(const Dataset& ds, MatchChannel channel,
                            FusionWeights weights) {
  const int C = ds.num_classes();
  BeliefState state(ds.num_tracklets(), C);
  state.iterations = 1;
  for (int k = 0; k < ds.num_tracklets(); ++k) {
    const Tracklet& t = ds.tracklets[k];
    std::vector<std::optional<double>> face, body;
    if (channel != MatchChannel::kIde) face = portrait_scores(ds, Channel::kFace, t);
    if (channel != MatchChannel::kFace) body = portrait_scores(ds, Channel::kBody, t);
    bool any = false;
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      switch (channel) {
        case MatchChannel::kFace:
          if (face[c]) { s = *face[c]; any = true; }
          break;
        case MatchChannel::kIde:
          if (body[c]) { s = *body[c]; any = true; }
          break;
        case MatchChannel::kFaceIde:
          if (face[c]) { s += weights.face * *face[c]; any = true; }
          if (body[c]) { s += weights.body * *body[c]; any = true; }
          break;
      }
      state.probs(k, c) = s;
    }
    state.touched[k] = any ? 1 : 0;
    if (!any) state.probs.row(k).setZero();
  }
  return state;
}

}  // namespace ppcc
