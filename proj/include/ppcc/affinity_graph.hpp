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

// Tracklet-level propagation graph.
//
// Nodes are numbered portraits first: node c < C is the portrait of class c,
// node C + k is tracklet k. Each tracklet keeps at most one link to any other
// node, weighted by the strongest instance-pair cosine affinity between the
// two, and normalizes the kept weights into alpha_kj = w_kj / sum_j' w_kj'.
// Portraits carry no neighbor lists; they are fixed sources.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ppcc/common.hpp"
#include "ppcc/dataset.hpp"

namespace ppcc {

/// Cosine similarity u.v / (|u| |v|), evaluated in double precision.
template <typename DerivedA, typename DerivedB>
double cosine_affinity(const Eigen::MatrixBase<DerivedA>& u,
                       const Eigen::MatrixBase<DerivedB>& v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine_affinity: dimension mismatch");
  }
  const auto a = u.template cast<double>();
  const auto b = v.template cast<double>();
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_affinity: zero-norm vector");
  }
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

/// Half-open range of feature rows: a tracklet's instances or a single
/// portrait row.
struct RowRange {
  Eigen::Index start = 0;
  Eigen::Index end = 0;

  static RowRange of(const Tracklet& t) { return {t.row_start, t.row_end}; }
  static RowRange single(Eigen::Index row) { return {row, row + 1}; }
};

struct PairAffinity {
  double affinity = 0.0;
  Eigen::Index row_a = 0;  // anchoring instance on side a
  Eigen::Index row_b = 0;  // anchoring instance on side b
};

/// Strongest cosine affinity over all present row pairs. The first attaining
/// pair in (row_a, row_b) order is reported. std::nullopt when either side has
/// no present row.
std::optional<PairAffinity> tracklet_pair_affinity(RowRange a, RowRange b,
                                                   const FeatureStore& store);

struct FusionWeights {
  double face = 0.8;
  double body = 0.2;
};

/// Like tracklet_pair_affinity but scoring each instance pair by
/// face * cos_face + body * cos_body when both instances show a face, and by
/// the body cosine alone otherwise.
std::optional<PairAffinity> fused_pair_affinity(RowRange a, RowRange b,
                                                const FeatureStore& face,
                                                const FeatureStore& body,
                                                FusionWeights weights);

struct GraphParams {
  int knn = 20;
  double floor = 0.0;
  Channel portrait_channel = Channel::kFace;
  Channel gallery_channel = Channel::kBody;
  bool fuse = true;
  FusionWeights fusion;
};

struct Neighbor {
  std::uint32_t node = 0;
  double affinity = 0.0;  // w~_kj
  double alpha = 0.0;     // normalized weight
  std::int64_t anchor_self = 0;
  std::int64_t anchor_other = 0;
};

struct PropagationGraph {
  int num_classes = 0;
  int num_tracklets = 0;
  GraphParams params;
  // CSR neighbor runs: tracklet k owns edges[offsets[k], offsets[k + 1]).
  std::vector<std::uint64_t> offsets{0};
  std::vector<Neighbor> edges;
  // Non-empty for instance-level graphs: owning tracklet of each node, and
  // the number of tracklets beliefs are pooled into.
  std::vector<std::uint32_t> pool_group;
  int pooled_tracklets = 0;

  std::span<const Neighbor> neighbors(int k) const {
    return {edges.data() + offsets[k], edges.data() + offsets[k + 1]};
  }
  bool is_portrait(std::uint32_t node) const {
    return node < static_cast<std::uint32_t>(num_classes);
  }
};

/// Throws std::invalid_argument for knn < 1 or fusion weights not summing
/// to one.
PropagationGraph build_graph(const Dataset& ds, const GraphParams& params);

/// Dataset whose tracklets are the single instances of `ds`, in row order.
/// Removes the temporal constraint while keeping every visual link.
Dataset instance_level_dataset(const Dataset& ds);

/// build_graph over instance_level_dataset(ds), recording for each node the
/// tracklet it came from so beliefs can be pooled back.
PropagationGraph build_instance_graph(const Dataset& ds,
                                      const GraphParams& params);

/// Binary adjacency file, all little-endian:
///   header  "PPCG", u32 version, u32 C, u32 M, u32 knn, f64 floor,
///           u8 portrait channel, u8 gallery channel, u8 fuse,
///           f64 face weight, f64 body weight, u32 pooled tracklets (0 = none)
///   pools   M x u32 owning tracklet, only when pooled tracklets > 0
///   runs    per tracklet: u32 count, then count x
///           {u32 node, f64 affinity, f64 alpha, i64 anchor_self, i64 anchor_other}
void save_graph(const PropagationGraph& graph, const std::filesystem::path& path);
PropagationGraph load_graph(const std::filesystem::path& path);

}  // namespace ppcc
