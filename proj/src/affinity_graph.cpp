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

#include "ppcc/affinity_graph.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <string>

#include "ppcc/binary_io.hpp"
#include "ppcc/parallel.hpp"

namespace ppcc {

namespace {

constexpr std::array<std::uint8_t, 4> kGraphMagic{'P', 'P', 'C', 'G'};
constexpr std::uint32_t kGraphVersion = 1;

/// Rows scaled to unit norm in double precision; absent rows stay zero.
RowMatrix<double> unit_rows(const FeatureStore& store) {
  RowMatrix<double> out = RowMatrix<double>::Zero(store.rows(), store.dim());
  for (Eigen::Index r = 0; r < store.rows(); ++r) {
    if (!store.is_present(r)) continue;
    const auto row = store.values.row(r).cast<double>();
    const double n = row.norm();
    if (n > 0.0) out.row(r) = row / n;
  }
  return out;
}

struct Candidate {
  std::uint32_t node;
  double affinity;
  std::int64_t anchor_self;
  std::int64_t anchor_other;
};

void check_params(const GraphParams& params) {
  if (params.knn < 1) throw std::invalid_argument("build_graph: knn must be >= 1");
  if (params.fuse) {
    const double sum = params.fusion.face + params.fusion.body;
    if (std::abs(sum - 1.0) > 1e-9 || params.fusion.face < 0.0 ||
        params.fusion.body < 0.0) {
      throw std::invalid_argument(
          "build_graph: fusion weights must be non-negative and sum to 1");
    }
  }
}

std::optional<std::int64_t> portrait_row(const Portrait& p, Channel channel) {
  if (channel == Channel::kFace) return p.face_row;
  return p.body_row;
}

}  // namespace

std::optional<PairAffinity> tracklet_pair_affinity(RowRange a, RowRange b,
                                                   const FeatureStore& store) {
  std::optional<PairAffinity> best;
  for (Eigen::Index i = a.start; i < a.end; ++i) {
    if (!store.is_present(i)) continue;
    for (Eigen::Index j = b.start; j < b.end; ++j) {
      if (!store.is_present(j)) continue;
      const double w = cosine_affinity(store.values.row(i), store.values.row(j));
      if (!best || w > best->affinity) best = PairAffinity{w, i, j};
    }
  }
  return best;
}

std::optional<PairAffinity> fused_pair_affinity(RowRange a, RowRange b,
                                                const FeatureStore& face,
                                                const FeatureStore& body,
                                                FusionWeights weights) {
  std::optional<PairAffinity> best;
  for (Eigen::Index i = a.start; i < a.end; ++i) {
    if (!body.is_present(i)) continue;
    for (Eigen::Index j = b.start; j < b.end; ++j) {
      if (!body.is_present(j)) continue;
      double w = cosine_affinity(body.values.row(i), body.values.row(j));
      if (face.is_present(i) && face.is_present(j)) {
        w = weights.face * cosine_affinity(face.values.row(i), face.values.row(j)) +
            weights.body * w;
      }
      if (!best || w > best->affinity) best = PairAffinity{w, i, j};
    }
  }
  return best;
}

PropagationGraph build_graph(const Dataset& ds, const GraphParams& params) {
  check_params(params);
  const int C = ds.num_classes();
  const int M = ds.num_tracklets();

  const FeatureStore& pstore = ds.store(params.portrait_channel);
  const FeatureStore& gstore = ds.store(params.gallery_channel);
  const RowMatrix<double> pn = unit_rows(pstore);
  const RowMatrix<double> gn = unit_rows(gstore);
  const bool fuse = params.fuse;
  const RowMatrix<double> fn = fuse ? unit_rows(ds.face) : RowMatrix<double>();
  const RowMatrix<double> bn = fuse ? unit_rows(ds.body) : RowMatrix<double>();

  std::vector<std::vector<Neighbor>> lists(M);
  parallel_for(M, [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    const Tracklet& tk = ds.tracklets[k];
    const Eigen::Index n = tk.size();
    std::vector<Candidate> cands;

    // Portrait links: one strongest instance per portrait.
    for (const Portrait& p : ds.portraits) {
      const auto prow = portrait_row(p, params.portrait_channel);
      if (!prow || !pstore.is_present(*prow)) continue;
      const Vector<double> sims = pn.middleRows(tk.row_start, n) * pn.row(*prow).transpose();
      std::optional<Candidate> best;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!pstore.is_present(tk.row_start + i)) continue;
        if (!best || sims[i] > best->affinity) {
          best = Candidate{static_cast<std::uint32_t>(p.class_index), sims[i],
                           tk.row_start + i, *prow};
        }
      }
      if (best) cands.push_back(*best);
    }

    // Tracklet links from one block product per channel against every row.
    const RowMatrix<double> gsim = gn.middleRows(tk.row_start, n) * gn.transpose();
    RowMatrix<double> fsim, bsim;
    if (fuse) {
      fsim = fn.middleRows(tk.row_start, n) * fn.transpose();
      bsim = bn.middleRows(tk.row_start, n) * bn.transpose();
    }
    for (int l = 0; l < M; ++l) {
      if (l == k) continue;
      const Tracklet& tl = ds.tracklets[l];
      std::optional<Candidate> best;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index ri = tk.row_start + i;
        for (Eigen::Index rj = tl.row_start; rj < tl.row_end; ++rj) {
          double w;
          if (fuse && ds.body.is_present(ri) && ds.body.is_present(rj)) {
            w = bsim(i, rj);
            if (ds.face.is_present(ri) && ds.face.is_present(rj)) {
              w = params.fusion.face * fsim(i, rj) + params.fusion.body * w;
            }
          } else if (!fuse && gstore.is_present(ri) && gstore.is_present(rj)) {
            w = gsim(i, rj);
          } else {
            continue;
          }
          if (!best || w > best->affinity) {
            best = Candidate{static_cast<std::uint32_t>(C + l), w, ri, rj};
          }
        }
      }
      if (best) cands.push_back(*best);
    }

    std::erase_if(cands, [&](const Candidate& c) {
      return !(c.affinity >= params.floor) || c.affinity <= 0.0;
    });
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.affinity != b.affinity ? a.affinity > b.affinity : a.node < b.node;
    });
    if (cands.size() > static_cast<std::size_t>(params.knn)) cands.resize(params.knn);

    double total = 0.0;
    for (const auto& c : cands) total += c.affinity;
    auto& out = lists[k];
    for (const auto& c : cands) {
      out.push_back({c.node, c.affinity, c.affinity / total, c.anchor_self,
                     c.anchor_other});
    }
  });

  PropagationGraph g;
  g.num_classes = C;
  g.num_tracklets = M;
  g.params = params;
  g.offsets.reserve(M + 1);
  for (auto& list : lists) {
    g.edges.insert(g.edges.end(), list.begin(), list.end());
    g.offsets.push_back(g.edges.size());
  }
  return g;
}

Dataset instance_level_dataset(const Dataset& ds) {
  Dataset out;
  out.manifest = ds.manifest;
  out.portraits = ds.portraits;
  out.face = ds.face;
  out.body = ds.body;
  std::int64_t next_id = 0;
  for (const Tracklet& t : ds.tracklets) {
    for (std::int64_t r = t.row_start; r < t.row_end; ++r) {
      out.tracklets.push_back({next_id++, t.movie, r, r + 1, t.gt});
    }
  }
  out.manifest.num_tracklets = static_cast<int>(out.tracklets.size());
  return out;
}

PropagationGraph build_instance_graph(const Dataset& ds,
                                      const GraphParams& params) {
  PropagationGraph g = build_graph(instance_level_dataset(ds), params);
  g.pooled_tracklets = ds.num_tracklets();
  for (int k = 0; k < ds.num_tracklets(); ++k) {
    for (std::int64_t i = 0; i < ds.tracklets[k].size(); ++i) {
      g.pool_group.push_back(static_cast<std::uint32_t>(k));
    }
  }
  return g;
}

void save_graph(const PropagationGraph& g, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.raw(kGraphMagic);
  w.u32(kGraphVersion);
  w.u32(static_cast<std::uint32_t>(g.num_classes));
  w.u32(static_cast<std::uint32_t>(g.num_tracklets));
  w.u32(static_cast<std::uint32_t>(g.params.knn));
  w.f64(g.params.floor);
  w.u8(static_cast<std::uint8_t>(g.params.portrait_channel));
  w.u8(static_cast<std::uint8_t>(g.params.gallery_channel));
  w.u8(g.params.fuse ? 1 : 0);
  w.f64(g.params.fusion.face);
  w.f64(g.params.fusion.body);
  w.u32(static_cast<std::uint32_t>(g.pooled_tracklets));
  if (g.pooled_tracklets > 0) {
    for (auto p : g.pool_group) w.u32(p);
  }
  for (int k = 0; k < g.num_tracklets; ++k) {
    const auto run = g.neighbors(k);
    w.u32(static_cast<std::uint32_t>(run.size()));
    for (const Neighbor& nb : run) {
      w.u32(nb.node);
      w.f64(nb.affinity);
      w.f64(nb.alpha);
      w.u64(static_cast<std::uint64_t>(nb.anchor_self));
      w.u64(static_cast<std::uint64_t>(nb.anchor_other));
    }
  }
  w.write_file(path);
}

PropagationGraph load_graph(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  for (auto b : kGraphMagic) {
    if (r.u8() != b) throw io::FormatError(path.string() + ": not a graph file");
  }
  if (const auto v = r.u32(); v != kGraphVersion) {
    throw io::FormatError(path.string() + ": unsupported graph version " +
                          std::to_string(v));
  }
  PropagationGraph g;
  g.num_classes = static_cast<int>(r.u32());
  g.num_tracklets = static_cast<int>(r.u32());
  g.params.knn = static_cast<int>(r.u32());
  g.params.floor = r.f64();
  g.params.portrait_channel = static_cast<Channel>(r.u8());
  g.params.gallery_channel = static_cast<Channel>(r.u8());
  g.params.fuse = r.u8() != 0;
  g.params.fusion.face = r.f64();
  g.params.fusion.body = r.f64();
  g.pooled_tracklets = static_cast<int>(r.u32());
  if (g.pooled_tracklets > 0) {
    g.pool_group.resize(g.num_tracklets);
    for (auto& p : g.pool_group) {
      p = r.u32();
      if (p >= static_cast<std::uint32_t>(g.pooled_tracklets)) {
        throw io::FormatError(path.string() + ": pool group out of range");
      }
    }
  }
  const auto nodes = static_cast<std::uint32_t>(g.num_classes + g.num_tracklets);
  for (int k = 0; k < g.num_tracklets; ++k) {
    const std::uint32_t count = r.u32();
    for (std::uint32_t e = 0; e < count; ++e) {
      Neighbor nb;
      nb.node = r.u32();
      nb.affinity = r.f64();
      nb.alpha = r.f64();
      nb.anchor_self = static_cast<std::int64_t>(r.u64());
      nb.anchor_other = static_cast<std::int64_t>(r.u64());
      if (nb.node >= nodes) {
        throw io::FormatError(path.string() + ": tracklet " + std::to_string(k) +
                              " links to unknown node " + std::to_string(nb.node));
      }
      g.edges.push_back(nb);
    }
    g.offsets.push_back(g.edges.size());
  }
  r.expect_end();
  return g;
}

}  // namespace ppcc
