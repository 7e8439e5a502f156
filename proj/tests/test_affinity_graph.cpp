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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "ppcc/affinity_graph.hpp"
#include "ppcc/synth.hpp"
#include "test_util.hpp"

using namespace ppcc;
using ppcc::testing::Instance;
using ppcc::testing::Row;
using ppcc::testing::TempDir;
using ppcc::testing::TrackletSpec;
using ppcc::testing::make_dataset;

namespace {

FeatureStore store_of(std::initializer_list<Row> rows) {
  FeatureStore s;
  s.values = RowMatrix<float>::Zero(static_cast<Eigen::Index>(rows.size()),
                                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const Row& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      s.values(r, static_cast<Eigen::Index>(i)) = row[i];
    }
    ++r;
  }
  s.present.assign(rows.size(), 1);
  return s;
}

struct Edge {
  std::uint32_t node;
  double w;
};

/// Independent reference: every candidate scored through the pairwise
/// routines, filtered, sorted and cut to K with the documented tie rule.
std::vector<std::vector<Edge>> reference_edges(const Dataset& ds, const GraphParams& p) {
  const int C = ds.num_classes();
  std::vector<std::vector<Edge>> out(ds.num_tracklets());
  for (int k = 0; k < ds.num_tracklets(); ++k) {
    const RowRange rk = RowRange::of(ds.tracklets[k]);
    std::vector<Edge> cand;
    for (const auto& portrait : ds.portraits) {
      if (auto a = tracklet_pair_affinity(rk, RowRange::single(portrait.face_row), ds.face)) {
        cand.push_back({static_cast<std::uint32_t>(portrait.class_index), a->affinity});
      }
    }
    for (int l = 0; l < ds.num_tracklets(); ++l) {
      if (l == k) continue;
      const RowRange rl = RowRange::of(ds.tracklets[l]);
      const auto a = p.fuse ? fused_pair_affinity(rk, rl, ds.face, ds.body, p.fusion)
                            : tracklet_pair_affinity(rk, rl, ds.store(p.gallery_channel));
      if (a) cand.push_back({static_cast<std::uint32_t>(C + l), a->affinity});
    }
    std::vector<Edge> kept;
    for (const Edge& e : cand) {
      if (e.w >= p.floor && e.w > 0.0) kept.push_back(e);
    }
    std::sort(kept.begin(), kept.end(), [](const Edge& a, const Edge& b) {
      return a.w != b.w ? a.w > b.w : a.node < b.node;
    });
    if (kept.size() > static_cast<std::size_t>(p.knn)) kept.resize(p.knn);
    out[k] = kept;
  }
  return out;
}

std::set<std::uint32_t> node_set(const PropagationGraph& g, int k) {
  std::set<std::uint32_t> s;
  for (const auto& n : g.neighbors(k)) s.insert(n.node);
  return s;
}

SynthConfig graph_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.num_classes = 4;
  cfg.num_tracklets = 30;
  cfg.face_dim = 8;
  cfg.body_dim = 16;
  cfg.min_instances = 1;
  cfg.max_instances = 5;
  cfg.face_visible = 0.5;
  cfg.body_drift = 0.5;
  cfg.noise = 0.4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("cosine affinity examples") {
  Eigen::Vector2d e0(1, 0), e1(0, 1), diag(1, 1);
  CHECK(cosine_affinity(e0, e0) == 1.0);
  CHECK(cosine_affinity(e0, e1) == 0.0);
  CHECK(cosine_affinity(e0, diag) == doctest::Approx(0.7071068).epsilon(1e-6));
  CHECK(cosine_affinity(diag, e0) == cosine_affinity(e0, diag));
  CHECK(cosine_affinity(Eigen::Vector2d(3, 3), e0) ==
        doctest::Approx(cosine_affinity(diag, e0)).epsilon(1e-15));
  CHECK(cosine_affinity(Eigen::Vector2f(1, 0), Eigen::Vector2f(-1, 0)) == -1.0);
  CHECK_THROWS_AS(cosine_affinity(Eigen::VectorXd(e0), Eigen::VectorXd::Ones(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(cosine_affinity(e0, Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("cosine affinity stays in [-1, 1] for random vectors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 200; ++t) {
    Eigen::VectorXd u(5), v(5);
    for (int i = 0; i < 5; ++i) {
      u[i] = g(rng);
      v[i] = g(rng);
    }
    const double c = cosine_affinity(u, v);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(cosine_affinity(u, u) == doctest::Approx(1.0));
  }
}

TEST_CASE("tracklet pair affinity examples") {
  SUBCASE("contains an identical instance") {
    const FeatureStore s = store_of({{1, 0}, {0, 1}, {1, 0}});
    const auto a = tracklet_pair_affinity({0, 2}, {2, 3}, s);
    REQUIRE(a);
    CHECK(a->affinity == 1.0);
    CHECK(a->row_a == 0);
    CHECK(a->row_b == 2);
  }
  SUBCASE("orthogonal") {
    const FeatureStore s = store_of({{1, 0}, {0, 1}});
    const auto a = tracklet_pair_affinity({0, 1}, {1, 2}, s);
    REQUIRE(a);
    CHECK(a->affinity == 0.0);
    CHECK(a->row_a == 0);
    CHECK(a->row_b == 1);
  }
  SUBCASE("strongest of two pairs") {
    const FeatureStore s = store_of({{1, 0}, {0.6f, 0.8f}, {0, 1}});
    const auto a = tracklet_pair_affinity({0, 2}, {2, 3}, s);
    REQUIRE(a);
    CHECK(a->affinity == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(a->row_a == 1);
    CHECK(a->row_b == 2);
  }
  SUBCASE("no present rows is no edge") {
    FeatureStore s = store_of({{1, 0}, {0, 1}});
    s.present[1] = 0;
    CHECK_FALSE(tracklet_pair_affinity({0, 1}, {1, 2}, s).has_value());
  }
}

TEST_CASE("fused affinity uses face only where both instances show one") {
  FeatureStore face = store_of({{1, 0}, {0.6f, 0.8f}, {1, 0}});
  const FeatureStore body = store_of({{1, 0}, {0, 1}, {0, 1}});
  const auto both = fused_pair_affinity({0, 1}, {1, 2}, face, body, {});
  REQUIRE(both);
  CHECK(both->affinity == doctest::Approx(0.8 * 0.6 + 0.2 * 0.0).epsilon(1e-7));
  face.present[1] = 0;
  const auto body_only = fused_pair_affinity({0, 1}, {1, 2}, face, body, {});
  REQUIRE(body_only);
  CHECK(body_only->affinity == 0.0);
}

TEST_CASE("weights normalize over kept neighbors") {
  // Tracklet 0 reaches tracklets 1 and 2 with body cosines 0.2 and 0.6.
  const double s2 = std::sqrt(1.0 - 0.2 * 0.2);
  const double s6 = std::sqrt(1.0 - 0.6 * 0.6);
  const std::vector<Row> portraits{{1, 0}};
  const std::vector<TrackletSpec> ts{
      {"m0", 0, {{std::nullopt, {1, 0, 0}}}},
      {"m0", 0, {{std::nullopt, {0.2f, static_cast<float>(s2), 0}}}},
      {"m0", 0, {{std::nullopt, {0.6f, 0, static_cast<float>(s6)}}}},
  };
  const Dataset ds = make_dataset(portraits, {}, ts);
  GraphParams p;
  p.knn = 2;
  const PropagationGraph g = build_graph(ds, p);
  const auto n0 = g.neighbors(0);
  REQUIRE(n0.size() == 2);
  CHECK(n0[0].node == 3);
  CHECK(n0[0].alpha == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(n0[1].node == 2);
  CHECK(n0[1].alpha == doctest::Approx(0.25).epsilon(1e-6));

  p.knn = 1;
  const PropagationGraph single = build_graph(ds, p);
  REQUIRE(single.neighbors(0).size() == 1);
  CHECK(single.neighbors(0)[0].alpha == 1.0);
}

TEST_CASE("K = 1 keeps each tracklet's strongest neighbor") {
  const std::vector<Row> portraits{{1, 0}};
  const std::vector<TrackletSpec> ts{
      {"m0", 0, {{std::nullopt, {1, 0}}}},
      {"m0", 0, {{std::nullopt, {0.8f, 0.6f}}}},
      {"m0", 0, {{std::nullopt, {0.6f, 0.8f}}}},
  };
  const Dataset ds = make_dataset(portraits, {}, ts);
  GraphParams p;
  p.knn = 1;
  const PropagationGraph g = build_graph(ds, p);
  REQUIRE(g.neighbors(0).size() == 1);
  CHECK(g.neighbors(0)[0].node == 2);
  REQUIRE(g.neighbors(1).size() == 1);
  CHECK(g.neighbors(1)[0].node == 3);  // 0.96 beats 0.8
  REQUIRE(g.neighbors(2).size() == 1);
  CHECK(g.neighbors(2)[0].node == 2);
}

TEST_CASE("equal affinities break toward the lower node id") {
  const std::vector<Row> portraits{{1, 0}};
  const std::vector<TrackletSpec> ts{
      {"m0", 0, {{std::nullopt, {1, 0}}}},
      {"m0", 0, {{std::nullopt, {1, 0}}}},
      {"m0", 0, {{std::nullopt, {1, 0}}}},
  };
  GraphParams p;
  p.knn = 1;
  const PropagationGraph g = build_graph(make_dataset(portraits, {}, ts), p);
  CHECK(g.neighbors(0)[0].node == 2);
  CHECK(g.neighbors(2)[0].node == 1);
}

TEST_CASE("portrait edges use faces; non-positive affinities are dropped") {
  const std::vector<Row> portraits{{1, 0}, {-1, 0}};
  const std::vector<TrackletSpec> ts{
      {"m0", 0, {{Row{1, 0}, {0, 1}}}},
      {"m0", 1, {{std::nullopt, {0, -1}}}},
  };
  const PropagationGraph g = build_graph(make_dataset(portraits, {}, ts), {});
  CHECK(node_set(g, 0) == std::set<std::uint32_t>{0});
  CHECK(g.neighbors(1).empty());  // no face, opposite body
}

TEST_CASE("build_graph agrees with a brute-force reference") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (bool fuse : {true, false}) {
      for (double floor : {0.0, 0.3}) {
        CAPTURE(seed);
        CAPTURE(fuse);
        CAPTURE(floor);
        const Dataset ds = generate(graph_config(seed));
        GraphParams p;
        p.knn = 6;
        p.fuse = fuse;
        p.floor = floor;
        const PropagationGraph g = build_graph(ds, p);
        const auto ref = reference_edges(ds, p);
        for (int k = 0; k < ds.num_tracklets(); ++k) {
          const auto got = g.neighbors(k);
          REQUIRE(got.size() == ref[k].size());
          double total = 0.0;
          for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].node == ref[k][i].node);
            CHECK(got[i].affinity == doctest::Approx(ref[k][i].w).epsilon(1e-12));
            total += ref[k][i].w;
          }
          for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].alpha == doctest::Approx(ref[k][i].w / total).epsilon(1e-12));
          }
        }
      }
    }
  }
}

TEST_CASE("graph invariants on synthetic data") {
  const Dataset ds = generate(graph_config(5));
  GraphParams p;
  p.knn = 5;
  const PropagationGraph g = build_graph(ds, p);
  for (int k = 0; k < g.num_tracklets; ++k) {
    const auto nb = g.neighbors(k);
    CHECK(nb.size() <= 5);
    std::set<std::uint32_t> seen;
    double sum = 0.0;
    for (const auto& n : nb) {
      CHECK(seen.insert(n.node).second);
      CHECK(n.node != static_cast<std::uint32_t>(g.num_classes + k));
      CHECK(n.affinity > 0.0);
      sum += n.alpha;
    }
    if (!nb.empty()) CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("larger K never drops a neighbor") {
  const Dataset ds = generate(graph_config(6));
  GraphParams p;
  for (int k = 1; k < 12; ++k) {
    p.knn = k;
    const PropagationGraph small = build_graph(ds, p);
    p.knn = k + 1;
    const PropagationGraph large = build_graph(ds, p);
    for (int t = 0; t < ds.num_tracklets(); ++t) {
      const auto a = node_set(small, t);
      const auto b = node_set(large, t);
      CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    }
  }
}

TEST_CASE("instance order inside a tracklet does not matter") {
  const Dataset ds = generate(graph_config(7));
  Dataset shuffled = ds;
  std::mt19937_64 rng(11);
  for (const auto& t : ds.tracklets) {
    std::vector<std::int64_t> order(t.size());
    std::iota(order.begin(), order.end(), t.row_start);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      for (FeatureStore* s : {&shuffled.face, &shuffled.body}) {
        const FeatureStore& src = s == &shuffled.face ? ds.face : ds.body;
        s->values.row(t.row_start + i) = src.values.row(order[i]);
        s->present[t.row_start + i] = src.present[order[i]];
      }
    }
  }
  GraphParams p;
  p.knn = 6;
  const PropagationGraph a = build_graph(ds, p);
  const PropagationGraph b = build_graph(shuffled, p);
  for (int k = 0; k < ds.num_tracklets(); ++k) {
    REQUIRE(a.neighbors(k).size() == b.neighbors(k).size());
    for (std::size_t i = 0; i < a.neighbors(k).size(); ++i) {
      CHECK(a.neighbors(k)[i].node == b.neighbors(k)[i].node);
      CHECK(a.neighbors(k)[i].alpha == doctest::Approx(b.neighbors(k)[i].alpha).epsilon(1e-12));
    }
  }
}

TEST_CASE("result does not depend on the worker count") {
  const Dataset ds = generate(graph_config(8));
  ::setenv("PPCC_THREADS", "1", 1);
  const PropagationGraph one = build_graph(ds, {});
  ::setenv("PPCC_THREADS", "4", 1);
  const PropagationGraph four = build_graph(ds, {});
  ::unsetenv("PPCC_THREADS");
  REQUIRE(one.edges.size() == four.edges.size());
  CHECK(one.offsets == four.offsets);
  for (std::size_t i = 0; i < one.edges.size(); ++i) {
    CHECK(one.edges[i].node == four.edges[i].node);
    CHECK(one.edges[i].alpha == four.edges[i].alpha);
  }
}

TEST_CASE("invalid parameters are rejected") {
  const Dataset ds = generate(graph_config(1));
  GraphParams p;
  p.knn = 0;
  CHECK_THROWS_AS(build_graph(ds, p), std::invalid_argument);
  p = {};
  p.fusion = {0.7, 0.2};
  CHECK_THROWS_AS(build_graph(ds, p), std::invalid_argument);
}

TEST_CASE("instance graph has one node per instance") {
  const Dataset ds = generate(graph_config(2));
  const PropagationGraph g = build_instance_graph(ds, {});
  CHECK(g.num_tracklets == ds.num_nodes() - ds.num_classes());
  CHECK(g.pooled_tracklets == ds.num_tracklets());
  REQUIRE(g.pool_group.size() == static_cast<std::size_t>(g.num_tracklets));
  std::size_t node = 0;
  for (int k = 0; k < ds.num_tracklets(); ++k) {
    for (std::int64_t i = 0; i < ds.tracklets[k].size(); ++i) {
      CHECK(g.pool_group[node++] == static_cast<std::uint32_t>(k));
    }
  }
}

TEST_CASE("graph file round trip") {
  TempDir dir("graph_io");
  const Dataset ds = generate(graph_config(4));
  for (const PropagationGraph& g : {build_graph(ds, {}), build_instance_graph(ds, {})}) {
    save_graph(g, dir / "g.bin");
    const PropagationGraph back = load_graph(dir / "g.bin");
    CHECK(back.num_classes == g.num_classes);
    CHECK(back.num_tracklets == g.num_tracklets);
    CHECK(back.params.knn == g.params.knn);
    CHECK(back.params.fuse == g.params.fuse);
    CHECK(back.offsets == g.offsets);
    CHECK(back.pool_group == g.pool_group);
    CHECK(back.pooled_tracklets == g.pooled_tracklets);
    REQUIRE(back.edges.size() == g.edges.size());
    for (std::size_t i = 0; i < g.edges.size(); ++i) {
      CHECK(back.edges[i].node == g.edges[i].node);
      CHECK(back.edges[i].affinity == g.edges[i].affinity);
      CHECK(back.edges[i].alpha == g.edges[i].alpha);
      CHECK(back.edges[i].anchor_self == g.edges[i].anchor_self);
      CHECK(back.edges[i].anchor_other == g.edges[i].anchor_other);
    }
  }
  auto bytes = ppcc::testing::read_bytes(dir / "g.bin");
  bytes[0] = 'X';
  std::ofstream(dir / "bad.bin", std::ios::binary)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS(load_graph(dir / "bad.bin"));
}
