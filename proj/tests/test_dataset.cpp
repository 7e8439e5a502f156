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

#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "json.hpp"
#include "ppcc/dataset.hpp"
#include "ppcc/synth.hpp"
#include "test_util.hpp"

using namespace ppcc;
using ppcc::testing::TempDir;
using ppcc::testing::read_bytes;

namespace {

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.num_tracklets = 3;
  cfg.num_movies = 1;
  cfg.face_dim = 8;
  cfg.body_dim = 6;
  cfg.min_instances = 1;
  cfg.max_instances = 4;
  return cfg;
}

void rewrite_manifest(const std::filesystem::path& dir,
                      const std::function<void(nlohmann::json&)>& edit) {
  nlohmann::json m;
  std::ifstream(dir / "manifest.json") >> m;
  edit(m);
  std::ofstream(dir / "manifest.json", std::ios::trunc) << m.dump(2);
}

}  // namespace

TEST_CASE("node count is portraits plus instances") {
  TempDir dir("ds_count");
  const Dataset ds = generate(small_config());
  save_dataset(ds, dir.path());
  const Dataset loaded = load_dataset(dir / "manifest.json");
  std::int64_t instances = 0;
  for (const auto& t : loaded.tracklets) instances += t.size();
  CHECK(loaded.num_classes() == 2);
  CHECK(loaded.num_tracklets() == 3);
  CHECK(loaded.num_nodes() == 2 + instances);
  CHECK(loaded.face.rows() == loaded.num_nodes());
  CHECK(loaded.body.rows() == loaded.num_nodes());
}

TEST_CASE("load accepts a directory or a manifest path") {
  TempDir dir("ds_path");
  save_dataset(generate(small_config()), dir.path());
  const Dataset a = load_dataset(dir.path());
  const Dataset b = load_dataset(dir / "manifest.json");
  CHECK(a.face.values == b.face.values);
  CHECK(a.tracklets.size() == b.tracklets.size());
}

TEST_CASE("declared dimension wider than the matrix is rejected") {
  TempDir dir("ds_dim");
  SynthConfig cfg = small_config();
  cfg.face_dim = 128;
  save_dataset(generate(cfg), dir.path());
  rewrite_manifest(dir.path(), [](nlohmann::json& m) {
    for (auto& ch : m["channels"]) {
      if (ch["name"] == "face") ch["dim"] = 256;
    }
  });
  try {
    load_dataset(dir.path());
    FAIL("expected a dimension mismatch");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("dimension mismatch") != std::string::npos);
  }
}

TEST_CASE("save then load is bit-exact") {
  TempDir first("ds_rt1");
  TempDir second("ds_rt2");
  const Dataset ds = generate(small_config());
  save_dataset(ds, first.path());
  const Dataset loaded = load_dataset(first.path());
  save_dataset(loaded, second.path());

  for (const char* f : {"face.f32", "body.f32", "manifest.json", "portraits.jsonl",
                        "tracklets.jsonl"}) {
    CAPTURE(f);
    CHECK(read_bytes(first / f) == read_bytes(second / f));
  }
  CHECK(loaded.face.values == ds.face.values);
  CHECK(loaded.body.values == ds.body.values);
  CHECK(loaded.face.present == ds.face.present);
  CHECK(loaded.body.present == ds.body.present);
  REQUIRE(loaded.tracklets.size() == ds.tracklets.size());
  for (std::size_t k = 0; k < ds.tracklets.size(); ++k) {
    CHECK(loaded.tracklets[k].id == ds.tracklets[k].id);
    CHECK(loaded.tracklets[k].movie == ds.tracklets[k].movie);
    CHECK(loaded.tracklets[k].row_start == ds.tracklets[k].row_start);
    CHECK(loaded.tracklets[k].row_end == ds.tracklets[k].row_end);
    CHECK(loaded.tracklets[k].gt == ds.tracklets[k].gt);
  }
}

TEST_CASE("matrix file layout: header, float32 payload, presence trailer") {
  TempDir dir("ds_layout");
  FeatureStore store{Channel::kFace, RowMatrix<float>(2, 3), {1, 0}};
  store.values << 1.0f, 2.0f, 3.0f, 0.0f, 0.0f, 0.0f;
  write_feature_matrix(store, dir / "m.f32");
  const auto bytes = read_bytes(dir / "m.f32");
  REQUIRE(bytes.size() == 8 + 2 * 3 * 4 + 2);
  CHECK(bytes[0] == 'P');
  CHECK(bytes[1] == 'F');
  CHECK(static_cast<unsigned char>(bytes[2]) == 2);  // rows, little-endian u32
  CHECK(static_cast<unsigned char>(bytes[6]) == 3);  // dim, little-endian u16
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + 8, sizeof first);
  CHECK(first == 1.0f);
  CHECK(bytes[8 + 24] == 1);
  CHECK(bytes[8 + 25] == 0);

  const FeatureStore back = read_feature_matrix(dir / "m.f32", Channel::kFace);
  CHECK(back.values == store.values);
  CHECK(back.present == store.present);
}

TEST_CASE("truncated matrix file is a load error") {
  TempDir dir("ds_trunc");
  save_dataset(generate(small_config()), dir.path());
  auto bytes = read_bytes(dir / "body.f32");
  bytes.resize(bytes.size() - 5);
  std::ofstream(dir / "body.f32", std::ios::binary | std::ios::trunc)
      .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_dataset(dir.path()), DatasetError);
}

TEST_CASE("missing files are reported by name") {
  TempDir dir("ds_missing");
  CHECK_THROWS_AS(load_dataset(dir.path()), DatasetError);
  save_dataset(generate(small_config()), dir.path());
  std::filesystem::remove(dir / "tracklets.jsonl");
  try {
    load_dataset(dir.path());
    FAIL("expected a missing-file error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("tracklets.jsonl") != std::string::npos);
  }
}

TEST_CASE("well-formed synthetic dataset has no violations") {
  CHECK(validate_dataset(generate(small_config())).empty());
}

TEST_CASE("an empty tracklet is exactly one violation naming it") {
  Dataset ds = generate(small_config());
  // Drop tracklet 1's rows into tracklet 0 so only the empty range is wrong.
  ds.tracklets[0].row_end = ds.tracklets[1].row_end;
  ds.tracklets[1].row_start = ds.tracklets[1].row_end;
  const auto v = validate_dataset(ds);
  REQUIRE(v.size() == 1);
  CHECK(v[0].entity == "tracklet 1");
}

TEST_CASE("two portraits sharing a class are one bijection violation") {
  Dataset ds = generate(small_config());
  ds.portraits[1].class_index = 0;
  const auto v = validate_dataset(ds);
  REQUIRE(v.size() == 1);
  CHECK(v[0].entity == "portrait " + ds.portraits[1].cast_id);
}

TEST_CASE("other invariant breaks are caught") {
  const Dataset base = generate(small_config());

  SUBCASE("portrait without a face") {
    Dataset ds = base;
    ds.face.present[ds.portraits[0].face_row] = 0;
    CHECK(validate_dataset(ds).size() == 1);
  }
  SUBCASE("overlapping ranges") {
    Dataset ds = base;
    ds.tracklets[1].row_start -= 1;
    CHECK_FALSE(validate_dataset(ds).empty());
  }
  SUBCASE("out-of-range ground truth") {
    Dataset ds = base;
    ds.tracklets[0].gt = 7;
    CHECK(validate_dataset(ds).size() == 1);
  }
  SUBCASE("non-finite feature") {
    Dataset ds = base;
    ds.body.values(ds.tracklets[0].row_start, 0) = std::nanf("");
    CHECK(validate_dataset(ds).size() == 1);
  }
  SUBCASE("zero-norm present row") {
    Dataset ds = base;
    ds.body.values.row(ds.tracklets[0].row_start).setZero();
    CHECK(validate_dataset(ds).size() == 1);
  }
  SUBCASE("row count disagrees with instances") {
    Dataset ds = base;
    ds.tracklets.back().row_end -= 1;
    CHECK_FALSE(validate_dataset(ds).empty());
  }
}

TEST_CASE("validate is pure") {
  Dataset ds = generate(small_config());
  ds.portraits[1].class_index = 0;
  ds.tracklets[0].gt = 9;
  const Dataset copy = ds;
  const auto first = validate_dataset(ds);
  const auto second = validate_dataset(ds);
  CHECK(first == second);
  CHECK(ds.face.values == copy.face.values);
  CHECK(ds.portraits[1].class_index == copy.portraits[1].class_index);
}

TEST_CASE("portraits may lack a body row") {
  TempDir dir("ds_nobody");
  SynthConfig cfg = small_config();
  cfg.portrait_body = false;
  const Dataset ds = generate(cfg);
  CHECK(validate_dataset(ds).empty());
  save_dataset(ds, dir.path());
  const Dataset loaded = load_dataset(dir.path());
  for (const auto& p : loaded.portraits) CHECK_FALSE(p.body_row.has_value());
}

TEST_CASE("ground truth lists OTHERS as -1") {
  SynthConfig cfg = small_config();
  cfg.num_tracklets = 40;
  cfg.others_fraction = 0.5;
  const Dataset ds = generate(cfg);
  const auto gt = ground_truth(ds);
  REQUIRE(gt.size() == 40);
  bool any_others = false;
  for (int g : gt) {
    CHECK(g >= kOthers);
    CHECK(g < 2);
    any_others = any_others || g == kOthers;
  }
  CHECK(any_others);
}
