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

#include "ppcc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ppcc/binary_io.hpp"

namespace ppcc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint16_t kMatrixMagic = 0x4650;  // bytes 'P' 'F'

std::string tracklet_entity(const Tracklet& t) {
  return "tracklet " + std::to_string(t.id);
}

std::string portrait_entity(const Portrait& p) {
  return "portrait " + p.cast_id;
}

// expected_rows < 0 skips the row-count check.
void check_store(const FeatureStore& store, std::int64_t expected_rows,
                 std::vector<Violation>& out) {
  const std::string entity = std::string("channel ") + channel_name(store.channel);
  if (static_cast<std::size_t>(store.rows()) != store.present.size()) {
    out.push_back({entity, "presence flags do not cover every row"});
    return;
  }
  if (expected_rows >= 0 && store.rows() != expected_rows) {
    out.push_back({entity, "has " + std::to_string(store.rows()) +
                               " rows, expected C + sum(n_k) = " +
                               std::to_string(expected_rows)});
  }
  for (Eigen::Index r = 0; r < store.rows(); ++r) {
    if (!store.is_present(r)) continue;
    const auto row = store.values.row(r);
    if (!row.allFinite()) {
      out.push_back({entity, "row " + std::to_string(r) + " is not finite"});
    } else if (row.squaredNorm() == 0.0f) {
      out.push_back({entity, "row " + std::to_string(r) + " has zero norm"});
    }
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing file: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DatasetError(path.string() + ": " + e.what());
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing file: " + path.string());
  std::vector<json> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " +
                         e.what());
    }
  }
  return records;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + path.string());
  out << text;
}

}  // namespace

const char* channel_name(Channel channel) {
  return channel == Channel::kFace ? "face" : "body";
}

Channel parse_channel(const std::string& name) {
  if (name == "face") return Channel::kFace;
  if (name == "body") return Channel::kBody;
  throw DatasetError("unknown channel: " + name);
}

std::int64_t Dataset::num_nodes() const {
  std::int64_t n = num_classes();
  for (const auto& t : tracklets) n += t.size();
  return n;
}

std::vector<int> ground_truth(const Dataset& ds) {
  std::vector<int> gt;
  gt.reserve(ds.tracklets.size());
  for (const auto& t : ds.tracklets) gt.push_back(t.gt);
  return gt;
}

std::vector<Violation> validate_dataset(const Dataset& ds) {
  std::vector<Violation> out;
  const int C = ds.num_classes();

  if (static_cast<int>(ds.portraits.size()) != C) {
    out.push_back({"manifest", "num_classes = " + std::to_string(C) + " but " +
                                   std::to_string(ds.portraits.size()) +
                                   " portraits"});
  }
  if (static_cast<int>(ds.tracklets.size()) != ds.num_tracklets()) {
    out.push_back({"manifest", "num_tracklets = " +
                                   std::to_string(ds.num_tracklets()) + " but " +
                                   std::to_string(ds.tracklets.size()) +
                                   " tracklets"});
  }

  // An empty tracklet is reported on its own rather than as a row-count skew.
  const bool any_empty = std::any_of(ds.tracklets.begin(), ds.tracklets.end(),
                                     [](const Tracklet& t) { return t.size() < 1; });
  const std::int64_t rows = any_empty ? -1 : ds.num_nodes();
  check_store(ds.face, rows, out);
  check_store(ds.body, rows, out);
  const std::int64_t face_rows = ds.face.rows();
  const std::int64_t body_rows = ds.body.rows();

  std::vector<int> class_owner(std::max(C, 0), -1);
  std::set<std::string> cast_ids;
  for (std::size_t i = 0; i < ds.portraits.size(); ++i) {
    const auto& p = ds.portraits[i];
    const std::string entity = portrait_entity(p);
    if (!cast_ids.insert(p.cast_id).second) {
      out.push_back({entity, "duplicate cast id"});
    }
    if (p.class_index < 0 || p.class_index >= C) {
      out.push_back({entity, "class " + std::to_string(p.class_index) +
                                 " outside [0, " + std::to_string(C) + ")"});
    } else if (class_owner[p.class_index] >= 0) {
      out.push_back({entity, "class " + std::to_string(p.class_index) +
                                 " already used by portrait " +
                                 ds.portraits[class_owner[p.class_index]].cast_id});
    } else {
      class_owner[p.class_index] = static_cast<int>(i);
    }
    if (p.face_row < 0 || p.face_row >= face_rows) {
      out.push_back({entity, "face row out of bounds"});
    } else if (static_cast<std::size_t>(face_rows) == ds.face.present.size() &&
               !ds.face.is_present(p.face_row)) {
      out.push_back({entity, "face row is absent"});
    }
    if (p.body_row && (*p.body_row < 0 || *p.body_row >= body_rows)) {
      out.push_back({entity, "body row out of bounds"});
    }
  }

  std::set<std::int64_t> ids;
  std::vector<const Tracklet*> by_start;
  for (const auto& t : ds.tracklets) {
    const std::string entity = tracklet_entity(t);
    if (!ids.insert(t.id).second) out.push_back({entity, "duplicate id"});
    if (t.size() < 1) {
      out.push_back({entity, "empty row range [" + std::to_string(t.row_start) +
                                 ", " + std::to_string(t.row_end) + ")"});
      continue;
    }
    if (t.row_start < 0 || t.row_end > std::min(face_rows, body_rows)) {
      out.push_back({entity, "row range out of bounds"});
    }
    if (t.gt != kOthers && (t.gt < 0 || t.gt >= C)) {
      out.push_back({entity, "ground truth " + std::to_string(t.gt) +
                                 " is neither a class nor OTHERS"});
    }
    by_start.push_back(&t);
  }
  std::sort(by_start.begin(), by_start.end(),
            [](const Tracklet* a, const Tracklet* b) {
              return a->row_start != b->row_start ? a->row_start < b->row_start
                                                  : a->id < b->id;
            });
  for (std::size_t i = 1; i < by_start.size(); ++i) {
    if (by_start[i]->row_start < by_start[i - 1]->row_end) {
      out.push_back({tracklet_entity(*by_start[i]),
                     "row range overlaps " + tracklet_entity(*by_start[i - 1])});
    }
  }
  return out;
}

void write_feature_matrix(const FeatureStore& store, const fs::path& path) {
  if (store.rows() > std::numeric_limits<std::uint32_t>::max() ||
      store.dim() > std::numeric_limits<std::uint16_t>::max()) {
    throw DatasetError(std::string("channel ") + channel_name(store.channel) +
                       ": matrix too large for the feature format");
  }
  io::ByteWriter w;
  w.u16(kMatrixMagic);
  w.u32(static_cast<std::uint32_t>(store.rows()));
  w.u16(static_cast<std::uint16_t>(store.dim()));
  for (Eigen::Index r = 0; r < store.rows(); ++r) {
    for (Eigen::Index c = 0; c < store.dim(); ++c) w.f32(store.values(r, c));
  }
  for (auto flag : store.present) w.u8(flag ? 1 : 0);
  w.write_file(path);
}

FeatureStore read_feature_matrix(const fs::path& path, Channel channel) {
  const std::string entity = std::string("channel ") + channel_name(channel);
  try {
    auto r = io::ByteReader::from_file(path);
    if (r.u16() != kMatrixMagic) {
      throw DatasetError(entity + ": bad magic in " + path.string());
    }
    const std::uint32_t rows = r.u32();
    const std::uint16_t dim = r.u16();
    const std::size_t expected =
        static_cast<std::size_t>(rows) * dim * 4 + rows;
    if (r.remaining() != expected) {
      throw DatasetError(entity + ": dimension mismatch in " + path.string() +
                         " (header " + std::to_string(rows) + "x" +
                         std::to_string(dim) + " needs " +
                         std::to_string(expected) + " payload bytes, found " +
                         std::to_string(r.remaining()) + ")");
    }
    FeatureStore store;
    store.channel = channel;
    store.values.resize(rows, dim);
    for (std::uint32_t i = 0; i < rows; ++i) {
      for (std::uint16_t c = 0; c < dim; ++c) store.values(i, c) = r.f32();
    }
    store.present.resize(rows);
    for (auto& flag : store.present) flag = r.u8() ? 1 : 0;
    return store;
  } catch (const io::FormatError& e) {
    throw DatasetError(entity + ": " + e.what());
  }
}

Dataset load_dataset(const fs::path& manifest_or_dir) {
  const fs::path manifest_path = fs::is_directory(manifest_or_dir)
                                     ? manifest_or_dir / "manifest.json"
                                     : manifest_or_dir;
  const fs::path root = manifest_path.parent_path();
  const json m = read_json_file(manifest_path);

  Dataset ds;
  try {
    ds.manifest.version = m.at("version").get<int>();
    ds.manifest.split = m.value("split", std::string("test"));
    ds.manifest.num_classes = m.at("num_classes").get<int>();
    ds.manifest.num_tracklets = m.at("num_tracklets").get<int>();

    bool have_face = false, have_body = false;
    for (const auto& ch : m.at("channels")) {
      const auto name = ch.at("name").get<std::string>();
      const Channel channel = parse_channel(name);
      FeatureStore store =
          read_feature_matrix(root / ch.at("file").get<std::string>(), channel);
      const auto dim = ch.at("dim").get<std::int64_t>();
      const auto rows = ch.at("rows").get<std::int64_t>();
      if (store.dim() != dim) {
        throw DatasetError("channel " + name + ": dimension mismatch, manifest "
                           "declares d=" + std::to_string(dim) +
                           " but matrix rows have width " +
                           std::to_string(store.dim()));
      }
      if (store.rows() != rows) {
        throw DatasetError("channel " + name + ": manifest declares " +
                           std::to_string(rows) + " rows but matrix has " +
                           std::to_string(store.rows()));
      }
      (channel == Channel::kFace ? have_face : have_body) = true;
      ds.store(channel) = std::move(store);
    }
    if (!have_face || !have_body) {
      throw DatasetError("manifest: both face and body channels are required");
    }

    for (const auto& rec :
         read_jsonl(root / m.at("portraits_file").get<std::string>())) {
      Portrait p;
      p.cast_id = rec.at("cast_id").get<std::string>();
      p.class_index = rec.at("class").get<int>();
      p.face_row = rec.at("face_row").get<std::int64_t>();
      if (rec.contains("body_row") && !rec.at("body_row").is_null()) {
        p.body_row = rec.at("body_row").get<std::int64_t>();
      }
      ds.portraits.push_back(std::move(p));
    }
    for (const auto& rec :
         read_jsonl(root / m.at("tracklets_file").get<std::string>())) {
      Tracklet t;
      t.id = rec.at("id").get<std::int64_t>();
      t.movie = rec.at("movie").get<std::string>();
      t.row_start = rec.at("row_start").get<std::int64_t>();
      t.row_end = rec.at("row_end").get<std::int64_t>();
      t.gt = rec.at("gt").get<int>();
      ds.tracklets.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw DatasetError(manifest_path.string() + ": " + e.what());
  }

  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    std::ostringstream msg;
    msg << "invalid dataset " << manifest_path.string() << ":";
    for (const auto& v : violations) msg << "\n  " << v.entity << ": " << v.message;
    throw DatasetError(msg.str());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest = {
      {"version", ds.manifest.version},
      {"split", ds.manifest.split},
      {"num_classes", ds.manifest.num_classes},
      {"num_tracklets", ds.manifest.num_tracklets},
      {"portraits_file", "portraits.jsonl"},
      {"tracklets_file", "tracklets.jsonl"},
      {"channels", json::array()},
  };
  for (Channel channel : {Channel::kFace, Channel::kBody}) {
    const auto& store = ds.store(channel);
    const std::string file = std::string(channel_name(channel)) + ".f32";
    write_feature_matrix(store, dir / file);
    manifest["channels"].push_back({{"name", channel_name(channel)},
                                    {"dim", store.dim()},
                                    {"rows", store.rows()},
                                    {"file", file}});
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::string portraits;
  for (const auto& p : ds.portraits) {
    json rec = {{"cast_id", p.cast_id},
                {"class", p.class_index},
                {"face_row", p.face_row},
                {"body_row", p.body_row ? json(*p.body_row) : json(nullptr)}};
    portraits += rec.dump() + "\n";
  }
  write_text(dir / "portraits.jsonl", portraits);

  std::string tracklets;
  for (const auto& t : ds.tracklets) {
    json rec = {{"id", t.id},
                {"movie", t.movie},
                {"row_start", t.row_start},
                {"row_end", t.row_end},
                {"gt", t.gt}};
    tracklets += rec.dump() + "\n";
  }
  write_text(dir / "tracklets.jsonl", tracklets);
}

}  // namespace ppcc
