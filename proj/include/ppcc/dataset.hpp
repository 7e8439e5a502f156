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

// In-memory and on-disk model of a person-search gallery: labeled portraits,
// unlabeled tracklets and one feature matrix per visual channel.
//
// On disk a dataset is a directory:
//
//   manifest.json     {version, split, num_classes, num_tracklets,
//                      channels[{name, dim, rows, file}],
//                      portraits_file, tracklets_file}
//   portraits.jsonl   {cast_id, class, face_row, body_row|null} per line
//   tracklets.jsonl   {id, movie, row_start, row_end, gt} per line
//   face.f32          feature matrix (see write_feature_matrix)
//   body.f32
//
// Rows [0, C) of every channel hold the portraits; instance rows follow.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ppcc/common.hpp"

namespace ppcc {

enum class Channel { kFace, kBody };

const char* channel_name(Channel channel);
Channel parse_channel(const std::string& name);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-indexed embeddings of one channel. Absent rows (e.g. an instance whose
/// face is not visible) are flagged and hold zeros.
struct FeatureStore {
  Channel channel = Channel::kFace;
  RowMatrix<float> values;
  std::vector<std::uint8_t> present;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
  bool is_present(Eigen::Index row) const { return present[row] != 0; }
};

struct Portrait {
  std::string cast_id;
  int class_index = 0;
  std::int64_t face_row = 0;
  std::optional<std::int64_t> body_row;
};

struct Tracklet {
  std::int64_t id = 0;
  std::string movie;
  std::int64_t row_start = 0;
  std::int64_t row_end = 0;  // exclusive
  int gt = kOthers;

  std::int64_t size() const { return row_end - row_start; }
};

struct Manifest {
  int version = 1;
  std::string split = "test";
  int num_classes = 0;
  int num_tracklets = 0;
};

struct Dataset {
  Manifest manifest;
  std::vector<Portrait> portraits;
  std::vector<Tracklet> tracklets;
  FeatureStore face;
  FeatureStore body;

  int num_classes() const { return manifest.num_classes; }
  int num_tracklets() const { return manifest.num_tracklets; }
  /// N = C + sum of tracklet lengths.
  std::int64_t num_nodes() const;
  const FeatureStore& store(Channel channel) const {
    return channel == Channel::kFace ? face : body;
  }
  FeatureStore& store(Channel channel) {
    return channel == Channel::kFace ? face : body;
  }
};

struct Violation {
  std::string entity;
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// One entry per broken invariant; empty iff the dataset is well-formed.
std::vector<Violation> validate_dataset(const Dataset& ds);

/// Throws DatasetError naming the offending entity on any malformed input.
Dataset load_dataset(const std::filesystem::path& manifest_or_dir);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

/// Feature matrix file: 8-byte header {u16 magic "PF", u32 rows, u16 dim},
/// rows*dim little-endian float32 values, then one presence byte per row.
void write_feature_matrix(const FeatureStore& store,
                          const std::filesystem::path& path);
FeatureStore read_feature_matrix(const std::filesystem::path& path,
                                 Channel channel);

/// Ground-truth class of every tracklet, in tracklet order.
std::vector<int> ground_truth(const Dataset& ds);

}  // namespace ppcc
