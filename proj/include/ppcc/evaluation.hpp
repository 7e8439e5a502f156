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

// Person-search benchmark metrics.
//
// IN:     one query per (cast, movie); the gallery is every tracklet of that
//         movie, OTHERS included as negatives.
// ACROSS: one query per cast; the gallery is every credited tracklet.
//
// Galleries are ranked by p(c) descending, ties by ascending tracklet index.
// R@k ranks identities per credited tracklet, ties by ascending class index.

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppcc/dataset.hpp"
#include "ppcc/propagation.hpp"

namespace ppcc {

enum class Setting { kIn, kAcross };

const char* to_string(Setting setting);
Setting parse_setting(const std::string& name);

struct RankedItem {
  int tracklet = 0;
  double score = 0.0;
};

/// Orders `gallery` by the class-c score; untouched tracklets score 0.
/// Throws std::out_of_range for an unknown class.
std::vector<RankedItem> rank_gallery(int c, const BeliefState& beliefs,
                                     std::span<const int> gallery);

/// Mean over relevant positions i (1-based) of hits-in-top-i / i; 0 when
/// nothing is relevant.
double average_precision(std::span<const std::uint8_t> relevance_in_rank_order);

struct QueryResult {
  int class_index = 0;
  std::string movie;  // empty for ACROSS
  int gallery_size = 0;
  int positives = 0;
  double ap = 0.0;
  bool flagged = false;   // zero positives: AP 0, still averaged
  bool excluded = false;  // empty gallery: left out of the mean
  std::vector<RankedItem> ranking;
};

struct EvalOptions {
  std::vector<int> ks{1, 3, 5};
  bool rk_include_others = false;
};

struct EvalReport {
  Setting setting = Setting::kAcross;
  std::vector<QueryResult> queries;
  double mean_ap = 0.0;
  std::map<int, double> recall;
};

/// Per-query AP and their unweighted mean for one setting.
EvalReport mean_ap(const BeliefState& beliefs, const Dataset& ds, Setting setting);

/// Fraction of credited tracklets (all tracklets with include_others) whose
/// ground truth is among their k highest-scoring identities.
std::map<int, double> recall_at_k(const BeliefState& beliefs, const Dataset& ds,
                                  std::span<const int> ks = std::vector<int>{1, 3, 5},
                                  bool include_others = false);

/// mean_ap plus recall_at_k.
EvalReport evaluate(const BeliefState& beliefs, const Dataset& ds, Setting setting,
                    const EvalOptions& options = {});

/// Report JSON without ranking dumps.
nlohmann::json to_json(const EvalReport& report);

/// CSV rows: query,rank,tracklet,score,relevant.
void write_rankings_csv(const EvalReport& report, const Dataset& ds,
                        const std::filesystem::path& path);

}  // namespace ppcc
