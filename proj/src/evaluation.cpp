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

#include "ppcc/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace ppcc {

const char* to_string(Setting setting) {
  return setting == Setting::kIn ? "in" : "across";
}

Setting parse_setting(const std::string& name) {
  if (name == "in") return Setting::kIn;
  if (name == "across") return Setting::kAcross;
  throw std::invalid_argument("unknown setting: " + name);
}

std::vector<RankedItem> rank_gallery(int c, const BeliefState& beliefs,
                                     std::span<const int> gallery) {
  if (c < 0 || c >= beliefs.num_classes()) {
    throw std::out_of_range("rank_gallery: unknown class " + std::to_string(c));
  }
  std::vector<RankedItem> ranked;
  ranked.reserve(gallery.size());
  for (int k : gallery) {
    ranked.push_back({k, beliefs.touched[k] ? beliefs.probs(k, c) : 0.0});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
    return a.score != b.score ? a.score > b.score : a.tracklet < b.tracklet;
  });
  return ranked;
}

double average_precision(std::span<const std::uint8_t> relevance) {
  double sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < relevance.size(); ++i) {
    if (!relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits > 0 ? sum / hits : 0.0;
}

namespace {

QueryResult run_query(int c, std::string movie, const BeliefState& beliefs,
                      const Dataset& ds, const std::vector<int>& gallery) {
  QueryResult q;
  q.class_index = c;
  q.movie = std::move(movie);
  q.gallery_size = static_cast<int>(gallery.size());
  if (gallery.empty()) {
    q.excluded = true;
    return q;
  }
  q.ranking = rank_gallery(c, beliefs, gallery);
  std::vector<std::uint8_t> rel;
  rel.reserve(q.ranking.size());
  for (const auto& item : q.ranking) {
    const bool hit = ds.tracklets[item.tracklet].gt == c;
    rel.push_back(hit ? 1 : 0);
    q.positives += hit ? 1 : 0;
  }
  q.flagged = q.positives == 0;
  q.ap = average_precision(rel);
  return q;
}

}  // namespace

EvalReport mean_ap(const BeliefState& beliefs, const Dataset& ds, Setting setting) {
  if (beliefs.num_tracklets() != ds.num_tracklets() ||
      beliefs.num_classes() != ds.num_classes()) {
    throw std::invalid_argument("mean_ap: beliefs do not match the dataset shape");
  }
  EvalReport report;
  report.setting = setting;
  const int C = ds.num_classes();
  if (setting == Setting::kIn) {
    std::map<std::string, std::vector<int>> movies;
    for (int k = 0; k < ds.num_tracklets(); ++k) {
      movies[ds.tracklets[k].movie].push_back(k);
    }
    for (const auto& [movie, gallery] : movies) {
      for (int c = 0; c < C; ++c) {
        report.queries.push_back(run_query(c, movie, beliefs, ds, gallery));
      }
    }
  } else {
    std::vector<int> gallery;
    for (int k = 0; k < ds.num_tracklets(); ++k) {
      if (ds.tracklets[k].gt != kOthers) gallery.push_back(k);
    }
    for (int c = 0; c < C; ++c) {
      report.queries.push_back(run_query(c, "", beliefs, ds, gallery));
    }
  }
  double sum = 0.0;
  int counted = 0;
  for (const auto& q : report.queries) {
    if (q.excluded) continue;
    sum += q.ap;
    ++counted;
  }
  report.mean_ap = counted > 0 ? sum / counted : 0.0;
  return report;
}

std::map<int, double> recall_at_k(const BeliefState& beliefs, const Dataset& ds,
                                  std::span<const int> ks, bool include_others) {
  const int C = beliefs.num_classes();
  std::map<int, int> hits;
  for (int k : ks) hits[k] = 0;
  int total = 0;
  std::vector<int> order(C);
  for (int t = 0; t < ds.num_tracklets(); ++t) {
    const int gt = ds.tracklets[t].gt;
    if (gt == kOthers && !include_others) continue;
    ++total;
    if (gt == kOthers) continue;
    std::iota(order.begin(), order.end(), 0);
    auto score = [&](int c) { return beliefs.touched[t] ? beliefs.probs(t, c) : 0.0; };
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score(a) > score(b); });
    const int position = static_cast<int>(
        std::find(order.begin(), order.end(), gt) - order.begin());
    for (int k : ks) {
      if (position < k) ++hits[k];
    }
  }
  std::map<int, double> out;
  for (int k : ks) out[k] = total > 0 ? static_cast<double>(hits[k]) / total : 0.0;
  return out;
}

EvalReport evaluate(const BeliefState& beliefs, const Dataset& ds, Setting setting,
                    const EvalOptions& options) {
  EvalReport report = mean_ap(beliefs, ds, setting);
  report.recall = recall_at_k(beliefs, ds, options.ks, options.rk_include_others);
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  using nlohmann::json;
  json queries = json::array();
  int flagged = 0, excluded = 0;
  for (const auto& q : report.queries) {
    json entry = {{"class", q.class_index},
                  {"gallery_size", q.gallery_size},
                  {"positives", q.positives},
                  {"ap", q.ap}};
    if (report.setting == Setting::kIn) entry["movie"] = q.movie;
    if (q.flagged) entry["flagged"] = "no positives";
    if (q.excluded) entry["excluded"] = "empty gallery";
    flagged += q.flagged;
    excluded += q.excluded;
    queries.push_back(std::move(entry));
  }
  json recall = json::object();
  for (const auto& [k, v] : report.recall) recall["R@" + std::to_string(k)] = v;
  return json{{"setting", to_string(report.setting)},
              {"mAP", report.mean_ap},
              {"recall", recall},
              {"num_queries", report.queries.size()},
              {"flagged_queries", flagged},
              {"excluded_queries", excluded},
              {"queries", queries}};
}

void write_rankings_csv(const EvalReport& report, const Dataset& ds,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "query,rank,tracklet,score,relevant\n";
  out.precision(17);
  for (const auto& q : report.queries) {
    std::string name = ds.portraits.empty() ? std::to_string(q.class_index)
                                            : std::string();
    for (const auto& p : ds.portraits) {
      if (p.class_index == q.class_index) name = p.cast_id;
    }
    if (!q.movie.empty()) name += "@" + q.movie;
    for (std::size_t r = 0; r < q.ranking.size(); ++r) {
      const auto& item = q.ranking[r];
      out << name << ',' << r + 1 << ',' << ds.tracklets[item.tracklet].id << ','
          << item.score << ',' << (ds.tracklets[item.tracklet].gt == q.class_index)
          << '\n';
    }
  }
}

}  // namespace ppcc
