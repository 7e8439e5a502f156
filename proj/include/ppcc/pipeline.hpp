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

// End-to-end runs: synth -> build-graph -> propagate -> evaluate, plus method
// comparisons and one-axis ablation sweeps. Every intermediate artifact is
// written under the run's output directory and read back before use.

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppcc/affinity_graph.hpp"
#include "ppcc/baselines.hpp"
#include "ppcc/evaluation.hpp"
#include "ppcc/propagation.hpp"
#include "ppcc/synth.hpp"

namespace ppcc {

enum class Method { kFace, kIde, kFaceIde, kLp, kPpccV, kPpccVt };

const char* to_string(Method method);
Method parse_method(const std::string& name);

struct RunConfig {
  SynthConfig synth;
  /// Existing dataset directory; when set, no synthetic data is generated.
  std::optional<std::filesystem::path> dataset;
  GraphParams graph;
  PropagationParams propagation;
  Method method = Method::kPpccVt;
  Setting setting = Setting::kAcross;
  EvalOptions eval;
  std::filesystem::path out_dir = "ppcc_run";
};

/// Defaults for a method: linear diffusion runs without freezing.
RunConfig default_run_config(Method method);

/// Reads {preset, synth{...}, dataset, method, setting, out_dir, seed,
/// graph{knn, floor, fusion[2], fuse}, propagation{temperature, topk,
/// schedule, max_iters, order}, eval{rk_include_others}}. Missing keys keep
/// their defaults; "seed" overrides synth.seed.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

/// A pipeline step failed; `step` names it.
class StepError : public std::runtime_error {
 public:
  StepError(std::string step, const std::string& what)
      : std::runtime_error(step + ": " + what), step_(std::move(step)) {}
  const std::string& step() const { return step_; }

 private:
  std::string step_;
};

struct RunResult {
  EvalReport report;
  BeliefState beliefs;  // as read back from beliefs.bin
  std::vector<IterationStats> stats;
};

/// Observer sees the raw propagation state (node level for PPCC-v).
RunResult run_pipeline(const RunConfig& cfg, const IterationObserver& observer = {});

struct ComparisonRow {
  std::string label;
  double mean_ap = 0.0;
  std::map<int, double> recall;
};

std::vector<ComparisonRow> compare_methods(const RunConfig& cfg,
                                           const std::vector<Method>& methods);

enum class AblationAxis { kTemperature, kTopk, kSchedule };

AblationAxis parse_axis(const std::string& name);
const char* to_string(AblationAxis axis);

/// One full run per value with everything else fixed. Values are given as
/// text ("0.1", "3", "step"). Throws std::invalid_argument on an empty list.
std::vector<ComparisonRow> run_ablation(const RunConfig& cfg, AblationAxis axis,
                                        const std::vector<std::string>& values,
                                        const IterationObserver& observer = {});

/// label,mAP,R@1,R@3,R@5
void write_table_csv(const std::vector<ComparisonRow>& rows, const std::string& label_header,
                     const std::filesystem::path& path);

}  // namespace ppcc
