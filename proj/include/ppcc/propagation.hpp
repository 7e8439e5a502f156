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

// Identity propagation over a PropagationGraph.
//
// Portraits are fixed one-hot sources. Every tracklet holds one probability
// vector over the C identities, shared by all of its instances, starting at
// zero. Two update rules are available:
//
//   linear diffusion       p_k <- sum_j alpha_kj p_j
//   competitive consensus  eta_k(c) = max_j alpha_kj p_j(c)
//                          p_k(c)   = softmax(eta_k / T)(c)
//
// Competitive consensus is one coordinate-ascent step on
//
//   J(p) = sum_c p(c) * alpha_{k,z_c} p_{z_c}(c) + T * H(p)
//
// with z_c the strongest source for class c; the tempered softmax is the
// exact maximizer of J over the simplex. Progressive propagation freezes the
// most confident tracklets after each sweep.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppcc/affinity_graph.hpp"
#include "ppcc/common.hpp"

namespace ppcc {

enum class UpdateRule { kLinearDiffusion, kCompetitiveConsensus };
enum class Schedule { kNone, kStep, kThreshold };
enum class UpdateOrder { kSequential, kSynchronous };

struct PropagationParams {
  UpdateRule rule = UpdateRule::kCompetitiveConsensus;
  double temperature = 0.1;
  int topk = 1;
  Schedule schedule = Schedule::kStep;
  double step_base = 0.5;
  double step_increment = 0.1;
  double threshold = 0.5;
  int max_iterations = 8;
  UpdateOrder order = UpdateOrder::kSequential;
};

/// Throws std::invalid_argument when T <= 0, topk < 1 or base outside [0, 1].
void check_params(const PropagationParams& params);

struct BeliefState {
  RowMatrix<double> probs;           // tracklets x classes
  std::vector<std::uint8_t> frozen;  // per tracklet
  std::vector<std::uint8_t> touched; // received nonzero evidence
  int iterations = 0;

  BeliefState() = default;
  BeliefState(int tracklets, int classes);

  int num_tracklets() const { return static_cast<int>(probs.rows()); }
  int num_classes() const { return static_cast<int>(probs.cols()); }
  double confidence(int k) const { return touched[k] ? probs.row(k).maxCoeff() : 0.0; }

  bool operator==(const BeliefState& other) const;
};

/// Probability vector a neighbor node contributes: one-hot for a portrait,
/// the current tracklet vector otherwise.
inline auto source_vector(const PropagationGraph& graph, const BeliefState& state,
                          std::uint32_t node) {
  return graph.is_portrait(node)
             ? Vector<double>(Vector<double>::Unit(state.num_classes(), node))
             : Vector<double>(state.probs.row(node - graph.num_classes).transpose());
}

/// sum_j alpha_kj p_j, without renormalization. Returns the current vector
/// when tracklet k has no neighbors.
Vector<double> linear_diffusion_update(int k, const PropagationGraph& graph,
                                       const BeliefState& state);

struct Evidence {
  Vector<double> eta;
  bool touched = false;  // some entry is nonzero
};

/// Per class, the mean of the `topk` largest contributions alpha_kj p_j(c)
/// (the max for topk = 1). With fewer than topk neighbors the mean runs over
/// all of them.
Evidence consensus_evidence(int k, const PropagationGraph& graph,
                            const BeliefState& state, int topk);

/// Tempered softmax exp(eta/T) / sum exp(eta/T), shifted by max(eta).
template <typename Derived>
Vector<typename Derived::Scalar> consensus_update(
    const Eigen::MatrixBase<Derived>& eta, typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  if (!(temperature > Scalar(0))) {
    throw std::invalid_argument("consensus_update: temperature must be > 0");
  }
  const Scalar top = eta.maxCoeff();
  Vector<Scalar> p = ((eta.array() - top) / temperature).exp().matrix();
  return p / p.sum();
}

/// Shannon entropy in nats with 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    if (p[c] > Scalar(0)) h -= p[c] * std::log(p[c]);
  }
  return h;
}

/// <p, eta> + T * H(p): the per-tracklet objective once sources are selected.
template <typename DerivedP, typename DerivedE>
typename DerivedP::Scalar consensus_objective(const Eigen::MatrixBase<DerivedP>& p,
                                              const Eigen::MatrixBase<DerivedE>& eta,
                                              typename DerivedP::Scalar temperature) {
  return p.dot(eta) + temperature * entropy(p);
}

struct ObjectiveReport {
  double value = 0.0;
  double entropy = 0.0;
  /// Selected source node per class (argmax_j alpha_kj p_j(c), lowest node
  /// id on ties). Empty when tracklet k has no neighbors.
  std::vector<std::uint32_t> sources;
};

/// Evaluates the objective at `p` for tracklet k. Throws
/// std::invalid_argument when p is off the simplex by more than 1e-6.
ObjectiveReport objective(int k, const Vector<double>& p,
                          const PropagationGraph& graph, const BeliefState& state,
                          double temperature);

/// min(1, base + increment * iter).
double step_ratio(const PropagationParams& params, int iter);

/// Tracklets to freeze after sweep `iter` (0-based), disjoint from the
/// current frozen set and sorted ascending.
///   step:      bring the frozen share of touched tracklets up to
///              floor(r * touched), most confident first, ties by id
///   threshold: every touched tracklet with confidence >= threshold
std::vector<int> freezing_decision(const BeliefState& state,
                                   const PropagationParams& params, int iter);

struct IterationStats {
  int iteration = 0;  // 0-based sweep index
  int touched = 0;
  int frozen = 0;
  int newly_frozen = 0;
  double mean_confidence = 0.0;  // over touched tracklets
  double max_change = 0.0;       // L-infinity over updated vectors
};

void to_json(nlohmann::json& j, const IterationStats& s);

using IterationObserver =
    std::function<void(const IterationStats&, const BeliefState&)>;

/// Runs up to max_iterations sweeps. Stops early once every tracklet is
/// frozen or no vector moved by more than 1e-12.
BeliefState propagate(const PropagationGraph& graph, const PropagationParams& params,
                      const IterationObserver& observer = {});

/// Averages node beliefs into their owning tracklets for instance-level
/// graphs (identity for tracklet-level graphs). A tracklet's vector is the
/// mean over its touched nodes; it is touched iff one of them is.
BeliefState pool_beliefs(const PropagationGraph& graph, const BeliefState& nodes);

/// Belief file, little-endian: "PPCB", u32 version, u32 tracklets, u32 classes,
/// u32 iterations, tracklets x classes float32, then tracklets frozen bytes and
/// tracklets touched bytes.
void save_beliefs(const BeliefState& state, const std::filesystem::path& path);
BeliefState load_beliefs(const std::filesystem::path& path);

/// Beliefs with values rounded to float32, as they come back from disk.
BeliefState quantized(const BeliefState& state);

const char* to_string(UpdateRule rule);
const char* to_string(Schedule schedule);
const char* to_string(UpdateOrder order);
UpdateRule parse_rule(const std::string& name);
Schedule parse_schedule(const std::string& name);
UpdateOrder parse_order(const std::string& name);

}  // namespace ppcc
