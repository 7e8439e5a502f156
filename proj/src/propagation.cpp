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

#include "ppcc/propagation.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "ppcc/binary_io.hpp"
#include "ppcc/parallel.hpp"

namespace ppcc {

namespace {

constexpr std::array<std::uint8_t, 4> kBeliefMagic{'P', 'P', 'C', 'B'};
constexpr std::uint32_t kBeliefVersion = 1;
constexpr double kConvergence = 1e-12;

/// p_j(c) for a neighbor node without materializing one-hot vectors.
double source_prob(const PropagationGraph& graph, const BeliefState& state,
                   std::uint32_t node, int c) {
  if (graph.is_portrait(node)) return node == static_cast<std::uint32_t>(c) ? 1.0 : 0.0;
  return state.probs(node - graph.num_classes, c);
}

struct Update {
  Vector<double> p;
  bool touched = false;
};

Update compute_update(int k, const PropagationGraph& graph, const BeliefState& state,
                      const PropagationParams& params) {
  if (params.rule == UpdateRule::kLinearDiffusion) {
    Vector<double> p = linear_diffusion_update(k, graph, state);
    const bool touched = !graph.neighbors(k).empty() && (p.array() != 0.0).any();
    return {std::move(p), touched};
  }
  Evidence ev = consensus_evidence(k, graph, state, params.topk);
  if (!ev.touched) return {Vector<double>(), false};
  return {consensus_update(ev.eta, params.temperature), true};
}

}  // namespace

void check_params(const PropagationParams& params) {
  if (!(params.temperature > 0.0)) {
    throw std::invalid_argument("propagation: temperature must be > 0");
  }
  if (params.topk < 1) throw std::invalid_argument("propagation: topk must be >= 1");
  if (!(params.step_base >= 0.0 && params.step_base <= 1.0)) {
    throw std::invalid_argument("propagation: step base must be in [0, 1]");
  }
  if (params.max_iterations < 1) {
    throw std::invalid_argument("propagation: max iterations must be >= 1");
  }
}

BeliefState::BeliefState(int tracklets, int classes)
    : probs(RowMatrix<double>::Zero(tracklets, classes)),
      frozen(tracklets, 0),
      touched(tracklets, 0) {}

bool BeliefState::operator==(const BeliefState& other) const {
  return probs.rows() == other.probs.rows() && probs.cols() == other.probs.cols() &&
         probs == other.probs && frozen == other.frozen && touched == other.touched &&
         iterations == other.iterations;
}

Vector<double> linear_diffusion_update(int k, const PropagationGraph& graph,
                                       const BeliefState& state) {
  const auto nbrs = graph.neighbors(k);
  if (nbrs.empty()) return state.probs.row(k).transpose();
  Vector<double> out = Vector<double>::Zero(state.num_classes());
  for (const Neighbor& nb : nbrs) {
    if (graph.is_portrait(nb.node)) {
      out[nb.node] += nb.alpha;
    } else {
      out += nb.alpha * state.probs.row(nb.node - graph.num_classes).transpose();
    }
  }
  return out;
}

Evidence consensus_evidence(int k, const PropagationGraph& graph,
                            const BeliefState& state, int topk) {
  const int C = state.num_classes();
  const auto nbrs = graph.neighbors(k);
  Evidence ev{Vector<double>::Zero(C), false};
  if (nbrs.empty()) return ev;
  const std::size_t m = std::min<std::size_t>(std::max(topk, 1), nbrs.size());
  std::vector<double> contrib(nbrs.size());
  for (int c = 0; c < C; ++c) {
    for (std::size_t j = 0; j < nbrs.size(); ++j) {
      contrib[j] = nbrs[j].alpha * source_prob(graph, state, nbrs[j].node, c);
    }
    if (m == 1) {
      ev.eta[c] = *std::max_element(contrib.begin(), contrib.end());
    } else {
      std::partial_sort(contrib.begin(), contrib.begin() + m, contrib.end(),
                        std::greater<>());
      ev.eta[c] = std::accumulate(contrib.begin(), contrib.begin() + m, 0.0) /
                  static_cast<double>(m);
    }
  }
  ev.touched = (ev.eta.array() != 0.0).any();
  return ev;
}

ObjectiveReport objective(int k, const Vector<double>& p, const PropagationGraph& graph,
                          const BeliefState& state, double temperature) {
  const int C = state.num_classes();
  if (p.size() != C) throw std::invalid_argument("objective: wrong vector length");
  if ((p.array() < -1e-6).any() || std::abs(p.sum() - 1.0) > 1e-6) {
    throw std::invalid_argument("objective: p is not on the probability simplex");
  }
  ObjectiveReport report;
  Vector<double> selected = Vector<double>::Zero(C);
  const auto nbrs = graph.neighbors(k);
  if (!nbrs.empty()) {
    report.sources.resize(C);
    for (int c = 0; c < C; ++c) {
      double best = -1.0;
      std::uint32_t source = 0;
      for (const Neighbor& nb : nbrs) {
        const double v = nb.alpha * source_prob(graph, state, nb.node, c);
        if (v > best || (v == best && nb.node < source)) {
          best = v;
          source = nb.node;
        }
      }
      report.sources[c] = source;
      selected[c] = best;
    }
  }
  report.entropy = entropy(p);
  report.value = consensus_objective(p, selected, temperature);
  return report;
}

double step_ratio(const PropagationParams& params, int iter) {
  return std::min(1.0, params.step_base + params.step_increment * iter);
}

std::vector<int> freezing_decision(const BeliefState& state,
                                   const PropagationParams& params, int iter) {
  const int M = state.num_tracklets();
  std::vector<int> candidates;
  for (int k = 0; k < M; ++k) {
    if (state.touched[k] && !state.frozen[k]) candidates.push_back(k);
  }
  switch (params.schedule) {
    case Schedule::kNone:
      return {};
    case Schedule::kThreshold: {
      std::vector<int> out;
      for (int k : candidates) {
        if (state.confidence(k) >= params.threshold) out.push_back(k);
      }
      return out;
    }
    case Schedule::kStep: {
      int touched = 0, frozen = 0;
      for (int k = 0; k < M; ++k) {
        touched += state.touched[k] ? 1 : 0;
        frozen += (state.touched[k] && state.frozen[k]) ? 1 : 0;
      }
      const auto target = static_cast<int>(
          std::floor(step_ratio(params, iter) * touched + 1e-9));
      const int need = std::min<int>(target - frozen, candidates.size());
      if (need <= 0) return {};
      std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return state.confidence(a) > state.confidence(b);
      });
      candidates.resize(need);
      std::sort(candidates.begin(), candidates.end());
      return candidates;
    }
  }
  return {};
}

void to_json(nlohmann::json& j, const IterationStats& s) {
  j = nlohmann::json{{"iteration", s.iteration},
                     {"touched", s.touched},
                     {"frozen", s.frozen},
                     {"newly_frozen", s.newly_frozen},
                     {"mean_confidence", s.mean_confidence},
                     {"max_change", s.max_change}};
}

BeliefState propagate(const PropagationGraph& graph, const PropagationParams& params,
                      const IterationObserver& observer) {
  check_params(params);
  const int M = graph.num_tracklets;
  BeliefState state(M, graph.num_classes);

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    double max_change = 0.0;
    auto apply = [&](int k, Update&& u) {
      if (!u.touched) return;
      max_change = std::max(
          max_change, (u.p.transpose() - state.probs.row(k)).cwiseAbs().maxCoeff());
      state.probs.row(k) = u.p.transpose();
      state.touched[k] = 1;
    };

    if (params.order == UpdateOrder::kSequential) {
      for (int k = 0; k < M; ++k) {
        if (!state.frozen[k]) apply(k, compute_update(k, graph, state, params));
      }
    } else {
      // Generation t is read-only while generation t+1 is written per slot.
      std::vector<Update> next(M);
      parallel_for(M, [&](std::size_t k) {
        if (!state.frozen[k]) {
          next[k] = compute_update(static_cast<int>(k), graph, state, params);
        }
      });
      for (int k = 0; k < M; ++k) apply(k, std::move(next[k]));
    }
    state.iterations = iter + 1;

    const auto fresh = freezing_decision(state, params, iter);
    for (int k : fresh) state.frozen[k] = 1;

    IterationStats stats;
    stats.iteration = iter;
    stats.newly_frozen = static_cast<int>(fresh.size());
    stats.max_change = max_change;
    double conf = 0.0;
    for (int k = 0; k < M; ++k) {
      stats.frozen += state.frozen[k];
      if (state.touched[k]) {
        ++stats.touched;
        conf += state.confidence(k);
      }
    }
    stats.mean_confidence = stats.touched > 0 ? conf / stats.touched : 0.0;
    if (observer) observer(stats, state);

    if (stats.frozen == M || max_change <= kConvergence) break;
  }
  return state;
}

BeliefState pool_beliefs(const PropagationGraph& graph, const BeliefState& nodes) {
  if (graph.pool_group.empty()) return nodes;
  const int T = graph.pooled_tracklets;
  BeliefState out(T, nodes.num_classes());
  out.iterations = nodes.iterations;
  std::vector<int> counts(T, 0);
  std::vector<int> frozen(T, 0);
  for (int i = 0; i < nodes.num_tracklets(); ++i) {
    if (!nodes.touched[i]) continue;
    const auto t = graph.pool_group[i];
    out.probs.row(t) += nodes.probs.row(i);
    ++counts[t];
    frozen[t] += nodes.frozen[i];
  }
  for (int t = 0; t < T; ++t) {
    if (counts[t] == 0) continue;
    out.probs.row(t) /= counts[t];
    out.touched[t] = 1;
  }
  std::vector<int> sizes(T, 0);
  for (auto t : graph.pool_group) ++sizes[t];
  for (int t = 0; t < T; ++t) out.frozen[t] = frozen[t] == sizes[t] ? 1 : 0;
  return out;
}

void save_beliefs(const BeliefState& state, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.raw(kBeliefMagic);
  w.u32(kBeliefVersion);
  w.u32(static_cast<std::uint32_t>(state.num_tracklets()));
  w.u32(static_cast<std::uint32_t>(state.num_classes()));
  w.u32(static_cast<std::uint32_t>(state.iterations));
  for (int k = 0; k < state.num_tracklets(); ++k) {
    for (int c = 0; c < state.num_classes(); ++c) {
      w.f32(static_cast<float>(state.probs(k, c)));
    }
  }
  for (auto f : state.frozen) w.u8(f ? 1 : 0);
  for (auto t : state.touched) w.u8(t ? 1 : 0);
  w.write_file(path);
}

BeliefState load_beliefs(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  for (auto b : kBeliefMagic) {
    if (r.u8() != b) throw io::FormatError(path.string() + ": not a belief file");
  }
  if (const auto v = r.u32(); v != kBeliefVersion) {
    throw io::FormatError(path.string() + ": unsupported belief version " +
                          std::to_string(v));
  }
  const auto M = static_cast<int>(r.u32());
  const auto C = static_cast<int>(r.u32());
  BeliefState state(M, C);
  state.iterations = static_cast<int>(r.u32());
  for (int k = 0; k < M; ++k) {
    for (int c = 0; c < C; ++c) state.probs(k, c) = r.f32();
  }
  for (auto& f : state.frozen) f = r.u8() ? 1 : 0;
  for (auto& t : state.touched) t = r.u8() ? 1 : 0;
  r.expect_end();
  return state;
}

BeliefState quantized(const BeliefState& state) {
  BeliefState out = state;
  out.probs = state.probs.cast<float>().cast<double>();
  return out;
}

const char* to_string(UpdateRule rule) {
  return rule == UpdateRule::kLinearDiffusion ? "lp" : "ppcc";
}

const char* to_string(Schedule schedule) {
  switch (schedule) {
    case Schedule::kNone: return "none";
    case Schedule::kStep: return "step";
    case Schedule::kThreshold: return "threshold";
  }
  return "none";
}

const char* to_string(UpdateOrder order) {
  return order == UpdateOrder::kSequential ? "seq" : "sync";
}

UpdateRule parse_rule(const std::string& name) {
  if (name == "ppcc") return UpdateRule::kCompetitiveConsensus;
  if (name == "lp") return UpdateRule::kLinearDiffusion;
  throw std::invalid_argument("unknown propagation mode: " + name);
}

Schedule parse_schedule(const std::string& name) {
  if (name == "none") return Schedule::kNone;
  if (name == "step") return Schedule::kStep;
  if (name == "threshold") return Schedule::kThreshold;
  throw std::invalid_argument("unknown schedule: " + name);
}

UpdateOrder parse_order(const std::string& name) {
  if (name == "seq") return UpdateOrder::kSequential;
  if (name == "sync") return UpdateOrder::kSynchronous;
  throw std::invalid_argument("unknown update order: " + name);
}

}  // namespace ppcc
