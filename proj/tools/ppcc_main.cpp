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

// ppcc: synth | build-graph | propagate | match | evaluate | run | ablate
//
// Exit codes: 0 success, 1 configuration error, 2 step failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ppcc/affinity_graph.hpp"
#include "ppcc/baselines.hpp"
#include "ppcc/dataset.hpp"
#include "ppcc/evaluation.hpp"
#include "ppcc/pipeline.hpp"
#include "ppcc/propagation.hpp"
#include "ppcc/synth.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kConfigError = 1;
constexpr int kStepError = 2;

/// Configuration problems detected before any step runs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

template <typename F>
auto as_config(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

ppcc::FusionWeights parse_fusion(const std::string& text) {
  const auto parts = split_list(text);
  if (parts.size() != 2) throw ConfigError("--fusion expects two weights, e.g. 0.8,0.2");
  return {std::stod(parts[0]), std::stod(parts[1])};
}

void print_table(const std::vector<ppcc::ComparisonRow>& rows, const std::string& head) {
  std::printf("%-12s %8s %8s %8s %8s\n", head.c_str(), "mAP", "R@1", "R@3", "R@5");
  for (const auto& r : rows) {
    auto rk = [&](int k) { return r.recall.count(k) ? r.recall.at(k) : 0.0; };
    std::printf("%-12s %8.4f %8.4f %8.4f %8.4f\n", r.label.c_str(), r.mean_ap, rk(1),
                rk(3), rk(5));
  }
}

/// Options shared by `run` and `ablate`; explicit flags override the config.
struct RunOptions {
  std::string config;
  std::string preset;
  std::string dataset;
  std::string method;
  std::string setting;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
  std::optional<int> topk;
  std::optional<int> knn;
  std::optional<int> max_iters;
  std::string schedule;
  std::string order;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "RunConfig JSON file");
    app->add_option("--preset", preset, "synthetic preset: easy|hard|noisy");
    app->add_option("--dataset", dataset, "use an existing dataset directory");
    app->add_option("--method", method, "face|ide|face+ide|lp|ppcc-v|ppcc-vt");
    app->add_option("--setting", setting, "in|across");
    app->add_option("--out", out, "output directory");
    app->add_option("--seed", seed, "synthetic generator seed");
    app->add_option("--temperature", temperature, "softmax temperature");
    app->add_option("--topk", topk, "top-k evidence averaging");
    app->add_option("--knn", knn, "neighbors kept per tracklet");
    app->add_option("--max-iters", max_iters, "propagation sweeps");
    app->add_option("--schedule", schedule, "none|step|threshold");
    app->add_option("--order", order, "seq|sync");
  }

  ppcc::RunConfig resolve() const {
    return as_config([&] {
      json j = config.empty() ? json::object() : read_json(config);
      if (!preset.empty()) {
        j["preset"] = preset;
        j.erase("synth");
      }
      if (!method.empty()) j["method"] = method;
      ppcc::RunConfig cfg = ppcc::run_config_from_json(j);
      if (!dataset.empty()) cfg.dataset = dataset;
      if (!setting.empty()) cfg.setting = ppcc::parse_setting(setting);
      if (!out.empty()) cfg.out_dir = out;
      if (seed) cfg.synth.seed = *seed;
      if (temperature) cfg.propagation.temperature = *temperature;
      if (topk) cfg.propagation.topk = *topk;
      if (knn) cfg.graph.knn = *knn;
      if (max_iters) cfg.propagation.max_iterations = *max_iters;
      if (!schedule.empty()) cfg.propagation.schedule = ppcc::parse_schedule(schedule);
      if (!order.empty()) cfg.propagation.order = ppcc::parse_order(order);
      ppcc::check_params(cfg.propagation);
      if (auto errors = ppcc::check_config(cfg.synth); !errors.empty() && !cfg.dataset) {
        throw ConfigError("synth config: " + errors.front());
      }
      return cfg;
    });
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identity propagation from portraits to tracklets"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> unused_seed;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_config, synth_preset, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "SynthConfig JSON file");
  synth->add_option("--preset", synth_preset, "easy|hard|noisy");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "dataset directory")->required();

  // build-graph
  auto* build = app.add_subcommand("build-graph", "build the propagation graph");
  std::string build_dataset, build_out, build_fusion = "0.8,0.2";
  ppcc::GraphParams graph_params;
  bool no_fusion = false, visual_only = false;
  build->add_option("--dataset", build_dataset, "dataset directory")->required();
  build->add_option("--knn", graph_params.knn, "neighbors kept per tracklet");
  build->add_option("--floor", graph_params.floor, "minimum affinity kept");
  build->add_option("--fusion", build_fusion, "face,body weights for fused links");
  build->add_flag("--no-fusion", no_fusion, "tracklet links use the body channel only");
  build->add_flag("--visual-only", visual_only,
                  "one node per instance (no temporal links); beliefs pool back to tracklets");
  build->add_option("--seed", unused_seed, "accepted for uniformity; unused");
  build->add_option("--out", build_out, "graph file")->required();

  // propagate
  auto* prop = app.add_subcommand("propagate", "run label propagation");
  std::string prop_graph, prop_out, prop_stats, prop_mode = "ppcc", prop_schedule,
                                                 prop_order = "seq";
  ppcc::PropagationParams prop_params;
  prop->add_option("--graph", prop_graph, "graph file")->required();
  prop->add_option("--mode", prop_mode, "ppcc|lp");
  prop->add_option("--temperature", prop_params.temperature, "softmax temperature");
  prop->add_option("--topk", prop_params.topk, "top-k evidence averaging");
  prop->add_option("--schedule", prop_schedule,
                   "step|threshold|none (default: step for ppcc, none for lp)");
  prop->add_option("--max-iters", prop_params.max_iterations, "maximum sweeps");
  prop->add_option("--order", prop_order, "seq|sync");
  prop->add_option("--seed", unused_seed, "accepted for uniformity; unused");
  prop->add_option("--out", prop_out, "belief file")->required();
  prop->add_option("--stats", prop_stats, "per-iteration JSON lines");

  // match
  auto* match = app.add_subcommand("match", "direct portrait matching baseline");
  std::string match_dataset, match_out, match_channel = "face";
  match->add_option("--dataset", match_dataset, "dataset directory")->required();
  match->add_option("--channel", match_channel, "face|ide|face+ide");
  match->add_option("--seed", unused_seed, "accepted for uniformity; unused");
  match->add_option("--out", match_out, "belief file")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score beliefs against ground truth");
  std::string eval_beliefs, eval_dataset, eval_setting = "across", eval_out, eval_dump;
  bool rk_include_others = false;
  eval->add_option("--beliefs", eval_beliefs, "belief file")->required();
  eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval->add_option("--setting", eval_setting, "in|across");
  eval->add_option("--out", eval_out, "report JSON");
  eval->add_option("--dump-rankings", eval_dump, "ranking CSV");
  eval->add_flag("--rk-include-others", rk_include_others,
                 "count OTHERS tracklets in the R@k denominator");
  eval->add_option("--seed", unused_seed, "accepted for uniformity; unused");

  // run
  auto* run = app.add_subcommand("run", "full pipeline");
  RunOptions run_opts;
  run_opts.attach(run);
  std::string compare;
  run->add_option("--compare", compare,
                  "comma-separated methods to run side by side, e.g. face,lp,ppcc-v,ppcc-vt");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "one-axis parameter sweep");
  RunOptions ablate_opts;
  ablate_opts.attach(ablate);
  std::string axis, values;
  ablate->add_option("--axis", axis, "temperature|topk|schedule")->required();
  ablate->add_option("--values", values, "comma-separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*synth) {
      ppcc::SynthConfig cfg = as_config([&] {
        ppcc::SynthConfig c =
            synth_preset.empty() ? ppcc::SynthConfig{} : ppcc::synth_preset(synth_preset);
        if (!synth_config.empty()) ppcc::from_json(read_json(synth_config), c);
        if (synth_seed) c.seed = *synth_seed;
        if (auto errors = ppcc::check_config(c); !errors.empty()) {
          throw ConfigError(errors.front());
        }
        return c;
      });
      ppcc::save_dataset(ppcc::generate(cfg), synth_out);
      std::printf("wrote %s (C=%d, M=%d, seed=%llu)\n", synth_out.c_str(), cfg.num_classes,
                  cfg.num_tracklets, static_cast<unsigned long long>(cfg.seed));
    } else if (*build) {
      as_config([&] {
        graph_params.fuse = !no_fusion;
        if (graph_params.fuse) graph_params.fusion = parse_fusion(build_fusion);
        if (graph_params.knn < 1) throw ConfigError("--knn must be >= 1");
        return 0;
      });
      const ppcc::Dataset ds = ppcc::load_dataset(build_dataset);
      const ppcc::PropagationGraph g = visual_only
                                           ? ppcc::build_instance_graph(ds, graph_params)
                                           : ppcc::build_graph(ds, graph_params);
      ppcc::save_graph(g, build_out);
      std::printf("wrote %s (%d nodes, %zu edges)\n", build_out.c_str(), g.num_tracklets,
                  g.edges.size());
    } else if (*prop) {
      as_config([&] {
        prop_params.rule = ppcc::parse_rule(prop_mode);
        prop_params.schedule =
            prop_schedule.empty()
                ? (prop_params.rule == ppcc::UpdateRule::kLinearDiffusion
                       ? ppcc::Schedule::kNone
                       : ppcc::Schedule::kStep)
                : ppcc::parse_schedule(prop_schedule);
        prop_params.order = ppcc::parse_order(prop_order);
        ppcc::check_params(prop_params);
        return 0;
      });
      const ppcc::PropagationGraph g = ppcc::load_graph(prop_graph);
      std::string stats;
      const auto nodes =
          ppcc::propagate(g, prop_params, [&](const ppcc::IterationStats& s, const auto&) {
            stats += json(s).dump() + "\n";
          });
      ppcc::save_beliefs(ppcc::pool_beliefs(g, nodes), prop_out);
      if (!prop_stats.empty()) write_file(prop_stats, stats);
      std::printf("wrote %s after %d iterations\n", prop_out.c_str(), nodes.iterations);
    } else if (*match) {
      const auto channel = as_config([&] { return ppcc::parse_match_channel(match_channel); });
      const ppcc::Dataset ds = ppcc::load_dataset(match_dataset);
      ppcc::save_beliefs(ppcc::match_portraits(ds, channel), match_out);
      std::printf("wrote %s\n", match_out.c_str());
    } else if (*eval) {
      const auto setting = as_config([&] { return ppcc::parse_setting(eval_setting); });
      const ppcc::Dataset ds = ppcc::load_dataset(eval_dataset);
      const ppcc::BeliefState beliefs = ppcc::load_beliefs(eval_beliefs);
      ppcc::EvalOptions options;
      options.rk_include_others = rk_include_others;
      const auto report = ppcc::evaluate(beliefs, ds, setting, options);
      const std::string text = ppcc::to_json(report).dump(2) + "\n";
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        write_file(eval_out, text);
        std::printf("mAP %.4f  R@1 %.4f  R@3 %.4f  R@5 %.4f\n", report.mean_ap,
                    report.recall.at(1), report.recall.at(3), report.recall.at(5));
      }
      if (!eval_dump.empty()) ppcc::write_rankings_csv(report, ds, eval_dump);
    } else if (*run) {
      const ppcc::RunConfig cfg = run_opts.resolve();
      if (!compare.empty()) {
        std::vector<ppcc::Method> methods;
        as_config([&] {
          for (const auto& m : split_list(compare)) methods.push_back(ppcc::parse_method(m));
          return 0;
        });
        const auto rows = ppcc::compare_methods(cfg, methods);
        ppcc::write_table_csv(rows, "method", cfg.out_dir / "comparison.csv");
        print_table(rows, "method");
      } else {
        const auto result = ppcc::run_pipeline(cfg);
        std::printf("%s %s: mAP %.4f  R@1 %.4f  R@3 %.4f  R@5 %.4f\n",
                    ppcc::to_string(cfg.method), ppcc::to_string(cfg.setting),
                    result.report.mean_ap, result.report.recall.at(1),
                    result.report.recall.at(3), result.report.recall.at(5));
      }
    } else if (*ablate) {
      const ppcc::RunConfig cfg = ablate_opts.resolve();
      const auto ax = as_config([&] { return ppcc::parse_axis(axis); });
      const auto list = split_list(values);
      if (list.empty()) throw ConfigError("--values is empty");
      const auto rows = ppcc::run_ablation(cfg, ax, list);
      fs::create_directories(cfg.out_dir);
      ppcc::write_table_csv(rows, ppcc::to_string(ax),
                            cfg.out_dir / (std::string("ablation_") + axis + ".csv"));
      print_table(rows, axis);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kStepError;
  }
  return 0;
}
