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

#include "ppcc/pipeline.hpp"

#include <fstream>
#include <sstream>

namespace ppcc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

template <typename F>
auto step(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(name, e.what());
  }
}

bool is_matching(Method m) {
  return m == Method::kFace || m == Method::kIde || m == Method::kFaceIde;
}

MatchChannel match_channel(Method m) {
  switch (m) {
    case Method::kIde: return MatchChannel::kIde;
    case Method::kFaceIde: return MatchChannel::kFaceIde;
    default: return MatchChannel::kFace;
  }
}

ComparisonRow row_of(std::string label, const EvalReport& report) {
  return {std::move(label), report.mean_ap, report.recall};
}

std::string format_value(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

}  // namespace

const char* to_string(Method method) {
  switch (method) {
    case Method::kFace: return "face";
    case Method::kIde: return "ide";
    case Method::kFaceIde: return "face+ide";
    case Method::kLp: return "lp";
    case Method::kPpccV: return "ppcc-v";
    case Method::kPpccVt: return "ppcc-vt";
  }
  return "ppcc-vt";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kFace, Method::kIde, Method::kFaceIde, Method::kLp,
                   Method::kPpccV, Method::kPpccVt}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method: " + name);
}

RunConfig default_run_config(Method method) {
  RunConfig cfg;
  cfg.method = method;
  if (method == Method::kLp) {
    cfg.propagation.rule = UpdateRule::kLinearDiffusion;
    cfg.propagation.schedule = Schedule::kNone;
  }
  return cfg;
}

RunConfig run_config_from_json(const json& j) {
  const Method method = parse_method(j.value("method", std::string("ppcc-vt")));
  RunConfig cfg = default_run_config(method);
  if (j.contains("preset")) cfg.synth = synth_preset(j.at("preset").get<std::string>());
  if (j.contains("synth")) from_json(j.at("synth"), cfg.synth);
  if (j.contains("seed")) cfg.synth.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("dataset")) cfg.dataset = j.at("dataset").get<std::string>();
  if (j.contains("setting")) cfg.setting = parse_setting(j.at("setting").get<std::string>());
  if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("graph")) {
    const json& g = j.at("graph");
    cfg.graph.knn = g.value("knn", cfg.graph.knn);
    cfg.graph.floor = g.value("floor", cfg.graph.floor);
    cfg.graph.fuse = g.value("fuse", cfg.graph.fuse);
    if (g.contains("fusion")) {
      const auto w = g.at("fusion").get<std::vector<double>>();
      if (w.size() != 2) throw std::invalid_argument("graph.fusion needs two weights");
      cfg.graph.fusion = {w[0], w[1]};
    }
    if (g.contains("portrait_channel")) {
      cfg.graph.portrait_channel = parse_channel(g.at("portrait_channel").get<std::string>());
    }
    if (g.contains("gallery_channel")) {
      cfg.graph.gallery_channel = parse_channel(g.at("gallery_channel").get<std::string>());
    }
  }
  if (j.contains("propagation")) {
    const json& p = j.at("propagation");
    auto& prop = cfg.propagation;
    prop.temperature = p.value("temperature", prop.temperature);
    prop.topk = p.value("topk", prop.topk);
    prop.max_iterations = p.value("max_iters", prop.max_iterations);
    if (p.contains("schedule")) prop.schedule = parse_schedule(p.at("schedule").get<std::string>());
    if (p.contains("order")) prop.order = parse_order(p.at("order").get<std::string>());
  }
  if (j.contains("eval")) {
    cfg.eval.rk_include_others = j.at("eval").value("rk_include_others", false);
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["method"] = to_string(cfg.method);
  j["setting"] = to_string(cfg.setting);
  j["out_dir"] = cfg.out_dir.string();
  if (cfg.dataset) {
    j["dataset"] = cfg.dataset->string();
  } else {
    j["synth"] = cfg.synth;
  }
  j["graph"] = {{"knn", cfg.graph.knn},
                {"floor", cfg.graph.floor},
                {"fuse", cfg.graph.fuse},
                {"fusion", {cfg.graph.fusion.face, cfg.graph.fusion.body}},
                {"portrait_channel", channel_name(cfg.graph.portrait_channel)},
                {"gallery_channel", channel_name(cfg.graph.gallery_channel)}};
  j["propagation"] = {{"temperature", cfg.propagation.temperature},
                      {"topk", cfg.propagation.topk},
                      {"schedule", to_string(cfg.propagation.schedule)},
                      {"max_iters", cfg.propagation.max_iterations},
                      {"order", to_string(cfg.propagation.order)}};
  j["eval"] = {{"rk_include_others", cfg.eval.rk_include_others}};
  return j;
}

RunResult run_pipeline(const RunConfig& cfg, const IterationObserver& observer) {
  const fs::path out = cfg.out_dir;
  step("config", [&] {
    fs::create_directories(out);
    write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  });

  const Dataset ds = step("synth", [&] {
    if (cfg.dataset) return load_dataset(*cfg.dataset);
    save_dataset(generate(cfg.synth), out / "dataset");
    return load_dataset(out / "dataset");
  });

  RunResult result;
  const fs::path beliefs_path = out / "beliefs.bin";
  if (is_matching(cfg.method)) {
    step("match", [&] {
      save_beliefs(match_portraits(ds, match_channel(cfg.method), cfg.graph.fusion),
                   beliefs_path);
    });
  } else {
    const PropagationGraph graph = step("build-graph", [&] {
      const fs::path path = out / "graph.bin";
      save_graph(cfg.method == Method::kPpccV ? build_instance_graph(ds, cfg.graph)
                                              : build_graph(ds, cfg.graph),
                 path);
      return load_graph(path);
    });
    step("propagate", [&] {
      PropagationParams params = cfg.propagation;
      params.rule = cfg.method == Method::kLp ? UpdateRule::kLinearDiffusion
                                              : UpdateRule::kCompetitiveConsensus;
      std::string stats_lines;
      const BeliefState nodes =
          propagate(graph, params, [&](const IterationStats& s, const BeliefState& st) {
            result.stats.push_back(s);
            stats_lines += json(s).dump() + "\n";
            if (observer) observer(s, st);
          });
      write_text(out / "stats.jsonl", stats_lines);
      save_beliefs(pool_beliefs(graph, nodes), beliefs_path);
    });
  }

  step("evaluate", [&] {
    result.beliefs = load_beliefs(beliefs_path);
    result.report = evaluate(result.beliefs, ds, cfg.setting, cfg.eval);
    write_text(out / "report.json", to_json(result.report).dump(2) + "\n");
  });
  return result;
}

std::vector<ComparisonRow> compare_methods(const RunConfig& cfg,
                                           const std::vector<Method>& methods) {
  if (methods.empty()) throw std::invalid_argument("compare_methods: no methods");
  std::vector<ComparisonRow> rows;
  for (Method m : methods) {
    RunConfig run = cfg;
    run.method = m;
    if (m == Method::kLp) run.propagation.schedule = Schedule::kNone;
    run.out_dir = cfg.out_dir / "compare" / to_string(m);
    rows.push_back(row_of(to_string(m), run_pipeline(run).report));
  }
  return rows;
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "temperature") return AblationAxis::kTemperature;
  if (name == "topk") return AblationAxis::kTopk;
  if (name == "schedule") return AblationAxis::kSchedule;
  throw std::invalid_argument("unknown ablation axis: " + name);
}

const char* to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kTemperature: return "temperature";
    case AblationAxis::kTopk: return "topk";
    case AblationAxis::kSchedule: return "schedule";
  }
  return "temperature";
}

std::vector<ComparisonRow> run_ablation(const RunConfig& cfg, AblationAxis axis,
                                        const std::vector<std::string>& values,
                                        const IterationObserver& observer) {
  if (values.empty()) throw std::invalid_argument("run_ablation: empty value list");
  std::vector<ComparisonRow> rows;
  for (const std::string& value : values) {
    RunConfig run = cfg;
    std::string label = value;
    switch (axis) {
      case AblationAxis::kTemperature:
        run.propagation.temperature = std::stod(value);
        label = format_value(run.propagation.temperature);
        break;
      case AblationAxis::kTopk:
        run.propagation.topk = std::stoi(value);
        label = std::to_string(run.propagation.topk);
        break;
      case AblationAxis::kSchedule:
        run.propagation.schedule = parse_schedule(value);
        break;
    }
    run.out_dir = cfg.out_dir / "ablation" / (std::string(to_string(axis)) + "_" + label);
    rows.push_back(row_of(label, run_pipeline(run, observer).report));
  }
  return rows;
}

void write_table_csv(const std::vector<ComparisonRow>& rows, const std::string& label_header,
                     const fs::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << label_header << ",mAP";
  if (!rows.empty()) {
    for (const auto& [k, v] : rows.front().recall) out << ",R@" << k;
  }
  out << "\n";
  for (const auto& row : rows) {
    out << row.label << ',' << row.mean_ap;
    for (const auto& [k, v] : row.recall) out << ',' << v;
    out << "\n";
  }
  write_text(path, out.str());
}

}  // namespace ppcc
