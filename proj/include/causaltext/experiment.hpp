// Copyright 2026 The causaltext Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CAUSALTEXT_EXPERIMENT_HPP
#define CAUSALTEXT_EXPERIMENT_HPP

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "causaltext/csv.hpp"
#include "causaltext/error.hpp"
#include "causaltext/external.hpp"
#include "causaltext/linearize.hpp"
#include "causaltext/llm.hpp"
#include "causaltext/metrics.hpp"
#include "causaltext/prompt.hpp"
#include "causaltext/util.hpp"

namespace causaltext::experiment {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

struct SettingSpec {
  PromptSetting::Kind kind = PromptSetting::Kind::ZeroShot;
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> finetuned_models;  // base model -> tuned name

  std::string label() const {
    switch (kind) {
      case PromptSetting::Kind::FineTune: return "fine-tuned";
      case PromptSetting::Kind::FewShot:
        return "few-shot(k=" + std::to_string(k) + ",seed=" + std::to_string(seed) + ")";
      default: return "zero-shot";
    }
  }

  friend bool operator==(const SettingSpec&, const SettingSpec&) = default;
};

struct DatasetSpec {
  std::string name;
  fs::path train, validation, test;  // pre-split files
  fs::path pairs;                     // or one file split here
  std::optional<SplitSpec> split;
};

struct BackendSpec {
  std::string kind = "template";  // template | replay | remote
  std::string base_url;
};

struct RunConfig {
  std::string run_id = "run";
  fs::path output_dir = "runs";
  fs::path cache;  // defaults to output_dir/run_id/replay.jsonl
  std::vector<DatasetSpec> datasets;
  std::vector<std::string> input_modes = {"tags", "notags"};
  std::vector<SettingSpec> settings;
  std::vector<double> temperatures = {0.6, 0.8};
  std::vector<std::string> models;
  BackendSpec backend;
  std::size_t max_tokens = 256;
  std::string connector = std::string(kDefaultConnector);
  std::string instruction = std::string(kDefaultInstruction);
  std::size_t context_limit = 2048;
  std::string separator = "\n\n###\n\n";
  FinetuneOptions finetune;
  std::size_t concurrency = 4;
  std::optional<std::string> external_scorer;
  fs::path lexicon;

  fs::path run_dir() const { return output_dir / run_id; }
  fs::path cache_path() const { return cache.empty() ? run_dir() / "replay.jsonl" : cache; }
};

/// Default layout: 2 datasets x 2 input modes x 3 settings x 2 temperatures.
inline RunConfig standard_grid(std::vector<std::string> models = {"davinci"}) {
  RunConfig c;
  c.run_id = "standard";
  c.datasets = {{"suicide", {}, {}, {}, {}, {}}, {"obesity", {}, {}, {}, {}, {}}};
  c.settings = {{PromptSetting::Kind::FineTune, 0, 0, {}},
                {PromptSetting::Kind::FewShot, 3, 1, {}},
                {PromptSetting::Kind::ZeroShot, 0, 0, {}}};
  c.models = std::move(models);
  return c;
}

inline RunConfig parse_run_config(std::string_view text, const fs::path& base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("E_CONFIG", "run config is not valid JSON (byte " + std::to_string(e.byte) + ")");
  }
  auto resolve = [&](const std::string& p) -> fs::path {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  RunConfig c;
  try {
    c.run_id = j.value("run_id", c.run_id);
    c.output_dir = resolve(j.value("output_dir", std::string("runs")));
    c.cache = resolve(j.value("cache", std::string()));
    for (const auto& d : j.at("datasets")) {
      DatasetSpec ds;
      ds.name = d.at("name").get<std::string>();
      ds.train = resolve(d.value("train", std::string()));
      ds.validation = resolve(d.value("validation", std::string()));
      ds.test = resolve(d.value("test", std::string()));
      ds.pairs = resolve(d.value("pairs", std::string()));
      if (d.contains("split")) {
        const auto& s = d["split"];
        ds.split = SplitSpec{s.at("train").get<std::size_t>(), s.at("validation").get<std::size_t>(),
                             s.at("test").get<std::size_t>(), s.value("seed", std::uint64_t{0})};
      }
      c.datasets.push_back(std::move(ds));
    }
    if (j.contains("input_modes")) c.input_modes = j["input_modes"].get<std::vector<std::string>>();
    for (const auto& s : j.at("settings")) {
      SettingSpec spec;
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "finetuned" || kind == "fine-tuned") {
        spec.kind = PromptSetting::Kind::FineTune;
        if (s.contains("models"))
          spec.finetuned_models = s["models"].get<std::map<std::string, std::string>>();
      } else if (kind == "fewshot" || kind == "few-shot") {
        spec.kind = PromptSetting::Kind::FewShot;
        spec.k = s.value("k", std::size_t{3});
        spec.seed = s.value("seed", std::uint64_t{0});
      } else if (kind == "zeroshot" || kind == "zero-shot") {
        spec.kind = PromptSetting::Kind::ZeroShot;
      } else {
        throw Error("E_CONFIG", "unknown setting kind '" + kind + "'");
      }
      c.settings.push_back(std::move(spec));
    }
    if (j.contains("temperatures")) c.temperatures = j["temperatures"].get<std::vector<double>>();
    c.models = j.at("models").get<std::vector<std::string>>();
    if (j.contains("backend")) {
      const auto& b = j["backend"];
      c.backend.kind = b.value("kind", c.backend.kind);
      c.backend.base_url = b.value("base_url", std::string());
    }
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.connector = j.value("connector", c.connector);
    c.instruction = j.value("instruction", c.instruction);
    c.context_limit = j.value("context_limit", c.context_limit);
    c.separator = j.value("separator", c.separator);
    c.concurrency = j.value("concurrency", c.concurrency);
    if (j.contains("finetune")) {
      const auto& f = j["finetune"];
      c.finetune.prompt_suffix = f.value("prompt_suffix", c.finetune.prompt_suffix);
      c.finetune.completion_prefix = f.value("completion_prefix", c.finetune.completion_prefix);
      c.finetune.stop_token = f.value("stop_token", c.finetune.stop_token);
    }
    if (j.contains("external_scorer")) c.external_scorer = j["external_scorer"].get<std::string>();
    c.lexicon = resolve(j.value("lexicon", std::string()));
  } catch (const nlohmann::json::exception& e) {
    throw Error("E_CONFIG", std::string("run config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Grid

struct ExperimentCell {
  std::string dataset;
  std::string input_mode;  // tags | notags
  SettingSpec setting;
  double temperature = 0.6;
  std::string model;

  friend bool operator==(const ExperimentCell&, const ExperimentCell&) = default;

  /// Model name actually sent to the endpoint.
  std::string query_model() const {
    if (setting.kind == PromptSetting::Kind::FineTune) {
      auto it = setting.finetuned_models.find(model);
      if (it != setting.finetuned_models.end()) return it->second;
    }
    return model;
  }

  nlohmann::json to_json() const {
    return {{"dataset", dataset},
            {"input_mode", input_mode},
            {"setting", setting.label()},
            {"temperature", temperature},
            {"model", model},
            {"query_model", query_model()}};
  }
};

/// Content hash of everything that shapes a cell's prompts and requests.
inline std::string cell_hash(const ExperimentCell& cell, const RunConfig& config) {
  nlohmann::json key = cell.to_json();
  key["max_tokens"] = config.max_tokens;
  key["connector"] = config.connector;
  key["context_limit"] = config.context_limit;
  key["separator"] = config.separator;
  key["instruction"] = cell.setting.kind == PromptSetting::Kind::ZeroShot ? config.instruction : "";
  key["finetune"] = {config.finetune.prompt_suffix, config.finetune.completion_prefix,
                     config.finetune.stop_token};
  key["temperature"] = format_real(cell.temperature);
  return sha256_hex(key.dump()).substr(0, 16);
}

/// Cartesian product in a fixed order: dataset, setting, model,
/// temperature, input mode.
inline std::vector<ExperimentCell> plan_grid(const RunConfig& config) {
  auto require = [](bool nonempty, const char* axis) {
    if (!nonempty) throw Error("E_GRID", std::string("grid axis '") + axis + "' is empty");
  };
  require(!config.datasets.empty(), "datasets");
  require(!config.input_modes.empty(), "input_modes");
  require(!config.settings.empty(), "settings");
  require(!config.temperatures.empty(), "temperatures");
  require(!config.models.empty(), "models");

  auto unique = [](auto values, const char* axis) {
    std::sort(values.begin(), values.end());
    if (std::adjacent_find(values.begin(), values.end()) != values.end())
      throw Error("E_GRID", std::string("grid axis '") + axis + "' has duplicate values");
  };
  std::vector<std::string> names;
  for (const auto& d : config.datasets) names.push_back(d.name);
  unique(names, "datasets");
  unique(config.input_modes, "input_modes");
  std::vector<std::string> settings;
  for (const auto& s : config.settings) settings.push_back(s.label());
  unique(settings, "settings");
  unique(config.temperatures, "temperatures");
  unique(config.models, "models");
  for (const auto& m : config.input_modes)
    if (m != "tags" && m != "notags") throw Error("E_GRID", "unknown input mode '" + m + "'");
  for (double t : config.temperatures)
    if (!(t >= 0.0 && t <= 2.0)) throw Error("E_GRID", "temperature outside [0, 2]");

  std::vector<ExperimentCell> cells;
  for (const auto& d : config.datasets)
    for (const auto& s : config.settings)
      for (const auto& m : config.models)
        for (double t : config.temperatures)
          for (const auto& mode : config.input_modes) cells.push_back({d.name, mode, s, t, m});
  return cells;
}

// ---------------------------------------------------------------------------
// Execution

struct InstanceRecord {
  std::size_t instance_id = 0;
  std::string input;         // linearized text as sent (mode applied)
  std::string tagged_input;  // original tagged text
  std::string reference;
  std::string generation;
  std::string finish_reason;
  metrics::MetricReport report;

  friend bool operator==(const InstanceRecord&, const InstanceRecord&) = default;
};

inline nlohmann::json report_to_json(const metrics::MetricReport& r) {
  nlohmann::json j = {{"rouge_l", r.rouge_l}, {"meteor_lite", r.meteor_lite}};
  j["polarity_accuracy"] = r.polarity_accuracy ? nlohmann::json(*r.polarity_accuracy) : nlohmann::json();
  j["external"] = r.external;
  return j;
}

inline metrics::MetricReport report_from_json(const nlohmann::json& j) {
  metrics::MetricReport r;
  r.rouge_l = j.at("rouge_l").get<double>();
  r.meteor_lite = j.at("meteor_lite").get<double>();
  if (j.contains("polarity_accuracy") && !j["polarity_accuracy"].is_null())
    r.polarity_accuracy = j["polarity_accuracy"].get<double>();
  if (j.contains("external")) r.external = j["external"].get<std::map<std::string, double>>();
  return r;
}

inline nlohmann::json to_json(const InstanceRecord& r) {
  return {{"instance_id", r.instance_id}, {"input", r.input},
          {"tagged_input", r.tagged_input}, {"reference", r.reference},
          {"generation", r.generation},     {"finish_reason", r.finish_reason},
          {"metrics", report_to_json(r.report)}};
}

inline InstanceRecord instance_from_json(const nlohmann::json& j) {
  return {j.at("instance_id").get<std::size_t>(), j.at("input").get<std::string>(),
          j.at("tagged_input").get<std::string>(), j.at("reference").get<std::string>(),
          j.at("generation").get<std::string>(),   j.value("finish_reason", std::string("stop")),
          report_from_json(j.at("metrics"))};
}

struct InstanceFailure {
  std::size_t instance_id = 0;
  std::string code;
  std::string message;
};

struct CellResult {
  ExperimentCell cell;
  std::string hash;
  std::vector<InstanceRecord> instances;  // sorted by instance_id
  std::optional<metrics::MetricReport> aggregate;
  std::vector<InstanceFailure> failures;
  std::size_t expected_instances = 0;
  bool complete = false;
  double duration_ms = 0.0;
  std::vector<std::string> warnings;
};

struct CellContext {
  const RunConfig& config;
  const DatasetSplits& splits;
  llm::Client& client;
  const metrics::PolarityLexicon& lexicon;
  fs::path cell_dir;  // empty: nothing persisted
};

namespace detail {

inline std::vector<InstanceRecord> read_instances(const fs::path& file) {
  std::vector<InstanceRecord> out;
  std::ifstream in(file);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(instance_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      // torn append; that instance is re-run
    }
  }
  return out;
}

/// Applies the cell's input mode to a tagged prompt.
inline std::string apply_mode(const std::string& tagged, const std::string& mode,
                              const std::string& connector) {
  const auto canonical = canonicalize_linearized(tagged);
  const auto parsed = parse_linearized(canonical);
  if (mode == "tags") return canonical;
  LinearizedText lt{canonical, parsed.mode, parsed.edges.size()};
  return strip_polarity(lt, connector).text;
}

}  // namespace detail

inline nlohmann::json summary_json(const CellResult& r) {
  nlohmann::json j = {{"cell", r.cell.to_json()},
                      {"hash", r.hash},
                      {"instances", r.instances.size()},
                      {"expected_instances", r.expected_instances},
                      {"complete", r.complete}};
  j["aggregate"] = r.aggregate ? report_to_json(*r.aggregate) : nlohmann::json();
  return j;
}

/// Generates, scores and persists every test instance of one cell.
/// Instances already persisted under `cell_dir` are reused, so a re-run
/// only executes what is missing.
inline CellResult run_cell(const ExperimentCell& cell, const CellContext& ctx) {
  const auto started = std::chrono::steady_clock::now();
  const auto& config = ctx.config;
  CellResult result;
  result.cell = cell;
  result.hash = cell_hash(cell, config);
  result.expected_instances = ctx.splits.test.size();

  const fs::path instances_file = ctx.cell_dir.empty() ? fs::path() : ctx.cell_dir / "instances.jsonl";
  std::map<std::size_t, InstanceRecord> done;
  if (!instances_file.empty()) {
    fs::create_directories(ctx.cell_dir);
    write_text_file(ctx.cell_dir / "cell.json", cell.to_json().dump(2) + "\n");
    for (auto& r : detail::read_instances(instances_file)) done.emplace(r.instance_id, std::move(r));
  }

  PromptOptions popts;
  popts.context_limit = config.context_limit;
  popts.separator = config.separator;

  std::optional<FewShotPrefix> prefix;
  if (cell.setting.kind == PromptSetting::Kind::FewShot) {
    auto examples = ctx.splits.train;
    for (auto& p : examples) p.prompt = detail::apply_mode(p.prompt, cell.input_mode, config.connector);
    prefix = make_few_shot_prefix(examples, cell.setting.k, cell.setting.seed, popts);
  }

  struct Pending {
    std::size_t id;
    std::string input, tagged;
    std::optional<Component> component;
  };
  std::vector<Pending> pending;
  std::vector<llm::CompletionRequest> requests;
  for (std::size_t id = 0; id < ctx.splits.test.size(); ++id) {
    if (done.contains(id)) continue;
    const auto& pair = ctx.splits.test[id];
    try {
      Pending p{id, detail::apply_mode(pair.prompt, cell.input_mode, config.connector),
                canonicalize_linearized(pair.prompt), std::nullopt};
      p.component = parse_linearized(p.tagged).component();
      llm::CompletionRequest req;
      req.model = cell.query_model();
      req.temperature = cell.temperature;
      req.max_tokens = config.max_tokens;
      switch (cell.setting.kind) {
        case PromptSetting::Kind::FewShot:
          req.prompt = build_few_shot(*prefix, p.input, popts).text;
          req.stop = "###";
          break;
        case PromptSetting::Kind::FineTune:
          req.prompt = build_fine_tune_query(p.input, config.finetune, popts).text;
          req.stop = config.finetune.stop_token;
          break;
        default:
          req.prompt = build_zero_shot(p.input, config.instruction, popts).text;
      }
      pending.push_back(std::move(p));
      requests.push_back(std::move(req));
    } catch (const Error& e) {
      result.failures.push_back({id, e.code(), e.what()});
    }
  }

  const auto outcomes = ctx.client.complete_all(requests);
  std::vector<InstanceRecord> fresh;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    const auto& p = pending[i];
    if (!o.response) {
      result.failures.push_back({p.id, o.error_code, o.error_message});
      continue;
    }
    InstanceRecord rec;
    rec.instance_id = p.id;
    rec.input = p.input;
    rec.tagged_input = p.tagged;
    rec.reference = replace_all(ctx.splits.test[p.id].completion, kEndSentinel, "");
    rec.generation = o.response->text;
    rec.finish_reason = std::string(llm::finish_reason_name(o.response->finish_reason));
    rec.report = metrics::score({rec.generation, rec.reference, p.component}, ctx.lexicon);
    fresh.push_back(std::move(rec));
  }

  if (config.external_scorer && !fresh.empty()) {
    std::vector<metrics::ScoredPair> pairs;
    for (const auto& r : fresh) pairs.push_back({r.generation, r.reference, std::nullopt});
    auto ext = metrics::external_score(pairs, metrics::AdapterSpec::parse(*config.external_scorer));
    for (auto& w : ext.warnings) result.warnings.push_back(std::move(w));
    for (const auto& [name, values] : ext.scores)
      for (std::size_t i = 0; i < fresh.size(); ++i) fresh[i].report.external[name] = values[i];
  }

  if (!instances_file.empty() && !fresh.empty()) {
    std::ofstream out(instances_file, std::ios::app);
    for (const auto& r : fresh) out << to_json(r).dump() << '\n';
    if (!out) throw Error("E_IO", "cannot append to " + instances_file.string());
  }
  for (auto& r : fresh) done.emplace(r.instance_id, std::move(r));

  for (auto& [id, r] : done) result.instances.push_back(std::move(r));
  std::sort(result.failures.begin(), result.failures.end(),
            [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  if (!result.instances.empty()) {
    std::vector<metrics::MetricReport> reports;
    for (const auto& r : result.instances) reports.push_back(r.report);
    result.aggregate = metrics::aggregate(reports);
  }
  result.complete = result.instances.size() == result.expected_instances;
  result.duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (!ctx.cell_dir.empty())
    write_text_file(ctx.cell_dir / "summary.json", summary_json(result).dump(2) + "\n");
  return result;
}

inline DatasetSplits load_dataset(const DatasetSpec& spec) {
  if (!spec.pairs.empty()) {
    const auto pairs = load_pairs(read_text_file(spec.pairs));
    const auto split = spec.split ? *spec.split : SplitSpec::from_ratios(pairs.size(), 0.56, 0.14, 0.30, 0);
    return split_dataset(pairs, split);
  }
  if (spec.train.empty() || spec.test.empty())
    throw Error("E_CONFIG", "dataset '" + spec.name + "' needs either 'pairs' or 'train' and 'test'");
  DatasetSplits out;
  out.train = load_pairs(read_text_file(spec.train));
  if (!spec.validation.empty()) out.validation = load_pairs(read_text_file(spec.validation));
  out.test = load_pairs(read_text_file(spec.test));
  return out;
}

inline std::unique_ptr<llm::Backend> make_backend(const BackendSpec& spec, const llm::ReplayCache& cache) {
  if (spec.kind == "template") return std::make_unique<llm::TemplateBackend>();
  if (spec.kind == "replay") return std::make_unique<llm::ReplayBackend>(cache);
  if (spec.kind == "remote") {
    if (spec.base_url.empty()) throw Error("E_CONFIG", "remote backend needs 'base_url'");
    return std::make_unique<llm::RemoteBackend>(llm::RemoteConfig::from_env(spec.base_url));
  }
  throw Error("E_CONFIG", "unknown backend '" + spec.kind + "'");
}

/// Runs every planned cell in order and writes results.csv / table.md.
inline std::vector<CellResult> run_experiment(const RunConfig& config);

// ---------------------------------------------------------------------------
// Tables

enum class TableLayout { Markdown, Csv };

struct TableRow {
  std::string dataset, setting, model, mode;
  double temperature = 0.0;
  std::size_t instances = 0;
  bool complete = false;
  metrics::MetricReport aggregate;

  friend bool operator==(const TableRow&, const TableRow&) = default;
};

inline std::vector<TableRow> table_rows(const std::vector<CellResult>& results) {
  std::vector<TableRow> rows;
  for (const auto& r : results)
    rows.push_back({r.cell.dataset, r.cell.setting.label(), r.cell.model, r.cell.input_mode,
                    r.cell.temperature, r.instances.size(), r.complete,
                    r.aggregate.value_or(metrics::MetricReport{})});
  return rows;
}

namespace detail {

inline std::vector<std::string> external_names(const std::vector<TableRow>& rows) {
  std::set<std::string> names;
  for (const auto& r : rows)
    for (const auto& [n, v] : r.aggregate.external) names.insert(n);
  return {names.begin(), names.end()};
}

}  // namespace detail

/// Lossless: one row per cell, full-precision values.
inline std::string render_csv(const std::vector<TableRow>& rows) {
  const auto ext = detail::external_names(rows);
  std::vector<std::string> header = {"dataset",   "setting",  "model",       "temperature",
                                     "mode",      "instances", "complete",   "rouge_l",
                                     "meteor_lite", "polarity_accuracy"};
  for (const auto& n : ext) header.push_back("ext:" + n);
  std::string out = csv::format_row(header);
  for (const auto& r : rows) {
    std::vector<std::string> f = {r.dataset,
                                  r.setting,
                                  r.model,
                                  format_real(r.temperature),
                                  r.mode,
                                  std::to_string(r.instances),
                                  r.complete ? "true" : "false",
                                  format_real(r.aggregate.rouge_l),
                                  format_real(r.aggregate.meteor_lite),
                                  r.aggregate.polarity_accuracy ? format_real(*r.aggregate.polarity_accuracy) : ""};
    for (const auto& n : ext) {
      auto it = r.aggregate.external.find(n);
      f.push_back(it == r.aggregate.external.end() ? "" : format_real(it->second));
    }
    out += csv::format_row(f);
  }
  return out;
}

inline std::vector<TableRow> parse_results_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw Error("E_PARSE", "results CSV is empty");
  const auto& header = rows.front().fields;
  auto col = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("E_MISSING_COLUMN", "results CSV lacks column '" + std::string(name) + "'");
  };
  const auto c_dataset = col("dataset"), c_setting = col("setting"), c_model = col("model"),
             c_temp = col("temperature"), c_mode = col("mode"), c_n = col("instances"),
             c_complete = col("complete"), c_rouge = col("rouge_l"), c_meteor = col("meteor_lite"),
             c_pol = col("polarity_accuracy");
  std::vector<TableRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != header.size())
      throw Error("E_PARSE", "line " + std::to_string(rows[r].line) + ": wrong field count");
    TableRow row;
    row.dataset = f[c_dataset];
    row.setting = f[c_setting];
    row.model = f[c_model];
    row.temperature = std::strtod(f[c_temp].c_str(), nullptr);
    row.mode = f[c_mode];
    row.instances = std::stoul(f[c_n]);
    row.complete = f[c_complete] == "true";
    row.aggregate.rouge_l = std::strtod(f[c_rouge].c_str(), nullptr);
    row.aggregate.meteor_lite = std::strtod(f[c_meteor].c_str(), nullptr);
    if (!f[c_pol].empty()) row.aggregate.polarity_accuracy = std::strtod(f[c_pol].c_str(), nullptr);
    for (std::size_t i = 0; i < header.size(); ++i)
      if (starts_with(header[i], "ext:") && !f[i].empty())
        row.aggregate.external[header[i].substr(4)] = std::strtod(f[i].c_str(), nullptr);
    out.push_back(std::move(row));
  }
  return out;
}

/// Rows grouped dataset -> setting -> model (temperature last), metric
/// columns split Tags | NoTags. Within each dataset/setting/temperature group
/// the best value of every column is bold.
inline std::string render_markdown(const std::vector<TableRow>& rows) {
  const auto ext = detail::external_names(rows);
  struct Metric {
    std::string title;
    std::function<std::optional<double>(const metrics::MetricReport&)> get;
  };
  std::vector<Metric> metric_cols = {
      {"ROUGE-L", [](const auto& r) { return std::optional<double>(r.rouge_l); }},
      {"METEOR-lite", [](const auto& r) { return std::optional<double>(r.meteor_lite); }},
      {"Polarity", [](const auto& r) { return r.polarity_accuracy; }}};
  for (const auto& n : ext)
    metric_cols.push_back({n, [n](const auto& r) -> std::optional<double> {
                             auto it = r.external.find(n);
                             if (it == r.external.end()) return std::nullopt;
                             return it->second;
                           }});
  const std::vector<std::string> modes = {"tags", "notags"};

  // Row key -> mode -> aggregate
  using Key = std::tuple<std::string, std::string, std::string, double>;
  std::vector<Key> order;
  std::map<Key, std::map<std::string, metrics::MetricReport>> cells;
  std::map<std::string, std::size_t> dataset_rank, setting_rank;
  for (const auto& r : rows) {
    dataset_rank.try_emplace(r.dataset, dataset_rank.size());
    setting_rank.try_emplace(r.setting, setting_rank.size());
    Key k{r.dataset, r.setting, r.model, r.temperature};
    if (!cells.contains(k)) order.push_back(k);
    cells[k][r.mode] = r.aggregate;
  }
  std::stable_sort(order.begin(), order.end(), [&](const Key& a, const Key& b) {
    return std::tuple(dataset_rank[std::get<0>(a)], setting_rank[std::get<1>(a)]) <
           std::tuple(dataset_rank[std::get<0>(b)], setting_rank[std::get<1>(b)]);
  });

  // best per (dataset, setting, temperature, metric, mode)
  std::map<std::tuple<std::string, std::string, double, std::size_t, std::string>, double> best;
  for (const auto& k : order)
    for (std::size_t m = 0; m < metric_cols.size(); ++m)
      for (const auto& mode : modes) {
        auto it = cells[k].find(mode);
        if (it == cells[k].end()) continue;
        if (auto v = metric_cols[m].get(it->second)) {
          auto key = std::tuple(std::get<0>(k), std::get<1>(k), std::get<3>(k), m, mode);
          auto [b, inserted] = best.try_emplace(key, *v);
          if (!inserted) b->second = std::max(b->second, *v);
        }
      }

  std::string out = "| Dataset | Setting | Model | Temp |";
  std::string rule = "|---|---|---|---|";
  for (const auto& m : metric_cols) {
    out += " " + m.title + " Tags | " + m.title + " NoTags |";
    rule += "---|---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& k : order) {
    out += "| " + std::get<0>(k) + " | " + std::get<1>(k) + " | " + std::get<2>(k) + " | " +
           format_real(std::get<3>(k)) + " |";
    for (std::size_t m = 0; m < metric_cols.size(); ++m)
      for (const auto& mode : modes) {
        auto it = cells[k].find(mode);
        std::optional<double> v;
        if (it != cells[k].end()) v = metric_cols[m].get(it->second);
        if (!v) {
          out += " - |";
          continue;
        }
        const auto text = format_fixed(*v, 4);
        const bool is_best =
            best.at(std::tuple(std::get<0>(k), std::get<1>(k), std::get<3>(k), m, mode)) == *v;
        out += " " + (is_best ? "**" + text + "**" : text) + " |";
      }
    out += "\n";
  }
  return out;
}

inline std::string render_table(const std::vector<CellResult>& results, TableLayout layout) {
  if (results.empty()) throw Error("E_EMPTY", "no results to tabulate");
  const auto rows = table_rows(results);
  return layout == TableLayout::Csv ? render_csv(rows) : render_markdown(rows);
}

/// Re-reads persisted cells of a run directory (recomputing aggregates from
/// the per-instance records).
inline std::vector<CellResult> load_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw Error("E_IO", "no run directory " + run_dir.string());
  std::vector<std::pair<std::size_t, CellResult>> found;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "summary.json")) continue;
    const auto summary = nlohmann::json::parse(read_text_file(entry.path() / "summary.json"));
    CellResult r;
    const auto& c = summary.at("cell");
    r.cell.dataset = c.at("dataset").get<std::string>();
    r.cell.input_mode = c.at("input_mode").get<std::string>();
    r.cell.temperature = c.at("temperature").get<double>();
    r.cell.model = c.at("model").get<std::string>();
    // Setting is restored by label only; enough for tabulation.
    const auto label = c.at("setting").get<std::string>();
    r.cell.setting.kind = starts_with(label, "few-shot")     ? PromptSetting::Kind::FewShot
                          : starts_with(label, "fine-tuned") ? PromptSetting::Kind::FineTune
                                                             : PromptSetting::Kind::ZeroShot;
    if (r.cell.setting.kind == PromptSetting::Kind::FewShot)
      std::sscanf(label.c_str(), "few-shot(k=%zu,seed=%lu)", &r.cell.setting.k, &r.cell.setting.seed);
    r.hash = summary.value("hash", entry.path().filename().string());
    r.expected_instances = summary.value("expected_instances", std::size_t{0});
    r.instances = detail::read_instances(entry.path() / "instances.jsonl");
    std::sort(r.instances.begin(), r.instances.end(),
              [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    if (!r.instances.empty()) {
      std::vector<metrics::MetricReport> reports;
      for (const auto& i : r.instances) reports.push_back(i.report);
      r.aggregate = metrics::aggregate(reports);
    }
    r.complete = r.instances.size() == r.expected_instances;
    found.emplace_back(summary.value("order", found.size()), std::move(r));
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<CellResult> out;
  for (auto& [o, r] : found) out.push_back(std::move(r));
  return out;
}

inline std::vector<CellResult> run_experiment(const RunConfig& config) {
  const auto cells = plan_grid(config);
  std::map<std::string, DatasetSplits> data;
  for (const auto& d : config.datasets) data.emplace(d.name, load_dataset(d));

  auto lexicon = metrics::PolarityLexicon::defaults();
  if (!config.lexicon.empty()) lexicon.extend_from_text(read_text_file(config.lexicon));
  lexicon.check();

  llm::ReplayCache cache(config.cache_path());
  auto backend = make_backend(config.backend, cache);
  llm::Client client(*backend, config.backend.kind == "replay" ? nullptr : &cache, config.concurrency);

  std::vector<CellResult> results;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto dir = config.run_dir() / cell_hash(cells[i], config);
    CellContext ctx{config, data.at(cells[i].dataset), client, lexicon, dir};
    auto r = run_cell(cells[i], ctx);
    auto summary = summary_json(r);
    summary["order"] = i;
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    results.push_back(std::move(r));
  }
  write_text_file(config.run_dir() / "results.csv", render_table(results, TableLayout::Csv));
  write_text_file(config.run_dir() / "table.md", render_table(results, TableLayout::Markdown));
  return results;
}

}  // namespace causaltext::experiment

#endif  // CAUSALTEXT_EXPERIMENT_HPP
