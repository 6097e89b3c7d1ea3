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

// causaltext command-line entry point.

#include <pthread.h>

#include <csignal>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "causaltext/annotation.hpp"
#include "causaltext/experiment.hpp"
#include "causaltext/external.hpp"
#include "causaltext/graph.hpp"
#include "causaltext/linearize.hpp"
#include "causaltext/metrics.hpp"
#include "causaltext/prompt.hpp"

namespace ct = causaltext;
namespace fs = std::filesystem;

namespace {

std::string read_input(const std::string& path) {
  if (path == "-") return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  if (!fs::exists(path)) throw ct::Error("E_IO", "no such file: " + path, ct::ErrorKind::Usage);
  return ct::read_text_file(path);
}

/// Shell-friendly escapes for separators and stop tokens: \n, \t, \\.
std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      default: out += '\\'; out += s[i];
    }
  }
  return out;
}

ct::LinearizationMode make_mode(const std::string& mode, const std::string& connector) {
  if (mode == "tags") return ct::LinearizationMode::tags();
  if (mode == "notags") return ct::LinearizationMode::no_tags(connector);
  throw ct::Error("E_MODE", "mode must be 'tags' or 'notags'", ct::ErrorKind::Usage);
}

/// Component stream: one JSON document per line, as printed by `decompose`.
std::vector<ct::Component> read_components(const std::string& text) {
  std::vector<ct::Component> out;
  std::size_t line_no = 0;
  for (const auto& line : ct::split_lines(text)) {
    ++line_no;
    if (ct::trim(line).empty()) continue;
    try {
      out.push_back(ct::component_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception&) {
      throw ct::Error("E_PARSE", "component stream line " + std::to_string(line_no) + " is not JSON");
    }
  }
  if (out.empty()) throw ct::Error("E_EMPTY", "no components on input");
  return out;
}

struct DecomposeArgs {
  std::string input = "-";
  std::size_t max_nodes = 4;
  std::string emit = "json";
  std::string connector = std::string(ct::kDefaultConnector);
};

void add_decompose(CLI::App& parent, const std::string& name, DecomposeArgs& args,
                   std::function<void()> run) {
  auto* cmd = parent.add_subcommand(name, "Split a causal map into small acyclic components");
  cmd->add_option("input", args.input, "Graph file (.json, .csv, .edges) or - for stdin");
  cmd->add_option("--max-nodes", args.max_nodes, "Node bound per component")->capture_default_str();
  cmd->add_option("--emit", args.emit, "json | tags | notags")
      ->check(CLI::IsMember({"json", "tags", "notags"}))
      ->capture_default_str();
  cmd->add_option("--connector", args.connector, "NoTags connector token")->capture_default_str();
  cmd->callback(std::move(run));
}

void run_decompose(const DecomposeArgs& a) {
  const auto text = read_input(a.input);
  const auto graph = ct::parse_graph(text, ct::detect_format(a.input, text));
  const auto comps = ct::decompose(graph, a.max_nodes);
  for (const auto& c : comps) {
    if (a.emit == "json")
      std::cout << ct::to_json(c).dump() << '\n';
    else
      std::cout << ct::linearize(c, make_mode(a.emit, a.connector)).text << '\n';
  }
  std::cerr << "components: " << comps.size() << ", edges: " << graph.edges().size() << '\n';
}

void print_prompt(std::size_t index, const ct::PromptBundle& b) {
  std::cout << nlohmann::json{{"index", index}, {"prompt", b.text}, {"token_estimate", b.token_estimate}}.dump()
            << '\n';
}

void print_summary(const std::vector<ct::experiment::CellResult>& results) {
  std::size_t complete = 0;
  for (const auto& r : results) complete += r.complete;
  std::cerr << "cells: " << results.size() << ", complete: " << complete << '\n';
}

int handle_error(const ct::Error& e) {
  std::cerr << "error[" << e.code() << "]: " << e.what() << '\n';
  return e.kind() == ct::ErrorKind::Usage ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causaltext: causal maps to text"};
  app.require_subcommand(1);

  // graph
  auto* graph = app.add_subcommand("graph", "Validate or decompose causal maps");
  graph->require_subcommand(1);
  std::string validate_input = "-";
  auto* validate = graph->add_subcommand("validate", "Check a causal map and list violations");
  validate->add_option("input", validate_input, "Graph file or - for stdin");
  int status = 0;
  validate->callback([&] {
    const auto text = read_input(validate_input);
    const auto doc = ct::read_graph_document(text, ct::detect_format(validate_input, text));
    const auto report = ct::validate(doc);
    for (const auto& w : report.warnings)
      std::cerr << "warning[" << w.code << "]: " << w.element << ": " << w.message << '\n';
    for (const auto& v : report.violations)
      std::cerr << "error[" << v.code << "]: " << v.element << ": " << v.message << '\n';
    if (!report.ok()) {
      status = 1;
      return;
    }
    std::cout << "ok: " << doc.nodes.size() << " nodes, " << doc.edges.size() << " edges\n";
  });
  DecomposeArgs decompose_args;
  add_decompose(*graph, "decompose", decompose_args, [&] { run_decompose(decompose_args); });
  add_decompose(app, "decompose", decompose_args, [&] { run_decompose(decompose_args); });

  // linearize
  std::string lin_input = "-", lin_mode = "tags", lin_connector = std::string(ct::kDefaultConnector);
  std::string lin_delimiter = std::string(ct::kDefaultDelimiter);
  bool lin_csv = false;
  auto* lin = app.add_subcommand("linearize", "Linearize a component stream (JSON lines from decompose)");
  lin->add_option("input", lin_input, "Component stream or - for stdin");
  lin->add_option("--mode", lin_mode, "tags | notags")->check(CLI::IsMember({"tags", "notags"}))->capture_default_str();
  lin->add_option("--connector", lin_connector, "NoTags connector token")->capture_default_str();
  lin->add_option("--delimiter", lin_delimiter, "Edge delimiter; 'none' for plain spaces")->capture_default_str();
  lin->add_flag("--csv", lin_csv, "Emit a pairs CSV with empty completions");
  lin->callback([&] {
    const auto mode = make_mode(lin_mode, lin_connector);
    const std::string delimiter = lin_delimiter == "none" ? "" : lin_delimiter;
    if (lin_csv) std::cout << "prompt,completion\n";
    for (const auto& c : read_components(read_input(lin_input))) {
      const auto text = ct::linearize(c, mode, delimiter).text;
      if (lin_csv)
        std::cout << ct::csv::format_row({text, ""});
      else
        std::cout << text << '\n';
    }
  });

  // prompt
  auto* prompt = app.add_subcommand("prompt", "Assemble zero-shot, few-shot or fine-tuning prompts");
  prompt->require_subcommand(1);
  std::string p_input = "-", p_train, p_instruction = std::string(ct::kDefaultInstruction);
  std::string p_separator = "\\n\\n###\\n\\n", p_stop = "\\n";
  std::size_t p_k = 3, p_limit = 2048;
  std::uint64_t p_seed = 0;
  auto prompt_options = [&] {
    ct::PromptOptions o;
    o.context_limit = p_limit;
    o.separator = unescape(p_separator);
    return o;
  };
  auto* zero = prompt->add_subcommand("zero", "Instruction plus the test graph");
  zero->add_option("input", p_input, "Pairs CSV (completion may be empty) or -");
  zero->add_option("--instruction", p_instruction, "Zero-shot instruction");
  zero->add_option("--context-limit", p_limit, "Token budget")->capture_default_str();
  zero->callback([&] {
    const auto pairs = ct::load_pairs(read_input(p_input), false);
    const auto o = prompt_options();
    for (std::size_t i = 0; i < pairs.size(); ++i) print_prompt(i, ct::build_zero_shot(pairs[i].prompt, p_instruction, o));
  });
  auto* few = prompt->add_subcommand("few", "k sampled training examples plus the test graph");
  few->add_option("input", p_input, "Pairs CSV of test graphs or -");
  few->add_option("--train", p_train, "Pairs CSV to sample examples from")->required();
  few->add_option("--k", p_k, "Examples per prompt")->capture_default_str();
  few->add_option("--seed", p_seed, "Sampling seed")->capture_default_str();
  few->add_option("--separator", p_separator, "Block separator (\\n escapes allowed)")->capture_default_str();
  few->add_option("--context-limit", p_limit, "Token budget")->capture_default_str();
  few->callback([&] {
    const auto train = ct::load_pairs(ct::read_text_file(p_train));
    const auto test = ct::load_pairs(read_input(p_input), false);
    const auto o = prompt_options();
    const auto prefix = ct::make_few_shot_prefix(train, p_k, p_seed, o);
    std::cerr << "seed: " << p_seed << '\n';
    for (std::size_t i = 0; i < test.size(); ++i) print_prompt(i, ct::build_few_shot(prefix, test[i].prompt, o));
  });
  auto* ft = prompt->add_subcommand("finetune-export", "Fine-tuning records, one JSON object per line");
  ft->add_option("input", p_input, "Pairs CSV or -");
  ft->add_option("--stop-token", p_stop, "Completion stop token (\\n escapes allowed)")->capture_default_str();
  ft->callback([&] {
    ct::FinetuneOptions o;
    o.stop_token = unescape(p_stop);
    for (const auto& line : ct::export_finetune(ct::load_pairs(read_input(p_input)), o)) std::cout << line << '\n';
  });

  // split
  std::string s_input = "-", s_out = ".";
  std::vector<std::size_t> s_counts;
  std::vector<double> s_ratios;
  std::uint64_t s_seed = 0;
  auto* split = app.add_subcommand("split", "Seeded train/validation/test split of a pairs CSV");
  split->add_option("input", s_input, "Pairs CSV or -");
  auto* counts_opt = split->add_option("--counts", s_counts, "train,validation,test counts")->delimiter(',')->expected(3);
  split->add_option("--ratios", s_ratios, "train,validation,test ratios")->delimiter(',')->expected(3)->excludes(counts_opt);
  split->add_option("--seed", s_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--out-dir", s_out, "Where train.csv, validation.csv and test.csv go")->capture_default_str();
  split->callback([&] {
    const auto pairs = ct::load_pairs(read_input(s_input));
    ct::SplitSpec spec;
    if (!s_counts.empty())
      spec = {s_counts[0], s_counts[1], s_counts[2], s_seed};
    else if (!s_ratios.empty())
      spec = ct::SplitSpec::from_ratios(pairs.size(), s_ratios[0], s_ratios[1], s_ratios[2], s_seed);
    else
      spec = ct::SplitSpec::from_ratios(pairs.size(), 0.56, 0.14, 0.30, s_seed);
    const auto parts = ct::split_dataset(pairs, spec);
    fs::create_directories(s_out);
    ct::write_text_file(fs::path(s_out) / "train.csv", ct::write_pairs_csv(parts.train));
    ct::write_text_file(fs::path(s_out) / "validation.csv", ct::write_pairs_csv(parts.validation));
    ct::write_text_file(fs::path(s_out) / "test.csv", ct::write_pairs_csv(parts.test));
    std::cerr << "seed: " << s_seed << '\n';
    std::cout << "train " << parts.train.size() << "\nvalidation " << parts.validation.size() << "\ntest "
              << parts.test.size() << '\n';
  });

  // run
  std::string r_config, r_backend, r_base_url, r_output, r_run_id;
  auto* run = app.add_subcommand("run", "Execute an experiment grid and print its results table");
  run->add_option("--config", r_config, "Run configuration (JSON)")->required();
  run->add_option("--backend", r_backend, "Override backend: template | replay | remote")
      ->check(CLI::IsMember({"template", "replay", "remote"}));
  run->add_option("--base-url", r_base_url, "Remote completion endpoint");
  run->add_option("--output-dir", r_output, "Override output directory");
  run->add_option("--run-id", r_run_id, "Override run id");
  run->callback([&] {
    auto config = ct::experiment::parse_run_config(read_input(r_config), fs::path(r_config).parent_path());
    if (!r_backend.empty()) config.backend.kind = r_backend;
    if (!r_base_url.empty()) config.backend.base_url = r_base_url;
    if (!r_output.empty()) config.output_dir = r_output;
    if (!r_run_id.empty()) config.run_id = r_run_id;
    const auto results = ct::experiment::run_experiment(config);
    print_summary(results);
    std::cerr << "run directory: " << config.run_dir().lexically_normal().string() << '\n';
    std::cout << ct::experiment::render_table(results, ct::experiment::TableLayout::Markdown);
  });

  // eval
  std::string e_input = "-", e_lexicon, e_external;
  auto* eval = app.add_subcommand("eval", "Score candidates against references");
  eval->add_option("input", e_input, "CSV with candidate, reference and optional input (linearized) columns");
  eval->add_option("--lexicon", e_lexicon, "Extra polarity cues (`increase word` lines)");
  eval->add_option("--external", e_external, "External scorer: command or http(s) endpoint");
  eval->callback([&] {
    const auto rows = ct::csv::parse(read_input(e_input));
    if (rows.size() < 2) throw ct::Error("E_EMPTY", "eval input needs a header and at least one row");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].fields.size(); ++i) col[std::string(ct::trim(rows[0].fields[i]))] = i;
    for (const auto* name : {"candidate", "reference"})
      if (!col.contains(name)) throw ct::Error("E_MISSING_COLUMN", std::string("eval input has no '") + name + "' column");
    auto lexicon = ct::metrics::PolarityLexicon::defaults();
    if (!e_lexicon.empty()) lexicon.extend_from_text(ct::read_text_file(e_lexicon));
    lexicon.check();
    std::vector<ct::metrics::ScoredPair> pairs;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& f = rows[r].fields;
      auto field = [&](const char* name) { return col.contains(name) && col[name] < f.size() ? f[col[name]] : ""; };
      ct::metrics::ScoredPair p{field("candidate"), ct::replace_all(field("reference"), ct::kEndSentinel, ""), {}};
      if (const auto input = field("input"); !input.empty()) {
        const auto parsed = ct::parse_linearized(ct::canonicalize_linearized(input));
        if (parsed.mode.has_tags()) p.component = parsed.component();
      }
      pairs.push_back(std::move(p));
    }
    std::vector<ct::metrics::MetricReport> reports;
    for (const auto& p : pairs) reports.push_back(ct::metrics::score(p, lexicon));
    if (!e_external.empty()) {
      const auto ext = ct::metrics::external_score(pairs, ct::metrics::AdapterSpec::parse(e_external));
      for (const auto& w : ext.warnings) std::cerr << "warning[E_EXTERNAL]: " << w << '\n';
      for (const auto& [name, values] : ext.scores)
        for (std::size_t i = 0; i < values.size() && i < reports.size(); ++i) reports[i].external[name] = values[i];
    }
    for (std::size_t i = 0; i < reports.size(); ++i)
      std::cout << nlohmann::json{{"index", i}, {"scores", ct::experiment::report_to_json(reports[i])}}.dump() << '\n';
    std::cout << nlohmann::json{{"aggregate", ct::experiment::report_to_json(ct::metrics::aggregate(reports))}}.dump()
              << '\n';
  });

  // table
  std::string t_run, t_format = "markdown";
  auto* table = app.add_subcommand("table", "Render the results table of a finished run");
  table->add_option("run_dir", t_run, "Run directory")->required();
  table->add_option("--format", t_format, "markdown | csv")->check(CLI::IsMember({"markdown", "csv"}))->capture_default_str();
  table->callback([&] {
    const auto layout = t_format == "csv" ? ct::experiment::TableLayout::Csv : ct::experiment::TableLayout::Markdown;
    std::cout << ct::experiment::render_table(ct::experiment::load_run(t_run), layout);
  });

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Blinded pairwise human evaluation");
  annotate->require_subcommand(1);
  std::string a_store = "annotations", a_run, a_first, a_second, a_id, a_prov1, a_prov2;
  std::size_t a_n = 20;
  std::uint64_t a_seed = 0;
  auto* create = annotate->add_subcommand("create", "Sample a session from two cells of a run");
  create->add_option("--store", a_store, "Annotation store directory")->capture_default_str();
  create->add_option("--run", a_run, "Run directory")->required();
  create->add_option("--first", a_first, "Cell hash (directory name) of the first system")->required();
  create->add_option("--second", a_second, "Cell hash of the second system")->required();
  create->add_option("--n", a_n, "Tasks to sample")->capture_default_str();
  create->add_option("--seed", a_seed, "Sampling seed")->capture_default_str();
  create->add_option("--id", a_id, "Session id (derived from content when empty)");
  create->add_option("--first-provenance", a_prov1, "Defaults to the cell's input mode");
  create->add_option("--second-provenance", a_prov2, "Defaults to the cell's input mode");
  create->callback([&] {
    const auto results = ct::experiment::load_run(a_run);
    auto find = [&](const std::string& hash) -> const ct::experiment::CellResult& {
      for (const auto& r : results)
        if (r.hash == hash) return r;
      throw ct::Error("E_UNKNOWN_CELL", "no cell '" + hash + "' in " + a_run, ct::ErrorKind::Usage);
    };
    const auto session = ct::annotation::create_session(find(a_first), find(a_second), a_n, a_seed, a_prov1, a_prov2, a_id);
    ct::annotation::AnnotationStore(a_store).add_session(session);
    std::cerr << "seed: " << a_seed << '\n';
    std::cout << session.id << '\n';
  });
  std::string a_host = "127.0.0.1", a_static;
  int a_port = 8080;
  auto* serve = annotate->add_subcommand("serve", "Serve the annotation HTTP API");
  serve->add_option("--store", a_store, "Annotation store directory")->capture_default_str();
  serve->add_option("--host", a_host)->capture_default_str();
  serve->add_option("--port", a_port, "0 picks a free port")->capture_default_str();
  serve->add_option("--static", a_static, "Directory with the built annotation UI");
  serve->callback([&] {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    ct::annotation::AnnotationStore store(a_store);
    ct::annotation::AnnotationServer server(store, a_static);
    const int port = server.bind(a_host, a_port);
    std::cout << "listening on http://" << a_host << ':' << port << std::endl;
    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.stop();
    });
    server.serve();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  });
  std::string a_session;
  auto* stats = annotate->add_subcommand("stats", "Preference percentages and agreement for a session");
  stats->add_option("--store", a_store, "Annotation store directory")->capture_default_str();
  stats->add_option("session", a_session, "Session id")->required();
  stats->callback([&] { std::cout << ct::annotation::AnnotationStore(a_store).stats(a_session).to_json().dump(2) << '\n'; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ct::Error& e) {
    return handle_error(e);
  } catch (const nlohmann::json::exception& e) {
    return handle_error(ct::Error("E_PARSE", e.what()));
  } catch (const std::exception& e) {
    return handle_error(ct::Error("E_INTERNAL", e.what()));
  }
  return status;
}
