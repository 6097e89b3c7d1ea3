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

#ifndef CAUSALTEXT_PROMPT_HPP
#define CAUSALTEXT_PROMPT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "causaltext/csv.hpp"
#include "causaltext/error.hpp"
#include "causaltext/util.hpp"

namespace causaltext {

struct PairRecord {
  std::string prompt;
  std::string completion;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

inline constexpr std::string_view kEndSentinel = "<end>";

/// Reads a pairs CSV with a `prompt,completion` header (extra columns are
/// ignored). `<end>` sentinels are removed from completions.
inline std::vector<PairRecord> load_pairs(std::string_view source, bool require_completion = true) {
  if (starts_with(source, "\xEF\xBB\xBF")) source.remove_prefix(3);
  const auto rows = csv::parse(source);
  if (rows.empty()) throw Error("E_EMPTY", "pairs file is empty");
  const auto& header = rows.front().fields;
  std::ptrdiff_t prompt_col = -1, completion_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (name == "prompt") prompt_col = static_cast<std::ptrdiff_t>(i);
    if (name == "completion") completion_col = static_cast<std::ptrdiff_t>(i);
  }
  if (prompt_col < 0) throw Error("E_MISSING_COLUMN", "pairs header has no 'prompt' column");
  if (completion_col < 0)
    throw Error("E_MISSING_COLUMN", "pairs header has no 'completion' column");
  if (rows.size() == 1) throw Error("E_EMPTY", "pairs file has a header but no rows");

  std::vector<PairRecord> out;
  out.reserve(rows.size() - 1);
  const auto needed = static_cast<std::size_t>(std::max(prompt_col, completion_col)) + 1;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto where = "line " + std::to_string(row.line);
    if (row.fields.size() < needed)
      throw Error("E_PARSE", where + ": expected at least " + std::to_string(needed) + " fields");
    PairRecord rec{row.fields[prompt_col], replace_all(row.fields[completion_col], kEndSentinel, "")};
    if (rec.prompt.empty()) throw Error("E_PARSE", where + ": empty prompt");
    if (require_completion && rec.completion.empty())
      throw Error("E_PARSE", where + ": empty completion");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string write_pairs_csv(const std::vector<PairRecord>& pairs) {
  std::string out = "prompt,completion\n";
  for (const auto& p : pairs) out += csv::format_row({p.prompt, p.completion});
  return out;
}

/// Conservative token count: one token per three code points, rounded up.
/// Tag-heavy prompts tokenize far denser than prose, so the usual
/// four-characters-per-token rule undercounts them.
inline std::size_t estimate_tokens(std::string_view text) {
  return (utf8_length(text) + 2) / 3;
}

using TokenEstimator = std::function<std::size_t(std::string_view)>;

struct PromptOptions {
  std::size_t context_limit = 2048;
  std::string statement = "Complete the given prompts";
  std::string separator = "\n\n###\n\n";
  TokenEstimator estimator = estimate_tokens;
};

inline constexpr std::string_view kDefaultInstruction =
    "Describe the following causal graph in plain English, expressing whether each cause "
    "increases or decreases each effect.";

struct PromptSetting {
  enum class Kind { ZeroShot, FewShot, FineTune };
  Kind kind = Kind::ZeroShot;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  static PromptSetting zero_shot() { return {Kind::ZeroShot, 0, 0}; }
  static PromptSetting few_shot(std::size_t k, std::uint64_t seed) { return {Kind::FewShot, k, seed}; }
  static PromptSetting fine_tune() { return {Kind::FineTune, 0, 0}; }

  friend bool operator==(const PromptSetting&, const PromptSetting&) = default;
};

struct PromptBundle {
  PromptSetting setting;
  std::string text;
  std::size_t token_estimate = 0;
};

namespace detail {

inline PromptBundle finish_bundle(PromptSetting setting, std::string text,
                                  const PromptOptions& options) {
  const auto estimate = (options.estimator ? options.estimator : estimate_tokens)(text);
  if (estimate > options.context_limit)
    throw Error("E_BUDGET", "prompt needs ~" + std::to_string(estimate) +
                                " tokens, over the context limit of " +
                                std::to_string(options.context_limit));
  return {setting, std::move(text), estimate};
}

}  // namespace detail

/// Statement plus k sampled example blocks; shared by every query of a run.
struct FewShotPrefix {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> sampled;  // indices into the source pairs, draw order
  std::string text;
};

inline FewShotPrefix make_few_shot_prefix(const std::vector<PairRecord>& pairs, std::size_t k,
                                          std::uint64_t seed, const PromptOptions& options = {}) {
  if (k == 0) throw Error("E_FEW_SHOT_K", "few-shot k must be at least 1");
  if (k > pairs.size())
    throw Error("E_FEW_SHOT_K", "few-shot k=" + std::to_string(k) + " exceeds the " +
                                    std::to_string(pairs.size()) + " available pairs");
  FewShotPrefix prefix{k, seed, SeededRng(seed).sample(pairs.size(), k), {}};
  prefix.text = options.statement + "\n\n";
  for (auto i : prefix.sampled) {
    const auto completion = replace_all(pairs[i].completion, kEndSentinel, "");
    prefix.text += "prompt: " + pairs[i].prompt + "\n" + "completion: " + completion +
                   options.separator;
  }
  return prefix;
}

inline PromptBundle build_few_shot(const FewShotPrefix& prefix, std::string_view test_prompt,
                                   const PromptOptions& options = {}) {
  std::string text = prefix.text;
  text += "prompt: ";
  text += test_prompt;
  text += "\ncompletion: \n\n";
  return detail::finish_bundle(PromptSetting::few_shot(prefix.k, prefix.seed), std::move(text),
                               options);
}

inline PromptBundle build_few_shot(const std::vector<PairRecord>& pairs, std::size_t k,
                                   std::uint64_t seed, std::string_view test_prompt,
                                   const PromptOptions& options = {}) {
  return build_few_shot(make_few_shot_prefix(pairs, k, seed, options), test_prompt, options);
}

inline PromptBundle build_zero_shot(std::string_view test_prompt,
                                    std::string_view instruction = kDefaultInstruction,
                                    const PromptOptions& options = {}) {
  if (trim(instruction).empty()) throw Error("E_INSTRUCTION", "zero-shot instruction is empty");
  std::string text(instruction);
  text += "\n\nprompt: ";
  text += test_prompt;
  text += "\ncompletion: ";
  return detail::finish_bundle(PromptSetting::zero_shot(), std::move(text), options);
}

struct FinetuneOptions {
  std::string prompt_suffix = " ->";
  std::string completion_prefix = " ";
  std::string stop_token = "\n";
};

/// Bare query sent to a fine-tuned model: the linearized text plus the
/// same suffix used in the exported training records.
inline PromptBundle build_fine_tune_query(std::string_view test_prompt,
                                          const FinetuneOptions& ft = {},
                                          const PromptOptions& options = {}) {
  return detail::finish_bundle(PromptSetting::fine_tune(), std::string(test_prompt) + ft.prompt_suffix,
                               options);
}

/// One JSON object per line: {"prompt": "... ->", "completion": " ...\n"}.
inline std::vector<std::string> export_finetune(const std::vector<PairRecord>& pairs,
                                                const FinetuneOptions& options = {}) {
  if (pairs.empty()) throw Error("E_EMPTY", "no pairs to export");
  std::vector<std::string> lines;
  lines.reserve(pairs.size());
  for (const auto& p : pairs) {
    nlohmann::json j = {
        {"prompt", p.prompt + options.prompt_suffix},
        {"completion", options.completion_prefix + replace_all(p.completion, kEndSentinel, "") +
                           options.stop_token}};
    lines.push_back(j.dump());
  }
  return lines;
}

inline PairRecord parse_finetune_line(std::string_view line, const FinetuneOptions& options = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw Error("E_PARSE", "fine-tune record is not valid JSON");
  }
  auto prompt = j.at("prompt").get<std::string>();
  auto completion = j.at("completion").get<std::string>();
  auto strip_suffix = [](std::string& s, std::string_view suffix) {
    if (s.size() >= suffix.size() && std::string_view(s).substr(s.size() - suffix.size()) == suffix)
      s.resize(s.size() - suffix.size());
  };
  strip_suffix(prompt, options.prompt_suffix);
  strip_suffix(completion, options.stop_token);
  if (starts_with(completion, options.completion_prefix))
    completion.erase(0, options.completion_prefix.size());
  return {std::move(prompt), std::move(completion)};
}

// ---------------------------------------------------------------------------
// Dataset splits

struct SplitSpec {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;

  /// Largest-remainder rounding of the three ratios onto `total` items.
  static SplitSpec from_ratios(std::size_t total, double train, double validation, double test,
                               std::uint64_t seed) {
    const double sum = train + validation + test;
    if (!(sum > 0) || train < 0 || validation < 0 || test < 0)
      throw Error("E_SPLIT", "split ratios must be non-negative with a positive sum");
    const double share[3] = {train / sum * static_cast<double>(total),
                             validation / sum * static_cast<double>(total),
                             test / sum * static_cast<double>(total)};
    std::size_t counts[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) assigned += counts[i] = static_cast<std::size_t>(std::floor(share[i]));
    while (assigned < total) {
      int best = 0;
      for (int i = 1; i < 3; ++i)
        if (share[i] - static_cast<double>(counts[i]) > share[best] - static_cast<double>(counts[best]))
          best = i;
      ++counts[best];
      ++assigned;
    }
    return {counts[0], counts[1], counts[2], seed};
  }
};

struct DatasetSplits {
  std::vector<PairRecord> train;
  std::vector<PairRecord> validation;
  std::vector<PairRecord> test;
};

/// Seeded shuffle, then consecutive slices of the requested sizes.
inline DatasetSplits split_dataset(const std::vector<PairRecord>& pairs, const SplitSpec& spec) {
  if (spec.train + spec.validation + spec.test != pairs.size())
    throw Error("E_SPLIT", "split counts " + std::to_string(spec.train) + "+" +
                               std::to_string(spec.validation) + "+" + std::to_string(spec.test) +
                               " do not sum to " + std::to_string(pairs.size()));
  if (spec.train == 0 || spec.validation == 0 || spec.test == 0)
    throw Error("E_SPLIT", "every partition must be non-empty");
  const auto order = SeededRng(spec.seed).permutation(pairs.size());
  DatasetSplits out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < spec.train                     ? out.train
                : i < spec.train + spec.validation ? out.validation
                                                   : out.test;
    dst.push_back(pairs[order[i]]);
  }
  return out;
}

}  // namespace causaltext

#endif  // CAUSALTEXT_PROMPT_HPP
