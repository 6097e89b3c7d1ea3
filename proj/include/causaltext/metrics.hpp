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

#ifndef CAUSALTEXT_METRICS_HPP
#define CAUSALTEXT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "causaltext/error.hpp"
#include "causaltext/graph.hpp"
#include "causaltext/text.hpp"
#include "causaltext/util.hpp"

namespace causaltext::metrics {

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// LCS F1 over the shared token stream.
inline double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = text::tokenize(candidate);
  const auto r = text::tokenize(reference);
  if (c.empty() || r.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(c, r));
  const double p = lcs / static_cast<double>(c.size());
  const double rec = lcs / static_cast<double>(r.size());
  return p + rec == 0.0 ? 0.0 : 2.0 * p * rec / (p + rec);
}

// ---------------------------------------------------------------------------
// METEOR-lite: exact stage, then Porter-stem stage, fragmentation penalty.

struct MeteorDetail {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double fmean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
  bool exhaustive = true;  // false if the alignment search hit its node budget
};

namespace detail {

/// Depth-first search for the alignment with fewest chunks among those with
/// the maximal exact-match count and, given that, maximal stem-match count.
class ChunkSearch {
 public:
  ChunkSearch(std::span<const std::string> cand, std::span<const std::string> ref,
              std::size_t node_budget)
      : cand_(cand), ref_(ref), budget_(node_budget) {
    for (const auto& t : cand) cand_stem_.push_back(text::porter_stem(t));
    for (const auto& t : ref) ref_stem_.push_back(text::porter_stem(t));

    std::map<std::string, std::size_t> cc, rc;
    for (const auto& t : cand) ++cc[t];
    for (const auto& t : ref) ++rc[t];
    std::map<std::string, std::string> stem_of;
    for (std::size_t i = 0; i < cand.size(); ++i) stem_of[cand[i]] = cand_stem_[i];
    for (std::size_t j = 0; j < ref.size(); ++j) stem_of[ref[j]] = ref_stem_[j];

    std::map<std::string, std::size_t> cand_left_by_stem, ref_left_by_stem;
    for (const auto& [w, n] : cc) {
      const auto q = std::min(n, rc.count(w) ? rc[w] : 0);
      exact_rem_[w] = q;
      cand_left_[w] = n - q;
      cand_left_by_stem[stem_of[w]] += n - q;
      exact_total_ += q;
    }
    for (const auto& [w, n] : rc) {
      const auto q = std::min(n, cc.count(w) ? cc[w] : 0);
      ref_left_[w] = n - q;
      ref_left_by_stem[stem_of[w]] += n - q;
    }
    for (const auto& [s, a] : cand_left_by_stem) {
      const auto q = std::min(a, ref_left_by_stem[s]);
      if (q) stem_rem_[s] = q;
      stem_total_ += q;
    }
    // Remaining occurrences from position i on, for feasibility pruning.
    suffix_word_.resize(cand.size() + 1);
    suffix_stem_.resize(cand.size() + 1);
    for (std::size_t i = cand.size(); i-- > 0;) {
      suffix_word_[i] = suffix_word_[i + 1];
      suffix_stem_[i] = suffix_stem_[i + 1];
      ++suffix_word_[i][cand[i]];
      ++suffix_stem_[i][cand_stem_[i]];
    }
    used_.assign(ref.size(), false);
  }

  std::size_t matches() const { return exact_total_ + stem_total_; }

  /// Returns the minimum chunk count (0 when nothing matches).
  std::size_t run() {
    if (matches() == 0) return 0;
    best_ = SIZE_MAX;
    dfs(0, -1, 0, 0);
    return best_;
  }

  bool exhausted_budget() const { return nodes_ > budget_; }

 private:
  void dfs(std::size_t i, std::ptrdiff_t prev_ref, std::size_t chunks, std::size_t matched) {
    if (++nodes_ > budget_ && best_ != SIZE_MAX) return;
    if (chunks >= best_) return;
    if (matched == matches()) {
      best_ = chunks;
      return;
    }
    if (i == cand_.size()) return;
    if (matches() - matched > cand_.size() - i) return;

    const auto& w = cand_[i];
    const auto& s = cand_stem_[i];

    auto try_ref = [&](std::size_t j, bool exact) {
      used_[j] = true;
      if (exact) {
        --exact_rem_[w];
      } else {
        --stem_rem_[s];
        --cand_left_[w];
        --ref_left_[ref_[j]];
      }
      const bool continues = prev_ref >= 0 && static_cast<std::size_t>(prev_ref) + 1 == j;
      dfs(i + 1, static_cast<std::ptrdiff_t>(j), chunks + (continues ? 0 : 1), matched + 1);
      if (exact) {
        ++exact_rem_[w];
      } else {
        ++stem_rem_[s];
        ++cand_left_[w];
        ++ref_left_[ref_[j]];
      }
      used_[j] = false;
    };

    // Candidate ref positions, the chunk-continuing one first.
    std::vector<std::size_t> order;
    if (prev_ref >= 0 && static_cast<std::size_t>(prev_ref) + 1 < ref_.size())
      order.push_back(static_cast<std::size_t>(prev_ref) + 1);
    for (std::size_t j = 0; j < ref_.size(); ++j)
      if (order.empty() || j != order.front()) order.push_back(j);

    if (exact_rem_[w] > 0) {
      for (auto j : order)
        if (!used_[j] && ref_[j] == w) try_ref(j, true);
    }
    // Not exactly matched: feasible only if the remaining occurrences of w
    // can still meet its exact quota.
    if (exact_rem_[w] + 1 > suffix_word_[i][w]) return;
    auto sit = stem_rem_.find(s);
    if (sit != stem_rem_.end() && sit->second > 0 && cand_left_[w] > 0) {
      for (auto j : order)
        if (!used_[j] && ref_[j] != w && ref_stem_[j] == s && ref_left_[ref_[j]] > 0)
          try_ref(j, false);
    }
    if (sit != stem_rem_.end() && sit->second + 1 > suffix_stem_[i][s]) return;
    dfs(i + 1, -1, chunks, matched);
  }

  std::span<const std::string> cand_, ref_;
  std::vector<std::string> cand_stem_, ref_stem_;
  std::map<std::string, std::size_t> exact_rem_, cand_left_, ref_left_, stem_rem_;
  std::vector<std::map<std::string, std::size_t>> suffix_word_, suffix_stem_;
  std::vector<bool> used_;
  std::size_t exact_total_ = 0, stem_total_ = 0;
  std::size_t best_ = SIZE_MAX;
  std::size_t nodes_ = 0, budget_;
};

}  // namespace detail

inline MeteorDetail meteor_lite_tokens(std::span<const std::string> cand,
                                       std::span<const std::string> ref,
                                       std::size_t node_budget = 2'000'000) {
  MeteorDetail d;
  if (cand.empty() || ref.empty()) return d;
  detail::ChunkSearch search(cand, ref, node_budget);
  d.matches = search.matches();
  if (d.matches == 0) return d;
  d.chunks = search.run();
  d.exhaustive = !search.exhausted_budget();
  const double m = static_cast<double>(d.matches);
  d.precision = m / static_cast<double>(cand.size());
  d.recall = m / static_cast<double>(ref.size());
  d.fmean = 10.0 * d.precision * d.recall / (d.recall + 9.0 * d.precision);
  const double frag = static_cast<double>(d.chunks) / m;
  d.penalty = 0.5 * frag * frag * frag;
  d.score = d.fmean * (1.0 - d.penalty);
  return d;
}

inline double meteor_lite(std::string_view candidate, std::string_view reference) {
  const auto c = text::tokenize(candidate);
  const auto r = text::tokenize(reference);
  return meteor_lite_tokens(c, r).score;
}

// ---------------------------------------------------------------------------
// Causal polarity accuracy

class PolarityLexicon {
 public:
  static PolarityLexicon defaults() {
    PolarityLexicon lex;
    for (auto w : {"increase", "raise", "improve", "boost", "augment", "grow", "more"})
      lex.add(Polarity::Positive, w);
    for (auto w : {"decrease", "reduce", "lower", "lessen", "prevent", "diminish", "less"})
      lex.add(Polarity::Negative, w);
    return lex;
  }

  /// Lines of `increase <word>` or `decrease <word>`; `#` starts a comment.
  void extend_from_text(std::string_view text) {
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
      ++line_no;
      auto body = trim(std::string_view(line).substr(0, line.find('#')));
      if (body.empty()) continue;
      const auto tokens = split_whitespace(body);
      if (tokens.size() != 2 || (tokens[0] != "increase" && tokens[0] != "decrease"))
        throw Error("E_LEXICON", "line " + std::to_string(line_no) +
                                     ": expected `increase <word>` or `decrease <word>`");
      add(tokens[0] == "increase" ? Polarity::Positive : Polarity::Negative, tokens[1]);
    }
  }

  void add(Polarity p, std::string_view word) {
    for (const auto& tok : text::tokenize(word))
      (p == Polarity::Positive ? increase_ : decrease_).insert(text::porter_stem(tok));
  }

  /// Cue polarity of a stemmed token, if it is a cue.
  std::optional<Polarity> cue(const std::string& stem) const {
    if (increase_.contains(stem)) return Polarity::Positive;
    if (decrease_.contains(stem)) return Polarity::Negative;
    return std::nullopt;
  }

  void check() const {
    if (increase_.empty() || decrease_.empty())
      throw Error("E_LEXICON", "lexicon needs both increase and decrease cues");
    for (const auto& s : increase_)
      if (decrease_.contains(s))
        throw Error("E_LEXICON", "cue stem '" + s + "' is listed under both polarities");
  }

  const std::set<std::string>& increase_stems() const { return increase_; }
  const std::set<std::string>& decrease_stems() const { return decrease_; }

 private:
  std::set<std::string> increase_, decrease_;
};

namespace detail {

inline bool is_stopword(std::string_view t) {
  static const std::set<std::string_view> kStop = {
      "a",  "an", "the", "of", "and", "or", "to", "in",   "on", "for", "with", "by",
      "at", "from", "is", "are", "be", "as", "that", "this", "it", "its", "can"};
  return kStop.contains(t);
}

/// Distinct content stems of a label; all stems when every token is a
/// stopword.
inline std::set<std::string> content_stems(std::string_view label) {
  std::set<std::string> all, content;
  for (const auto& t : text::tokenize(label)) {
    auto s = text::porter_stem(t);
    all.insert(s);
    if (!is_stopword(t)) content.insert(std::move(s));
  }
  return content.empty() ? all : content;
}

struct Window {
  std::size_t first, last;
};

/// For each start position, the shortest window covering at least
/// `threshold` of the label's content stems.
inline std::vector<Window> mention_windows(const std::vector<std::string>& stems,
                                           const std::set<std::string>& label,
                                           double threshold) {
  std::vector<Window> out;
  if (label.empty()) return out;
  const auto needed = static_cast<std::size_t>(
      std::ceil(threshold * static_cast<double>(label.size()) - 1e-9));
  for (std::size_t a = 0; a < stems.size(); ++a) {
    if (!label.contains(stems[a])) continue;
    std::set<std::string_view> covered;
    for (std::size_t b = a; b < stems.size(); ++b) {
      if (label.contains(stems[b])) covered.insert(stems[b]);
      if (covered.size() >= std::max<std::size_t>(needed, 1)) {
        out.push_back({a, b});
        break;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Fraction of component edges the candidate states with the right sign. An
/// edge counts when both labels are mentioned (at least `coverage` of their
/// content tokens) and a cue of the edge's polarity sits between the two
/// mentions.
inline double polarity_accuracy(const Component& component, std::string_view candidate,
                                const PolarityLexicon& lexicon, double coverage = 0.6) {
  lexicon.check();
  std::vector<std::string> stems;
  for (const auto& t : text::tokenize(candidate)) stems.push_back(text::porter_stem(t));

  // prefix counts of positive / negative cues
  std::vector<std::size_t> pos(stems.size() + 1, 0), neg(stems.size() + 1, 0);
  for (std::size_t i = 0; i < stems.size(); ++i) {
    const auto c = lexicon.cue(stems[i]);
    pos[i + 1] = pos[i] + (c == Polarity::Positive ? 1 : 0);
    neg[i + 1] = neg[i] + (c == Polarity::Negative ? 1 : 0);
  }
  auto cues_between = [&](std::size_t lo, std::size_t hi, Polarity p) {
    // exclusive range (lo, hi)
    if (hi <= lo + 1) return std::size_t{0};
    const auto& v = p == Polarity::Positive ? pos : neg;
    return v[hi] - v[lo + 1];
  };

  std::size_t correct = 0;
  for (const auto& e : component.edges()) {
    const auto src = detail::mention_windows(stems, detail::content_stems(e.source), coverage);
    const auto tgt = detail::mention_windows(stems, detail::content_stems(e.target), coverage);
    bool ok = false;
    for (const auto& s : src) {
      for (const auto& t : tgt) {
        if (s.last < t.first) ok = cues_between(s.last, t.first, e.polarity) > 0;
        else if (t.last < s.first) ok = cues_between(t.last, s.first, e.polarity) > 0;
        if (ok) break;
      }
      if (ok) break;
    }
    if (ok) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(component.edges().size());
}

// ---------------------------------------------------------------------------
// Cohen's kappa

template <class Label>
double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size())
    throw Error("E_KAPPA", "label sequences differ in length (" + std::to_string(a.size()) +
                               " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw Error("E_KAPPA", "label sequences are empty");
  const double n = static_cast<double>(a.size());
  std::map<Label, double> fa, fb;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    fa[a[i]] += 1;
    fb[b[i]] += 1;
    if (a[i] == b[i]) agree += 1;
  }
  const double po = agree / n;
  double pe = 0;
  for (const auto& [label, count] : fa)
    if (auto it = fb.find(label); it != fb.end()) pe += (count / n) * (it->second / n);
  if (pe >= 1.0) return po >= 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

inline double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return cohen_kappa(std::span<const std::string>(a), std::span<const std::string>(b));
}

// ---------------------------------------------------------------------------
// Reports

struct ScoredPair {
  std::string candidate;
  std::string reference;
  std::optional<Component> component;
};

struct MetricReport {
  double rouge_l = 0.0;
  double meteor_lite = 0.0;
  std::optional<double> polarity_accuracy;
  std::map<std::string, double> external;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline MetricReport score(const ScoredPair& pair,
                          const PolarityLexicon& lexicon = PolarityLexicon::defaults()) {
  MetricReport r;
  r.rouge_l = rouge_l(pair.candidate, pair.reference);
  r.meteor_lite = meteor_lite(pair.candidate, pair.reference);
  if (pair.component) r.polarity_accuracy = polarity_accuracy(*pair.component, pair.candidate, lexicon);
  return r;
}

/// Per-metric arithmetic mean; optional and external metrics are averaged
/// over the reports that have them.
inline MetricReport aggregate(std::span<const MetricReport> reports) {
  if (reports.empty()) throw Error("E_EMPTY", "cannot aggregate zero reports");
  MetricReport out;
  double pol_sum = 0;
  std::size_t pol_n = 0;
  std::map<std::string, std::pair<double, std::size_t>> ext;
  for (const auto& r : reports) {
    out.rouge_l += r.rouge_l;
    out.meteor_lite += r.meteor_lite;
    if (r.polarity_accuracy) {
      pol_sum += *r.polarity_accuracy;
      ++pol_n;
    }
    for (const auto& [name, v] : r.external) {
      ext[name].first += v;
      ++ext[name].second;
    }
  }
  const double n = static_cast<double>(reports.size());
  out.rouge_l /= n;
  out.meteor_lite /= n;
  if (pol_n) out.polarity_accuracy = pol_sum / static_cast<double>(pol_n);
  for (const auto& [name, acc] : ext) out.external[name] = acc.first / static_cast<double>(acc.second);
  return out;
}

}  // namespace causaltext::metrics

#endif  // CAUSALTEXT_METRICS_HPP
