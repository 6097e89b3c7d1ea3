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

#ifndef CAUSALTEXT_TEXT_HPP
#define CAUSALTEXT_TEXT_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace causaltext::text {

/// Shared token stream for every native metric: ASCII-lowercased, split on
/// whitespace and ASCII punctuation, empty tokens dropped. Bytes >= 0x80 are
/// kept as word characters.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : s) {
    const bool word = c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
                      (c >= 'A' && c <= 'Z');
    if (word) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a')
                                         : static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace porter_detail {

inline bool is_consonant(std::string_view w, std::size_t i) {
  switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return false;
    case 'y':
      return i == 0 ? true : !is_consonant(w, i - 1);
    default:
      return true;
  }
}

/// m in [C](VC){m}[V].
inline int measure(std::string_view w) {
  int m = 0;
  std::size_t i = 0;
  const std::size_t n = w.size();
  while (i < n && is_consonant(w, i)) ++i;
  while (i < n) {
    while (i < n && !is_consonant(w, i)) ++i;
    if (i >= n) break;
    while (i < n && is_consonant(w, i)) ++i;
    ++m;
  }
  return m;
}

inline bool has_vowel(std::string_view w) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

inline bool ends_double_consonant(std::string_view w) {
  const auto n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

/// *o: ends consonant-vowel-consonant, last not w, x or y.
inline bool ends_cvc(std::string_view w) {
  const auto n = w.size();
  if (n < 3) return false;
  const char last = w[n - 1];
  return is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) &&
         last != 'w' && last != 'x' && last != 'y';
}

inline bool ends_with(std::string_view w, std::string_view suffix) {
  return w.size() >= suffix.size() && w.substr(w.size() - suffix.size()) == suffix;
}

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
  int min_measure;  // condition is measure(stem) > min_measure
};

/// First rule whose suffix matches decides; if its condition fails nothing
/// changes.
template <std::size_t N>
inline void apply_first(std::string& w, const Rule (&rules)[N]) {
  for (const auto& r : rules) {
    if (!ends_with(w, r.suffix)) continue;
    std::string_view stem(w.data(), w.size() - r.suffix.size());
    if (measure(stem) > r.min_measure) {
      w.resize(stem.size());
      w += r.replacement;
    }
    return;
  }
}

}  // namespace porter_detail

/// Porter suffix stripper, original rule set. Words of one or two
/// letters are returned unchanged. Input is expected lowercase.
inline std::string porter_stem(std::string_view word) {
  using namespace porter_detail;
  std::string w(word);
  if (w.size() <= 2) return w;
  for (unsigned char c : w)
    if (c < 'a' || c > 'z') return w;

  // Step 1a
  if (ends_with(w, "sses")) w.resize(w.size() - 2);
  else if (ends_with(w, "ies")) w.resize(w.size() - 2);
  else if (ends_with(w, "ss")) {}
  else if (ends_with(w, "s")) w.pop_back();

  // Step 1b
  if (ends_with(w, "eed")) {
    if (measure(std::string_view(w).substr(0, w.size() - 3)) > 0) w.pop_back();
  } else {
    bool stripped = false;
    for (std::string_view suffix : {std::string_view("ed"), std::string_view("ing")}) {
      if (ends_with(w, suffix) &&
          has_vowel(std::string_view(w).substr(0, w.size() - suffix.size()))) {
        w.resize(w.size() - suffix.size());
        stripped = true;
        break;
      }
    }
    if (stripped) {
      if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
        w += 'e';
      } else if (ends_double_consonant(w)) {
        const char last = w.back();
        if (last != 'l' && last != 's' && last != 'z') w.pop_back();
      } else if (measure(w) == 1 && ends_cvc(w)) {
        w += 'e';
      }
    }
  }

  // Step 1c
  if (ends_with(w, "y") && has_vowel(std::string_view(w).substr(0, w.size() - 1)))
    w.back() = 'i';

  static constexpr Rule kStep2[] = {
      {"ational", "ate", 0}, {"tional", "tion", 0}, {"enci", "ence", 0},
      {"anci", "ance", 0},   {"izer", "ize", 0},    {"abli", "able", 0},
      {"alli", "al", 0},     {"entli", "ent", 0},   {"eli", "e", 0},
      {"ousli", "ous", 0},   {"ization", "ize", 0}, {"ation", "ate", 0},
      {"ator", "ate", 0},    {"alism", "al", 0},    {"iveness", "ive", 0},
      {"fulness", "ful", 0}, {"ousness", "ous", 0}, {"aliti", "al", 0},
      {"iviti", "ive", 0},   {"biliti", "ble", 0},
  };
  apply_first(w, kStep2);

  static constexpr Rule kStep3[] = {
      {"icate", "ic", 0}, {"ative", "", 0}, {"alize", "al", 0}, {"iciti", "ic", 0},
      {"ical", "ic", 0},  {"ful", "", 0},   {"ness", "", 0},
  };
  apply_first(w, kStep3);

  // Step 4; ION additionally needs the stem to end in s or t.
  static constexpr std::string_view kStep4[] = {
      "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
      "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
  for (auto suffix : kStep4) {
    if (!ends_with(w, suffix)) continue;
    std::string_view stem(w.data(), w.size() - suffix.size());
    bool ok = measure(stem) > 1;
    if (suffix == "ion") ok = ok && !stem.empty() && (stem.back() == 's' || stem.back() == 't');
    if (ok) w.resize(stem.size());
    break;
  }

  // Step 5a
  if (ends_with(w, "e")) {
    std::string_view stem(w.data(), w.size() - 1);
    const int m = measure(stem);
    if (m > 1 || (m == 1 && !ends_cvc(stem))) w.pop_back();
  }
  // Step 5b
  if (ends_with(w, "ll") && measure(std::string_view(w).substr(0, w.size() - 1)) > 1)
    w.pop_back();
  return w;
}

}  // namespace causaltext::text

#endif  // CAUSALTEXT_TEXT_HPP
