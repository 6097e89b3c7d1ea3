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

#ifndef CAUSALTEXT_ANNOTATION_HPP
#define CAUSALTEXT_ANNOTATION_HPP

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "causaltext/error.hpp"
#include "causaltext/experiment.hpp"
#include "causaltext/graph.hpp"
#include "causaltext/linearize.hpp"
#include "causaltext/metrics.hpp"
#include "causaltext/util.hpp"

namespace causaltext::annotation {

namespace fs = std::filesystem;

struct Candidate {
  std::string sentence;
  std::string provenance;  // server side only

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct AnnotationTask {
  std::string task_id;
  std::size_t instance_id = 0;
  nlohmann::json graph;  // component, document format
  Candidate a, b;
  std::uint64_t order_seed = 0;
  bool swapped = false;  // true when `a` comes from the second result set

  /// What an annotator is allowed to see.
  nlohmann::json client_json() const {
    return {{"task_id", task_id}, {"graph", graph}, {"sentence_a", a.sentence}, {"sentence_b", b.sentence}};
  }
};

struct Session {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<std::string> provenances;  // exactly two
  std::vector<AnnotationTask> tasks;

  const AnnotationTask* find(std::string_view task_id) const {
    for (const auto& t : tasks)
      if (t.task_id == task_id) return &t;
    return nullptr;
  }
};

enum class Choice { A, B };

inline Choice parse_choice(std::string_view s) {
  if (s == "A" || s == "a") return Choice::A;
  if (s == "B" || s == "b") return Choice::B;
  throw Error("E_CHOICE", "choice must be 'A' or 'B', got '" + std::string(s) + "'", ErrorKind::Usage);
}

inline std::string_view choice_name(Choice c) { return c == Choice::A ? "A" : "B"; }

struct LabelRecord {
  std::string task_id;
  std::string annotator;
  Choice faithfulness = Choice::A;
  Choice coverage = Choice::A;
  std::string timestamp;

  nlohmann::json to_json() const {
    return {{"task_id", task_id},
            {"annotator", annotator},
            {"faithfulness", choice_name(faithfulness)},
            {"coverage", choice_name(coverage)},
            {"timestamp", timestamp}};
  }

  static LabelRecord from_json(const nlohmann::json& j) {
    try {
      LabelRecord r;
      r.task_id = j.at("task_id").get<std::string>();
      r.annotator = j.at("annotator").get<std::string>();
      r.faithfulness = parse_choice(j.at("faithfulness").get<std::string>());
      r.coverage = parse_choice(j.at("coverage").get<std::string>());
      r.timestamp = j.value("timestamp", std::string());
      if (trim(r.annotator).empty()) throw Error("E_LABEL", "annotator id is empty", ErrorKind::Usage);
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw Error("E_LABEL", std::string("malformed label record: ") + e.what(), ErrorKind::Usage);
    }
  }
};

inline nlohmann::json to_json(const Session& s) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : s.tasks)
    tasks.push_back({{"task_id", t.task_id},
                     {"instance_id", t.instance_id},
                     {"graph", t.graph},
                     {"a", {{"sentence", t.a.sentence}, {"provenance", t.a.provenance}}},
                     {"b", {{"sentence", t.b.sentence}, {"provenance", t.b.provenance}}},
                     {"order_seed", t.order_seed},
                     {"swapped", t.swapped}});
  return {{"id", s.id}, {"seed", s.seed}, {"provenances", s.provenances}, {"tasks", tasks}};
}

inline Session session_from_json(const nlohmann::json& j) {
  Session s;
  s.id = j.at("id").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.provenances = j.at("provenances").get<std::vector<std::string>>();
  for (const auto& t : j.at("tasks")) {
    AnnotationTask task;
    task.task_id = t.at("task_id").get<std::string>();
    task.instance_id = t.at("instance_id").get<std::size_t>();
    task.graph = t.at("graph");
    task.a = {t.at("a").at("sentence").get<std::string>(), t.at("a").at("provenance").get<std::string>()};
    task.b = {t.at("b").at("sentence").get<std::string>(), t.at("b").at("provenance").get<std::string>()};
    task.order_seed = t.value("order_seed", s.seed);
    task.swapped = t.value("swapped", false);
    s.tasks.push_back(std::move(task));
  }
  return s;
}

/// Pairs up the instances two cells share (same id and reference), draws
/// `n` of them and flips a seeded coin per task for the A/B order.
inline Session create_session(const experiment::CellResult& first, const experiment::CellResult& second,
                              std::size_t n = 20, std::uint64_t seed = 0,
                              std::string provenance_first = {}, std::string provenance_second = {},
                              std::string id = {}) {
  if (provenance_first.empty()) provenance_first = first.cell.input_mode;
  if (provenance_second.empty()) provenance_second = second.cell.input_mode;
  if (provenance_first == provenance_second)
    throw Error("E_PROVENANCE", "both result sets carry provenance '" + provenance_first + "'",
                ErrorKind::Usage);
  if (n == 0) throw Error("E_SAMPLE_SIZE", "a session needs at least one task", ErrorKind::Usage);

  std::map<std::size_t, const experiment::InstanceRecord*> by_id;
  for (const auto& r : second.instances) by_id[r.instance_id] = &r;
  std::vector<std::pair<const experiment::InstanceRecord*, const experiment::InstanceRecord*>> shared;
  for (const auto& r : first.instances) {
    auto it = by_id.find(r.instance_id);
    if (it != by_id.end() && it->second->reference == r.reference && it->second->tagged_input == r.tagged_input)
      shared.emplace_back(&r, it->second);
  }
  if (shared.empty()) throw Error("E_NO_OVERLAP", "the two result sets share no test instances");
  if (n > shared.size())
    throw Error("E_SAMPLE_SIZE", "requested " + std::to_string(n) + " tasks but only " +
                                     std::to_string(shared.size()) + " instances are shared");

  Session s;
  s.seed = seed;
  s.provenances = {provenance_first, provenance_second};
  SeededRng rng(seed);
  const auto picks = rng.sample(shared.size(), n);
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto [x, y] = shared[picks[i]];
    AnnotationTask t;
    t.task_id = "t" + std::to_string(i + 1);
    t.instance_id = x->instance_id;
    t.graph = to_json(parse_linearized(x->tagged_input).component());
    t.order_seed = seed;
    t.swapped = rng.coin();
    Candidate cx{x->generation, provenance_first}, cy{y->generation, provenance_second};
    t.a = t.swapped ? cy : cx;
    t.b = t.swapped ? cx : cy;
    s.tasks.push_back(std::move(t));
  }
  if (id.empty()) id = "s" + sha256_hex(to_json(s).dump()).substr(0, 12);
  s.id = std::move(id);
  return s;
}

// ---------------------------------------------------------------------------
// Statistics

struct Preference {
  std::size_t count = 0;
  double percent = 0.0;
};

struct PairAgreement {
  std::string first, second;  // annotator ids, ordered
  std::size_t shared_tasks = 0;
  double faithfulness = 0.0;
  double coverage = 0.0;
};

struct SessionStats {
  std::string session;
  std::size_t tasks = 0;
  std::size_t labels = 0;
  std::map<std::string, std::size_t> completed;  // per annotator
  std::map<std::string, std::map<std::string, Preference>> preference;  // dimension -> provenance
  std::vector<PairAgreement> kappa;

  nlohmann::json to_json() const {
    nlohmann::json pref = nlohmann::json::object();
    for (const auto& [dim, by] : preference)
      for (const auto& [prov, p] : by)
        pref[dim][prov] = {{"count", p.count}, {"percent", p.percent}, {"display", format_fixed(p.percent, 2)}};
    nlohmann::json k = nlohmann::json::array();
    for (const auto& p : kappa)
      k.push_back({{"annotators", {p.first, p.second}},
                   {"shared_tasks", p.shared_tasks},
                   {"faithfulness", p.faithfulness},
                   {"coverage", p.coverage},
                   {"display", {{"faithfulness", format_fixed(p.faithfulness, 2)},
                                {"coverage", format_fixed(p.coverage, 2)}}}});
    return {{"session", session}, {"tasks", tasks},      {"labels", labels},
            {"completed", completed}, {"preference", pref}, {"kappa", k}};
  }
};

/// Choices are mapped to provenance before counting, so A/B randomization
/// does not leak into agreement.
inline SessionStats compute_stats(const Session& session, const std::vector<LabelRecord>& labels) {
  if (labels.empty()) throw Error("E_NO_LABELS", "session '" + session.id + "' has no labels yet");
  SessionStats st;
  st.session = session.id;
  st.tasks = session.tasks.size();
  st.labels = labels.size();

  auto provenance = [&](const LabelRecord& r, Choice c) {
    const auto* t = session.find(r.task_id);
    if (!t) throw Error("E_UNKNOWN_TASK", "label refers to unknown task '" + r.task_id + "'");
    return c == Choice::A ? t->a.provenance : t->b.provenance;
  };
  for (const char* dim : {"faithfulness", "coverage"})
    for (const auto& p : session.provenances) st.preference[dim][p] = {};

  // annotator -> task -> (faithfulness provenance, coverage provenance)
  std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>> chosen;
  for (const auto& r : labels) {
    auto f = provenance(r, r.faithfulness), c = provenance(r, r.coverage);
    ++st.preference["faithfulness"][f].count;
    ++st.preference["coverage"][c].count;
    ++st.completed[r.annotator];
    chosen[r.annotator][r.task_id] = {f, c};
  }
  for (auto& [dim, by] : st.preference)
    for (auto& [prov, p] : by) p.percent = 100.0 * static_cast<double>(p.count) / static_cast<double>(labels.size());

  for (auto i = chosen.begin(); i != chosen.end(); ++i)
    for (auto j = std::next(i); j != chosen.end(); ++j) {
      std::vector<std::string> fa, fb, ca, cb;
      for (const auto& [task, choice] : i->second) {
        auto other = j->second.find(task);
        if (other == j->second.end()) continue;
        fa.push_back(choice.first);
        fb.push_back(other->second.first);
        ca.push_back(choice.second);
        cb.push_back(other->second.second);
      }
      if (fa.empty()) continue;
      st.kappa.push_back({i->first, j->first, fa.size(), metrics::cohen_kappa(fa, fb),
                          metrics::cohen_kappa(ca, cb)});
    }
  return st;
}

// ---------------------------------------------------------------------------
// Store

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct NextTask {
  std::optional<AnnotationTask> task;  // empty: done
  std::size_t done = 0;
  std::size_t total = 0;

  nlohmann::json client_json() const {
    nlohmann::json j = {{"done", !task.has_value()}, {"progress", {{"done", done}, {"total", total}}}};
    if (task) j["task"] = task->client_json();
    return j;
  }
};

/// sessions/{id}/session.json plus an append-only labels.jsonl per session.
/// Appends go through one writer lock and are fsync'd before returning.
class AnnotationStore {
 public:
  explicit AnnotationStore(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "sessions");
    for (const auto& entry : fs::directory_iterator(root_ / "sessions")) {
      if (!fs::exists(entry.path() / "session.json")) continue;
      auto s = session_from_json(nlohmann::json::parse(read_text_file(entry.path() / "session.json")));
      auto state = std::make_unique<State>();
      state->session = std::move(s);
      replay_log(*state, entry.path() / "labels.jsonl");
      states_.emplace(state->session.id, std::move(state));
    }
  }

  const fs::path& root() const { return root_; }

  void add_session(const Session& session) {
    std::unique_lock lock(mutex_);
    if (states_.contains(session.id))
      throw Error("E_DUPLICATE_SESSION", "session '" + session.id + "' already exists");
    const auto dir = root_ / "sessions" / session.id;
    write_text_file(dir / "session.json", to_json(session).dump(2) + "\n");
    auto state = std::make_unique<State>();
    state->session = session;
    states_.emplace(session.id, std::move(state));
  }

  std::vector<std::string> session_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : states_) ids.push_back(id);
    return ids;
  }

  Session session(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return state(id).session;
  }

  std::vector<LabelRecord> labels(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return state(id).labels;
  }

  std::size_t skipped_log_lines(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return state(id).skipped;
  }

  NextTask next_task(std::string_view id, std::string_view annotator) const {
    if (trim(annotator).empty()) throw Error("E_LABEL", "annotator id is empty", ErrorKind::Usage);
    std::shared_lock lock(mutex_);
    const auto& st = state(id);
    NextTask out;
    out.total = st.session.tasks.size();
    for (const auto& t : st.session.tasks) {
      if (st.seen.contains({t.task_id, std::string(annotator)})) {
        ++out.done;
      } else if (!out.task) {
        out.task = t;
      }
    }
    return out;
  }

  /// Returns the record as persisted (timestamp filled in when absent).
  LabelRecord submit_label(std::string_view id, LabelRecord record) {
    std::unique_lock lock(mutex_);
    auto& st = state(id);
    if (!st.session.find(record.task_id))
      throw Error("E_UNKNOWN_TASK", "session '" + std::string(id) + "' has no task '" + record.task_id + "'");
    if (st.seen.contains({record.task_id, record.annotator}))
      throw Error("E_DUPLICATE_LABEL",
                  "annotator '" + record.annotator + "' already labeled task '" + record.task_id + "'");
    if (record.timestamp.empty()) record.timestamp = utc_timestamp();
    append_durably(root_ / "sessions" / st.session.id / "labels.jsonl", record.to_json().dump() + "\n");
    st.seen.insert({record.task_id, record.annotator});
    st.labels.push_back(record);
    return record;
  }

  SessionStats stats(std::string_view id) const {
    std::shared_lock lock(mutex_);
    const auto& st = state(id);
    return compute_stats(st.session, st.labels);
  }

 private:
  struct State {
    Session session;
    std::vector<LabelRecord> labels;
    std::set<std::pair<std::string, std::string>> seen;  // (task, annotator)
    std::size_t skipped = 0;
  };

  static void replay_log(State& st, const fs::path& log) {
    if (!fs::exists(log)) return;
    for (const auto& line : split_lines(read_text_file(log))) {
      if (trim(line).empty()) continue;
      try {
        auto r = LabelRecord::from_json(nlohmann::json::parse(line));
        if (!st.session.find(r.task_id) || !st.seen.insert({r.task_id, r.annotator}).second) {
          ++st.skipped;
          continue;
        }
        st.labels.push_back(std::move(r));
      } catch (const std::exception&) {
        ++st.skipped;  // torn tail after a crash
      }
    }
  }

  static void append_durably(const fs::path& file, const std::string& line) {
    const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error("E_IO", "cannot open " + file.string());
    std::size_t written = 0;
    while (written < line.size()) {
      const auto n = ::write(fd, line.data() + written, line.size() - written);
      if (n <= 0) {
        ::close(fd);
        throw Error("E_IO", "write failed on " + file.string());
      }
      written += static_cast<std::size_t>(n);
    }
    const bool synced = ::fsync(fd) == 0;
    ::close(fd);
    if (!synced) throw Error("E_IO", "fsync failed on " + file.string());
  }

  State& state(std::string_view id) {
    auto it = states_.find(std::string(id));
    if (it == states_.end()) throw Error("E_UNKNOWN_SESSION", "no session '" + std::string(id) + "'");
    return *it->second;
  }
  const State& state(std::string_view id) const { return const_cast<AnnotationStore*>(this)->state(id); }

  fs::path root_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<State>> states_;
};

// ---------------------------------------------------------------------------
// HTTP

inline int http_status(const Error& e) {
  const auto& c = e.code();
  if (c == "E_UNKNOWN_SESSION" || c == "E_UNKNOWN_TASK") return 404;
  if (c == "E_DUPLICATE_LABEL") return 409;
  if (c == "E_NO_LABELS") return 422;
  if (e.kind() == ErrorKind::Usage) return 400;
  return 500;
}

/// GET  /session/{id}/next?annotator=...
/// POST /session/{id}/labels
/// GET  /session/{id}/stats
/// GET  /sessions
/// plus static files from `static_dir` at "/".
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store, fs::path static_dir = {}) : store_(store) {
    auto reply_error = [](httplib::Response& res, const Error& e) {
      res.status = http_status(e);
      res.set_content(nlohmann::json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump(),
                      "application/json");
    };
    auto guarded = [reply_error](auto handler) {
      return [handler, reply_error](const httplib::Request& req, httplib::Response& res) {
        try {
          handler(req, res);
        } catch (const Error& e) {
          reply_error(res, e);
        } catch (const std::exception& e) {
          reply_error(res, Error("E_INTERNAL", e.what()));
        }
      };
    };
    server_.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(nlohmann::json(store_.session_ids()).dump(), "application/json");
                }));
    server_.Get("/session/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto next = store_.next_task(req.path_params.at("id"), req.get_param_value("annotator"));
                  res.set_content(next.client_json().dump(), "application/json");
                }));
    server_.Post("/session/:id/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   nlohmann::json body;
                   try {
                     body = nlohmann::json::parse(req.body);
                   } catch (const nlohmann::json::exception&) {
                     throw Error("E_LABEL", "request body is not JSON", ErrorKind::Usage);
                   }
                   const auto stored = store_.submit_label(req.path_params.at("id"), LabelRecord::from_json(body));
                   res.status = 201;
                   res.set_content(stored.to_json().dump(), "application/json");
                 }));
    server_.Get("/session/:id/stats", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  res.set_content(store_.stats(req.path_params.at("id")).to_json().dump(), "application/json");
                }));
    if (!static_dir.empty() && !server_.set_mount_point("/", static_dir.string()))
      throw Error("E_IO", "static directory " + static_dir.string() + " does not exist", ErrorKind::Usage);
  }

  /// Binds; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("E_BIND", "cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  /// Blocks until stop().
  void serve() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  AnnotationStore& store_;
  httplib::Server server_;
};

}  // namespace causaltext::annotation

#endif  // CAUSALTEXT_ANNOTATION_HPP
