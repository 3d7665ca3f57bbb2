#pragma once

// Knowledge library: question/answer records with source locations,
// query history and feedback, plus two-stage similarity retrieval.
//
// Records live in an immutable snapshot that readers share; writers build
// a new snapshot and swap it in. When opened on a path, the snapshot is
// rewritten atomically after every import and history/feedback are
// appended to "<path>.history.jsonl" and "<path>.feedback.jsonl".

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/simnet.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::kb {

using nlohmann::json;

struct Source {
  std::string doc;
  std::string section;

  bool operator==(const Source&) const = default;
};

enum class Origin { manual, generated };

inline const char* origin_name(Origin o) { return o == Origin::manual ? "manual" : "generated"; }

struct KbRecord {
  std::string id;
  std::string group_id;
  std::string question;
  std::string answer;
  Source source;
  Origin origin = Origin::manual;
  std::string created_at;
};

inline json to_json(const KbRecord& r) {
  return {{"id", r.id},
          {"group_id", r.group_id},
          {"question", r.question},
          {"answer", r.answer},
          {"source", {{"doc", r.source.doc}, {"section", r.source.section}}},
          {"origin", origin_name(r.origin)},
          {"created_at", r.created_at}};
}

struct QueryResult {
  KbRecord record;
  double score = 0.0;
};

struct HistoryEntry {
  std::string id;
  std::string question;
  std::string timestamp;
  std::string top_result_id;  ///< empty when nothing matched
  double score = 0.0;
};

enum class Verdict { helpful, unhelpful };

struct FeedbackEntry {
  std::string id;
  std::string history_id;
  Verdict verdict = Verdict::helpful;
  std::string comment;
  std::string timestamp;
};

inline Verdict parse_verdict(const std::string& s) {
  if (s == "helpful") return Verdict::helpful;
  if (s == "unhelpful") return Verdict::unhelpful;
  throw Error(Errc::validation, "verdict must be \"helpful\" or \"unhelpful\"");
}

inline const char* verdict_name(Verdict v) { return v == Verdict::helpful ? "helpful" : "unhelpful"; }

inline json to_json(const HistoryEntry& h) {
  return {{"id", h.id}, {"question", h.question}, {"timestamp", h.timestamp},
          {"top_result_id", h.top_result_id}, {"score", h.score}};
}

inline json to_json(const FeedbackEntry& f) {
  return {{"id", f.id}, {"history_id", f.history_id}, {"verdict", verdict_name(f.verdict)},
          {"comment", f.comment}, {"timestamp", f.timestamp}};
}

/// UTC, second resolution, ISO-8601.
inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

using Clock = std::function<std::string()>;

namespace detail {

inline std::string string_field(const json& j, const char* key, bool required) {
  if (!j.contains(key) || j.at(key).is_null()) {
    if (required) throw Error(Errc::validation, std::string("record is missing \"") + key + "\"");
    return {};
  }
  if (!j.at(key).is_string())
    throw Error(Errc::validation, std::string("record field \"") + key + "\" must be a string");
  return j.at(key).get<std::string>();
}

/// Partially validated record; id/group/timestamp may still be empty.
inline KbRecord parse_record(const json& j) {
  if (!j.is_object()) throw Error(Errc::validation, "record must be a JSON object");
  KbRecord r;
  r.id = string_field(j, "id", false);
  r.group_id = string_field(j, "group_id", false);
  r.question = string_field(j, "question", true);
  r.answer = string_field(j, "answer", true);
  if (utf8::trim(r.question).empty()) throw Error(Errc::validation, "record question is empty");
  if (j.contains("source") && !j.at("source").is_null()) {
    const auto& s = j.at("source");
    if (!s.is_object()) throw Error(Errc::validation, "record source must be an object");
    r.source.doc = string_field(s, "doc", false);
    r.source.section = string_field(s, "section", false);
  }
  const std::string origin = string_field(j, "origin", false);
  if (origin == "generated") r.origin = Origin::generated;
  else if (origin.empty() || origin == "manual") r.origin = Origin::manual;
  else throw Error(Errc::validation, "record origin must be \"manual\" or \"generated\"");
  r.created_at = string_field(j, "created_at", false);
  return r;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// A JSON array, or JSON Lines of objects.
inline std::vector<json> parse_import_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  std::vector<json> out;
  if (text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, "malformed JSON at line " +
                                   std::to_string(line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1)) +
                                   ": " + e.what());
    }
    for (auto& item : doc) out.push_back(std::move(item));
    return out;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, "malformed JSON at line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp);
    out << content;
    if (!out) throw Error(Errc::io, "short write on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot replace " + path + ": " + ec.message());
}

inline void append_line(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::io, "cannot append to " + path);
  out << j.dump() << '\n';
}

inline std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw Error(Errc::parse, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace detail

using Snapshot = std::shared_ptr<const std::vector<KbRecord>>;

class KbStore {
 public:
  /// In-memory store.
  explicit KbStore(Clock clock = utc_now)
      : clock_(std::move(clock)), records_(std::make_shared<const std::vector<KbRecord>>()) {}

  /// Store persisted at `path`; loads the snapshot and logs when present.
  static std::unique_ptr<KbStore> open(const std::string& path, Clock clock = utc_now) {
    auto store = std::make_unique<KbStore>(std::move(clock));
    store->path_ = path;
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      auto items = detail::parse_import_text(ss.str());
      store->records_ = std::make_shared<const std::vector<KbRecord>>(store->validate_batch(items, {}));
    }
    for (const auto& j : detail::read_jsonl(path + ".history.jsonl"))
      store->history_.push_back({j.at("id"), j.at("question"), j.at("timestamp"),
                                 j.value("top_result_id", ""), j.value("score", 0.0)});
    for (const auto& j : detail::read_jsonl(path + ".feedback.jsonl"))
      store->feedback_.push_back({j.at("id"), j.at("history_id"), parse_verdict(j.at("verdict")),
                                  j.value("comment", ""), j.value("timestamp", "")});
    for (const auto& h : store->history_) store->history_index_.insert(h.id);
    return store;
  }

  const std::optional<std::string>& path() const { return path_; }

  /// Current records; the returned snapshot stays valid across imports.
  Snapshot snapshot() const {
    std::lock_guard lock(mutex_);
    return records_;
  }

  std::size_t size() const { return snapshot()->size(); }

  /// All-or-nothing import of a JSON array or JSON Lines file.
  std::size_t import_json(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open import file: " + file);
    std::stringstream ss;
    ss << in.rdbuf();
    return import_text(ss.str());
  }

  std::size_t import_text(const std::string& text) {
    return import_items(detail::parse_import_text(text));
  }

  std::size_t import_items(const std::vector<json>& items) {
    std::lock_guard write(write_mutex_);
    Snapshot current = snapshot();
    auto added = validate_batch(items, *current);
    if (added.empty()) return 0;
    auto next = std::make_shared<std::vector<KbRecord>>(*current);
    next->insert(next->end(), added.begin(), added.end());
    if (path_) detail::write_atomic(*path_, export_json(*next).dump(2) + "\n");
    {
      std::lock_guard lock(mutex_);
      records_ = std::move(next);
    }
    return added.size();
  }

  static json export_json(const std::vector<KbRecord>& records) {
    json arr = json::array();
    for (const auto& r : records) arr.push_back(to_json(r));
    return arr;
  }

  json export_json() const { return export_json(*snapshot()); }

  HistoryEntry log_query(const std::string& question, const std::optional<QueryResult>& top) {
    std::lock_guard write(write_mutex_);
    HistoryEntry h;
    h.id = "h-" + std::to_string(history_.size() + 1);
    h.question = question;
    h.timestamp = clock_();
    if (top) {
      h.top_result_id = top->record.id;
      h.score = top->score;
    }
    if (path_) detail::append_line(*path_ + ".history.jsonl", to_json(h));
    history_.push_back(h);
    history_index_.insert(h.id);
    return h;
  }

  FeedbackEntry record_feedback(const std::string& history_id, Verdict verdict,
                                const std::string& comment) {
    std::lock_guard write(write_mutex_);
    if (!history_index_.count(history_id))
      throw Error(Errc::not_found, "no history entry " + history_id);
    FeedbackEntry f{"f-" + std::to_string(feedback_.size() + 1), history_id, verdict, comment, clock_()};
    if (path_) detail::append_line(*path_ + ".feedback.jsonl", to_json(f));
    feedback_.push_back(f);
    return f;
  }

  std::vector<HistoryEntry> history() const {
    std::lock_guard write(write_mutex_);
    return history_;
  }

  std::vector<FeedbackEntry> feedback() const {
    std::lock_guard write(write_mutex_);
    return feedback_;
  }

 private:
  /// Validates a batch against `existing` and fills generated fields.
  std::vector<KbRecord> validate_batch(const std::vector<json>& items,
                                       const std::vector<KbRecord>& existing) const {
    std::unordered_set<std::string> ids;
    std::unordered_map<std::string, const KbRecord*> groups;
    std::size_t next_seq = existing.size() + 1;
    for (const auto& r : existing) {
      ids.insert(r.id);
      groups.emplace(r.group_id, &r);
    }

    std::vector<KbRecord> out;
    out.reserve(items.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
      try {
        out.push_back(detail::parse_record(items[k]));
      } catch (const Error& e) {
        throw Error(e.code(), "record " + std::to_string(k + 1) + ": " + e.what());
      }
      if (!out.back().id.empty() && !ids.insert(out.back().id).second)
        throw Error(Errc::conflict, "duplicate record id " + out.back().id);
    }
    for (auto& r : out) {
      if (r.id.empty()) {
        do {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "kb-%06zu", next_seq++);
          r.id = buf;
        } while (!ids.insert(r.id).second);
      }
      if (r.group_id.empty()) r.group_id = r.id;
      if (r.created_at.empty()) r.created_at = clock_();
    }
    for (const auto& r : out) {
      auto [it, fresh] = groups.emplace(r.group_id, &r);
      if (!fresh && (it->second->answer != r.answer || !(it->second->source == r.source)))
        throw Error(Errc::validation,
                    "group " + r.group_id + " mixes different answers or sources");
    }
    return out;
  }

  Clock clock_;
  std::optional<std::string> path_;
  mutable std::mutex mutex_;        // guards records_ pointer swaps
  mutable std::mutex write_mutex_;  // serializes writers and log access
  Snapshot records_;
  std::vector<HistoryEntry> history_;
  std::set<std::string> history_index_;
  std::vector<FeedbackEntry> feedback_;
};

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalOptions {
  std::size_t top_k = 5;
  std::size_t prefilter_m = 0;  ///< 0 scores every record
  double min_score = 0.0;
};

/// Shared unique tokens over the union of unique tokens.
inline double token_overlap(std::span<const std::string> a, std::span<const std::string> b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 0.0;
  std::size_t shared = 0;
  for (const auto& t : sa) shared += sb.count(t);
  return static_cast<double>(shared) / static_cast<double>(sa.size() + sb.size() - shared);
}

inline bool ranks_before(const QueryResult& a, const QueryResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.record.id < b.record.id;
}

inline std::vector<QueryResult> retrieve(const std::string& question,
                                         const std::vector<KbRecord>& records,
                                         const sim::SimModel& model, const Tokenizer& tokenizer,
                                         const RetrievalOptions& opt) {
  if (opt.top_k == 0 || records.empty()) return {};
  const TokenizedSentence query = tokenizer.tokenize(question);
  if (query.empty()) return {};

  std::vector<std::size_t> candidates(records.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) candidates[k] = k;
  if (opt.prefilter_m > 0 && records.size() > opt.prefilter_m) {
    std::vector<double> overlap(records.size());
    for (std::size_t k = 0; k < records.size(); ++k)
      overlap[k] = token_overlap(query.tokens, tokenizer.segment(records[k].question));
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
      if (overlap[x] != overlap[y]) return overlap[x] > overlap[y];
      return records[x].id < records[y].id;
    });
    candidates.resize(opt.prefilter_m);
  }

  std::vector<QueryResult> scored;
  scored.reserve(candidates.size());
  for (std::size_t k : candidates) {
    const TokenizedSentence stored = tokenizer.tokenize(records[k].question);
    if (stored.empty()) continue;
    const double score = sim::similarity(query, stored, model).score;
    if (score < opt.min_score) continue;
    scored.push_back({records[k], score});
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  if (scored.size() > opt.top_k) scored.resize(opt.top_k);
  return scored;
}

}  // namespace mfqa::kb
