#pragma once

// HTTP front end over the knowledge library and similarity model.
//
//   POST /ask         {"question": s, "top_k": n}
//   POST /feedback    {"history_id": s, "verdict": "helpful"|"unhelpful", "comment": s}
//   POST /kb/import   JSON array or JSON Lines body (or multipart field "file")
//   GET  /health      {"status": "starting"|"ready"}
//   GET  /kb/stats    {"records", "groups", "history", "feedback"}
//
// Errors are {"code": machine-readable, "message": text}.

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/kb.hpp"
#include "mfqa/nertagger.hpp"
#include "mfqa/simnet.hpp"

namespace mfqa::service {

using nlohmann::json;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string kb_path;
  std::string sim_model_path;
  std::string ner_model_path;  ///< optional
  std::string vocab_path;      ///< optional override of the model's vocabulary
  std::string static_dir;      ///< optional browser assets served at /
  std::size_t prefilter_m = 0;
  std::size_t top_k_cap = 20;
  std::size_t import_limit_bytes = 50u * 1024u * 1024u;
  double min_score = 0.0;
  std::uint64_t seed = 7;

  /// Sets one option by its config-file key.
  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "bind") set_bind(value);
      else if (key == "port") port = std::stoi(value);
      else if (key == "kb") kb_path = value;
      else if (key == "sim_model") sim_model_path = value;
      else if (key == "ner_model") ner_model_path = value;
      else if (key == "vocab") vocab_path = value;
      else if (key == "static_dir") static_dir = value;
      else if (key == "prefilter_m") prefilter_m = std::stoul(value);
      else if (key == "top_k_cap") top_k_cap = std::stoul(value);
      else if (key == "import_limit_bytes") import_limit_bytes = std::stoul(value);
      else if (key == "min_score") min_score = std::stod(value);
      else if (key == "seed") seed = std::stoull(value);
      else throw Error(Errc::config, "unknown config key: " + key);
    } catch (const std::logic_error&) {
      throw Error(Errc::config, "bad value for " + key + ": " + value);
    }
  }

  /// "host:port", "host" or ":port".
  void set_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
      host = bind;
      return;
    }
    if (colon > 0) host = bind.substr(0, colon);
    port = std::stoi(bind.substr(colon + 1));
  }

  /// Reads "key = value" lines; '#' starts a comment.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::config, "cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = utf8::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw Error(Errc::config, path + ":" + std::to_string(lineno) + ": expected key = value");
      set(utf8::trim(line.substr(0, eq)), utf8::trim(line.substr(eq + 1)));
    }
  }
};

struct Response {
  int status = 200;
  json body;
};

inline int http_status(Errc code) {
  switch (code) {
    case Errc::empty_question:
    case Errc::validation:
    case Errc::parse: return 400;
    case Errc::not_found: return 404;
    case Errc::conflict: return 409;
    case Errc::payload_too_large: return 413;
    default: return 500;
  }
}

inline Response error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"code", code}, {"message", message}}};
}

inline Response error_response(const Error& e) {
  return error_response(http_status(e.code()), e.code_name(), e.what());
}

class Service {
 public:
  explicit Service(ServiceConfig cfg) : config_(std::move(cfg)) {}

  const ServiceConfig& config() const { return config_; }
  bool ready() const { return ready_.load(); }

  /// Loads every configured artifact; throws a config error naming the
  /// first one that is missing or unreadable.
  void load() {
    if (config_.sim_model_path.empty()) throw Error(Errc::config, "no similarity model configured");
    if (config_.kb_path.empty()) throw Error(Errc::config, "no knowledge base configured");
    sim::LoadedSimModel model;
    try {
      model = sim::load_model(config_.sim_model_path);
      if (!config_.vocab_path.empty()) {
        auto vocab = Vocabulary::load(config_.vocab_path);
        if (vocab.size() != model.model.config.vocab_size)
          throw Error(Errc::config, "vocabulary size does not match the model");
        model.tokenizer = Tokenizer(model.tokenizer.segmenter(), std::move(vocab));
      }
    } catch (const Error& e) {
      throw Error(Errc::config, "cannot load similarity model: " + std::string(e.what()));
    }
    std::optional<ner::Tagger> tagger;
    if (!config_.ner_model_path.empty()) {
      try {
        tagger = ner::load_tagger(config_.ner_model_path);
      } catch (const Error& e) {
        throw Error(Errc::config, "cannot load tagger: " + std::string(e.what()));
      }
    }
    std::unique_ptr<kb::KbStore> store;
    try {
      store = kb::KbStore::open(config_.kb_path);
    } catch (const Error& e) {
      throw Error(Errc::config, "cannot open knowledge base: " + std::string(e.what()));
    }
    attach(std::move(model), std::move(store), std::move(tagger));
  }

  /// Installs already-loaded components and marks the service ready.
  void attach(sim::LoadedSimModel model, std::unique_ptr<kb::KbStore> store,
              std::optional<ner::Tagger> tagger = std::nullopt) {
    model_ = std::make_shared<const sim::LoadedSimModel>(std::move(model));
    store_ = std::move(store);
    if (tagger) tagger_ = std::make_shared<const ner::Tagger>(std::move(*tagger));
    ready_.store(true);
  }

  kb::KbStore& store() { return *store_; }

  Response handle_health() const {
    return {200, {{"status", ready() ? "ready" : "starting"}}};
  }

  Response handle_ask(const json& req) {
    if (!ready()) return not_ready();
    try {
      if (!req.is_object()) throw Error(Errc::validation, "request body must be a JSON object");
      if (!req.contains("question") || !req.at("question").is_string())
        throw Error(Errc::empty_question, "question is required");
      const std::string question = utf8::trim(req.at("question").get<std::string>());
      if (question.empty()) throw Error(Errc::empty_question, "question is empty");
      std::size_t top_k = 5;
      if (req.contains("top_k")) {
        const auto& k = req.at("top_k");
        if (!k.is_number_integer() || k.get<long long>() < 0)
          throw Error(Errc::validation, "top_k must be a non-negative integer");
        top_k = k.get<std::size_t>();
      }
      const bool clamped = top_k > config_.top_k_cap;
      if (clamped) top_k = config_.top_k_cap;

      kb::RetrievalOptions opt{top_k, config_.prefilter_m, config_.min_score};
      auto snapshot = store_->snapshot();
      auto results = kb::retrieve(question, *snapshot, model_->model, model_->tokenizer, opt);
      auto entry = store_->log_query(
          question, results.empty() ? std::nullopt : std::optional<kb::QueryResult>(results.front()));

      json candidates = json::array();
      for (const auto& r : results)
        candidates.push_back({{"id", r.record.id},
                              {"question", r.record.question},
                              {"answer", r.record.answer},
                              {"score", r.score},
                              {"source", {{"doc", r.record.source.doc},
                                          {"section", r.record.source.section}}}});
      json body{{"candidates", std::move(candidates)}, {"history_id", entry.id}};
      if (clamped) body["top_k_clamped"] = true;
      return {200, std::move(body)};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response handle_feedback(const json& req) {
    if (!ready()) return not_ready();
    try {
      if (!req.is_object()) throw Error(Errc::validation, "request body must be a JSON object");
      if (!req.contains("history_id") || !req.at("history_id").is_string())
        throw Error(Errc::validation, "history_id is required");
      if (!req.contains("verdict") || !req.at("verdict").is_string())
        throw Error(Errc::validation, "verdict is required");
      const std::string comment =
          req.contains("comment") && req.at("comment").is_string() ? req.at("comment").get<std::string>() : "";
      auto f = store_->record_feedback(req.at("history_id").get<std::string>(),
                                       kb::parse_verdict(req.at("verdict").get<std::string>()), comment);
      return {200, {{"status", "recorded"}, {"feedback_id", f.id}, {"history_id", f.history_id}}};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response handle_import(const std::string& content) {
    if (!ready()) return not_ready();
    try {
      if (content.size() > config_.import_limit_bytes)
        throw Error(Errc::payload_too_large,
                    "import exceeds " + std::to_string(config_.import_limit_bytes) + " bytes");
      return {200, {{"added", store_->import_text(content)}}};
    } catch (const Error& e) {
      return error_response(e);
    }
  }

  Response handle_stats() const {
    if (!ready()) return not_ready();
    auto snapshot = store_->snapshot();
    std::set<std::string> groups;
    for (const auto& r : *snapshot) groups.insert(r.group_id);
    return {200,
            {{"records", snapshot->size()},
             {"groups", groups.size()},
             {"history", store_->history().size()},
             {"feedback", store_->feedback().size()}}};
  }

  /// Registers the endpoints (and static assets, when configured).
  void bind_routes(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    auto parse_body = [](const httplib::Request& req) -> std::optional<json> {
      try {
        return json::parse(req.body);
      } catch (const json::exception&) {
        return std::nullopt;
      }
    };
    server.Get("/health", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, handle_health());
    });
    server.Get("/kb/stats", [this, reply](const httplib::Request&, httplib::Response& res) {
      reply(res, handle_stats());
    });
    server.Post("/ask", [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      reply(res, body ? handle_ask(*body) : error_response(400, "parse_error", "body is not JSON"));
    });
    server.Post("/feedback", [this, reply, parse_body](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      reply(res, body ? handle_feedback(*body) : error_response(400, "parse_error", "body is not JSON"));
    });
    server.Post("/kb/import", [this, reply](const httplib::Request& req, httplib::Response& res) {
      if (req.is_multipart_form_data()) {
        if (!req.has_file("file")) {
          reply(res, error_response(400, "validation_error", "multipart upload needs a \"file\" field"));
          return;
        }
        reply(res, handle_import(req.get_file_value("file").content));
        return;
      }
      reply(res, handle_import(req.body));
    });
    if (!config_.static_dir.empty()) server.set_mount_point("/", config_.static_dir);
    server.set_payload_max_length(config_.import_limit_bytes + 1024 * 1024);
  }

 private:
  static Response not_ready() {
    return error_response(503, "starting", "service is still loading");
  }

  ServiceConfig config_;
  std::atomic<bool> ready_{false};
  std::shared_ptr<const sim::LoadedSimModel> model_;
  std::shared_ptr<const ner::Tagger> tagger_;
  std::unique_ptr<kb::KbStore> store_;
};

/// Runs an httplib server on a background thread.
class HttpServer {
 public:
  explicit HttpServer(Service& service) { service.bind_routes(server_); }
  ~HttpServer() { stop(); }

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and starts serving; returns the port.
  int start(const std::string& host, int port) {
    if (port == 0) {
      port = server_.bind_to_any_port(host);
    } else if (!server_.bind_to_port(host, port)) {
      port = -1;
    }
    if (port < 0) throw Error(Errc::io, "cannot bind " + host);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  bool running() const { return server_.is_running(); }

 private:
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace mfqa::service
