#pragma once

// Command-line workflows: train-sim, train-ner, generate, import, ask,
// eval, serve. Exit status 0 on success, 1 on a runtime failure and 2 on
// a usage error.

#include <csignal>
#include <cstdlib>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mfqa/error.hpp"
#include "mfqa/kb.hpp"
#include "mfqa/nertagger.hpp"
#include "mfqa/qgen.hpp"
#include "mfqa/service.hpp"
#include "mfqa/simnet.hpp"
#include "mfqa/textcore.hpp"

namespace mfqa::cli {

using nlohmann::json;

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  out << text;
}

inline SegmenterConfig make_segmenter(const std::string& mode, const std::string& lexicon) {
  if (mode == "char") return SegmenterConfig::character();
  if (mode == "maxmatch") {
    if (lexicon.empty()) throw Error(Errc::config, "--segmenter maxmatch needs --lexicon");
    auto words = load_lexicon(lexicon);
    return SegmenterConfig::max_match(words);
  }
  throw Error(Errc::config, "unknown segmenter " + mode);
}

inline json candidate_json(const kb::QueryResult& r) {
  return {{"id", r.record.id},
          {"question", r.record.question},
          {"answer", r.record.answer},
          {"score", r.score},
          {"source", {{"doc", r.record.source.doc}, {"section", r.record.source.section}}}};
}

inline volatile std::sig_atomic_t g_stop = 0;

inline void on_signal(int) { g_stop = 1; }

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Standards-consultation question answering"};
  app.require_subcommand(1);
  app.name("mfqa");

  // train-sim
  struct {
    std::string data, out = "sim.ckpt", history, segmenter = "char", lexicon, vocab_out,
                      pooling = "mean";
    std::size_t epochs = 20, batch_size = 32, dim = 32, hidden = 32, max_len = 32;
    int min_count = 1;
    std::uint64_t seed = 7;
    double lr = 1e-3;
    bool no_attention = false;
  } ts;
  auto* train_sim = app.add_subcommand("train-sim", "Train the sentence-pair similarity model");
  train_sim->add_option("--data", ts.data, "Pair dataset (JSON Lines)")->required();
  train_sim->add_option("--out", ts.out, "Checkpoint path");
  train_sim->add_option("--history", ts.history, "Per-epoch history JSON (default <out>.history.json)");
  train_sim->add_option("--epochs", ts.epochs);
  train_sim->add_option("--batch-size", ts.batch_size);
  train_sim->add_option("--seed", ts.seed);
  train_sim->add_option("--dim", ts.dim, "Embedding size");
  train_sim->add_option("--hidden", ts.hidden, "LSTM hidden size per direction");
  train_sim->add_option("--max-len", ts.max_len);
  train_sim->add_option("--lr", ts.lr);
  train_sim->add_option("--min-count", ts.min_count);
  train_sim->add_option("--pooling", ts.pooling)->check(CLI::IsMember({"mean", "max"}));
  train_sim->add_option("--segmenter", ts.segmenter)->check(CLI::IsMember({"char", "maxmatch"}));
  train_sim->add_option("--lexicon", ts.lexicon, "Lexicon for maxmatch segmentation");
  train_sim->add_option("--vocab-out", ts.vocab_out, "Also write the vocabulary file");
  train_sim->add_flag("--no-attention", ts.no_attention, "Train the plain BiLSTM ablation");

  // train-ner
  struct {
    std::string data, out = "ner.ckpt", history;
    std::size_t epochs = 200, batch_size = 1, dim = 16, hidden = 16;
    std::uint64_t seed = 7;
    double lr = 1e-3;
  } tn;
  auto* train_ner = app.add_subcommand("train-ner", "Train the BiLSTM-CRF entity tagger");
  train_ner->add_option("--data", tn.data, "Tagged dataset (JSON Lines)")->required();
  train_ner->add_option("--out", tn.out);
  train_ner->add_option("--history", tn.history);
  train_ner->add_option("--epochs", tn.epochs);
  train_ner->add_option("--batch-size", tn.batch_size);
  train_ner->add_option("--seed", tn.seed);
  train_ner->add_option("--dim", tn.dim);
  train_ner->add_option("--hidden", tn.hidden);
  train_ner->add_option("--lr", tn.lr);

  // generate
  struct {
    std::string corpus, ner, out, map, doc, entities;
  } gen;
  auto* generate = app.add_subcommand("generate", "Generate question-answer pairs from sentences");
  generate->add_option("--corpus", gen.corpus, "One sentence per line, optional section<TAB>")->required();
  generate->add_option("--ner", gen.ner, "Tagger checkpoint")->required();
  generate->add_option("--out", gen.out, "Output JSON Lines")->required();
  generate->add_option("--map", gen.map, "Interrogative override JSON");
  generate->add_option("--doc", gen.doc, "Document name recorded as the pair source");
  generate->add_option("--entities", gen.entities, "Also write the entity table (JSON Lines)");

  // import
  struct {
    std::string kb, file;
  } imp;
  auto* import = app.add_subcommand("import", "Import records into a knowledge base file");
  import->add_option("--kb", imp.kb, "Knowledge base path")->required();
  import->add_option("--file", imp.file, "JSON array or JSON Lines of records")->required();

  // ask
  struct {
    std::string kb, model, question, vocab;
    std::size_t top_k = 5, prefilter_m = 0;
  } ask;
  auto* ask_cmd = app.add_subcommand("ask", "Answer one question from a knowledge base");
  ask_cmd->add_option("--kb", ask.kb)->required();
  ask_cmd->add_option("--model", ask.model, "Similarity checkpoint")->required();
  ask_cmd->add_option("--question", ask.question)->required();
  ask_cmd->add_option("--top-k", ask.top_k);
  ask_cmd->add_option("--prefilter-m", ask.prefilter_m);
  ask_cmd->add_option("--vocab", ask.vocab);

  // eval
  struct {
    std::string model, data;
    double threshold = 0.5;
  } ev;
  auto* eval = app.add_subcommand("eval", "Accuracy of a similarity model on a pair dataset");
  eval->add_option("--model", ev.model)->required();
  eval->add_option("--data", ev.data)->required();
  eval->add_option("--threshold", ev.threshold);

  // serve
  struct {
    std::string config, bind, kb, sim_model, ner_model, vocab, static_dir;
    std::optional<std::size_t> prefilter_m, top_k_cap;
    std::optional<std::uint64_t> seed;
  } sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--config", sv.config, "Key-value config file (fallback: $QA_CONFIG)");
  serve->add_option("--bind", sv.bind, "host:port");
  serve->add_option("--kb", sv.kb);
  serve->add_option("--sim-model", sv.sim_model);
  serve->add_option("--ner-model", sv.ner_model);
  serve->add_option("--vocab", sv.vocab);
  serve->add_option("--static-dir", sv.static_dir);
  serve->add_option("--prefilter-m", sv.prefilter_m);
  serve->add_option("--top-k-cap", sv.top_k_cap);
  serve->add_option("--seed", sv.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "mfqa: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (train_sim->parsed()) {
      const auto raw = sim::load_pairs_jsonl(ts.data);
      if (raw.empty()) throw Error(Errc::validation, "pair dataset is empty");
      auto seg = detail::make_segmenter(ts.segmenter, ts.lexicon);
      std::vector<std::vector<std::string>> corpus;
      for (const auto& p : raw) {
        corpus.push_back(segment(p.q1, seg));
        corpus.push_back(segment(p.q2, seg));
      }
      Tokenizer tok(seg, build_vocab(corpus, ts.min_count));
      sim::SimModelConfig cfg;
      cfg.vocab_size = tok.vocab().size();
      cfg.embed_dim = ts.dim;
      cfg.hidden_dim = ts.hidden;
      cfg.max_len = ts.max_len;
      cfg.interactive_attention = !ts.no_attention;
      cfg.pooling = ts.pooling == "max" ? sim::Pooling::max : sim::Pooling::mean;
      cfg.seed = ts.seed;
      sim::TrainOptions opt;
      opt.epochs = ts.epochs;
      opt.batch_size = ts.batch_size;
      opt.nadam.lr = ts.lr;
      auto result = sim::train_sim(sim::to_examples(raw, tok), cfg, opt);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      sim::save_model(ts.out, result.model, tok);
      if (!ts.vocab_out.empty()) tok.vocab().save(ts.vocab_out);
      const std::string history_path = ts.history.empty() ? ts.out + ".history.json" : ts.history;
      detail::write_text(history_path, sim::history_to_json(result.history).dump(2) + "\n");
      const auto& last = result.history.back();
      json summary{{"checkpoint", ts.out}, {"history", history_path}, {"epochs", result.history.size()},
                   {"final_loss", last.loss}, {"train_accuracy", last.train_accuracy}};
      if (last.validation_accuracy) summary["validation_accuracy"] = *last.validation_accuracy;
      out << summary.dump() << "\n";
      return 0;
    }

    if (train_ner->parsed()) {
      auto data = ner::load_tagged_jsonl(tn.data);
      ner::NerConfig cfg;
      cfg.embed_dim = tn.dim;
      cfg.hidden_dim = tn.hidden;
      cfg.seed = tn.seed;
      ner::NerTrainOptions opt;
      opt.epochs = tn.epochs;
      opt.batch_size = tn.batch_size;
      opt.nadam.lr = tn.lr;
      auto result = ner::train_ner(data, cfg, opt);
      ner::save_tagger(tn.out, result.tagger);
      json hist = json::array();
      for (const auto& h : result.history)
        hist.push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"token_accuracy", h.token_accuracy}});
      const std::string history_path = tn.history.empty() ? tn.out + ".history.json" : tn.history;
      detail::write_text(history_path, hist.dump(2) + "\n");
      out << json{{"checkpoint", tn.out}, {"history", history_path},
                  {"final_loss", result.history.back().loss},
                  {"token_accuracy", result.history.back().token_accuracy}}
                 .dump()
          << "\n";
      return 0;
    }

    if (generate->parsed()) {
      auto corpus = qgen::load_corpus(gen.corpus, gen.doc);
      auto tagger = ner::load_tagger(gen.ner);
      auto map = gen.map.empty() ? qgen::InterrogativeMap::defaults() : qgen::InterrogativeMap::load(gen.map);
      auto result = qgen::generate_corpus(corpus, tagger, map);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      qgen::write_pairs_jsonl(gen.out, result.pairs);
      if (!gen.entities.empty()) {
        std::ofstream ent(gen.entities, std::ios::binary);
        if (!ent) throw Error(Errc::io, "cannot write " + gen.entities);
        for (const auto& line : corpus) {
          auto tagged = tagger.tag(line.text);
          if (tagged.tokens.empty()) continue;
          json spans = json::array();
          for (const auto& s : ner::extract_entities(tagged))
            spans.push_back({{"start", s.start}, {"end", s.end}, {"type", s.type}, {"surface", s.surface}});
          if (!spans.empty()) ent << json{{"sentence", tagged.text()}, {"entities", spans}}.dump() << "\n";
        }
      }
      out << json{{"pairs", result.pairs.size()}, {"out", gen.out}}.dump() << "\n";
      return 0;
    }

    if (import->parsed()) {
      auto store = kb::KbStore::open(imp.kb);
      const auto added = store->import_json(imp.file);
      out << json{{"added", added}, {"total", store->size()}}.dump() << "\n";
      return 0;
    }

    if (ask_cmd->parsed()) {
      auto loaded = sim::load_model(ask.model);
      if (!ask.vocab.empty())
        loaded.tokenizer = Tokenizer(loaded.tokenizer.segmenter(), Vocabulary::load(ask.vocab));
      if (!std::filesystem::exists(ask.kb)) throw Error(Errc::io, "no knowledge base at " + ask.kb);
      auto store = kb::KbStore::open(ask.kb);
      auto results = kb::retrieve(ask.question, *store->snapshot(), loaded.model, loaded.tokenizer,
                                  {ask.top_k, ask.prefilter_m, 0.0});
      for (const auto& r : results) out << detail::candidate_json(r).dump() << "\n";
      return 0;
    }

    if (eval->parsed()) {
      auto loaded = sim::load_model(ev.model);
      auto pairs = sim::to_examples(sim::load_pairs_jsonl(ev.data), loaded.tokenizer);
      const double acc = sim::eval_accuracy(loaded.model, pairs, ev.threshold);
      out << json{{"accuracy", acc}, {"pairs", pairs.size()}, {"threshold", ev.threshold}}.dump() << "\n";
      return 0;
    }

    if (serve->parsed()) {
      service::ServiceConfig cfg;
      std::string config_path = sv.config;
      if (config_path.empty())
        if (const char* env = std::getenv("QA_CONFIG")) config_path = env;
      if (!config_path.empty()) cfg.load_file(config_path);
      if (!sv.bind.empty()) cfg.set_bind(sv.bind);
      if (!sv.kb.empty()) cfg.kb_path = sv.kb;
      if (!sv.sim_model.empty()) cfg.sim_model_path = sv.sim_model;
      if (!sv.ner_model.empty()) cfg.ner_model_path = sv.ner_model;
      if (!sv.vocab.empty()) cfg.vocab_path = sv.vocab;
      if (!sv.static_dir.empty()) cfg.static_dir = sv.static_dir;
      if (sv.prefilter_m) cfg.prefilter_m = *sv.prefilter_m;
      if (sv.top_k_cap) cfg.top_k_cap = *sv.top_k_cap;
      if (sv.seed) cfg.seed = *sv.seed;

      service::Service svc(cfg);
      service::HttpServer http(svc);
      const int port = http.start(cfg.host, cfg.port);
      err << "listening on " << cfg.host << ":" << port << "\n";
      try {
        svc.load();
      } catch (...) {
        http.stop();
        throw;
      }
      err << "ready\n";
      detail::g_stop = 0;
      std::signal(SIGINT, detail::on_signal);
      std::signal(SIGTERM, detail::on_signal);
      while (!detail::g_stop && http.running())
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      http.stop();
      return 0;
    }
  } catch (const Error& e) {
    err << "mfqa: " << e.code_name() << ": " << e.what() << "\n";
    return e.code() == Errc::config ? 2 : 1;
  } catch (const std::exception& e) {
    err << "mfqa: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace mfqa::cli
