// Copyright 2026 The etal Authors.
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

// Command-line entry points: transfer, train, select, simulate, evaluate, serve.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>

#include "etal/al_loop.h"
#include "etal/embeddings.h"
#include "etal/errors.h"
#include "etal/eval.h"
#include "etal/service.h"
#include "etal/synthetic.h"
#include "etal/xlingual.h"

using namespace etal;

namespace {

struct Common {
  std::vector<std::string> types{"PER", "ORG", "LOC", "MISC"};
  std::string log = "etal-diagnostics.log";
  std::uint64_t seed = 1;
};

bool is_jsonl(const std::string& path) { return path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl"; }

std::vector<LabeledSequence> read_corpus(const std::string& path, const LabelScheme& scheme) {
  std::string text = read_file(path);
  try {
    return is_jsonl(path) ? parse_jsonl(text, scheme) : parse_conll(text, scheme);
  } catch (const ParseError& e) {
    throw Error(path + ": " + e.what());
  }
}

void write_corpus(const std::string& path, const std::vector<LabeledSequence>& seqs, const LabelScheme& scheme) {
  write_file(path, is_jsonl(path) ? write_jsonl(seqs, scheme) : write_conll(seqs, scheme));
}

// Writes to a file, or stdout for "" and "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text << std::flush;
  else
    write_file(path, text);
}

std::shared_ptr<const EmbeddingTable> maybe_embeddings(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<const EmbeddingTable>(parse_embeddings(read_file(path)));
}

void write_diagnostics(const std::string& log, int argc, char** argv, const std::string& message) {
  std::ofstream out(log, std::ios::app);
  if (!out) return;
  std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  out << stamp << " command:";
  for (int i = 0; i < argc; ++i) out << ' ' << argv[i];
  out << "\n  " << message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-targeted active learning toolkit"};
  app.set_config("--config", "", "INI/TOML file with option defaults; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--types", common.types, "Entity types, in label order")->delimiter(',');
  app.add_option("--log", common.log, "Diagnostics log, appended on failure");
  app.add_option("--seed", common.seed, "Root seed for every random choice");

  // transfer
  auto* transfer = app.add_subcommand("transfer", "Translate a labeled source corpus word by word");
  std::string src_emb, tgt_emb, lexicon, source_corpus, transfer_out, dict_out;
  TransferOptions topts;
  bool no_normalize = false;
  transfer->add_option("--source-embeddings", src_emb, "Source embedding text file")->required();
  transfer->add_option("--target-embeddings", tgt_emb, "Target embedding text file")->required();
  transfer->add_option("--lexicon", lexicon, "Seed lexicon, source TAB target")->required();
  transfer->add_option("--corpus", source_corpus, "Labeled source corpus")->required();
  transfer->add_option("--output", transfer_out, "Translated corpus")->required();
  transfer->add_option("--dictionary", dict_out, "Induced dictionary TSV");
  transfer->add_option("--csls-k", topts.csls_k, "CSLS neighborhood size");
  transfer->add_flag("--no-normalize", no_normalize, "Skip centering and unit normalization");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a CRF on a fully labeled corpus");
  std::string train_path, model_out, train_emb;
  TrainConfig tcfg;
  FeatureConfig features;
  train_cmd->add_option("--train", train_path, "Labeled corpus (.conll or .jsonl)")->required();
  train_cmd->add_option("--model", model_out, "Output model file")->required();
  train_cmd->add_option("--epochs", tcfg.epochs, "SGD epochs");
  train_cmd->add_option("--learning-rate", tcfg.learning_rate, "SGD learning rate");
  train_cmd->add_option("--hash-bits", features.hash_bits, "log2 of the weight table size");
  train_cmd->add_option("--embeddings", train_emb, "Embedding text file for lexical features");

  // select
  auto* select = app.add_subcommand("select", "Select a batch of spans or sequences to annotate");
  std::string select_model, select_pool, select_out, select_emb, select_strategy = "etal";
  int select_budget = 200;
  SelectionConfig scfg;
  select->add_option("--model", select_model, "Model file")->required();
  select->add_option("--pool", select_pool, "Unlabeled pool")->required();
  select->add_option("--strategy", select_strategy, "etal, sal, cfeal or rand");
  select->add_option("--budget", select_budget, "Token budget");
  select->add_option("--max-span", scfg.max_span_length, "Longest candidate span");
  select->add_option("--threshold", scfg.entropy_threshold, "Minimum span entropy");
  select->add_option("--embeddings", select_emb, "Embedding file the model was trained with");
  select->add_option("--output", select_out, "Batch JSONL (default stdout)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulated active learning with an oracle");
  std::vector<std::string> sim_strategies{"etal"};
  std::string sim_scheme = "FineTune", sim_out, sim_pool, sim_test, sim_dev, sim_transferred;
  SimulationConfig sim;
  SyntheticConfig synth;
  int sim_hash_bits = 18;
  simulate->add_option("--strategy", sim_strategies, "One or more of etal, sal, cfeal, rand")->delimiter(',');
  simulate->add_option("--scheme", sim_scheme, "FineTune, CorpusAug or CorpusAug+FineTune");
  simulate->add_option("--rounds", sim.rounds, "Rounds");
  simulate->add_option("--budget", sim.budget, "Tokens per round");
  simulate->add_option("--epochs", sim.scheme.epochs, "SGD epochs per retraining");
  simulate->add_option("--max-span", sim.selection.max_span_length, "Longest candidate span");
  simulate->add_option("--hash-bits", sim_hash_bits, "log2 of the weight table size");
  simulate->add_option("--pool", sim_pool, "Gold-labeled pool; the synthetic generator is used when absent");
  simulate->add_option("--test", sim_test, "Gold-labeled test split");
  simulate->add_option("--dev", sim_dev, "Gold-labeled dev split");
  simulate->add_option("--transferred", sim_transferred, "Transferred training data");
  simulate->add_option("--pool-size", synth.pool_size, "Synthetic pool sentences");
  simulate->add_option("--test-size", synth.test_size, "Synthetic test sentences");
  simulate->add_option("--transferred-size", synth.transferred_size, "Synthetic transferred sentences");
  simulate->add_option("--output", sim_out, "Trajectory CSV (default stdout)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Span F1, and paired bootstrap for several systems");
  std::vector<std::string> eval_pred;
  std::string eval_gold, eval_report, eval_scores;
  BootstrapOptions bopts;
  evaluate->add_option("--pred", eval_pred, "Predicted corpora; the first is the reference system")->required();
  evaluate->add_option("--gold", eval_gold, "Gold corpus")->required();
  evaluate->add_option("--report", eval_report, "JSON report");
  evaluate->add_option("--scores", eval_scores, "Per-iteration bootstrap scores CSV");
  evaluate->add_option("--iterations", bopts.iterations, "Bootstrap iterations");
  evaluate->add_option("--fraction", bopts.sample_fraction, "Bootstrap sample fraction");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  std::string serve_config, serve_root, serve_host;
  int serve_port = -1;
  serve->add_option("--service-config", serve_config, "JSON service config (data_root, host, port)");
  serve->add_option("--data-root", serve_root, "Project directory root");
  serve->add_option("--host", serve_host, "Listen address");
  serve->add_option("--port", serve_port, "Listen port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "etal: " << e.what() << "\n";
    write_diagnostics(common.log, argc, argv, std::string("usage error: ") + e.what());
    return 2;
  }

  try {
    LabelScheme scheme(common.types);

    if (*transfer) {
      topts.normalize = !no_normalize;
      auto source = parse_embeddings(read_file(src_emb));
      auto target = parse_embeddings(read_file(tgt_emb));
      auto lex = parse_lexicon(read_file(lexicon));
      auto alignment = align_embeddings(source, target, lex, topts);
      auto dict = build_dictionary(source, target, alignment, topts);
      TranslationReport report;
      auto translated = translate_corpus(read_corpus(source_corpus, scheme), dict, &report);
      write_corpus(transfer_out, translated, scheme);
      if (!dict_out.empty()) write_file(dict_out, dictionary_to_tsv(dict));
      for (const auto& w : alignment.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& w : dict.warnings) std::cerr << "warning: " << w << "\n";
      std::printf("lexicon pairs %d, alignment residual %.6g, dictionary %zu words, tokens translated %zu/%zu\n",
                  alignment.pairs, alignment.residual, dict.entries.size(), report.translated, report.tokens);
    } else if (*train_cmd) {
      tcfg.seed = common.seed;
      auto data = read_corpus(train_path, scheme);
      CrfModel blank(scheme, features, maybe_embeddings(train_emb));
      auto result = train(blank, make_examples(blank, data), tcfg);
      write_file(model_out, serialize_model(result.model));
      std::printf("trained on %zu sequences, final loss %.6f\n", data.size(),
                  result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
    } else if (*select) {
      CrfModel model = deserialize_model(read_file(select_model));
      model.set_embeddings(maybe_embeddings(select_emb));
      SequencePool pool(read_corpus(select_pool, model.scheme()), model);
      Coverage none(pool);
      auto batch = select_batch(parse_strategy(select_strategy), pool, model, select_budget, scfg, none,
                                mix_seed(common.seed));
      for (const auto& w : batch.warnings) std::cerr << "warning: " << w << "\n";
      emit(select_out, batch_to_jsonl(batch));
    } else if (*simulate) {
      sim.seed = common.seed;
      sim.scheme.scheme = parse_scheme(sim_scheme);
      SimulationData data;
      data.features.hash_bits = sim_hash_bits;
      if (sim_pool.empty()) {
        synth.seed = common.seed;
        auto corpus = generate_synthetic(synth);
        data.scheme = corpus.scheme;
        data.pool = std::move(corpus.pool);
        data.dev = std::move(corpus.dev);
        data.test = std::move(corpus.test);
        data.transferred = std::move(corpus.transferred);
      } else {
        data.scheme = scheme;
        data.pool = read_corpus(sim_pool, scheme);
        if (!sim_test.empty()) data.test = read_corpus(sim_test, scheme);
        if (!sim_dev.empty()) data.dev = read_corpus(sim_dev, scheme);
        if (!sim_transferred.empty()) data.transferred = read_corpus(sim_transferred, scheme);
      }
      std::string csv;
      for (const auto& name : sim_strategies) {
        sim.strategy = parse_strategy(name);
        auto result = run_simulation(data, sim);
        for (const auto& w : result.warnings) std::cerr << "warning: " << strategy_name(sim.strategy) << " " << w << "\n";
        std::string part = trajectory_csv(result.records);
        csv += csv.empty() ? part : part.substr(part.find('\n') + 1);
      }
      emit(sim_out, csv);
    } else if (*evaluate) {
      auto gold = read_corpus(eval_gold, scheme);
      std::vector<std::vector<LabeledSequence>> systems;
      for (const auto& p : eval_pred) systems.push_back(read_corpus(p, scheme));
      std::string json;
      for (std::size_t i = 0; i < systems.size(); ++i) {
        auto r = span_f1(systems[i], gold, scheme);
        std::printf("%s P %.4f R %.4f F1 %.4f\n", eval_pred[i].c_str(), r.precision, r.recall, r.f1);
        if (systems.size() == 1) json = report_to_json(r);
      }
      if (systems.size() > 1) {
        bopts.seed = common.seed;
        auto report = paired_bootstrap(systems, eval_pred, gold, scheme, bopts);
        for (const auto& s : report.systems)
          std::printf("%s mean F1 %.4f [%.4f, %.4f] win rate %.4f%s\n", s.name.c_str(), s.mean_f1, s.lower, s.upper,
                      s.win_rate, s.significantly_worse ? " significantly worse" : "");
        json = report_to_json(report);
        if (!eval_scores.empty()) write_file(eval_scores, bootstrap_scores_csv(report));
      }
      if (!eval_report.empty()) write_file(eval_report, json + "\n");
    } else if (*serve) {
      ServiceConfig config = load_service_config(serve_config);
      if (!serve_root.empty()) config.data_root = serve_root;
      if (!serve_host.empty()) config.host = serve_host;
      if (serve_port >= 0) config.port = serve_port;
      AnnotationService service(config);
      HttpServer server(service);
      int port = server.bind(config.host, config.port);
      std::printf("serving %s on %s:%d\n", config.data_root.c_str(), config.host.c_str(), port);
      std::fflush(stdout);
      server.listen();
    }
  } catch (const std::exception& e) {
    std::cerr << "etal: error: " << e.what() << " (details in " << common.log << ")\n";
    write_diagnostics(common.log, argc, argv, e.what());
    return 1;
  }
  return 0;
}
