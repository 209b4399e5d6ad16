#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kernelsmith/clustering.hpp"
#include "kernelsmith/compressor.hpp"
#include "kernelsmith/config.hpp"
#include "kernelsmith/error.hpp"
#include "kernelsmith/metrics.hpp"
#include "kernelsmith/ngram_lm.hpp"
#include "kernelsmith/seq2seq.hpp"
#include "kernelsmith/service.hpp"
#include "kernelsmith/textprep.hpp"
#include "kernelsmith_tools/http_server.hpp"

namespace {

using ks::Error;
using ks::ErrorCode;
using ks::KeyValueConfig;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string require_key(const KeyValueConfig& c, const std::string& key) {
  auto v = c.get(key);
  if (!v || v->empty()) throw Error(ErrorCode::kInvalidArgument, "missing setting " + key + " (flag --" + key + ")");
  return *v;
}

std::unordered_set<std::string> blocklist_from(const KeyValueConfig& c) {
  auto p = c.get("blocklist.path");
  if (!p || p->empty()) return {};
  return ks::load_blocklist(*p);
}

ks::Vocab vocab_from(const std::vector<ks::Sentence>& corpus, const KeyValueConfig& c) {
  return ks::Vocab::build(corpus, c.get_size("lm.vocab_size", 0), c.get_size("lm.min_count", 1));
}

int run_ingest(const KeyValueConfig& c, const std::vector<std::string>& inputs, const std::string& output) {
  const ks::FilterSettings f = ks::filter_settings_from(c);
  std::vector<ks::Sentence> all;
  for (const auto& path : inputs) {
    auto s = ks::segment_text(read_file(path), path);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  const auto kept = ks::filter_corpus(all, f.min_len, f.max_len, f.bounds, blocklist_from(c));
  ks::write_sentences(output, kept);
  std::cout << "segmented " << all.size() << " sentences, kept " << kept.size() << " -> " << output << "\n";
  return 0;
}

int run_build_lm(const KeyValueConfig& c, const std::string& corpus_path, const std::string& output) {
  const auto corpus = ks::read_sentences(corpus_path);
  const ks::Vocab vocab = vocab_from(corpus, c);
  const ks::TrigramLM lm = ks::build_lm(corpus, vocab, c.get_double("lm.prune_threshold", 1e-7));
  lm.save_arpa(output);
  std::cout << "vocab " << vocab.size() << ", n-grams " << lm.num_ngrams(1) << "/" << lm.num_ngrams(2) << "/"
            << lm.num_ngrams(3) << " -> " << output << "\n";
  return 0;
}

int run_compress(const KeyValueConfig& c, const std::string& sentence, const std::string& input, bool json) {
  const ks::TrigramLM lm = ks::TrigramLM::load_arpa(require_key(c, "lm.path"));
  const ks::CompressionConfig cc = ks::compression_config_from(c);
  std::vector<ks::Sentence> items;
  if (!sentence.empty()) items.push_back(ks::normalize_sentence(sentence));
  if (!input.empty()) {
    std::ifstream in(input);
    if (!in) throw Error(ErrorCode::kIoError, "cannot read " + input);
    std::string line;
    while (std::getline(in, line)) {
      try {
        items.push_back(ks::normalize_sentence(line));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptySentence) throw;
      }
    }
  }
  if (items.empty()) throw Error(ErrorCode::kInvalidArgument, "give --sentence or --input");
  for (const auto& s : items) {
    const ks::Compression k = ks::compress_detailed(lm, s, cc);
    if (json) {
      std::cout << nlohmann::json{{"input", s.tokens}, {"kernel", k.kernel.tokens}, {"kept", k.kept}, {"score", k.score}}
                       .dump()
                << "\n";
    } else {
      std::cout << ks::detokenize(k.kernel.tokens) << "\n";
    }
  }
  return 0;
}

int run_build_dataset(const KeyValueConfig& c, const std::string& corpus_path, const std::string& train_out,
                      const std::string& dev_out) {
  const auto corpus = ks::read_sentences(corpus_path);
  const ks::TrigramLM lm = ks::TrigramLM::load_arpa(require_key(c, "lm.path"));
  const ks::ParallelCorpus pc = ks::build_parallel_corpus(corpus, lm, ks::compression_config_from(c),
                                                          c.get_size("dataset.dev_holdout", 100),
                                                          c.get_u64("dataset.seed", 1));
  ks::write_pairs_tsv(train_out, pc.train);
  ks::write_pairs_tsv(dev_out, pc.dev);
  std::vector<ks::SentencePair> all = pc.train;
  all.insert(all.end(), pc.dev.begin(), pc.dev.end());
  std::cout << "pairs: train " << pc.train.size() << ", dev " << pc.dev.size() << ", mean kept fraction "
            << ks::mean_compression_rate(all) << "\n";
  return 0;
}

int run_train(const KeyValueConfig& c, const std::string& pairs_path, const std::string& output,
              const std::string& loss_log) {
  const auto pairs = ks::read_pairs_tsv(pairs_path);
  std::vector<ks::Sentence> text;
  for (const auto& p : pairs) {
    text.push_back(p.kernel);
    text.push_back(p.original);
  }
  const ks::Vocab vocab = vocab_from(text, c);
  const ks::FocusedLossConfig loss = ks::loss_config_from(c);
  const ks::TrainConfig tc = ks::train_config_from(c);
  const ks::TrainResult r = ks::train(pairs, vocab, ks::model_dims_from(c), loss, tc);
  ks::save_checkpoint(r.model, output, loss, tc);
  std::ofstream log;
  if (!loss_log.empty()) {
    log.open(loss_log);
    if (!log) throw Error(ErrorCode::kIoError, "cannot write " + loss_log);
    log << "step,loss\n";
  }
  for (const auto& [step, value] : r.loss_history) {
    std::cout << "step " << step << " loss " << value << "\n";
    if (log.is_open()) log << step << ',' << value << '\n';
  }
  std::cout << "saved " << output << " (" << r.model.params().size() << " parameters)\n";
  return 0;
}

int run_expand(const KeyValueConfig& c, const std::string& sentence, const std::string& method,
               std::size_t candidates, const std::optional<std::uint64_t>& seed, bool json) {
  const ks::ExpansionService service = ks::ExpansionService::from_config(c);
  nlohmann::json request = {{"sentence", sentence}, {"candidate_count", candidates}};
  if (!method.empty()) request["method"] = method;
  if (seed) request["seed"] = *seed;
  const nlohmann::json response = service.expand(request);
  if (json) {
    std::cout << response.dump(2) << "\n";
    return 0;
  }
  for (const auto& cand : response.at("candidates")) {
    std::cout << cand.at("text").get<std::string>();
    if (cand.at("filtered").at("flag").get<bool>()) {
      std::cout << "\t[filtered: " << cand.at("filtered").at("reason").get<std::string>() << "]";
    }
    std::cout << "\n";
  }
  return 0;
}

int run_evaluate(const std::string& input, const std::string& output) {
  const ks::BatchSummary s = ks::evaluate_tsv(input, output);
  std::cout << "rows " << s.rows << " (with reference " << s.with_reference << ")\n"
            << "mean dist1 " << s.mean.diversity.dist1 << ", dist2 " << s.mean.diversity.dist2 << ", expansion "
            << s.mean.diversity.expansion_ratio << "\n";
  if (s.mean.overlap) {
    std::cout << "mean rouge1 " << s.mean.overlap->rouge1 << ", rouge2 " << s.mean.overlap->rouge2 << ", bleu2 "
              << s.mean.overlap->bleu2 << ", bleu4 " << s.mean.overlap->bleu4 << "\n";
  }
  std::cout << "report -> " << output << "\n";
  return 0;
}

int run_cluster(const KeyValueConfig& c, const std::string& corpus_path, const std::string& output) {
  const auto corpus = ks::read_sentences(corpus_path);
  const ks::ClusterConfig cc = ks::cluster_config_from(c);
  std::vector<std::size_t> ks_list = ks::parse_size_list(c.get_string("cluster.sweep", ""));
  if (ks_list.empty()) ks_list.push_back(cc.k);
  const nlohmann::json report = ks::cluster_report(corpus, cc, ks_list);
  if (output.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    std::ofstream out(output);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + output);
    out << report.dump(2) << "\n";
    for (const auto& run : report.at("runs")) {
      std::cout << "k=" << run.at("k") << " silhouette " << run.at("silhouette") << " sizes " << run.at("sizes") << "\n";
    }
  }
  return 0;
}

ks::HttpServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int run_serve(const KeyValueConfig& c) {
  const ks::ExpansionService service = ks::ExpansionService::from_config(c);
  ks::HttpServer server(service);
  const std::string host = c.get_string("server.host", "127.0.0.1");
  const int port = server.bind(host, static_cast<int>(c.get_size("server.port", 8080)));
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "listening on http://" << host << ":" << port << " (" << service.health().at("step_model").get<std::string>()
            << ")" << std::endl;
  server.serve();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernelsmith: sentence compression, kernel expansion and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> assignments;
  app.add_option("--config", config_path, "key = value settings file (default: $KERNELSMITH_CONFIG, ./kernelsmith.conf)");
  app.add_option("--set", assignments, "override a setting, key=value (repeatable)");
  const auto& keys = ks::known_config_keys();
  std::vector<std::string> flag_values(keys.size());
  std::vector<CLI::Option*> flag_options;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::string help = keys[i].help;
    if (!keys[i].fallback.empty()) help += " [" + keys[i].fallback + "]";
    flag_options.push_back(app.add_option("--" + keys[i].key, flag_values[i], help)->group("Settings"));
  }

  std::vector<std::string> ingest_inputs;
  std::string output, corpus, sentence, input, train_out, dev_out, pairs, loss_log, method;
  bool json = false;
  std::size_t candidates = 1;
  std::optional<std::uint64_t> seed;

  auto* ingest = app.add_subcommand("ingest", "segment, normalize and filter raw text files");
  ingest->add_option("inputs", ingest_inputs, "UTF-8 text files")->required();
  ingest->add_option("-o,--output", output, "sentence file")->required();

  auto* build_lm = app.add_subcommand("build-lm", "estimate a pruned Kneser-Ney trigram model");
  build_lm->add_option("--corpus", corpus, "sentence file")->required();
  build_lm->add_option("-o,--output", output, "ARPA file")->required();

  auto* compress = app.add_subcommand("compress", "delete words down to a kernel");
  compress->add_option("--sentence", sentence, "raw sentence");
  compress->add_option("--input", input, "file with one raw sentence per line");
  compress->add_flag("--json", json, "print JSON lines");

  auto* dataset = app.add_subcommand("build-dataset", "compress a corpus into kernel/original pairs");
  dataset->add_option("--corpus", corpus, "sentence file")->required();
  dataset->add_option("--train", train_out, "training pairs TSV")->required();
  dataset->add_option("--dev", dev_out, "held-out pairs TSV")->required();

  auto* train = app.add_subcommand("train", "train the expansion model");
  train->add_option("--pairs", pairs, "pairs TSV (kernel TAB original)")->required();
  train->add_option("-o,--output", output, "checkpoint path")->required();
  train->add_option("--loss-log", loss_log, "CSV of (step, loss)");

  auto* expand = app.add_subcommand("expand", "expand a sentence");
  expand->add_option("--sentence", sentence, "input sentence")->required();
  expand->add_option("--method", method, "decode method or 'trigram'");
  expand->add_option("--candidates", candidates, "candidate count")->check(CLI::PositiveNumber);
  expand->add_option("--seed", seed, "sampling seed");
  expand->add_flag("--json", json, "print the full response");

  auto* evaluate = app.add_subcommand("evaluate", "score (input, output[, reference]) rows");
  evaluate->add_option("--input", input, "TSV file")->required();
  evaluate->add_option("-o,--output", output, "CSV report")->required();

  auto* cluster = app.add_subcommand("cluster", "topic clustering report");
  cluster->add_option("--corpus", corpus, "sentence file")->required();
  cluster->add_option("-o,--output", output, "JSON report (stdout when omitted)");

  auto* serve = app.add_subcommand("serve", "run the HTTP JSON API");

  CLI11_PARSE(app, argc, argv);

  try {
    KeyValueConfig config;
    if (auto path = ks::resolve_config_path(config_path)) config = KeyValueConfig::load(*path);
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kParseError, "--set expects key=value, got " + a);
      config.set(a.substr(0, eq), a.substr(eq + 1));
    }
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (flag_options[i]->count() > 0) config.set(keys[i].key, flag_values[i]);
    }
    config.check_known();

    if (*ingest) return run_ingest(config, ingest_inputs, output);
    if (*build_lm) return run_build_lm(config, corpus, output);
    if (*compress) return run_compress(config, sentence, input, json);
    if (*dataset) return run_build_dataset(config, corpus, train_out, dev_out);
    if (*train) return run_train(config, pairs, output, loss_log);
    if (*expand) return run_expand(config, sentence, method, candidates, seed, json);
    if (*evaluate) return run_evaluate(input, output);
    if (*cluster) return run_cluster(config, corpus, output);
    if (*serve) return run_serve(config);
  } catch (const Error& e) {
    std::cerr << "error: " << ks::to_string(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
