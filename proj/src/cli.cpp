// SPDX-License-Identifier: Apache-2.0
#include "embscope/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <unordered_map>

#include "CLI11.hpp"
#include "embscope/checkpoint.hpp"
#include "embscope/control.hpp"
#include "embscope/error.hpp"
#include "embscope/fidelity.hpp"
#include "embscope/interpret.hpp"
#include "embscope/metrics.hpp"
#include "embscope/qrels.hpp"
#include "embscope/retrieval.hpp"
#include "embscope/service.hpp"
#include "embscope/store.hpp"
#include "embscope/synthetic.hpp"
#include "embscope/tokenize.hpp"
#include "embscope/trainer.hpp"
#include "embscope/trie.hpp"
#include "httplib.h"

namespace embscope {

namespace fs = std::filesystem;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

struct DataPaths {
  std::string queries;
  std::string corpus;
  std::string qrels;
};

void add_data_options(CLI::App* cmd, DataPaths& p, bool need_qrels = true) {
  cmd->add_option("--queries", p.queries, "Query embedding store (.embs)")->required();
  cmd->add_option("--corpus", p.corpus, "Document embedding store (.embs)")->required();
  auto* q = cmd->add_option("--qrels", p.qrels, "Relevance judgments (qid 0 docid grade)");
  if (need_qrels) q->required();
}

QrelSet load_qrels(const std::string& path, std::ostream& err) {
  std::vector<std::string> warnings;
  auto qrels = read_qrels(resolve_data_path(path), &warnings);
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  return qrels;
}

void add_train_options(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--batch-size", c.batch_size, "Queries per batch")->capture_default_str();
  cmd->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--lr", c.initial_lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--min-lr", c.min_lr, "Final learning rate of the cosine schedule")
      ->capture_default_str();
  cmd->add_option("--positives", c.positives_per_query, "Positives sampled per query")
      ->capture_default_str();
  cmd->add_option("--kld-weight", c.kld_weight, "Weight of the KL term")->capture_default_str();
  cmd->add_option("-k,--k", c.k, "Active latents per embedding")->capture_default_str();
  cmd->add_option("--latent-dim", c.latent_dim, "Number of latent features")
      ->capture_default_str();
  cmd->add_option("--seed", c.seed, "Run seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads")->capture_default_str();
}

std::unordered_map<std::string, std::string> load_texts(const std::string& path) {
  std::unordered_map<std::string, std::string> texts;
  if (path.empty()) return texts;
  for (auto& [id, text] : read_texts_tsv(resolve_data_path(path))) {
    texts.emplace(std::move(id), std::move(text));
  }
  return texts;
}

TrainState load_model(const std::string& path, const EmbeddingStore& like) {
  return load_checkpoint(resolve_data_path(path), like.dim(), std::nullopt);
}

void print_fidelity_row(std::ostream& out, const std::string& label, const FidelityReport& r) {
  out << std::left << std::setw(14) << label << std::right << std::fixed << std::setprecision(4)
      << std::setw(10) << r.eval_mse << std::setw(10) << r.original.mrr << std::setw(10)
      << r.reconstructed.mrr << std::setw(10) << r.sparse.mrr << '\n';
  out.unsetf(std::ios::floatfield);
}

// ---- subcommands ----------------------------------------------------------

int run_synth(const SynthConfig& sc, const PerspectiveConfig& pc, bool perspective,
              const std::string& out_dir, std::ostream& out) {
  const auto bench =
      perspective ? generate_perspective_benchmark(pc) : generate_synthetic(sc);
  const fs::path dir = resolve_data_path(out_dir);
  fs::create_directories(dir);
  write_store(dir / "queries.embs", bench.queries);
  write_store(dir / "corpus.embs", bench.corpus);
  write_qrels(dir / "qrels.txt", bench.qrels);
  std::vector<std::pair<std::string, std::string>> texts;
  for (std::size_t i = 0; i < bench.corpus.size(); ++i) {
    texts.emplace_back(bench.corpus.id(i), bench.doc_texts[i]);
  }
  write_texts_tsv(dir / "docs.tsv", texts);
  {
    auto atoms = open_out(dir / "atoms.tsv");
    for (std::size_t i = 0; i < bench.corpus.size(); ++i) {
      atoms << bench.corpus.id(i) << '\t';
      for (std::size_t j = 0; j < bench.doc_codes[i].atoms.size(); ++j) {
        atoms << (j ? " " : "") << bench.doc_codes[i].atoms[j];
      }
      atoms << '\n';
    }
  }
  if (perspective) {
    auto p = open_out(dir / "perspectives.tsv");
    for (std::size_t q = 0; q < bench.perspectives.size(); ++q) {
      p << bench.queries.id(q) << '\t' << bench.perspectives[q].first << '\t'
        << bench.perspectives[q].second << '\n';
    }
  }
  out << "queries=" << bench.queries.size() << "\ndocuments=" << bench.corpus.size()
      << "\nverified=" << (verify_synthetic(bench) ? "true" : "false") << '\n';
  return kExitOk;
}

int run_train(const DataPaths& paths, const TrainConfig& config, const std::string& resume,
              bool epochs_given, std::uint64_t stop_after, const std::string& ckpt_out,
              const std::string& report_out, std::ostream& out, std::ostream& err) {
  const auto queries = read_store(resolve_data_path(paths.queries));
  const auto corpus = read_store(resolve_data_path(paths.corpus));
  const auto qrels = load_qrels(paths.qrels, err);
  const auto log = [&](const TrainState&, const EpochRecord& e) {
    out << "epoch=" << e.epoch << " mse=" << format_double(e.mse)
        << " kld=" << format_double(e.kld) << " total=" << format_double(e.total)
        << " dead=" << e.dead_latents << " lr=" << format_double(e.lr) << '\n';
  };
  TrainResult result;
  if (!resume.empty()) {
    auto state = load_model(resume, queries);
    if (epochs_given) state.config.epochs = config.epochs;
    state.config.threads = config.threads;
    result = resume_training(std::move(state), queries, corpus, qrels, log, stop_after);
  } else {
    result = train(queries, corpus, qrels, config, log, stop_after);
  }
  save_checkpoint(resolve_data_path(ckpt_out), result.state);
  if (!report_out.empty()) write_report_jsonl(resolve_data_path(report_out), result.report);
  return kExitOk;
}

int run_eval(const DataPaths& paths, const std::string& ckpt, std::size_t cutoff,
             std::size_t threads, const std::string& jsonl, const std::string& run_dir,
             std::ostream& out, std::ostream& err) {
  const auto queries = read_store(resolve_data_path(paths.queries));
  const auto corpus = read_store(resolve_data_path(paths.corpus));
  const auto qrels = load_qrels(paths.qrels, err);
  const auto state = load_model(ckpt, corpus);
  const auto report = evaluate_fidelity(state.params, queries, corpus, qrels, cutoff, threads);
  write_metrics_kv(out, report.original, "original");
  write_metrics_kv(out, report.reconstructed, "reconstructed");
  write_metrics_kv(out, report.sparse, "sparse");
  out << "eval_mse=" << format_double(report.eval_mse) << '\n';
  if (!jsonl.empty()) {
    auto f = open_out(resolve_data_path(jsonl));
    write_metrics_jsonl(f, report.original, "original");
    write_metrics_jsonl(f, report.reconstructed, "reconstructed");
    write_metrics_jsonl(f, report.sparse, "sparse");
  }
  if (!run_dir.empty()) {
    const fs::path dir = resolve_data_path(run_dir);
    fs::create_directories(dir);
    write_run(dir / "original.run", report.original_runs, "original");
    write_run(dir / "reconstructed.run", report.reconstructed_runs, "reconstructed");
    write_run(dir / "sparse.run", report.sparse_runs, "sparse");
  }
  if (report.original.recall_skipped > 0) {
    err << "warning: " << report.original.recall_skipped
        << " queries without relevant docs excluded from recall\n";
  }
  return kExitOk;
}

int run_ablate(const DataPaths& paths, TrainConfig config, const std::vector<double>& weights,
               const std::vector<std::uint64_t>& seeds, std::size_t cutoff,
               const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const auto queries = read_store(resolve_data_path(paths.queries));
  const auto corpus = read_store(resolve_data_path(paths.corpus));
  const auto qrels = load_qrels(paths.qrels, err);
  std::optional<std::ofstream> summary;
  fs::path dir;
  if (!out_dir.empty()) {
    dir = resolve_data_path(out_dir);
    fs::create_directories(dir);
    summary = open_out(dir / "ablation.jsonl");
  }
  out << std::left << std::setw(14) << "arm" << std::right << std::setw(10) << "mse"
      << std::setw(10) << "orig" << std::setw(10) << "recon" << std::setw(10) << "sparse" << '\n';
  for (const auto seed : seeds) {
    for (const double w : weights) {
      config.seed = seed;
      config.kld_weight = w;
      const auto result = train(queries, corpus, qrels, config);
      const auto report =
          evaluate_fidelity(result.state.params, queries, corpus, qrels, cutoff, config.threads);
      const std::string label = "s" + std::to_string(seed) + "/l" + format_double(w);
      print_fidelity_row(out, label, report);
      if (summary) {
        write_report_jsonl(dir / ("train_seed" + std::to_string(seed) + "_kld" + format_double(w) +
                                  ".jsonl"),
                           result.report);
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["kld_weight"] = w;
        j["eval_mse"] = report.eval_mse;
        j["original_mrr"] = report.original.mrr;
        j["reconstructed_mrr"] = report.reconstructed.mrr;
        j["sparse_mrr"] = report.sparse.mrr;
        *summary << j.dump() << '\n';
      }
    }
  }
  return kExitOk;
}

struct InterpretOptions {
  std::string checkpoint, corpus, texts, out = "explanations.jsonl";
  std::vector<std::uint32_t> features;
  std::size_t top_features = 16;
  InterpretJob job;
  bool first_difference = false;
  std::string embedder = "toy";
  std::uint64_t embedder_seed = 0;
  std::string llm_url, llm_model = "gpt-4o-mini", llm_log_dir, llm_replay;
  std::size_t llm_concurrency = 4;
  std::size_t threads = 1;
};

int run_interpret(InterpretOptions o, std::ostream& out, std::ostream& err) {
  const auto corpus = read_store(resolve_data_path(o.corpus));
  const auto state = load_model(o.checkpoint, corpus);
  const auto& params = state.params;
  const auto texts = load_texts(o.texts);
  std::vector<std::vector<std::string>> tokens(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (const auto it = texts.find(corpus.id(i)); it != texts.end()) tokens[i] = tokenize(it->second);
  }
  const auto latents = encode_store(params, corpus, o.threads);

  if (o.features.empty()) {
    const auto profile = frequency_profile(latents);
    std::vector<std::uint32_t> order(params.latent_dim);
    for (std::uint32_t f = 0; f < order.size(); ++f) order[f] = f;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return profile.feature_counts[a] > profile.feature_counts[b];
    });
    for (std::size_t i = 0; i < order.size() && i < o.top_features; ++i) {
      if (profile.feature_counts[order[i]] > 0) o.features.push_back(order[i]);
    }
  }

  const auto embedder = make_embedder(o.embedder, params.input_dim, o.embedder_seed);
  std::unique_ptr<LlmClient> llm;
  if (!o.llm_replay.empty()) {
    llm = std::make_unique<ReplayLlmClient>(resolve_data_path(o.llm_replay));
  } else if (!o.llm_url.empty()) {
    HttpLlmConfig cfg;
    cfg.endpoint = parse_endpoint(o.llm_url, "/v1/chat/completions");
    cfg.model = o.llm_model;
    cfg.max_concurrency = o.llm_concurrency;
    if (!o.llm_log_dir.empty()) cfg.log_dir = resolve_data_path(o.llm_log_dir);
    llm = std::make_unique<HttpLlmClient>(cfg);
  }
  o.job.mode = o.first_difference ? SeriesMode::first_difference : SeriesMode::raw;

  std::vector<std::optional<FeatureExplanation>> results(o.features.size());
  parallel_chunks(o.features.size(), o.threads, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      auto job = o.job;
      job.feature = o.features[i];
      results[i] = interpret_feature(params, *embedder, corpus.ids(), tokens, latents, job,
                                     nullptr, llm.get());
    }
  });
  std::vector<FeatureExplanation> explanations;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i]) {
      explanations.push_back(std::move(*results[i]));
    } else {
      err << "warning: feature " << o.features[i] << " has no activating text; skipped\n";
    }
  }
  auto f = open_out(resolve_data_path(o.out));
  write_explanations_jsonl(f, explanations);
  write_explanations_jsonl(out, explanations);
  return kExitOk;
}

int run_frequency(const std::string& ckpt, const std::string& corpus_path,
                  const std::string& texts_path, const std::string& prefix, std::size_t threads,
                  std::ostream& out) {
  const auto corpus = read_store(resolve_data_path(corpus_path));
  const auto state = load_model(ckpt, corpus);
  const auto latents = encode_store(state.params, corpus, threads);
  std::vector<std::string> texts;
  for (const auto& [id, text] : load_texts(texts_path)) texts.push_back(text);
  const auto profile = frequency_profile(latents, texts_path.empty() ? nullptr : &texts);
  out << "total_nnz=" << profile.total_nnz << "\nactive_features=" << profile.feature_series.size()
      << '\n';
  if (profile.feature_series.size() >= 2) {
    out << "feature_slope=" << format_double(fit_power_law(profile.feature_series).slope) << '\n';
  }
  if (profile.unigram_series.size() >= 2) {
    out << "unigram_slope=" << format_double(fit_power_law(profile.unigram_series).slope) << '\n';
  }
  if (!prefix.empty()) {
    auto f = open_out(resolve_data_path(prefix + ".features.tsv"));
    write_rank_frequency(f, profile.feature_series);
    if (!texts_path.empty()) {
      auto u = open_out(resolve_data_path(prefix + ".unigrams.tsv"));
      write_rank_frequency(u, profile.unigram_series);
    }
  }
  return kExitOk;
}

int run_control_grid(const DataPaths& paths, const std::string& ckpt, const std::string& target,
                     const std::string& aggregation, GridSearchConfig config,
                     const std::string& jsonl, const std::string& csv, std::ostream& out,
                     std::ostream& err) {
  const auto queries = read_store(resolve_data_path(paths.queries));
  const auto corpus = read_store(resolve_data_path(paths.corpus));
  const auto qrels = load_qrels(paths.qrels, err);
  const auto state = load_model(ckpt, corpus);
  config.aggregation = aggregation == "max" ? Aggregation::max : Aggregation::mean;
  const auto pipeline = target == "query" ? Pipeline::query : Pipeline::document;
  const auto result =
      amplification_grid_search(state.params, pipeline, queries, corpus, qrels, config);
  if (!jsonl.empty()) {
    auto f = open_out(resolve_data_path(jsonl));
    write_grid_jsonl(f, result);
  }
  if (!csv.empty()) {
    auto f = open_out(resolve_data_path(csv));
    write_grid_csv(f, result);
  }
  out << "baseline_mrr=" << format_double(result.baseline.mrr) << '\n';
  write_grid_csv(out, result);
  if (result.skipped_queries > 0) {
    err << "warning: " << result.skipped_queries << " queries skipped (no target feature)\n";
  }
  return kExitOk;
}

struct PerspectiveOptions {
  std::string checkpoint, queries, corpus, texts, explanations, annotations;
  std::string query_id;
  std::uint32_t feature_a = 0, feature_b = 0;
  double delta = 0.5;
  std::size_t cutoff = 5;
};

int run_perspective(const PerspectiveOptions& o, std::ostream& out) {
  const auto queries = read_store(resolve_data_path(o.queries));
  const auto corpus = read_store(resolve_data_path(o.corpus));
  const auto state = load_model(o.checkpoint, corpus);
  const auto texts = load_texts(o.texts);
  const auto row = queries.find(o.query_id);
  if (!row) throw InvalidArgument("unknown query id '" + o.query_id + "'");

  std::map<std::uint32_t, std::string> summaries;
  std::map<std::uint32_t, std::vector<std::string>> keywords;
  if (!o.explanations.empty()) {
    for (const auto& e : read_explanations_jsonl(resolve_data_path(o.explanations))) {
      summaries[e.feature] = e.summary;
      keywords[e.feature] = e.keywords;
    }
  }
  std::unique_ptr<PerspectiveLabeler> labeler;
  if (!o.annotations.empty()) {
    labeler = std::make_unique<AnnotationLabeler>(
        AnnotationLabeler::from_file(resolve_data_path(o.annotations)));
  } else {
    labeler = std::make_unique<KeywordLabeler>(keywords, texts);
  }
  const auto corpus_hat = reconstruct_store(state.params, corpus);
  PerspectiveInputs in{&state.params, &corpus_hat, labeler.get(), &texts, &summaries};
  const auto [a, b] = perspective_experiment(in, o.query_id, queries.row(*row), o.feature_a,
                                             o.feature_b, o.delta, o.cutoff);
  out << perspective_to_json(a) << '\n' << perspective_to_json(b) << '\n';
  return kExitOk;
}

struct ServeOptions {
  std::string checkpoint, corpus, queries, texts, explanations;
  std::string listen;
  std::size_t top_k = 5;
  std::string embedder;
  std::uint64_t embedder_seed = 0;
  std::size_t ttl_seconds = 3600;
  std::size_t threads = 1;
};

int run_serve(const ServeOptions& o, std::ostream& out) {
  const auto corpus = read_store(resolve_data_path(o.corpus));
  auto state = load_model(o.checkpoint, corpus);
  EmbeddingStore queries;
  if (!o.queries.empty()) queries = read_store(resolve_data_path(o.queries));
  std::vector<FeatureExplanation> explanations;
  if (!o.explanations.empty()) explanations = read_explanations_jsonl(resolve_data_path(o.explanations));
  std::shared_ptr<EmbedderClient> embedder;
  if (!o.embedder.empty()) embedder = make_embedder(o.embedder, state.params.input_dim, o.embedder_seed);
  auto model = make_service_model(std::move(state.params), o.checkpoint, std::move(queries), corpus,
                                  load_texts(o.texts), std::move(explanations), embedder, o.top_k,
                                  o.threads);
  SteeringService service(model, std::chrono::seconds(o.ttl_seconds));
  httplib::Server server;
  bind_routes(server, service);

  const auto colon = o.listen.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--listen must be host:port");
  const auto host = o.listen.substr(0, colon);
  const int port = std::stoi(o.listen.substr(colon + 1));
  out << "listening on " << host << ':' << port << std::endl;
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + o.listen);
  return kExitOk;
}

int run_convert(const std::string& from, const std::string& input, const std::string& ids,
                std::size_t dim, const std::string& kind_name, const std::string& out_path,
                std::ostream& out) {
  const auto kind = kind_name == "query" ? EmbeddingKind::query : EmbeddingKind::document;
  EmbeddingStore store;
  if (from == "jsonl") {
    store = import_jsonl(resolve_data_path(input), kind);
  } else {
    if (ids.empty() || dim == 0) throw InvalidArgument("raw input needs --ids and --dim");
    store = import_raw_f32(resolve_data_path(input), resolve_data_path(ids), dim, kind);
  }
  write_store(resolve_data_path(out_path), store);
  out << "rows=" << store.size() << "\ndim=" << store.dim() << '\n';
  return kExitOk;
}

}  // namespace

HttpEndpoint parse_endpoint(const std::string& url, const std::string& default_path) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidArgument("URL needs a scheme: '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  HttpEndpoint ep;
  ep.base_url = url.substr(0, slash);
  ep.path = slash == std::string::npos || slash + 1 == url.size() ? default_path : url.substr(slash);
  return ep;
}

std::shared_ptr<EmbedderClient> make_embedder(const std::string& spec, std::size_t dim,
                                              std::uint64_t seed) {
  if (spec == "toy") return std::make_shared<ToyHashEmbedder>(dim, seed);
  return std::make_shared<HttpEmbedderClient>(parse_endpoint(spec, "/embed"), dim);
}

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse autoencoder toolkit for dense retrieval embeddings", "embscope"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  // synth
  SynthConfig sc;
  PerspectiveConfig pc;
  bool perspective = false;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark");
  synth->add_option("--out-dir", synth_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed)->capture_default_str();
  synth->add_option("--d", sc.d, "Embedding dimension")->capture_default_str();
  synth->add_option("--n-true", sc.n_true, "Dictionary atoms")->capture_default_str();
  synth->add_option("--k-true", sc.k_true, "Atoms per embedding")->capture_default_str();
  synth->add_option("--queries", sc.n_queries)->capture_default_str();
  synth->add_option("--docs-per-query", sc.docs_per_query)->capture_default_str();
  synth->add_option("--distractors", sc.n_distractors)->capture_default_str();
  synth->add_option("--noise", sc.noise_sigma, "Noise standard deviation")->capture_default_str();
  synth->add_option("--zipf", sc.zipf_exponent, "Atom popularity exponent")->capture_default_str();
  synth->add_flag("--perspective", perspective, "Two-perspective variant");
  synth->add_option("--docs-per-side", pc.docs_per_side, "Perspective docs per side")
      ->capture_default_str();

  // train
  DataPaths train_paths;
  TrainConfig train_cfg;
  std::string train_out, train_report, train_resume;
  auto* train_cmd = app.add_subcommand("train", "Train an autoencoder");
  add_data_options(train_cmd, train_paths);
  add_train_options(train_cmd, train_cfg);
  train_cmd->add_option("--out", train_out, "Checkpoint to write")->required();
  train_cmd->add_option("--report", train_report, "TrainReport JSON-lines path");
  train_cmd->add_option("--resume", train_resume, "Continue from this checkpoint");
  std::uint64_t train_stop_after = kNoStop;
  train_cmd->add_option("--stop-after", train_stop_after,
                        "Stop once this many epochs are complete; the schedule still spans --epochs");

  // eval
  DataPaths eval_paths;
  std::string eval_ckpt, eval_jsonl, eval_runs;
  std::size_t eval_cutoff = 10, eval_threads = 1;
  auto* eval = app.add_subcommand("eval", "Three-way retrieval evaluation");
  add_data_options(eval, eval_paths);
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--cutoff", eval_cutoff, "MRR cutoff")->capture_default_str();
  eval->add_option("--threads", eval_threads)->capture_default_str();
  eval->add_option("--jsonl", eval_jsonl, "Write MetricsReports as JSON lines");
  eval->add_option("--run-dir", eval_runs, "Write TREC run files here");

  // ablate
  DataPaths ablate_paths;
  TrainConfig ablate_cfg;
  std::vector<double> ablate_weights{0.0, 1.0};
  std::vector<std::uint64_t> ablate_seeds{0};
  std::size_t ablate_cutoff = 10;
  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Train and compare KL-weight arms");
  add_data_options(ablate, ablate_paths);
  add_train_options(ablate, ablate_cfg);
  ablate->remove_option(ablate->get_option("--kld-weight"));
  ablate->remove_option(ablate->get_option("--seed"));
  ablate->add_option("--kld-weight", ablate_weights, "KL weights to compare")
      ->delimiter(',')
      ->capture_default_str();
  ablate->add_option("--seeds", ablate_seeds, "Seeds to run")->delimiter(',')->capture_default_str();
  ablate->add_option("--cutoff", ablate_cutoff)->capture_default_str();
  ablate->add_option("--out-dir", ablate_out, "Write reports here");

  // interpret
  InterpretOptions io;
  auto* interp = app.add_subcommand("interpret", "Explain latent features");
  interp->add_option("--checkpoint", io.checkpoint)->required();
  interp->add_option("--corpus", io.corpus)->required();
  interp->add_option("--texts", io.texts, "doc_id<TAB>text file")->required();
  interp->add_option("--features", io.features, "Features to explain")->delimiter(',');
  interp->add_option("--top-features", io.top_features, "Explain the N most used features")
      ->capture_default_str();
  interp->add_option("--top-docs", io.job.top_docs)->capture_default_str();
  interp->add_option("--window", io.job.trie.context_window)->capture_default_str();
  interp->add_option("--peak", io.job.trie.peak_threshold)->capture_default_str();
  interp->add_option("--keep", io.job.trie.keep_threshold)->capture_default_str();
  interp->add_flag("--first-difference", io.first_difference);
  io.embedder = env_or("EMBSCOPE_EMBEDDER_URL", "toy");
  interp->add_option("--embedder", io.embedder, "`toy` or an HTTP URL")->capture_default_str();
  interp->add_option("--embedder-seed", io.embedder_seed)->capture_default_str();
  io.llm_url = env_or("EMBSCOPE_LLM_URL", "");
  interp->add_option("--llm-url", io.llm_url, "Chat-completion endpoint");
  interp->add_option("--llm-model", io.llm_model)->capture_default_str();
  interp->add_option("--llm-concurrency", io.llm_concurrency)->capture_default_str();
  interp->add_option("--llm-log-dir", io.llm_log_dir, "Record LLM exchanges here");
  interp->add_option("--llm-replay", io.llm_replay, "Serve LLM answers from recorded exchanges");
  interp->add_option("--out", io.out)->capture_default_str();
  interp->add_option("--threads", io.threads)->capture_default_str();

  // frequency
  std::string freq_ckpt, freq_corpus, freq_texts, freq_prefix;
  std::size_t freq_threads = 1;
  auto* freq = app.add_subcommand("frequency", "Feature and unigram rank-frequency analysis");
  freq->add_option("--checkpoint", freq_ckpt)->required();
  freq->add_option("--corpus", freq_corpus)->required();
  freq->add_option("--texts", freq_texts);
  freq->add_option("--out-prefix", freq_prefix, "Write <prefix>.features.tsv etc.");
  freq->add_option("--threads", freq_threads)->capture_default_str();

  // control-grid
  DataPaths grid_paths;
  std::string grid_ckpt, grid_target = "document", grid_agg = "mean", grid_jsonl, grid_csv;
  GridSearchConfig grid_cfg;
  auto* grid = app.add_subcommand("control-grid", "Amplification grid search");
  add_data_options(grid, grid_paths);
  grid->add_option("--checkpoint", grid_ckpt)->required();
  grid->add_option("--target", grid_target)
      ->check(CLI::IsMember({"document", "query"}))
      ->capture_default_str();
  grid->add_option("--aggregation", grid_agg)
      ->check(CLI::IsMember({"mean", "max"}))
      ->capture_default_str();
  grid->add_option("--steps", grid_cfg.steps)->capture_default_str();
  grid->add_option("--start", grid_cfg.start)->capture_default_str();
  grid->add_option("--cutoff", grid_cfg.cutoff)->capture_default_str();
  grid->add_option("--threads", grid_cfg.threads)->capture_default_str();
  grid->add_option("--jsonl", grid_jsonl);
  grid->add_option("--csv", grid_csv);

  // perspective
  PerspectiveOptions po;
  auto* persp = app.add_subcommand("perspective", "Binary-perspective steering experiment");
  persp->add_option("--checkpoint", po.checkpoint)->required();
  persp->add_option("--queries", po.queries)->required();
  persp->add_option("--corpus", po.corpus)->required();
  persp->add_option("--texts", po.texts);
  persp->add_option("--query-id", po.query_id)->required();
  persp->add_option("--feature-a", po.feature_a)->required();
  persp->add_option("--feature-b", po.feature_b)->required();
  persp->add_option("--delta", po.delta)->capture_default_str();
  persp->add_option("--cutoff", po.cutoff)->capture_default_str();
  persp->add_option("--explanations", po.explanations, "Keyword labeler source");
  persp->add_option("--annotations", po.annotations, "`feature doc_id 0|1` judgments");

  // serve
  ServeOptions so;
  auto* serve = app.add_subcommand("serve", "Run the steering HTTP service");
  serve->add_option("--checkpoint", so.checkpoint)->required();
  serve->add_option("--corpus", so.corpus)->required();
  serve->add_option("--queries", so.queries);
  serve->add_option("--texts", so.texts);
  serve->add_option("--explanations", so.explanations);
  so.listen = env_or("EMBSCOPE_LISTEN", "127.0.0.1:8080");
  serve->add_option("--listen", so.listen, "host:port")->capture_default_str();
  serve->add_option("--top-k", so.top_k)->capture_default_str();
  so.embedder = env_or("EMBSCOPE_EMBEDDER_URL", "");
  serve->add_option("--embedder", so.embedder, "`toy` or an HTTP URL for query_text sessions");
  serve->add_option("--embedder-seed", so.embedder_seed);
  serve->add_option("--session-ttl", so.ttl_seconds, "Idle seconds before a session expires")
      ->capture_default_str();
  serve->add_option("--threads", so.threads)->capture_default_str();

  // convert
  std::string conv_from = "jsonl", conv_in, conv_ids, conv_kind = "document", conv_out;
  std::size_t conv_dim = 0;
  auto* convert = app.add_subcommand("convert", "Import embeddings into a store");
  convert->add_option("--from", conv_from)->check(CLI::IsMember({"jsonl", "raw"}))
      ->capture_default_str();
  convert->add_option("--input", conv_in)->required();
  convert->add_option("--ids", conv_ids, "Id file for raw input");
  convert->add_option("--dim", conv_dim, "Dimension for raw input");
  convert->add_option("--kind", conv_kind)->check(CLI::IsMember({"query", "document"}))
      ->capture_default_str();
  convert->add_option("--out", conv_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) {
      pc.seed = sc.seed;
      pc.d = sc.d;
      pc.n_true = sc.n_true;
      pc.k_true = sc.k_true;
      pc.n_distractors = sc.n_distractors;
      pc.noise_sigma = sc.noise_sigma;
      pc.zipf_exponent = sc.zipf_exponent;
      if (synth->count("--queries") > 0) pc.n_queries = sc.n_queries;
      return run_synth(sc, pc, perspective, synth_out, out);
    }
    if (*train_cmd) {
      return run_train(train_paths, train_cfg, train_resume, train_cmd->count("--epochs") > 0,
                       train_stop_after, train_out, train_report, out, err);
    }
    if (*eval) {
      return run_eval(eval_paths, eval_ckpt, eval_cutoff, eval_threads, eval_jsonl, eval_runs, out,
                      err);
    }
    if (*ablate) {
      return run_ablate(ablate_paths, ablate_cfg, ablate_weights, ablate_seeds, ablate_cutoff,
                        ablate_out, out, err);
    }
    if (*interp) return run_interpret(io, out, err);
    if (*freq) return run_frequency(freq_ckpt, freq_corpus, freq_texts, freq_prefix, freq_threads, out);
    if (*grid) {
      return run_control_grid(grid_paths, grid_ckpt, grid_target, grid_agg, grid_cfg, grid_jsonl,
                              grid_csv, out, err);
    }
    if (*persp) return run_perspective(po, out);
    if (*serve) return run_serve(so, out);
    if (*convert) {
      return run_convert(conv_from, conv_in, conv_ids, conv_dim, conv_kind, conv_out, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace embscope
