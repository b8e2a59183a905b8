// xlemb: cross-lingual embedding mining toolkit.
//
// Subcommands cover the full desk-scale flow: synthesize or load paired
// feature/embedding data, train the pooling+projection head, embed, run
// exact cosine retrieval, and score R@1 / R@k / WER. `xlemb <cmd> --help`
// shows per-command flags.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xlemb/distill_head.hpp"
#include "xlemb/embedding_store.hpp"
#include "xlemb/error.hpp"
#include "xlemb/io.hpp"
#include "xlemb/metrics.hpp"
#include "xlemb/pipeline.hpp"
#include "xlemb/rebalance.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/segmenter.hpp"
#include "xlemb/similarity.hpp"
#include "xlemb/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::optional<std::uint64_t> seed;  // overrides per-command/config seeds
  std::size_t threads = 1;
  bool quiet = false;
};

void log_note(const GlobalOpts& g, const std::string& msg) {
  if (!g.quiet) std::cerr << "xlemb: " << msg << "\n";
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw xlemb::FormatError("bad " + what + " '" + text + "', expected an unsigned integer");
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw xlemb::FormatError(what + " '" + text + "' out of range");
  }
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw xlemb::IoError("cannot open config '" + path.string() + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw xlemb::FormatError("config '" + path.string() + "': " + e.what());
  }
}

// --- retrieve ---------------------------------------------------------

struct RetrieveArgs {
  std::string query, search, out;
  std::size_t k = 5;
  std::size_t block_size = 2048;
  bool no_normalize = false;
};

void run_retrieve(const GlobalOpts& g, const RetrieveArgs& args) {
  xlemb::EmbeddingMatrix q = xlemb::load_embeddings(args.query);
  xlemb::EmbeddingMatrix s = xlemb::load_embeddings(args.search);
  if (!args.no_normalize) {
    q = xlemb::normalize_rows(q);
    s = xlemb::normalize_rows(s);
  }
  xlemb::RetrieveOptions opts;
  opts.threads = g.threads;
  opts.block_size = args.block_size;
  const auto result = xlemb::retrieve(q, s, args.k, opts);
  xlemb::write_retrieval_tsv(result, q.ids, s.ids, args.out);
  log_note(g, "retrieved top-" + std::to_string(args.k) + " for " +
                  std::to_string(q.count()) + " queries over " +
                  std::to_string(s.count()) + " search rows -> " + args.out);
}

// --- eval -------------------------------------------------------------

struct EvalArgs {
  std::string result, truth, refs, json_out;
  std::size_t k = 5;
  bool no_casefold = false;
};

void run_eval(const GlobalOpts& g, const EvalArgs& args) {
  // result rows: query_id TAB rank TAB search_id TAB score
  std::vector<std::string> query_order;
  std::unordered_map<std::string, std::vector<std::string>> ranked_ids;
  for (const auto& row : xlemb::read_tsv(args.result)) {
    if (row.size() < 4)
      throw xlemb::FormatError("result row needs 4 fields, got " +
                               std::to_string(row.size()));
    auto& list = ranked_ids[row[0]];
    if (list.empty()) query_order.push_back(row[0]);
    const std::uint64_t rank = parse_u64(row[1], "rank");
    if (rank != list.size() + 1)
      throw xlemb::FormatError("result ranks for query '" + row[0] +
                               "' are not consecutive from 1");
    list.push_back(row[2]);
  }
  if (query_order.empty())
    throw xlemb::ValidationError("result file has no rows");

  std::unordered_map<std::string, std::string> truth_by_query;
  for (const auto& row : xlemb::read_tsv(args.truth)) {
    if (row.size() < 2)
      throw xlemb::FormatError("truth row needs 2 fields (query_id, search_id)");
    truth_by_query[row[0]] = row[1];
  }

  // Intern search ids so the index-based metrics apply unchanged.
  std::unordered_map<std::string, std::size_t> intern;
  const auto id_index = [&intern](const std::string& id) {
    return intern.emplace(id, intern.size()).first->second;
  };

  std::vector<std::size_t> r, u;
  std::vector<std::vector<std::size_t>> ranked;
  for (const auto& qid : query_order) {
    const auto it = truth_by_query.find(qid);
    if (it == truth_by_query.end())
      throw xlemb::ValidationError("no ground truth for query '" + qid + "'");
    const auto& list = ranked_ids[qid];
    std::vector<std::size_t> row;
    row.reserve(list.size());
    for (const auto& sid : list) row.push_back(id_index(sid));
    ranked.push_back(std::move(row));
    r.push_back(ranked.back().front());
    u.push_back(id_index(it->second));
  }

  xlemb::MetricReport report;
  report.n_queries = query_order.size();
  report.k = args.k;
  report.r_at_1 = xlemb::recall_at_1(r, u);
  report.r_at_k = xlemb::recall_at_k(ranked, u, args.k);

  if (!args.refs.empty()) {
    std::unordered_map<std::string, std::string> text_by_id;
    for (const auto& row : xlemb::read_tsv(args.refs)) {
      if (row.size() < 2)
        throw xlemb::FormatError("refs row needs 2 fields (search_id, text)");
      text_by_id[row[0]] = row[1];
    }
    std::vector<std::string> hyps, refs;
    for (std::size_t i = 0; i < query_order.size(); ++i) {
      const auto& hyp_id = ranked_ids[query_order[i]].front();
      const auto& ref_id = truth_by_query[query_order[i]];
      const auto hyp_it = text_by_id.find(hyp_id);
      const auto ref_it = text_by_id.find(ref_id);
      if (hyp_it == text_by_id.end() || ref_it == text_by_id.end())
        throw xlemb::ValidationError("refs file lacks text for query '" +
                                     query_order[i] + "'");
      hyps.push_back(hyp_it->second);
      refs.push_back(ref_it->second);
    }
    xlemb::WerOptions wopts;
    wopts.casefold = !args.no_casefold;
    report.wer = xlemb::word_error_rate(hyps, refs, wopts);
  }

  xlemb::write_text_file(args.json_out,
                         xlemb::report_to_json(report).dump(2) + "\n");
  log_note(g, "scored " + std::to_string(report.n_queries) + " queries -> " +
                  args.json_out);
}

// --- rebalance ---------------------------------------------------------

struct RebalanceArgs {
  std::string stats, corpus, out;
  double alpha = 1.0;
  std::uint64_t seed = 0;
};

void run_rebalance(const GlobalOpts& g, RebalanceArgs args) {
  if (g.seed) args.seed = *g.seed;

  xlemb::LanguageStats stats;
  for (const auto& row : xlemb::read_tsv(args.stats)) {
    if (row.size() < 2)
      throw xlemb::FormatError("stats row needs 2 fields (lang, count)");
    stats.entries.push_back(
        {row[0], parse_u64(row[1], "count for language '" + row[0] + "'")});
  }
  const auto plan = xlemb::compute_ratios(stats, args.alpha, args.seed);

  if (args.corpus.empty()) {
    std::string out;
    for (const auto& item : plan.items) {
      out += item.lang;
      out += '\t';
      out += std::to_string(item.count);
      out += '\t';
      out += xlemb::format_double_g(item.share, 12);
      out += '\t';
      out += xlemb::format_double_g(item.ratio, 12);
      out += '\t';
      out += xlemb::format_double(item.target, 6);
      out += '\n';
    }
    xlemb::write_text_file(args.out, out);
    log_note(g, "wrote ratio table for " + std::to_string(plan.items.size()) +
                    " languages -> " + args.out);
    return;
  }

  std::unordered_map<std::string, std::size_t> lang_slot;
  std::vector<xlemb::CorpusLanguage> corpus;
  for (const auto& row : xlemb::read_tsv(args.corpus)) {
    if (row.size() < 2)
      throw xlemb::FormatError("corpus row needs 2 fields (id, lang)");
    const auto [it, inserted] = lang_slot.emplace(row[1], corpus.size());
    if (inserted) corpus.push_back({row[1], {}});
    corpus[it->second].ids.push_back(row[0]);
  }
  const auto resampled = xlemb::apply_rebalance(corpus, plan);
  std::string out;
  for (const auto& id : resampled) {
    out += id;
    out += '\n';
  }
  xlemb::write_text_file(args.out, out);
  log_note(g, "resampled " + std::to_string(resampled.size()) + " items -> " +
                  args.out);
}

// --- train-head ---------------------------------------------------------

struct TrainHeadArgs {
  std::string features, targets, config, out, curve;
};

std::vector<xlemb::TrainingExample> pair_features_with_targets(
    std::vector<xlemb::FeatureSequence> features,
    const xlemb::EmbeddingMatrix& targets) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < targets.count(); ++i) row_of[targets.ids[i]] = i;
  std::vector<xlemb::TrainingExample> examples;
  examples.reserve(features.size());
  for (auto& seq : features) {
    const auto it = row_of.find(seq.id);
    if (it == row_of.end())
      throw xlemb::ValidationError("no target row for feature sequence '" +
                                   seq.id + "'");
    xlemb::TrainingExample ex;
    ex.features = std::move(seq);
    const float* row = targets.row(it->second);
    ex.target.assign(row, row + targets.dim);
    examples.push_back(std::move(ex));
  }
  return examples;
}

void run_train_head(const GlobalOpts& g, const TrainHeadArgs& args) {
  const json j = load_json_file(args.config);
  xlemb::TrainConfig cfg =
      xlemb::train_config_from_json(j.contains("train") ? j["train"] : j);
  if (g.seed) cfg.seed = *g.seed;
  cfg.threads = g.threads;

  const auto examples = pair_features_with_targets(
      xlemb::load_feature_dir(args.features), xlemb::load_embeddings(args.targets));
  const auto trained = xlemb::train(examples, cfg);
  xlemb::save_head_parameters(trained.params, args.out);
  const std::string curve_path =
      args.curve.empty() ? args.out + ".loss.csv" : args.curve;
  xlemb::write_loss_curve_csv(trained, curve_path);
  log_note(g, "trained " + std::to_string(cfg.total_iters) + " iterations (" +
                  xlemb::to_string(cfg.loss_kind) + " loss, " +
                  xlemb::to_string(cfg.pooling_kind) + " pooling), final loss " +
                  xlemb::format_double_g(trained.curve.back().loss, 6) + " -> " +
                  args.out);
}

// --- segment ---------------------------------------------------------

struct SegmentArgs {
  std::string features, out;
  double threshold = 0.5;
  std::size_t min_sep = 2;
};

void run_segment(const GlobalOpts& g, const SegmentArgs& args) {
  const auto seq = xlemb::load_feature_sequence(args.features);
  xlemb::PeakOptions opts;
  opts.threshold = args.threshold;
  opts.min_separation = args.min_sep;
  const auto proposal = xlemb::propose_boundaries(seq, opts);
  std::string out;
  for (const std::size_t peak : proposal.peaks) {
    out += std::to_string(peak);
    out += '\t';
    out += xlemb::format_double(proposal.distances[peak], 6);
    out += '\n';
  }
  xlemb::write_text_file(args.out, out);
  log_note(g, "found " + std::to_string(proposal.peaks.size()) +
                  " boundary peaks in " + std::to_string(seq.t) + " frames -> " +
                  args.out);
}

// --- synth ---------------------------------------------------------

struct SynthArgs {
  std::string config, out_dir;
  std::size_t distractors = 0;
};

void run_synth(const GlobalOpts& g, const SynthArgs& args) {
  const json j = load_json_file(args.config);
  xlemb::SyntheticSpec spec = xlemb::synthetic_spec_from_json(
      j.contains("synthetic") ? j["synthetic"] : j);
  if (g.seed) spec.seed = *g.seed;
  const auto corpus = xlemb::generate_synthetic(spec);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir / "features");
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    const auto& ex = corpus.examples[i];
    xlemb::save_feature_sequence(ex.features, corpus.targets.langs[i],
                                 dir / "features" / (ex.features.id + ".xemb"));
  }
  xlemb::save_embeddings(corpus.targets, dir / "targets.xemb");

  std::string truth_tsv, texts_tsv;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    truth_tsv += corpus.targets.ids[i];
    truth_tsv += '\t';
    truth_tsv += corpus.targets.ids[corpus.truth[i]];
    truth_tsv += '\n';
    texts_tsv += corpus.targets.ids[i];
    texts_tsv += '\t';
    texts_tsv += corpus.texts[i];
    texts_tsv += '\n';
  }
  xlemb::write_text_file(dir / "truth.tsv", truth_tsv);
  xlemb::write_text_file(dir / "texts.tsv", texts_tsv);

  if (args.distractors > 0) {
    const auto extra = xlemb::random_unit_bank(
        args.distractors, corpus.targets.dim,
        xlemb::derive_seed(spec.seed, "distractors"), "distractor_", "xx",
        xlemb::Modality::text);
    xlemb::save_embeddings(xlemb::concat_banks(corpus.targets, extra),
                           dir / "search.xemb");
  }
  log_note(g, "generated " + std::to_string(spec.n_items) + " items (d_in=" +
                  std::to_string(spec.d_in) + ", d_out=" +
                  std::to_string(spec.d_out) + ") -> " + args.out_dir);
}

// --- pipeline ---------------------------------------------------------

void run_pipeline_cmd(const GlobalOpts& g, const std::string& config_path) {
  xlemb::PipelineConfig cfg = xlemb::load_pipeline_config(config_path);
  if (g.seed) {
    cfg.synth.seed = *g.seed;
    cfg.train.seed = xlemb::derive_seed(*g.seed, "train");
  }
  if (g.threads > 1) {
    cfg.threads = g.threads;
    cfg.train.threads = g.threads;
  }
  const auto outcome = xlemb::run_pipeline(cfg);
  std::cout << xlemb::report_to_json(outcome.report).dump(2) << "\n";
  log_note(g, "artifacts under " + cfg.workdir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-lingual embedding mining toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value,
                                  "override per-command seeds (u64)");
  app.add_option("--threads", g.threads, "worker threads for retrieval/training")
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "suppress progress notes on stderr");

  RetrieveArgs retrieve_args;
  auto* retrieve_cmd =
      app.add_subcommand("retrieve", "exact cosine top-k retrieval");
  retrieve_cmd->add_option("--query", retrieve_args.query)->required();
  retrieve_cmd->add_option("--search", retrieve_args.search)->required();
  retrieve_cmd->add_option("-k", retrieve_args.k)->required();
  retrieve_cmd->add_option("--out", retrieve_args.out)->required();
  retrieve_cmd->add_option("--block-size", retrieve_args.block_size);
  retrieve_cmd->add_flag("--no-normalize", retrieve_args.no_normalize,
                         "require pre-normalized inputs instead of normalizing");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "score retrieval output");
  eval_cmd->add_option("--result", eval_args.result)->required();
  eval_cmd->add_option("--truth", eval_args.truth)->required();
  eval_cmd->add_option("--refs", eval_args.refs);
  eval_cmd->add_option("-k", eval_args.k)->required();
  eval_cmd->add_option("--json", eval_args.json_out)->required();
  eval_cmd->add_flag("--no-casefold", eval_args.no_casefold);

  RebalanceArgs rebalance_args;
  auto* rebalance_cmd =
      app.add_subcommand("rebalance", "smoothed multilingual resampling");
  rebalance_cmd->add_option("--stats", rebalance_args.stats)->required();
  rebalance_cmd->add_option("--alpha", rebalance_args.alpha)->required();
  rebalance_cmd->add_option("--seed", rebalance_args.seed);
  rebalance_cmd->add_option("--corpus", rebalance_args.corpus);
  rebalance_cmd->add_option("--out", rebalance_args.out)->required();

  TrainHeadArgs train_args;
  auto* train_cmd =
      app.add_subcommand("train-head", "train the pooling+projection head");
  train_cmd->add_option("--features", train_args.features)->required();
  train_cmd->add_option("--targets", train_args.targets)->required();
  train_cmd->add_option("--config", train_args.config)->required();
  train_cmd->add_option("--out", train_args.out)->required();
  train_cmd->add_option("--curve", train_args.curve);

  SegmentArgs segment_args;
  auto* segment_cmd =
      app.add_subcommand("segment", "propose word boundaries from features");
  segment_cmd->add_option("--features", segment_args.features)->required();
  segment_cmd->add_option("--threshold", segment_args.threshold);
  segment_cmd->add_option("--min-sep", segment_args.min_sep);
  segment_cmd->add_option("--out", segment_args.out)->required();

  SynthArgs synth_args;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic paired corpus");
  synth_cmd->add_option("--config", synth_args.config)->required();
  synth_cmd->add_option("--out-dir", synth_args.out_dir)->required();
  synth_cmd->add_option("--distractors", synth_args.distractors);

  std::string pipeline_config;
  auto* pipeline_cmd =
      app.add_subcommand("pipeline", "train, embed, retrieve, and score");
  pipeline_cmd->add_option("--config", pipeline_config)->required();

  std::string normalize_in, normalize_out;
  auto* normalize_cmd =
      app.add_subcommand("normalize", "L2-normalize an embedding file");
  normalize_cmd->add_option("--in", normalize_in)->required();
  normalize_cmd->add_option("--out", normalize_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*retrieve_cmd) run_retrieve(g, retrieve_args);
    if (*eval_cmd) run_eval(g, eval_args);
    if (*rebalance_cmd) run_rebalance(g, rebalance_args);
    if (*train_cmd) run_train_head(g, train_args);
    if (*segment_cmd) run_segment(g, segment_args);
    if (*synth_cmd) run_synth(g, synth_args);
    if (*pipeline_cmd) run_pipeline_cmd(g, pipeline_config);
    if (*normalize_cmd) {
      const auto m = xlemb::load_embeddings(normalize_in);
      xlemb::save_embeddings(xlemb::normalize_rows(m), normalize_out);
      log_note(g, "normalized " + std::to_string(m.count()) + " rows -> " +
                      normalize_out);
    }
  } catch (const xlemb::Error& e) {
    std::cerr << "xlemb: error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "xlemb: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
