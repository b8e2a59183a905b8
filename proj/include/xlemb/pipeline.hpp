#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xlemb/distill_head.hpp"
#include "xlemb/embedding_store.hpp"
#include "xlemb/error.hpp"
#include "xlemb/io.hpp"
#include "xlemb/metrics.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/similarity.hpp"
#include "xlemb/synthetic.hpp"

namespace xlemb {

// --- JSON <-> config ------------------------------------------------------

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.total_iters = j.value("total_iters", std::size_t{1000});
  cfg.max_lr = j.value("max_lr", 1e-4);
  cfg.warmup_frac = j.value("warmup_frac", 0.10);
  cfg.constant_frac = j.value("constant_frac", 0.40);
  cfg.decay_frac = j.value("decay_frac", 0.50);
  cfg.freeze_iters = j.value("freeze_iters", std::size_t{0});
  cfg.batch_size = j.value("batch_size", std::size_t{1});
  cfg.loss_kind = loss_from_string(j.value("loss", std::string("cosine")));
  cfg.pooling_kind = pooling_from_string(j.value("pooling", std::string("attention")));
  cfg.mask.time_masks = j.value("time_masks", std::size_t{0});
  cfg.mask.max_time_width = j.value("max_time_width", std::size_t{0});
  cfg.mask.channel_masks = j.value("channel_masks", std::size_t{0});
  cfg.mask.max_channel_width = j.value("max_channel_width", std::size_t{0});
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.adam.beta1 = j.value("beta1", 0.9);
  cfg.adam.beta2 = j.value("beta2", 0.999);
  cfg.adam.eps = j.value("eps", 1e-8);
  cfg.validate();
  return cfg;
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  spec.n_items = j.value("n_items", std::size_t{0});
  spec.n_langs = j.value("n_langs", std::size_t{1});
  spec.d_in = j.value("d_in", std::size_t{0});
  spec.d_out = j.value("d_out", std::size_t{0});
  spec.frames_min = j.value("frames_min", std::size_t{1});
  spec.frames_max = j.value("frames_max", std::size_t{1});
  spec.noise_scale = j.value("noise_scale", 0.0);
  spec.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("planted_seed"))
    spec.planted_head = random_planted_head(spec.d_in, spec.d_out,
                                            j["planted_seed"].get<std::uint64_t>());
  spec.validate();
  return spec;
}

struct PipelineConfig {
  std::string mode = "synthetic";  // or "files"
  std::filesystem::path workdir = "out";
  std::size_t k = 5;
  std::size_t threads = 1;
  bool train_enabled = true;

  // synthetic mode
  SyntheticSpec synth;
  std::size_t distractors = 0;
  std::uint64_t distractor_seed = 0;

  // files mode
  std::filesystem::path features_dir;
  std::filesystem::path targets_path;
  std::filesystem::path search_extra_path;  // empty if unused
  std::filesystem::path head_path;          // empty -> train from scratch

  TrainConfig train;
  nlohmann::json raw;  // echoed into the manifest
};

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config '" + path.string() + "': " + e.what());
  }

  PipelineConfig cfg;
  cfg.raw = j;
  cfg.mode = j.value("mode", std::string("synthetic"));
  if (cfg.mode != "synthetic" && cfg.mode != "files")
    throw ParameterError("mode must be 'synthetic' or 'files'");
  cfg.workdir = j.value("workdir", std::string("out"));
  cfg.k = j.value("k", std::size_t{5});
  if (cfg.k == 0) throw ParameterError("k must be positive");
  cfg.threads = j.value("threads", std::size_t{1});

  if (j.contains("train")) {
    cfg.train = train_config_from_json(j["train"]);
    cfg.train_enabled = j["train"].value("enabled", true);
  }
  cfg.train.threads = cfg.threads;

  if (cfg.mode == "synthetic") {
    if (!j.contains("synthetic"))
      throw ParameterError("synthetic mode requires a 'synthetic' object");
    cfg.synth = synthetic_spec_from_json(j["synthetic"]);
    cfg.distractors = j.value("distractors", std::size_t{0});
    cfg.distractor_seed =
        j.value("distractor_seed", derive_seed(cfg.synth.seed, "distractors"));
  } else {
    if (!j.contains("files"))
      throw ParameterError("files mode requires a 'files' object");
    const auto& f = j["files"];
    cfg.features_dir = f.value("features_dir", std::string());
    cfg.targets_path = f.value("targets", std::string());
    cfg.search_extra_path = f.value("search_extra", std::string());
    cfg.head_path = f.value("head", std::string());
    if (cfg.features_dir.empty() || cfg.targets_path.empty())
      throw ParameterError("files mode requires features_dir and targets");
    // Fail fast on missing inputs, before any compute.
    if (!std::filesystem::exists(cfg.features_dir))
      throw IoError("features_dir '" + cfg.features_dir.string() + "' does not exist");
    if (!std::filesystem::exists(cfg.targets_path))
      throw IoError("targets '" + cfg.targets_path.string() + "' does not exist");
    if (!cfg.search_extra_path.empty() &&
        !std::filesystem::exists(cfg.search_extra_path))
      throw IoError("search_extra '" + cfg.search_extra_path.string() +
                    "' does not exist");
    if (!cfg.head_path.empty() && !std::filesystem::exists(cfg.head_path))
      throw IoError("head '" + cfg.head_path.string() + "' does not exist");
  }
  return cfg;
}

// --- Shared writers --------------------------------------------------------

inline void write_retrieval_tsv(const RetrievalResult& result,
                                const std::vector<std::string>& query_ids,
                                const std::vector<std::string>& search_ids,
                                const std::filesystem::path& path) {
  std::string out;
  for (std::size_t i = 0; i < result.topk.size(); ++i) {
    for (std::size_t rank = 0; rank < result.topk[i].size(); ++rank) {
      const auto& hit = result.topk[i][rank];
      out += query_ids[i];
      out += '\t';
      out += std::to_string(rank + 1);
      out += '\t';
      out += search_ids[hit.index];
      out += '\t';
      out += format_double(hit.score, 6);
      out += '\n';
    }
  }
  write_text_file(path, out);
}

inline nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["n_queries"] = report.n_queries;
  j["r_at_1"] = report.r_at_1;
  j["r_at_k"] = report.r_at_k;
  j["k"] = report.k;
  if (report.wer) j["wer"] = *report.wer;
  return j;
}

inline void write_loss_curve_csv(const TrainResult& trained,
                                 const std::filesystem::path& path) {
  std::string out = "iter,lr,loss\n";
  for (const auto& pt : trained.curve) {
    out += std::to_string(pt.iter);
    out += ',';
    out += format_double_g(pt.lr, 17);
    out += ',';
    out += format_double_g(pt.loss, 17);
    out += '\n';
  }
  write_text_file(path, out);
}

// Concatenates two banks (search = targets then extras), checking dims and
// id uniqueness.
inline EmbeddingMatrix concat_banks(const EmbeddingMatrix& a,
                                    const EmbeddingMatrix& b) {
  if (a.dim != b.dim)
    throw ShapeError("cannot concatenate banks with dims " +
                     std::to_string(a.dim) + " and " + std::to_string(b.dim));
  EmbeddingMatrix out = a;
  out.normalized = false;
  out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  out.langs.insert(out.langs.end(), b.langs.begin(), b.langs.end());
  out.texts.insert(out.texts.end(), b.texts.begin(), b.texts.end());
  out.validate();
  return out;
}

struct PipelineOutcome {
  MetricReport report;
  std::filesystem::path result_tsv;
  std::filesystem::path report_json;
  std::filesystem::path manifest_json;
};

// End-to-end evaluation flow: build (or load) the paired corpus, train or
// load the head, embed every query feature sequence, retrieve against the
// distractor-augmented search bank, and score R@1 / R@k / WER.
inline PipelineOutcome run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.workdir);

  std::vector<TrainingExample> examples;
  EmbeddingMatrix targets;
  std::vector<std::size_t> truth;

  if (cfg.mode == "synthetic") {
    SyntheticCorpus corpus = generate_synthetic(cfg.synth);
    examples = std::move(corpus.examples);
    targets = std::move(corpus.targets);
    truth = std::move(corpus.truth);
  } else {
    auto features = load_feature_dir(cfg.features_dir);
    targets = load_embeddings(cfg.targets_path);
    std::unordered_map<std::string, std::size_t> target_row;
    for (std::size_t i = 0; i < targets.count(); ++i)
      target_row[targets.ids[i]] = i;
    for (auto& seq : features) {
      const auto it = target_row.find(seq.id);
      if (it == target_row.end())
        throw ValidationError("no target row for feature sequence '" + seq.id + "'");
      TrainingExample ex;
      ex.features = std::move(seq);
      const float* row = targets.row(it->second);
      ex.target.assign(row, row + targets.dim);
      examples.push_back(std::move(ex));
      truth.push_back(it->second);
    }
  }
  if (examples.empty()) throw ValidationError("pipeline has no query examples");

  // Search bank: true targets first, then distractors.
  EmbeddingMatrix search = targets;
  if (cfg.mode == "synthetic") {
    if (cfg.distractors > 0) {
      const EmbeddingMatrix extra =
          random_unit_bank(cfg.distractors, targets.dim, cfg.distractor_seed,
                           "distractor_", "xx", Modality::text);
      search = concat_banks(targets, extra);
    }
  } else if (!cfg.search_extra_path.empty()) {
    search = concat_banks(targets, load_embeddings(cfg.search_extra_path));
  }
  if (search.count() <= targets.count())
    throw ValidationError(
        "search bank must strictly contain the target bank; configure "
        "distractors or search_extra");

  // Head: train on the paired examples or load a saved one.
  HeadParameters head;
  std::optional<TrainResult> trained;
  if (!cfg.head_path.empty()) {
    head = load_head_parameters(cfg.head_path);
  } else if (cfg.train_enabled) {
    trained = train(examples, cfg.train);
    head = trained->params;
  } else {
    head = HeadParameters::init(examples.front().features.d_in, targets.dim,
                                derive_seed(cfg.train.seed, "init"));
  }

  // Embed queries with the head, then cosine retrieval over unit banks.
  EmbeddingMatrix query;
  query.dim = targets.dim;
  query.modality = Modality::speech;
  query.rows.resize(examples.size() * static_cast<std::size_t>(targets.dim));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto z = head_forward(examples[i].features, head, cfg.train.pooling_kind);
    for (std::size_t d = 0; d < z.size(); ++d)
      query.rows[i * targets.dim + d] = static_cast<float>(z[d]);
    query.ids.push_back(examples[i].features.id);
    query.langs.push_back(targets.langs[truth[i]]);
    query.texts.push_back("");
  }
  const EmbeddingMatrix q_unit = normalize_rows(query);
  const EmbeddingMatrix s_unit = normalize_rows(search);

  RetrieveOptions ropts;
  ropts.threads = cfg.threads;
  const std::size_t k = std::min(cfg.k, s_unit.count());
  const RetrievalResult result = retrieve(q_unit, s_unit, k, ropts);

  EvaluationCase eval_case;
  eval_case.u = truth;
  bool have_texts = true;
  for (std::size_t i = 0; i < truth.size() && have_texts; ++i) {
    if (s_unit.texts[truth[i]].empty() || s_unit.texts[result.r[i]].empty())
      have_texts = false;
  }
  if (have_texts) {
    for (std::size_t i = 0; i < truth.size(); ++i) {
      eval_case.retrieved_texts.push_back(s_unit.texts[result.r[i]]);
      eval_case.references.push_back(s_unit.texts[truth[i]]);
    }
  }
  eval_case.validate(s_unit.count());
  const MetricReport report = evaluate(result, eval_case, k);

  // Artifacts.
  PipelineOutcome outcome;
  outcome.report = report;
  const fs::path targets_path = cfg.workdir / "targets.xemb";
  const fs::path search_path = cfg.workdir / "search.xemb";
  const fs::path head_path = cfg.workdir / "head.xemb";
  const fs::path curve_path = cfg.workdir / "loss_curve.csv";
  outcome.result_tsv = cfg.workdir / "result.tsv";
  outcome.report_json = cfg.workdir / "report.json";
  outcome.manifest_json = cfg.workdir / "manifest.json";

  save_embeddings(targets, targets_path);
  save_embeddings(s_unit, search_path);
  save_head_parameters(head, head_path);
  if (trained) write_loss_curve_csv(*trained, curve_path);
  write_retrieval_tsv(result, q_unit.ids, s_unit.ids, outcome.result_tsv);
  write_text_file(outcome.report_json, report_to_json(report).dump(2) + "\n");

  nlohmann::json manifest;
  manifest["config"] = cfg.raw;
  manifest["seeds"]["train"] = cfg.train.seed;
  if (cfg.mode == "synthetic") {
    manifest["seeds"]["synthetic"] = cfg.synth.seed;
    manifest["seeds"]["distractors"] = cfg.distractor_seed;
  }
  manifest["counts"]["queries"] = examples.size();
  manifest["counts"]["targets"] = targets.count();
  manifest["counts"]["search"] = search.count();
  manifest["search_bank_strictly_contains_targets"] = true;
  nlohmann::json hashes;
  hashes["targets.xemb"] = file_hash_hex(targets_path);
  hashes["search.xemb"] = file_hash_hex(search_path);
  hashes["head.xemb"] = file_hash_hex(head_path);
  if (trained) hashes["loss_curve.csv"] = file_hash_hex(curve_path);
  hashes["result.tsv"] = file_hash_hex(outcome.result_tsv);
  hashes["report.json"] = file_hash_hex(outcome.report_json);
  manifest["artifacts"] = hashes;
  write_text_file(outcome.manifest_json, manifest.dump(2) + "\n");
  return outcome;
}

}  // namespace xlemb
