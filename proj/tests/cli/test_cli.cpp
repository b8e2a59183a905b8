#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

#include "../support/test_helpers.hpp"
#include "xlemb/embedding_store.hpp"
#include "xlemb/io.hpp"

using json = nlohmann::json;
using xlemb_test::TempDir;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log_dir) {
  static int invocation = 0;
  const auto out = log_dir / ("cli_out_" + std::to_string(invocation) + ".log");
  const auto err = log_dir / ("cli_err_" + std::to_string(invocation) + ".log");
  ++invocation;
  const std::string cmd = std::string(XLEMB_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_synth_config(const fs::path& path, std::size_t items,
                        std::uint64_t seed) {
  json j;
  j["synthetic"] = {{"n_items", items}, {"n_langs", 2},  {"d_in", 8},
                    {"d_out", 6},       {"frames_min", 2}, {"frames_max", 4},
                    {"noise_scale", 0.05}, {"seed", seed}};
  std::ofstream(path) << j.dump(2);
}

}  // namespace

TEST_CASE("synth produces a loadable corpus and is byte-deterministic") {
  TempDir dir("cli_synth");
  write_synth_config(dir / "cfg.json", 12, 7);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + (dir / "run1").string() +
                      " --distractors 5",
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + (dir / "run2").string() +
                      " --distractors 5",
                  dir.path()) == 0);

  const auto targets = xlemb::load_embeddings(dir / "run1" / "targets.xemb");
  CHECK(targets.count() == 12);
  const auto search = xlemb::load_embeddings(dir / "run1" / "search.xemb");
  CHECK(search.count() == 17);
  CHECK(fs::exists(dir / "run1" / "features" / "item_000000.xemb"));

  for (const char* name : {"targets.xemb", "search.xemb", "truth.tsv",
                           "texts.tsv", "targets.xemb.meta.tsv"}) {
    CHECK(xlemb_test::files_identical(dir / "run1" / name, dir / "run2" / name));
  }
}

TEST_CASE("retrieve + eval over a synthetic corpus scores perfect recall") {
  TempDir dir("cli_flow");
  write_synth_config(dir / "cfg.json", 10, 21);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + dir.path().string() + " --distractors 30",
                  dir.path()) == 0);

  // Self-retrieval: query bank == target bank inside the bigger search bank.
  REQUIRE(run_cli("--quiet retrieve --query " + (dir / "targets.xemb").string() +
                      " --search " + (dir / "search.xemb").string() +
                      " -k 3 --out " + (dir / "result.tsv").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet eval --result " + (dir / "result.tsv").string() +
                      " --truth " + (dir / "truth.tsv").string() + " --refs " +
                      (dir / "texts.tsv").string() + " -k 3 --json " +
                      (dir / "report.json").string(),
                  dir.path()) == 0);

  json report = json::parse(std::ifstream(dir / "report.json"));
  CHECK(report["n_queries"] == 10);
  CHECK(report["r_at_1"] == 100.0);
  CHECK(report["r_at_k"] == 100.0);
  CHECK(report["k"] == 3);
  CHECK(report["wer"] == 0.0);
}

TEST_CASE("eval without refs omits the wer key") {
  TempDir dir("cli_norefs");
  write_synth_config(dir / "cfg.json", 6, 22);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + dir.path().string() + " --distractors 4",
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet retrieve --query " + (dir / "targets.xemb").string() +
                      " --search " + (dir / "search.xemb").string() +
                      " -k 2 --out " + (dir / "result.tsv").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet eval --result " + (dir / "result.tsv").string() +
                      " --truth " + (dir / "truth.tsv").string() +
                      " -k 2 --json " + (dir / "report.json").string(),
                  dir.path()) == 0);
  json report = json::parse(std::ifstream(dir / "report.json"));
  CHECK_FALSE(report.contains("wer"));
}

TEST_CASE("retrieve output format is rank-ordered 6-decimal TSV") {
  TempDir dir("cli_fmt");
  write_synth_config(dir / "cfg.json", 5, 23);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + dir.path().string() + " --distractors 3",
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet retrieve --query " + (dir / "targets.xemb").string() +
                      " --search " + (dir / "search.xemb").string() +
                      " -k 2 --out " + (dir / "result.tsv").string(),
                  dir.path()) == 0);
  const auto rows = xlemb::read_tsv(dir / "result.tsv");
  REQUIRE(rows.size() == 10);  // 5 queries x 2 ranks
  CHECK(rows[0][0] == "item_000000");
  CHECK(rows[0][1] == "1");
  CHECK(rows[0][2] == "item_000000");  // self-retrieval at rank 1
  CHECK(rows[0][3].find('.') != std::string::npos);
  CHECK(rows[0][3].substr(rows[0][3].find('.') + 1).size() == 6);
  CHECK(rows[1][1] == "2");
}

TEST_CASE("rebalance writes the ratio table or a resampled corpus") {
  TempDir dir("cli_rebal");
  std::ofstream(dir / "stats.tsv") << "en\t900\nlv\t100\n";
  REQUIRE(run_cli("--quiet rebalance --stats " + (dir / "stats.tsv").string() +
                      " --alpha 0.5 --seed 3 --out " + (dir / "table.tsv").string(),
                  dir.path()) == 0);
  const auto table = xlemb::read_tsv(dir / "table.tsv");
  REQUIRE(table.size() == 2);
  CHECK(table[0][0] == "en");
  CHECK(std::stod(table[0][3]) == Catch::Approx(5.0 / 6.0));
  CHECK(std::stod(table[1][3]) == Catch::Approx(2.5));
  CHECK(std::stod(table[0][4]) == Catch::Approx(750.0));

  std::ofstream corpus(dir / "corpus.tsv");
  for (int i = 0; i < 900; ++i) corpus << "en" << i << "\ten\n";
  for (int i = 0; i < 100; ++i) corpus << "lv" << i << "\tlv\n";
  corpus.close();
  REQUIRE(run_cli("--quiet rebalance --stats " + (dir / "stats.tsv").string() +
                      " --alpha 0.5 --seed 3 --corpus " +
                      (dir / "corpus.tsv").string() + " --out " +
                      (dir / "resampled1.tsv").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet rebalance --stats " + (dir / "stats.tsv").string() +
                      " --alpha 0.5 --seed 3 --corpus " +
                      (dir / "corpus.tsv").string() + " --out " +
                      (dir / "resampled2.tsv").string(),
                  dir.path()) == 0);
  CHECK(xlemb_test::files_identical(dir / "resampled1.tsv",
                                    dir / "resampled2.tsv"));
  CHECK(xlemb::read_tsv(dir / "resampled1.tsv").size() == 1000);
}

TEST_CASE("train-head fits a tiny corpus and emits params plus curve") {
  TempDir dir("cli_train");
  write_synth_config(dir / "cfg.json", 8, 31);
  json cfg = json::parse(std::ifstream(dir / "cfg.json"));
  cfg["train"] = {{"total_iters", 120},   {"max_lr", 3e-3},
                  {"freeze_iters", 10},   {"batch_size", 8},
                  {"loss", "cosine"},     {"pooling", "attention"},
                  {"seed", 5}};
  std::ofstream(dir / "full.json") << cfg.dump(2);

  REQUIRE(run_cli("--quiet synth --config " + (dir / "full.json").string() +
                      " --out-dir " + dir.path().string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet train-head --features " +
                      (dir / "features").string() + " --targets " +
                      (dir / "targets.xemb").string() + " --config " +
                      (dir / "full.json").string() + " --out " +
                      (dir / "head.xemb").string(),
                  dir.path()) == 0);
  const auto params = xlemb::load_head_parameters(dir / "head.xemb");
  CHECK(params.d_in == 8);
  CHECK(params.d_out == 6);
  const auto curve = xlemb_test::slurp(dir / "head.xemb.loss.csv");
  CHECK(curve.rfind("iter,lr,loss\n", 0) == 0);
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 121);
}

TEST_CASE("segment finds the planted boundary from the CLI") {
  TempDir dir("cli_seg");
  xlemb::FeatureSequence seq;
  seq.id = "utt";
  seq.t = 8;
  seq.d_in = 2;
  // Two constant segments: frames 0-3 point along x, 4-7 along y.
  for (int t = 0; t < 8; ++t) {
    seq.frames.push_back(t < 4 ? 1.0 : 0.0);
    seq.frames.push_back(t < 4 ? 0.0 : 1.0);
  }
  xlemb::save_feature_sequence(seq, "en", dir / "utt.xemb");
  REQUIRE(run_cli("--quiet segment --features " + (dir / "utt.xemb").string() +
                      " --threshold 0.5 --min-sep 2 --out " +
                      (dir / "peaks.tsv").string(),
                  dir.path()) == 0);
  const auto rows = xlemb::read_tsv(dir / "peaks.tsv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0][0] == "3");
  CHECK(std::stod(rows[0][1]) == Catch::Approx(1.0));
}

TEST_CASE("pipeline runs end to end and reports to stdout") {
  TempDir dir("cli_pipe");
  json cfg;
  cfg["mode"] = "synthetic";
  cfg["workdir"] = (dir / "work").string();
  cfg["k"] = 3;
  cfg["distractors"] = 20;
  cfg["synthetic"] = {{"n_items", 10},  {"n_langs", 2},    {"d_in", 8},
                      {"d_out", 6},     {"frames_min", 2}, {"frames_max", 4},
                      {"noise_scale", 0.02}, {"seed", 41}};
  cfg["train"] = {{"total_iters", 150}, {"max_lr", 5e-3}, {"freeze_iters", 10},
                  {"batch_size", 10},   {"loss", "cosine"},
                  {"pooling", "attention"}, {"seed", 42}};
  std::ofstream(dir / "pipe.json") << cfg.dump(2);

  REQUIRE(run_cli("--quiet pipeline --config " + (dir / "pipe.json").string(),
                  dir.path()) == 0);
  for (const char* name :
       {"result.tsv", "report.json", "manifest.json", "head.xemb",
        "targets.xemb", "search.xemb", "loss_curve.csv"}) {
    CHECK(fs::exists(dir / "work" / name));
  }
  json manifest = json::parse(std::ifstream(dir / "work" / "manifest.json"));
  CHECK(manifest["search_bank_strictly_contains_targets"] == true);
  CHECK(manifest["counts"]["search"] == 30);
  CHECK(manifest["artifacts"].contains("result.tsv"));
}

TEST_CASE("exit codes distinguish validation, I/O, and parse failures") {
  TempDir dir("cli_exit");
  // Missing embedding file -> 3.
  CHECK(run_cli("--quiet retrieve --query missing.xemb --search missing.xemb"
                " -k 1 --out " + (dir / "o.tsv").string(),
                dir.path()) == 3);

  // alpha outside (0,1] -> 2.
  std::ofstream(dir / "stats.tsv") << "en\t10\n";
  CHECK(run_cli("--quiet rebalance --stats " + (dir / "stats.tsv").string() +
                    " --alpha 1.5 --out " + (dir / "t.tsv").string(),
                dir.path()) == 2);

  // k larger than the bank -> 2.
  write_synth_config(dir / "cfg.json", 4, 50);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + dir.path().string(),
                  dir.path()) == 0);
  CHECK(run_cli("--quiet retrieve --query " + (dir / "targets.xemb").string() +
                    " --search " + (dir / "targets.xemb").string() +
                    " -k 9 --out " + (dir / "o.tsv").string(),
                dir.path()) == 2);

  // Unknown flags -> 2; malformed stats TSV -> 3.
  CHECK(run_cli("--quiet retrieve --nonsense", dir.path()) == 2);
  std::ofstream(dir / "bad_stats.tsv") << "en\tnot_a_number\n";
  CHECK(run_cli("--quiet rebalance --stats " + (dir / "bad_stats.tsv").string() +
                    " --alpha 0.5 --out " + (dir / "t.tsv").string(),
                dir.path()) == 3);

  // Config referencing a missing file fails fast with 3.
  json cfg;
  cfg["mode"] = "files";
  cfg["files"] = {{"features_dir", (dir / "no_such_dir").string()},
                  {"targets", (dir / "targets.xemb").string()}};
  std::ofstream(dir / "files.json") << cfg.dump(2);
  CHECK(run_cli("--quiet pipeline --config " + (dir / "files.json").string(),
                dir.path()) == 3);
}

TEST_CASE("the global --seed flag overrides the config seed") {
  TempDir dir("cli_seed");
  write_synth_config(dir / "cfg.json", 6, 7);
  const std::string base = "synth --config " + (dir / "cfg.json").string();
  REQUIRE(run_cli("--quiet --seed 99 " + base + " --out-dir " +
                      (dir / "a").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet --seed 99 " + base + " --out-dir " +
                      (dir / "b").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet " + base + " --out-dir " + (dir / "c").string(),
                  dir.path()) == 0);
  CHECK(xlemb_test::files_identical(dir / "a" / "targets.xemb",
                                    dir / "b" / "targets.xemb"));
  CHECK_FALSE(xlemb_test::files_identical(dir / "a" / "targets.xemb",
                                          dir / "c" / "targets.xemb"));
}

TEST_CASE("retrieval output is thread-count invariant through the CLI") {
  TempDir dir("cli_threads");
  write_synth_config(dir / "cfg.json", 14, 71);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + dir.path().string() + " --distractors 40",
                  dir.path()) == 0);
  const std::string base = "retrieve --query " + (dir / "targets.xemb").string() +
                           " --search " + (dir / "search.xemb").string() + " -k 4";
  REQUIRE(run_cli("--quiet --threads 1 " + base + " --out " +
                      (dir / "t1.tsv").string(),
                  dir.path()) == 0);
  REQUIRE(run_cli("--quiet --threads 4 " + base + " --out " +
                      (dir / "t4.tsv").string(),
                  dir.path()) == 0);
  CHECK(xlemb_test::files_identical(dir / "t1.tsv", dir / "t4.tsv"));
}

TEST_CASE("pipeline files mode consumes a corpus from disk") {
  TempDir dir("cli_files");
  write_synth_config(dir / "cfg.json", 8, 81);
  REQUIRE(run_cli("--quiet synth --config " + (dir / "cfg.json").string() +
                      " --out-dir " + (dir / "corpus").string() +
                      " --distractors 25",
                  dir.path()) == 0);
  // Split the distractor-augmented bank off as search_extra.
  const auto targets = xlemb::load_embeddings(dir / "corpus" / "search.xemb");
  xlemb::EmbeddingMatrix extra;
  extra.dim = targets.dim;
  extra.modality = targets.modality;
  for (std::size_t i = 8; i < targets.count(); ++i) {
    const float* row = targets.row(i);
    extra.rows.insert(extra.rows.end(), row, row + targets.dim);
    extra.ids.push_back(targets.ids[i]);
    extra.langs.push_back(targets.langs[i]);
    extra.texts.push_back(targets.texts[i]);
  }
  xlemb::save_embeddings(extra, dir / "extra.xemb");

  json cfg;
  cfg["mode"] = "files";
  cfg["workdir"] = (dir / "work").string();
  cfg["k"] = 3;
  cfg["files"] = {{"features_dir", (dir / "corpus" / "features").string()},
                  {"targets", (dir / "corpus" / "targets.xemb").string()},
                  {"search_extra", (dir / "extra.xemb").string()}};
  cfg["train"] = {{"total_iters", 150}, {"max_lr", 5e-3}, {"freeze_iters", 10},
                  {"batch_size", 8},    {"loss", "cosine"},
                  {"pooling", "attention"}, {"seed", 82}};
  std::ofstream(dir / "files.json") << cfg.dump(2);
  REQUIRE(run_cli("--quiet pipeline --config " + (dir / "files.json").string(),
                  dir.path()) == 0);
  json report = json::parse(std::ifstream(dir / "work" / "report.json"));
  CHECK(report["n_queries"] == 8);
  CHECK(report["r_at_1"].get<double>() >= 0.0);
}

TEST_CASE("normalize writes a unit-row bank") {
  TempDir dir("cli_norm");
  auto m = xlemb_test::random_matrix(6, 5, 61);
  xlemb::save_embeddings(m, dir / "raw.xemb");
  REQUIRE(run_cli("--quiet normalize --in " + (dir / "raw.xemb").string() +
                      " --out " + (dir / "unit.xemb").string(),
                  dir.path()) == 0);
  const auto unit = xlemb::load_embeddings(dir / "unit.xemb");
  CHECK(unit.normalized);
}
