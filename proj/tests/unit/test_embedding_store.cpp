#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

#include "../support/test_helpers.hpp"
#include "xlemb/embedding_store.hpp"

using namespace xlemb;
using xlemb_test::TempDir;

namespace {

EmbeddingMatrix small_matrix() {
  EmbeddingMatrix m;
  m.dim = 4;
  m.rows = {1, 0, 0, 0, 0, 1, 0, 0};
  m.ids = {"a", "b"};
  m.langs = {"en", "de"};
  m.texts = {"", ""};
  return m;
}

}  // namespace

TEST_CASE("save/load round-trips a small matrix") {
  TempDir dir("emb");
  const auto path = dir / "small.xemb";
  save_embeddings(small_matrix(), path);
  const auto loaded = load_embeddings(path);
  CHECK(loaded.dim == 4);
  REQUIRE(loaded.count() == 2);
  CHECK(loaded.rows == std::vector<float>{1, 0, 0, 0, 0, 1, 0, 0});
  CHECK(loaded.ids == std::vector<std::string>{"a", "b"});
  CHECK(loaded.langs == std::vector<std::string>{"en", "de"});
  CHECK(loaded.normalized);  // basis rows are unit
}

TEST_CASE("empty matrix round-trips") {
  TempDir dir("emb");
  EmbeddingMatrix m;
  m.dim = 768;
  const auto path = dir / "empty.xemb";
  save_embeddings(m, path);
  const auto loaded = load_embeddings(path);
  CHECK(loaded.dim == 768);
  CHECK(loaded.count() == 0);
}

TEST_CASE("single row round-trips exactly") {
  TempDir dir("emb");
  EmbeddingMatrix m;
  m.dim = 4;
  m.rows = {3, 4, 0, 0};
  m.ids = {"only"};
  m.langs = {"fr"};
  m.texts = {"bonjour"};
  const auto path = dir / "one.xemb";
  save_embeddings(m, path);
  const auto loaded = load_embeddings(path);
  CHECK(loaded.rows == std::vector<float>{3, 4, 0, 0});
  CHECK(loaded.texts == std::vector<std::string>{"bonjour"});
  CHECK_FALSE(loaded.normalized);
}

TEST_CASE("random matrices round-trip bit-exactly") {
  TempDir dir("emb");
  const auto sizes = GENERATE(std::pair<std::size_t, std::uint32_t>{100, 768},
                              std::pair<std::size_t, std::uint32_t>{1000, 256});
  const auto m = xlemb_test::random_matrix(sizes.first, sizes.second, 123);
  const auto path = dir / "rand.xemb";
  save_embeddings(m, path);
  const auto loaded = load_embeddings(path);

  // Byte-compare oracle: saving the loaded matrix reproduces the file.
  const auto path2 = dir / "rand2.xemb";
  save_embeddings(loaded, path2);
  CHECK(xlemb_test::files_identical(path, path2));

  REQUIRE(loaded.rows.size() == m.rows.size());
  CHECK(std::memcmp(loaded.rows.data(), m.rows.data(),
                    m.rows.size() * sizeof(float)) == 0);
}

TEST_CASE("bad magic is a format error") {
  TempDir dir("emb");
  const auto path = dir / "bad.xemb";
  std::ofstream(path, std::ios::binary) << "NOTEMB01XXXXXXXXXXXXXXXX";
  std::ofstream(path.string() + ".meta.tsv");
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
}

TEST_CASE("short payload is a truncation error") {
  TempDir dir("emb");
  const auto path = dir / "trunc.xemb";
  save_embeddings(small_matrix(), path);
  // Patch the count field (offset 12) from 2 to 3 without adding payload.
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(12);
  const char three[8] = {3, 0, 0, 0, 0, 0, 0, 0};
  f.write(three, 8);
  f.close();
  CHECK_THROWS_AS(load_embeddings(path), TruncationError);
}

TEST_CASE("trailing bytes are a format error") {
  TempDir dir("emb");
  const auto path = dir / "long.xemb";
  save_embeddings(small_matrix(), path);
  std::ofstream(path, std::ios::binary | std::ios::app) << "junk";
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
}

TEST_CASE("duplicate ids are rejected") {
  TempDir dir("emb");
  auto m = small_matrix();
  m.ids = {"same", "same"};
  CHECK_THROWS_AS(save_embeddings(m, dir / "dup.xemb"), ValidationError);
}

TEST_CASE("sidecar row count must match the header") {
  TempDir dir("emb");
  const auto path = dir / "meta.xemb";
  save_embeddings(small_matrix(), path);
  std::ofstream(path.string() + ".meta.tsv", std::ios::trunc)
      << "a\ten\tspeech\n";
  CHECK_THROWS_AS(load_embeddings(path), FormatError);
}

TEST_CASE("missing sidecar is an I/O error") {
  TempDir dir("emb");
  const auto path = dir / "nometa.xemb";
  save_embeddings(small_matrix(), path);
  std::filesystem::remove(path.string() + ".meta.tsv");
  CHECK_THROWS_AS(load_embeddings(path), IoError);
}

TEST_CASE("mixed modalities in the sidecar are rejected") {
  TempDir dir("emb");
  const auto path = dir / "mixed.xemb";
  save_embeddings(small_matrix(), path);
  std::ofstream(path.string() + ".meta.tsv", std::ios::trunc)
      << "a\ten\tspeech\nb\tde\ttext\n";
  CHECK_THROWS_AS(load_embeddings(path), ValidationError);
}

TEST_CASE("unwritable path is an I/O error") {
  CHECK_THROWS_AS(
      save_embeddings(small_matrix(), "/nonexistent_dir_xlemb/out.xemb"),
      IoError);
}

TEST_CASE("normalize_rows scales a 3-4-5 row") {
  EmbeddingMatrix m;
  m.dim = 2;
  m.rows = {3, 4};
  m.ids = {"p"};
  m.langs = {"en"};
  m.texts = {""};
  const auto n = normalize_rows(m);
  CHECK(n.rows[0] == Catch::Approx(0.6).margin(1e-7));
  CHECK(n.rows[1] == Catch::Approx(0.8).margin(1e-7));
  CHECK(n.normalized);
}

TEST_CASE("normalize_rows leaves unit rows bit-identical") {
  EmbeddingMatrix m;
  m.dim = 2;
  m.rows = {1, 0};
  m.ids = {"e1"};
  m.langs = {"en"};
  m.texts = {""};
  const auto n = normalize_rows(m);
  CHECK(n.rows == std::vector<float>{1, 0});
}

TEST_CASE("normalize_rows rejects near-zero rows and names the id") {
  EmbeddingMatrix m;
  m.dim = 3;
  m.rows = {0, 0, 0};
  m.ids = {"offender"};
  m.langs = {"en"};
  m.texts = {""};
  try {
    normalize_rows(m);
    FAIL("expected DegenerateVectorError");
  } catch (const DegenerateVectorError& e) {
    CHECK(std::string(e.what()).find("offender") != std::string::npos);
  }
}

TEST_CASE("normalize_rows is idempotent and yields unit rows") {
  const auto m = xlemb_test::random_matrix(60, 33, 77);
  const auto once = normalize_rows(m);
  const auto twice = normalize_rows(once);
  for (std::size_t i = 0; i < once.count(); ++i) {
    CHECK(std::fabs(once.row_norm(i) - 1.0) < 1e-6);
    for (std::uint32_t d = 0; d < once.dim; ++d) {
      const auto idx = i * once.dim + d;
      CHECK(std::fabs(static_cast<double>(twice.rows[idx]) -
                      static_cast<double>(once.rows[idx])) < 1e-12);
    }
  }
}

TEST_CASE("validate rejects shape and flag inconsistencies") {
  auto m = small_matrix();
  m.rows.pop_back();
  CHECK_THROWS_AS(m.validate(), ShapeError);

  auto flagged = small_matrix();
  flagged.rows = {3, 4, 0, 0, 0, 1, 0, 0};
  flagged.normalized = true;
  CHECK_THROWS_AS(flagged.validate(), ValidationError);
}
