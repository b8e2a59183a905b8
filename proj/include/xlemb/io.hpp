#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xlemb/distill_head.hpp"
#include "xlemb/embedding_store.hpp"
#include "xlemb/error.hpp"
#include "xlemb/rng.hpp"

namespace xlemb {

// --- TSV ---------------------------------------------------------------

inline std::vector<std::vector<std::string>> read_tsv(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& contents) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string format_double(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string format_double_g(double v, int sig = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", sig, v);
  return buf;
}

// FNV-1a 64-bit over a file's bytes, hex-encoded; used by run manifests.
inline std::string file_hash_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

// --- Feature sequences in the embedding container ------------------------

// A feature file is an ordinary embedding container whose rows are frames.
inline void save_feature_sequence(const FeatureSequence& seq,
                                  const std::string& lang,
                                  const std::filesystem::path& path) {
  seq.validate();
  EmbeddingMatrix m;
  m.dim = static_cast<std::uint32_t>(seq.d_in);
  m.modality = Modality::speech;
  m.rows.resize(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    m.rows[i] = static_cast<float>(seq.frames[i]);
  for (std::size_t t = 0; t < seq.t; ++t) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "f%06zu", t);
    m.ids.push_back(buf);
    m.langs.push_back(lang);
    m.texts.push_back("");
  }
  save_embeddings(m, path);
}

inline FeatureSequence load_feature_sequence(const std::filesystem::path& path) {
  const EmbeddingMatrix m = load_embeddings(path);
  FeatureSequence seq;
  seq.id = path.stem().string();
  seq.t = m.count();
  seq.d_in = m.dim;
  seq.frames.resize(m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    seq.frames[i] = static_cast<double>(m.rows[i]);
  seq.validate();
  return seq;
}

// Feature files of a directory in sorted filename order.
inline std::vector<FeatureSequence> load_feature_dir(
    const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xemb")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw IoError("no .xemb feature files under '" + dir.string() + "'");
  std::vector<FeatureSequence> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_feature_sequence(f));
  return out;
}

// --- Head parameters in the embedding container ---------------------------

// Layout (dim = d_in): row "w" first, its text field recording
// "d_in=<n> d_out=<m>"; then one row per projection output ("W:<o>");
// then the bias packed into ceil(d_out/d_in) zero-padded rows ("b:<chunk>").
inline void save_head_parameters(const HeadParameters& params,
                                 const std::filesystem::path& path) {
  params.validate();
  const std::size_t d_in = params.d_in;
  const std::size_t d_out = params.d_out;
  const std::size_t bias_rows = (d_out + d_in - 1) / d_in;

  EmbeddingMatrix m;
  m.dim = static_cast<std::uint32_t>(d_in);
  m.modality = Modality::text;
  m.rows.assign((1 + d_out + bias_rows) * d_in, 0.0f);

  char buf[32];
  for (std::size_t j = 0; j < d_in; ++j)
    m.rows[j] = static_cast<float>(params.w[j]);
  m.ids.push_back("w");
  m.langs.push_back("-");
  std::snprintf(buf, sizeof(buf), "d_in=%zu d_out=%zu", d_in, d_out);
  m.texts.push_back(buf);

  for (std::size_t o = 0; o < d_out; ++o) {
    float* row = m.rows.data() + (1 + o) * d_in;
    for (std::size_t j = 0; j < d_in; ++j)
      row[j] = static_cast<float>(params.weight[o * d_in + j]);
    std::snprintf(buf, sizeof(buf), "W:%06zu", o);
    m.ids.push_back(buf);
    m.langs.push_back("-");
    m.texts.push_back("");
  }

  for (std::size_t chunk = 0; chunk < bias_rows; ++chunk) {
    float* row = m.rows.data() + (1 + d_out + chunk) * d_in;
    for (std::size_t j = 0; j < d_in && chunk * d_in + j < d_out; ++j)
      row[j] = static_cast<float>(params.bias[chunk * d_in + j]);
    std::snprintf(buf, sizeof(buf), "b:%zu", chunk);
    m.ids.push_back(buf);
    m.langs.push_back("-");
    m.texts.push_back("");
  }
  save_embeddings(m, path);
}

inline HeadParameters load_head_parameters(const std::filesystem::path& path) {
  const EmbeddingMatrix m = load_embeddings(path);
  if (m.count() < 2 || m.ids[0] != "w")
    throw FormatError("'" + path.string() + "' is not a head parameter file");
  std::size_t d_in = 0, d_out = 0;
  if (std::sscanf(m.texts[0].c_str(), "d_in=%zu d_out=%zu", &d_in, &d_out) != 2)
    throw FormatError("head parameter file lacks the d_in/d_out record");
  if (d_in != m.dim) throw FormatError("head parameter d_in does not match dim");
  const std::size_t bias_rows = (d_out + d_in - 1) / d_in;
  if (m.count() != 1 + d_out + bias_rows)
    throw FormatError("head parameter file has unexpected row count");

  HeadParameters params;
  params.d_in = d_in;
  params.d_out = d_out;
  params.w.resize(d_in);
  params.weight.resize(d_out * d_in);
  params.bias.resize(d_out);
  for (std::size_t j = 0; j < d_in; ++j) params.w[j] = m.rows[j];
  for (std::size_t o = 0; o < d_out; ++o) {
    if (m.ids[1 + o].rfind("W:", 0) != 0)
      throw FormatError("head parameter file has mislabeled projection row");
    for (std::size_t j = 0; j < d_in; ++j)
      params.weight[o * d_in + j] = m.rows[(1 + o) * d_in + j];
  }
  for (std::size_t i = 0; i < d_out; ++i)
    params.bias[i] = m.rows[(1 + d_out + i / d_in) * d_in + i % d_in];
  params.validate();
  return params;
}

}  // namespace xlemb
