#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "xlemb/error.hpp"

namespace xlemb {

enum class Modality { speech, text };

inline std::string to_string(Modality m) {
  return m == Modality::speech ? "speech" : "text";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "speech") return Modality::speech;
  if (s == "text") return Modality::text;
  throw FormatError("unknown modality '" + s + "'");
}

// A bank of fixed-dimension float32 vectors with per-row id/language
// metadata and an optional text payload. Immutable by convention once
// built; all operations return fresh matrices.
struct EmbeddingMatrix {
  std::uint32_t dim = 768;
  std::vector<float> rows;           // count * dim, row-major
  std::vector<std::string> ids;      // count entries, pairwise distinct
  std::vector<std::string> langs;    // count entries
  std::vector<std::string> texts;    // count entries, may be empty strings
  Modality modality = Modality::speech;
  bool normalized = false;

  std::size_t count() const { return ids.size(); }

  const float* row(std::size_t i) const {
    return rows.data() + i * static_cast<std::size_t>(dim);
  }
  float* row(std::size_t i) {
    return rows.data() + i * static_cast<std::size_t>(dim);
  }

  double row_norm(std::size_t i) const {
    const float* r = row(i);
    double acc = 0.0;
    for (std::uint32_t d = 0; d < dim; ++d)
      acc += static_cast<double>(r[d]) * static_cast<double>(r[d]);
    return std::sqrt(acc);
  }

  void validate() const {
    if (dim == 0) throw ValidationError("embedding dim must be positive");
    if (rows.size() != count() * static_cast<std::size_t>(dim))
      throw ShapeError("rows has " + std::to_string(rows.size()) +
                       " values, expected count*dim = " +
                       std::to_string(count() * dim));
    if (langs.size() != count() || texts.size() != count())
      throw ShapeError("metadata columns must have one entry per row");
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
      if (id.empty()) throw ValidationError("empty embedding id");
      if (!seen.insert(id).second)
        throw ValidationError("duplicate embedding id '" + id + "'");
    }
    for (const float v : rows)
      if (!std::isfinite(v)) throw ValidationError("non-finite embedding value");
    if (normalized) {
      for (std::size_t i = 0; i < count(); ++i)
        if (std::fabs(row_norm(i) - 1.0) > 1e-6)
          throw ValidationError("row '" + ids[i] +
                                "' marked normalized but has norm " +
                                std::to_string(row_norm(i)));
    }
  }
};

namespace detail {

constexpr char kEmbMagic[8] = {'X', 'E', 'M', 'B', '0', '0', '0', '1'};

inline void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".meta.tsv");
}

inline void check_tsv_safe(const std::string& field, const char* what) {
  if (field.find_first_of("\t\n\r") != std::string::npos)
    throw ValidationError(std::string(what) + " contains tab or newline: '" + field + "'");
}

}  // namespace detail

// Container layout: magic "XEMB0001", dim as u32 LE, count as u64 LE, then
// count*dim IEEE-754 float32 LE values row-major. Row metadata lives in a
// sidecar TSV at <path>.meta.tsv with one line per row:
// id TAB lang TAB modality [TAB text].
inline void save_embeddings(const EmbeddingMatrix& m,
                            const std::filesystem::path& path) {
  m.validate();
  std::string payload;
  payload.reserve(20 + m.rows.size() * 4);
  payload.append(detail::kEmbMagic, 8);
  detail::put_u32_le(payload, m.dim);
  detail::put_u64_le(payload, static_cast<std::uint64_t>(m.count()));
  for (const float v : m.rows) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    detail::put_u32_le(payload, bits);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
  out.close();

  std::ofstream meta(detail::sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!meta) throw IoError("cannot open sidecar for '" + path.string() + "'");
  const std::string mod = to_string(m.modality);
  for (std::size_t i = 0; i < m.count(); ++i) {
    detail::check_tsv_safe(m.ids[i], "id");
    detail::check_tsv_safe(m.langs[i], "lang");
    detail::check_tsv_safe(m.texts[i], "text");
    meta << m.ids[i] << '\t' << m.langs[i] << '\t' << mod;
    if (!m.texts[i].empty()) meta << '\t' << m.texts[i];
    meta << '\n';
  }
  if (!meta) throw IoError("sidecar write failed for '" + path.string() + "'");
}

inline EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 20) throw FormatError("'" + path.string() + "': header too short");
  if (std::memcmp(bytes.data(), detail::kEmbMagic, 8) != 0)
    throw FormatError("'" + path.string() + "': bad magic, not an embedding file");

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t dim = detail::get_u32_le(p + 8);
  const std::uint64_t count = detail::get_u64_le(p + 12);
  if (dim == 0) throw FormatError("'" + path.string() + "': zero dim");
  const std::uint64_t expect = 20 + count * dim * 4ull;
  if (bytes.size() < expect)
    throw TruncationError("'" + path.string() + "': payload holds " +
                          std::to_string((bytes.size() - 20) / 4) +
                          " values, header promises " + std::to_string(count * dim));
  if (bytes.size() > expect)
    throw FormatError("'" + path.string() + "': trailing bytes after payload");

  EmbeddingMatrix m;
  m.dim = dim;
  m.rows.resize(static_cast<std::size_t>(count) * dim);
  for (std::size_t i = 0; i < m.rows.size(); ++i)
    m.rows[i] = std::bit_cast<float>(detail::get_u32_le(p + 20 + i * 4));

  std::ifstream meta(detail::sidecar_path(path), std::ios::binary);
  if (!meta)
    throw IoError("missing sidecar '" + detail::sidecar_path(path).string() + "'");
  std::string line;
  bool modality_set = false;
  while (std::getline(meta, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && m.ids.size() == count) break;  // trailing blank line
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
    if (fields.size() < 3)
      throw FormatError("sidecar line " + std::to_string(m.ids.size() + 1) +
                        ": expected at least 3 tab-separated fields");
    const Modality mod = modality_from_string(fields[2]);
    if (!modality_set) {
      m.modality = mod;
      modality_set = true;
    } else if (mod != m.modality) {
      throw ValidationError("sidecar mixes speech and text modalities");
    }
    m.ids.push_back(fields[0]);
    m.langs.push_back(fields[1]);
    m.texts.push_back(fields.size() > 3 ? fields[3] : std::string());
  }
  if (m.ids.size() != count)
    throw FormatError("sidecar has " + std::to_string(m.ids.size()) +
                      " rows, header promises " + std::to_string(count));

  m.validate();

  // Detect unit rows so files saved after normalize_rows round-trip with
  // their flag intact (the container itself stores no flag).
  m.normalized = true;
  for (std::size_t i = 0; i < m.count(); ++i) {
    if (std::fabs(m.row_norm(i) - 1.0) > 1e-6) {
      m.normalized = false;
      break;
    }
  }
  return m;
}

// Scales every row to unit L2 norm. Rows at or below norm 1e-12 are a hard
// error: a zero embedding would poison every cosine score downstream.
// Rows already unit within 1e-7 are left bit-identical, which makes the
// operation an exact fixpoint on its own output despite float32 storage.
inline EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  m.validate();
  EmbeddingMatrix out = m;
  for (std::size_t i = 0; i < m.count(); ++i) {
    const double norm = m.row_norm(i);
    if (norm <= 1e-12)
      throw DegenerateVectorError("row '" + m.ids[i] +
                                  "' has near-zero norm, cannot normalize");
    if (std::fabs(norm - 1.0) <= 1e-7) continue;
    float* r = out.row(i);
    for (std::uint32_t d = 0; d < m.dim; ++d)
      r[d] = static_cast<float>(static_cast<double>(r[d]) / norm);
  }
  out.normalized = true;
  return out;
}

}  // namespace xlemb
