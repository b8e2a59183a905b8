#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlemb/error.hpp"
#include "xlemb/similarity.hpp"

namespace xlemb {

struct MetricReport {
  std::size_t n_queries = 0;
  double r_at_1 = 0.0;
  double r_at_k = 0.0;
  std::size_t k = 1;
  std::optional<double> wer;
};

// Ground truth for one retrieval run: the true search-DB index per query,
// optionally paired with reference and retrieved-hypothesis strings.
struct EvaluationCase {
  std::vector<std::size_t> u;
  std::vector<std::string> references;       // empty or one per query
  std::vector<std::string> retrieved_texts;  // empty or one per query

  void validate(std::size_t search_size) const {
    for (const auto idx : u)
      if (idx >= search_size)
        throw ValidationError("truth index " + std::to_string(idx) +
                              " outside the search bank of size " +
                              std::to_string(search_size));
    if (!references.empty() && references.size() != u.size())
      throw ShapeError("need one reference per query");
    if (!retrieved_texts.empty() && retrieved_texts.size() != u.size())
      throw ShapeError("need one hypothesis per query");
  }
};

namespace detail {

inline bool is_unicode_space(std::uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d:
    case 0x20: case 0x85: case 0xa0: case 0x1680:
    case 0x2028: case 0x2029: case 0x202f: case 0x205f: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200a;
  }
}

// ASCII + Latin-1 letter folding; other scripts pass through unchanged.
inline std::uint32_t casefold_cp(std::uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 0x20;
  return cp;
}

// Decodes the codepoint at `pos`, advancing it. Invalid sequences are
// consumed one byte at a time as Latin-1 rather than rejected.
inline std::uint32_t next_codepoint(std::string_view s, std::size_t& pos) {
  const auto byte = [&](std::size_t i) {
    return static_cast<unsigned char>(s[i]);
  };
  const unsigned char b0 = byte(pos);
  std::size_t len = 1;
  std::uint32_t cp = b0;
  if (b0 >= 0xf0)
    len = 4, cp = b0 & 0x07u;
  else if (b0 >= 0xe0)
    len = 3, cp = b0 & 0x0fu;
  else if (b0 >= 0xc0)
    len = 2, cp = b0 & 0x1fu;
  if (len > 1) {
    if (pos + len > s.size()) {
      ++pos;
      return b0;
    }
    for (std::size_t i = 1; i < len; ++i) {
      const unsigned char c = byte(pos + i);
      if ((c & 0xc0) != 0x80) {
        ++pos;
        return b0;
      }
      cp = (cp << 6) | (c & 0x3fu);
    }
  }
  pos += len;
  return cp;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

}  // namespace detail

// Splits on Unicode whitespace; punctuation is kept attached to its word.
inline std::vector<std::string> tokenize_words(std::string_view text,
                                               bool casefold = true) {
  std::vector<std::string> words;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::uint32_t cp = detail::next_codepoint(text, pos);
    if (detail::is_unicode_space(cp)) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      detail::append_utf8(current, casefold ? detail::casefold_cp(cp) : cp);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

// Minimum word-level edit distance (substitutions, deletions, insertions all
// cost 1), two-row dynamic program.
inline std::size_t word_edit_distance(const std::vector<std::string>& hyp,
                                      const std::vector<std::string>& ref) {
  const std::size_t h = hyp.size();
  const std::size_t r = ref.size();
  std::vector<std::size_t> prev(r + 1), cur(r + 1);
  for (std::size_t j = 0; j <= r; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= h; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= r; ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[r];
}

// 100 * matches / N, fraction of queries whose top hit is the ground truth.
inline double recall_at_1(const std::vector<std::size_t>& r,
                          const std::vector<std::size_t>& u) {
  if (r.size() != u.size())
    throw ShapeError("recall_at_1: predicted and truth vectors differ in length");
  if (r.empty()) throw ValidationError("recall_at_1: empty evaluation");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i] == u[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(r.size());
}

// 100 * fraction of queries whose ground truth appears in the first k
// ranked indices.
inline double recall_at_k(const std::vector<std::vector<std::size_t>>& ranked,
                          const std::vector<std::size_t>& u, std::size_t k) {
  if (ranked.size() != u.size())
    throw ShapeError("recall_at_k: ranked lists and truth differ in length");
  if (ranked.empty()) throw ValidationError("recall_at_k: empty evaluation");
  if (k == 0) throw ParameterError("recall_at_k: k must be positive");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (ranked[i].size() < k)
      throw ShapeError("recall_at_k: query " + std::to_string(i) + " has only " +
                       std::to_string(ranked[i].size()) + " ranked entries, need " +
                       std::to_string(k));
    for (std::size_t j = 0; j < k; ++j) {
      if (ranked[i][j] == u[i]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(ranked.size());
}

inline std::vector<std::vector<std::size_t>> ranked_indices(
    const RetrievalResult& result) {
  std::vector<std::vector<std::size_t>> out(result.topk.size());
  for (std::size_t i = 0; i < result.topk.size(); ++i) {
    out[i].reserve(result.topk[i].size());
    for (const auto& si : result.topk[i]) out[i].push_back(si.index);
  }
  return out;
}

struct WerOptions {
  bool casefold = true;
};

// Scores one retrieval run against its ground truth; WER is filled in only
// when the case carries both string columns.
inline MetricReport evaluate(const RetrievalResult& result,
                             const EvaluationCase& truth, std::size_t k,
                             const WerOptions& opts = {});

// Corpus-level WER: edits are summed over all pairs before dividing by the
// total reference word count (not the mean of per-pair rates). May exceed
// 100 when hypotheses carry more insertions than references have words.
inline double word_error_rate(const std::vector<std::string>& hypotheses,
                              const std::vector<std::string>& references,
                              const WerOptions& opts = {}) {
  if (hypotheses.size() != references.size())
    throw ShapeError("word_error_rate: hypothesis and reference counts differ");
  if (references.empty()) throw ValidationError("word_error_rate: empty evaluation");
  std::size_t edits = 0;
  std::size_t ref_words = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const auto ref = tokenize_words(references[i], opts.casefold);
    if (ref.empty())
      throw ValidationError("word_error_rate: reference " + std::to_string(i) +
                            " tokenizes to zero words");
    const auto hyp = tokenize_words(hypotheses[i], opts.casefold);
    edits += word_edit_distance(hyp, ref);
    ref_words += ref.size();
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_words);
}

inline MetricReport evaluate(const RetrievalResult& result,
                             const EvaluationCase& truth, std::size_t k,
                             const WerOptions& opts) {
  MetricReport report;
  report.n_queries = result.r.size();
  report.k = k;
  report.r_at_1 = recall_at_1(result.r, truth.u);
  report.r_at_k = recall_at_k(ranked_indices(result), truth.u, k);
  if (!truth.references.empty() && !truth.retrieved_texts.empty())
    report.wer = word_error_rate(truth.retrieved_texts, truth.references, opts);
  return report;
}

}  // namespace xlemb
