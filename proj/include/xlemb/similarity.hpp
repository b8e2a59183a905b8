#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

#include "xlemb/embedding_store.hpp"
#include "xlemb/error.hpp"

namespace xlemb {

struct ScoredIndex {
  std::size_t index;
  double score;
};

// Ranking order: higher score first, ties broken by ascending search-DB
// index. The tie rule gives a total order, so results are reproducible
// regardless of blocking or thread count.
inline bool ranks_before(const ScoredIndex& a, const ScoredIndex& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

struct RetrievalResult {
  std::size_t k = 0;
  std::vector<std::size_t> r;                     // argmax per query
  std::vector<std::vector<ScoredIndex>> topk;     // N lists of k entries
};

// Static partition of [0, n) across `threads` workers.
template <typename Fn>
void parallel_chunks(std::size_t n, std::size_t threads, Fn&& body) {
  if (threads <= 1 || n <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  threads = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  for (auto& th : pool) th.join();
}

namespace detail {

// Scores accumulate in 64-bit even though storage is 32-bit, so blocked and
// naive evaluation produce bit-identical per-pair values.
inline double dot_f64(const float* a, const float* b, std::uint32_t dim) {
  double acc = 0.0;
  for (std::uint32_t d = 0; d < dim; ++d)
    acc += static_cast<double>(a[d]) * static_cast<double>(b[d]);
  return acc;
}

inline void check_retrieval_inputs(const EmbeddingMatrix& query,
                                   const EmbeddingMatrix& search) {
  if (query.dim != search.dim)
    throw ShapeError("query dim " + std::to_string(query.dim) +
                     " != search dim " + std::to_string(search.dim));
  if (!query.normalized || !search.normalized)
    throw ValidationError(
        "cosine retrieval requires unit-normalized inputs; run normalize first");
}

}  // namespace detail

// Full N x M cosine similarity matrix A with A[i][j] = q_i . s_j.
inline std::vector<double> similarity_matrix(const EmbeddingMatrix& query,
                                             const EmbeddingMatrix& search,
                                             std::size_t threads = 1) {
  detail::check_retrieval_inputs(query, search);
  const std::size_t n = query.count();
  const std::size_t m = search.count();
  std::vector<double> scores(n * m);
  parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < m; ++j)
        scores[i * m + j] = detail::dot_f64(query.row(i), search.row(j), query.dim);
  });
  return scores;
}

struct RetrieveOptions {
  std::size_t threads = 1;
  std::size_t block_size = 2048;  // search rows scored per block
};

// Exact brute-force top-k retrieval over unit banks. Queries are
// partitioned across threads; each query scans the search bank in blocks
// keeping a k-best heap under the total ranking order above.
inline RetrievalResult retrieve(const EmbeddingMatrix& query,
                                const EmbeddingMatrix& search, std::size_t k,
                                const RetrieveOptions& opts = {}) {
  detail::check_retrieval_inputs(query, search);
  const std::size_t n = query.count();
  const std::size_t m = search.count();
  if (k == 0 || k > m)
    throw ParameterError("k = " + std::to_string(k) +
                         " must be in [1, M] with M = " + std::to_string(m));
  const std::size_t block = opts.block_size == 0 ? m : opts.block_size;

  RetrievalResult result;
  result.k = k;
  result.r.resize(n);
  result.topk.assign(n, {});

  parallel_chunks(n, opts.threads, [&](std::size_t begin, std::size_t end) {
    // Min-heap on rank order: top() is the worst of the current k best.
    const auto worse = [](const ScoredIndex& a, const ScoredIndex& b) {
      return ranks_before(a, b);
    };
    std::vector<ScoredIndex> heap;
    for (std::size_t i = begin; i < end; ++i) {
      heap.clear();
      const float* q = query.row(i);
      for (std::size_t b0 = 0; b0 < m; b0 += block) {
        const std::size_t b1 = std::min(m, b0 + block);
        for (std::size_t j = b0; j < b1; ++j) {
          const ScoredIndex cand{j, detail::dot_f64(q, search.row(j), query.dim)};
          if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), worse);
          } else if (ranks_before(cand, heap.front())) {
            std::pop_heap(heap.begin(), heap.end(), worse);
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), worse);
          }
        }
      }
      std::sort(heap.begin(), heap.end(), ranks_before);
      result.topk[i] = heap;
      result.r[i] = heap.front().index;
    }
  });
  return result;
}

}  // namespace xlemb
