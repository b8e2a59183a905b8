#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xlemb/distill_head.hpp"
#include "xlemb/error.hpp"

namespace xlemb {

// d_t = 1 - cos(c_t, c_{t+1}) for consecutive frames; values lie in [0, 2].
inline std::vector<double> adjacent_distances(const FeatureSequence& c) {
  c.validate();
  if (c.t < 2)
    throw ShapeError("adjacent_distances needs at least 2 frames, got " +
                     std::to_string(c.t));
  std::vector<double> norms(c.t);
  for (std::size_t t = 0; t < c.t; ++t) {
    double acc = 0.0;
    const double* frame = c.frame(t);
    for (std::size_t j = 0; j < c.d_in; ++j) acc += frame[j] * frame[j];
    norms[t] = std::sqrt(acc);
    if (norms[t] <= 1e-12)
      throw DegenerateVectorError("frame " + std::to_string(t) +
                                  " has near-zero norm");
  }
  std::vector<double> distances(c.t - 1);
  for (std::size_t t = 0; t + 1 < c.t; ++t) {
    const double* a = c.frame(t);
    const double* b = c.frame(t + 1);
    double dot = 0.0;
    for (std::size_t j = 0; j < c.d_in; ++j) dot += a[j] * b[j];
    const double d = 1.0 - dot / (norms[t] * norms[t + 1]);
    distances[t] = std::clamp(d, 0.0, 2.0);
  }
  return distances;
}

// Local maxima of d at or above `threshold`: strict rise on the left,
// non-strict on the right (breaks plateaus toward their first index); the
// ends of the sequence count as -inf. Peaks closer than min_separation are
// thinned greedily by height, ties favoring the lower index, so raising the
// threshold can only shrink the result.
inline std::vector<std::size_t> find_peaks(const std::vector<double>& d,
                                           double threshold,
                                           std::size_t min_separation) {
  if (min_separation < 1)
    throw ParameterError("min_separation must be >= 1");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < threshold) continue;
    const bool rises = i == 0 || d[i] > d[i - 1];
    const bool falls = i + 1 == d.size() || d[i] >= d[i + 1];
    if (rises && falls) candidates.push_back(i);
  }

  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t a, std::size_t b) {
              if (d[a] != d[b]) return d[a] > d[b];
              return a < b;
            });
  std::vector<std::size_t> accepted;
  for (const std::size_t i : candidates) {
    bool blocked = false;
    for (const std::size_t j : accepted) {
      const std::size_t gap = i > j ? i - j : j - i;
      if (gap < min_separation) {
        blocked = true;
        break;
      }
    }
    if (!blocked) accepted.push_back(i);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

struct PeakOptions {
  double threshold = 0.5;
  std::size_t min_separation = 2;
};

struct BoundaryProposal {
  std::vector<double> distances;    // length T-1
  std::vector<std::size_t> peaks;   // ascending frame indices
  double threshold = 0.5;
  std::size_t min_separation = 2;
};

// Word-boundary proposal: adjacent-frame cosine distances plus peak finding.
inline BoundaryProposal propose_boundaries(const FeatureSequence& c,
                                           const PeakOptions& opts = {}) {
  BoundaryProposal proposal;
  proposal.threshold = opts.threshold;
  proposal.min_separation = opts.min_separation;
  proposal.distances = adjacent_distances(c);
  proposal.peaks =
      find_peaks(proposal.distances, opts.threshold, opts.min_separation);
  return proposal;
}

}  // namespace xlemb
