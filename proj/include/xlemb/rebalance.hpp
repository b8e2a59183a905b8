#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "xlemb/error.hpp"
#include "xlemb/rng.hpp"

namespace xlemb {

struct LanguageStats {
  struct Entry {
    std::string lang;
    std::uint64_t count = 0;  // utterances (or any positive size proxy)
  };
  std::vector<Entry> entries;

  void validate() const {
    if (entries.empty()) throw ValidationError("language stats are empty");
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
      if (e.lang.empty()) throw ValidationError("empty language code");
      if (e.count == 0)
        throw ValidationError("language '" + e.lang + "' has zero count");
      if (!seen.insert(e.lang).second)
        throw ValidationError("duplicate language '" + e.lang + "'");
    }
  }

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (const auto& e : entries) t += e.count;
    return t;
  }
};

struct RebalancePlan {
  struct Item {
    std::string lang;
    std::uint64_t count = 0;  // n_l
    double share = 0.0;       // p_l = n_l / sum n
    double ratio = 0.0;       // lambda_l
    double target = 0.0;      // n_l * lambda_l
  };
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::vector<Item> items;
};

// Smoothed resampling ratios: with p_l = n_l / sum_m n_m,
//   lambda_l = (1/p_l) * p_l^alpha / sum_m p_m^alpha.
// alpha = 1 leaves every ratio at 1; shrinking alpha toward 0 moves the
// per-language target counts toward the uniform allocation. Total corpus
// size is conserved: sum_l n_l * lambda_l == sum_l n_l algebraically.
inline RebalancePlan compute_ratios(const LanguageStats& stats, double alpha,
                                    std::uint64_t seed = 0) {
  stats.validate();
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ParameterError("alpha must lie in (0, 1], got " + std::to_string(alpha));

  const double total = static_cast<double>(stats.total());
  double smoothed_sum = 0.0;
  std::vector<double> smoothed(stats.entries.size());
  for (std::size_t i = 0; i < stats.entries.size(); ++i) {
    const double p = static_cast<double>(stats.entries[i].count) / total;
    smoothed[i] = std::pow(p, alpha);
    smoothed_sum += smoothed[i];
  }

  RebalancePlan plan;
  plan.alpha = alpha;
  plan.seed = seed;
  plan.items.reserve(stats.entries.size());
  for (std::size_t i = 0; i < stats.entries.size(); ++i) {
    const auto& e = stats.entries[i];
    const double p = static_cast<double>(e.count) / total;
    RebalancePlan::Item item;
    item.lang = e.lang;
    item.count = e.count;
    item.share = p;
    item.ratio = (1.0 / p) * (smoothed[i] / smoothed_sum);
    item.target = static_cast<double>(e.count) * item.ratio;
    plan.items.push_back(std::move(item));
  }
  return plan;
}

inline std::uint64_t round_half_even(double x) {
  const double floor_x = std::floor(x);
  const double frac = x - floor_x;
  double rounded;
  if (frac > 0.5)
    rounded = floor_x + 1.0;
  else if (frac < 0.5)
    rounded = floor_x;
  else
    rounded = std::fmod(floor_x, 2.0) == 0.0 ? floor_x : floor_x + 1.0;
  return static_cast<std::uint64_t>(rounded);
}

struct CorpusLanguage {
  std::string lang;
  std::vector<std::string> ids;
};

// Materializes a plan over per-language id lists. Languages with ratio >= 1
// emit floor(ratio) full copies plus a random partial copy sized
// round_half_even(frac * n); ratio < 1 emits a random subset of size
// round_half_even(ratio * n). The concatenation is then shuffled. All draws
// come from per-language sub-streams of plan.seed, so the output is a pure
// function of (corpus, plan).
inline std::vector<std::string> apply_rebalance(
    const std::vector<CorpusLanguage>& corpus, const RebalancePlan& plan) {
  std::unordered_map<std::string, const CorpusLanguage*> by_lang;
  for (const auto& cl : corpus) {
    if (!by_lang.emplace(cl.lang, &cl).second)
      throw ValidationError("corpus lists language '" + cl.lang + "' twice");
  }
  if (corpus.size() != plan.items.size())
    throw ValidationError("corpus has " + std::to_string(corpus.size()) +
                          " languages, plan has " + std::to_string(plan.items.size()));

  std::vector<std::string> out;
  for (const auto& item : plan.items) {
    const auto it = by_lang.find(item.lang);
    if (it == by_lang.end())
      throw ValidationError("corpus is missing language '" + item.lang + "'");
    const auto& ids = it->second->ids;
    const std::size_t n = ids.size();
    if (n == 0)
      throw ValidationError("corpus language '" + item.lang + "' has no items");

    Xoshiro256StarStar rng(derive_seed(plan.seed, "rebalance:" + item.lang));
    const double ratio = item.ratio;
    const std::size_t full_copies =
        ratio >= 1.0 ? static_cast<std::size_t>(std::floor(ratio)) : 0;
    const double frac = ratio - static_cast<double>(full_copies);
    const std::size_t partial = static_cast<std::size_t>(
        round_half_even(frac * static_cast<double>(n)));

    for (std::size_t c = 0; c < full_copies; ++c)
      out.insert(out.end(), ids.begin(), ids.end());
    for (const std::size_t idx : sample_without_replacement(n, partial, rng))
      out.push_back(ids[idx]);
  }

  Xoshiro256StarStar shuffle_rng(derive_seed(plan.seed, "rebalance:shuffle"));
  shuffle(out, shuffle_rng);
  return out;
}

}  // namespace xlemb
