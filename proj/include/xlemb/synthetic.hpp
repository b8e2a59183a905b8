#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlemb/distill_head.hpp"
#include "xlemb/embedding_store.hpp"
#include "xlemb/error.hpp"
#include "xlemb/rng.hpp"

namespace xlemb {

// Recipe for a synthetic paired corpus: unit target vectors in d_out are
// lifted into d_in through a fixed seeded linear map, tiled across a random
// number of frames, and perturbed with per-frame noise. Ground truth is the
// identity mapping, so a trained head should retrieve item i at rank 1.
struct SyntheticSpec {
  std::size_t n_items = 0;
  std::size_t n_langs = 1;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t frames_min = 1;
  std::size_t frames_max = 1;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;
  std::optional<HeadParameters> planted_head;

  void validate() const {
    if (n_langs < 1 || n_items < n_langs)
      throw ParameterError("need n_items >= n_langs >= 1");
    if (d_in == 0 || d_out == 0) throw ParameterError("dims must be positive");
    if (frames_min < 1 || frames_max < frames_min)
      throw ParameterError("invalid frames_per_item range");
    if (noise_scale < 0.0) throw ParameterError("noise_scale must be >= 0");
    if (planted_head) {
      planted_head->validate();
      if (planted_head->d_in != d_in || planted_head->d_out != d_out)
        throw ShapeError("planted head dims do not match spec dims");
    }
  }
};

struct SyntheticCorpus {
  std::vector<TrainingExample> examples;  // query-side features + targets
  EmbeddingMatrix targets;                // text-side bank, ids match examples
  std::vector<std::size_t> truth;         // identity: query i -> bank row i
  std::vector<std::string> texts;         // per-item synthetic sentence
};

namespace detail {

inline std::string item_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "item_%06zu", i);
  return buf;
}

inline std::string lang_code(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "l%02zu", i);
  return buf;
}

inline std::string synthetic_sentence(Xoshiro256StarStar& rng) {
  const std::size_t words = static_cast<std::size_t>(rng.uniform_in(3, 8));
  std::string text;
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) text.push_back(' ');
    char buf[8];
    std::snprintf(buf, sizeof(buf), "w%02llu",
                  static_cast<unsigned long long>(rng.uniform_below(64)));
    text += buf;
  }
  return text;
}

}  // namespace detail

// A fully random head (attention weights included), for planting targets
// that a fresh training run can reach exactly.
inline HeadParameters random_planted_head(std::size_t d_in, std::size_t d_out,
                                          std::uint64_t seed) {
  HeadParameters head = HeadParameters::init(d_in, d_out, seed);
  Xoshiro256StarStar rng(derive_seed(seed, "planted:w"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (auto& v : head.w) v = (2.0 * rng.uniform_double() - 1.0) * scale;
  return head;
}

// Bank of random unit rows, used for distractor search databases.
inline EmbeddingMatrix random_unit_bank(std::size_t count, std::uint32_t dim,
                                        std::uint64_t seed,
                                        const std::string& id_prefix,
                                        const std::string& lang,
                                        Modality modality) {
  EmbeddingMatrix bank;
  bank.dim = dim;
  bank.modality = modality;
  bank.rows.resize(count * static_cast<std::size_t>(dim));
  Xoshiro256StarStar rng(seed);
  Xoshiro256StarStar text_rng(derive_seed(seed, "texts"));
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        norm2 += x * x;
      }
    } while (norm2 <= 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::uint32_t d = 0; d < dim; ++d)
      bank.rows[i * dim + d] = static_cast<float>(v[d] * inv);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%06zu", id_prefix.c_str(), i);
    bank.ids.push_back(buf);
    bank.langs.push_back(lang);
    bank.texts.push_back(detail::synthetic_sentence(text_rng));
  }
  bank.normalized = false;  // float rounding; run normalize_rows before use
  return bank;
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;

  Xoshiro256StarStar target_rng(derive_seed(spec.seed, "targets"));
  std::vector<std::vector<double>> targets(spec.n_items);
  for (auto& t : targets) {
    t.resize(spec.d_out);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : t) {
        x = target_rng.normal();
        norm2 += x * x;
      }
    } while (norm2 <= 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : t) x *= inv;
  }

  // Fixed lift map d_out -> d_in with unit-variance entries.
  Xoshiro256StarStar lift_rng(derive_seed(spec.seed, "lift"));
  std::vector<double> lift(spec.d_in * spec.d_out);
  for (auto& x : lift) x = lift_rng.normal();

  Xoshiro256StarStar frame_rng(derive_seed(spec.seed, "frames"));
  Xoshiro256StarStar noise_rng(derive_seed(spec.seed, "noise"));
  Xoshiro256StarStar text_rng(derive_seed(spec.seed, "texts"));

  corpus.examples.reserve(spec.n_items);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    TrainingExample ex;
    ex.features.id = detail::item_id(i);
    ex.features.d_in = spec.d_in;
    ex.features.t =
        static_cast<std::size_t>(frame_rng.uniform_in(spec.frames_min, spec.frames_max));
    ex.features.frames.resize(ex.features.t * spec.d_in);

    std::vector<double> base(spec.d_in, 0.0);
    for (std::size_t j = 0; j < spec.d_in; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < spec.d_out; ++k)
        acc += lift[j * spec.d_out + k] * targets[i][k];
      base[j] = acc;
    }
    for (std::size_t t = 0; t < ex.features.t; ++t) {
      double* frame = ex.features.frame(t);
      for (std::size_t j = 0; j < spec.d_in; ++j) {
        frame[j] = base[j];
        if (spec.noise_scale > 0.0)
          frame[j] += spec.noise_scale * noise_rng.normal();
      }
    }

    ex.target = spec.planted_head
                    ? head_forward(ex.features, *spec.planted_head, Pooling::attention)
                    : targets[i];
    corpus.examples.push_back(std::move(ex));
    corpus.texts.push_back(detail::synthetic_sentence(text_rng));
    corpus.truth.push_back(i);
  }

  corpus.targets.dim = static_cast<std::uint32_t>(spec.d_out);
  corpus.targets.modality = Modality::text;
  corpus.targets.rows.resize(spec.n_items * spec.d_out);
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    corpus.targets.ids.push_back(corpus.examples[i].features.id);
    corpus.targets.langs.push_back(detail::lang_code(i % spec.n_langs));
    corpus.targets.texts.push_back(corpus.texts[i]);
    for (std::size_t d = 0; d < spec.d_out; ++d)
      corpus.targets.rows[i * spec.d_out + d] =
          static_cast<float>(corpus.examples[i].target[d]);
  }
  return corpus;
}

}  // namespace xlemb
