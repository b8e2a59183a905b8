#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xlemb/error.hpp"
#include "xlemb/rng.hpp"
#include "xlemb/similarity.hpp"

namespace xlemb {

// A T x d_in sequence of frame vectors, the input side of the head.
struct FeatureSequence {
  std::string id;
  std::size_t t = 0;
  std::size_t d_in = 0;
  std::vector<double> frames;  // t * d_in, row-major

  const double* frame(std::size_t i) const { return frames.data() + i * d_in; }
  double* frame(std::size_t i) { return frames.data() + i * d_in; }

  void validate() const {
    if (t == 0) throw ShapeError("feature sequence '" + id + "' has no frames");
    if (d_in == 0) throw ShapeError("feature sequence '" + id + "' has d_in = 0");
    if (frames.size() != t * d_in)
      throw ShapeError("feature sequence '" + id + "' has " +
                       std::to_string(frames.size()) + " values, expected " +
                       std::to_string(t * d_in));
    for (const double v : frames)
      if (!std::isfinite(v))
        throw ValidationError("feature sequence '" + id + "' has non-finite values");
  }
};

enum class Pooling { attention, mean, max };
enum class LossKind { cosine, l1, l2 };

inline std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::attention: return "attention";
    case Pooling::mean: return "mean";
    default: return "max";
  }
}

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::cosine: return "cosine";
    case LossKind::l1: return "l1";
    default: return "l2";
  }
}

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "attention") return Pooling::attention;
  if (s == "mean") return Pooling::mean;
  if (s == "max") return Pooling::max;
  throw ParameterError("unknown pooling kind '" + s + "'");
}

inline LossKind loss_from_string(const std::string& s) {
  if (s == "cosine") return LossKind::cosine;
  if (s == "l1") return LossKind::l1;
  if (s == "l2") return LossKind::l2;
  throw ParameterError("unknown loss kind '" + s + "'");
}

// Trainable head: attention weight vector w over frame features, plus the
// projection z = tanh(W e + b) into the target embedding space.
struct HeadParameters {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::vector<double> w;       // d_in
  std::vector<double> weight;  // d_out * d_in, row-major
  std::vector<double> bias;    // d_out

  void validate() const {
    if (d_in == 0 || d_out == 0) throw ShapeError("head dims must be positive");
    if (w.size() != d_in || weight.size() != d_out * d_in || bias.size() != d_out)
      throw ShapeError("head parameter shapes inconsistent with d_in/d_out");
    for (const double v : w)
      if (!std::isfinite(v)) throw ValidationError("non-finite attention weight");
    for (const double v : weight)
      if (!std::isfinite(v)) throw ValidationError("non-finite projection weight");
    for (const double v : bias)
      if (!std::isfinite(v)) throw ValidationError("non-finite projection bias");
  }

  // w = 0 starts attention as mean pooling; W is centered uniform scaled by
  // 1/sqrt(d_in); b = 0.
  static HeadParameters init(std::size_t d_in, std::size_t d_out,
                             std::uint64_t seed) {
    HeadParameters p;
    p.d_in = d_in;
    p.d_out = d_out;
    p.w.assign(d_in, 0.0);
    p.bias.assign(d_out, 0.0);
    p.weight.resize(d_out * d_in);
    Xoshiro256StarStar rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (auto& v : p.weight) v = (2.0 * rng.uniform_double() - 1.0) * scale;
    return p;
  }
};

// Attention distribution v = softmax(C w) over the time axis.
inline std::vector<double> attention_weights(const FeatureSequence& c,
                                             const std::vector<double>& w) {
  if (c.t == 0) throw ShapeError("attention over an empty sequence");
  if (w.size() != c.d_in)
    throw ShapeError("attention weight size != feature dimension");
  std::vector<double> scores(c.t);
  for (std::size_t t = 0; t < c.t; ++t) {
    const double* frame = c.frame(t);
    double s = 0.0;
    for (std::size_t j = 0; j < c.d_in; ++j) s += frame[j] * w[j];
    scores[t] = s;
  }
  const double max_score = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (auto& s : scores) {
    s = std::exp(s - max_score);
    denom += s;
  }
  for (auto& s : scores) s /= denom;
  return scores;
}

// Collapses a T x d_in sequence to one d_in vector.
//   attention: e = sum_t v_t c_t with v = softmax(C w)
//   mean:      e = (1/T) sum_t c_t
//   max:       e_j = max_t C[t][j]
inline std::vector<double> pool(const FeatureSequence& c,
                                const HeadParameters& params, Pooling kind) {
  c.validate();
  if (c.d_in != params.d_in)
    throw ShapeError("feature dimension " + std::to_string(c.d_in) +
                     " != head d_in " + std::to_string(params.d_in));
  std::vector<double> e(c.d_in, 0.0);
  switch (kind) {
    case Pooling::attention: {
      const auto v = attention_weights(c, params.w);
      for (std::size_t t = 0; t < c.t; ++t) {
        const double* frame = c.frame(t);
        for (std::size_t j = 0; j < c.d_in; ++j) e[j] += v[t] * frame[j];
      }
      break;
    }
    case Pooling::mean: {
      for (std::size_t t = 0; t < c.t; ++t) {
        const double* frame = c.frame(t);
        for (std::size_t j = 0; j < c.d_in; ++j) e[j] += frame[j];
      }
      const double inv = 1.0 / static_cast<double>(c.t);
      for (auto& x : e) x *= inv;
      break;
    }
    case Pooling::max: {
      for (std::size_t j = 0; j < c.d_in; ++j) e[j] = c.frame(0)[j];
      for (std::size_t t = 1; t < c.t; ++t) {
        const double* frame = c.frame(t);
        for (std::size_t j = 0; j < c.d_in; ++j) e[j] = std::max(e[j], frame[j]);
      }
      break;
    }
  }
  return e;
}

// z = tanh(W e + b), elementwise.
inline std::vector<double> project(const std::vector<double>& e,
                                   const HeadParameters& params) {
  if (e.size() != params.d_in)
    throw ShapeError("pooled vector size != head d_in");
  std::vector<double> z(params.d_out);
  for (std::size_t o = 0; o < params.d_out; ++o) {
    double a = params.bias[o];
    const double* row = params.weight.data() + o * params.d_in;
    for (std::size_t j = 0; j < params.d_in; ++j) a += row[j] * e[j];
    z[o] = std::tanh(a);
  }
  return z;
}

inline std::vector<double> head_forward(const FeatureSequence& c,
                                        const HeadParameters& params,
                                        Pooling kind) {
  return project(pool(c, params, kind), params);
}

//   cosine: 1 - (z_s . z_t) / (|z_s| |z_t|)
//   l1:     sum |z_s - z_t|
//   l2:     sum (z_s - z_t)^2
inline double loss(const std::vector<double>& z_s,
                   const std::vector<double>& z_t, LossKind kind) {
  if (z_s.size() != z_t.size())
    throw ShapeError("loss: embedding sizes differ");
  if (z_s.empty()) throw ShapeError("loss: empty embeddings");
  switch (kind) {
    case LossKind::cosine: {
      double dot = 0.0, ns = 0.0, nt = 0.0;
      for (std::size_t i = 0; i < z_s.size(); ++i) {
        dot += z_s[i] * z_t[i];
        ns += z_s[i] * z_s[i];
        nt += z_t[i] * z_t[i];
      }
      ns = std::sqrt(ns);
      nt = std::sqrt(nt);
      if (ns <= 1e-12 || nt <= 1e-12)
        throw DegenerateVectorError("cosine loss given a near-zero vector");
      return 1.0 - dot / (ns * nt);
    }
    case LossKind::l1: {
      double acc = 0.0;
      for (std::size_t i = 0; i < z_s.size(); ++i)
        acc += std::fabs(z_s[i] - z_t[i]);
      return acc;
    }
    default: {
      double acc = 0.0;
      for (std::size_t i = 0; i < z_s.size(); ++i) {
        const double d = z_s[i] - z_t[i];
        acc += d * d;
      }
      return acc;
    }
  }
}

struct TrainingExample {
  FeatureSequence features;
  std::vector<double> target;  // z_T, precomputed externally

  void validate() const {
    features.validate();
    if (target.empty()) throw ShapeError("training example '" + features.id +
                                         "' has empty target");
    double norm2 = 0.0;
    for (const double v : target) {
      if (!std::isfinite(v))
        throw ValidationError("training example '" + features.id +
                              "' has non-finite target");
      norm2 += v * v;
    }
    if (norm2 <= 0.0)
      throw ValidationError("training example '" + features.id +
                            "' has zero-norm target");
  }
};

struct Gradients {
  std::vector<double> w;
  std::vector<double> weight;
  std::vector<double> bias;
  double loss = 0.0;

  explicit Gradients(const HeadParameters& p)
      : w(p.d_in, 0.0), weight(p.d_out * p.d_in, 0.0), bias(p.d_out, 0.0) {}
};

namespace detail {

// Analytic backpropagation for one example; accumulates into g unscaled.
inline double example_backward(const TrainingExample& ex,
                               const HeadParameters& params, LossKind loss_kind,
                               Pooling pooling, Gradients& g) {
  const auto& c = ex.features;
  std::vector<double> v;  // attention distribution, when used
  std::vector<double> e;
  if (pooling == Pooling::attention) {
    v = attention_weights(c, params.w);
    e.assign(c.d_in, 0.0);
    for (std::size_t t = 0; t < c.t; ++t) {
      const double* frame = c.frame(t);
      for (std::size_t j = 0; j < c.d_in; ++j) e[j] += v[t] * frame[j];
    }
  } else {
    e = pool(c, params, pooling);
  }

  const std::size_t d_out = params.d_out;
  const std::size_t d_in = params.d_in;
  std::vector<double> z(d_out);
  for (std::size_t o = 0; o < d_out; ++o) {
    double a = params.bias[o];
    const double* row = params.weight.data() + o * d_in;
    for (std::size_t j = 0; j < d_in; ++j) a += row[j] * e[j];
    z[o] = std::tanh(a);
  }

  const auto& zt = ex.target;
  if (zt.size() != d_out)
    throw ShapeError("target size " + std::to_string(zt.size()) +
                     " != head d_out " + std::to_string(d_out));

  double loss_value = 0.0;
  std::vector<double> g_z(d_out, 0.0);
  switch (loss_kind) {
    case LossKind::cosine: {
      double dot = 0.0, ns2 = 0.0, nt2 = 0.0;
      for (std::size_t o = 0; o < d_out; ++o) {
        dot += z[o] * zt[o];
        ns2 += z[o] * z[o];
        nt2 += zt[o] * zt[o];
      }
      const double ns = std::sqrt(ns2);
      const double nt = std::sqrt(nt2);
      if (ns <= 1e-12 || nt <= 1e-12)
        throw DegenerateVectorError("cosine loss: near-zero vector for example '" +
                                    c.id + "'");
      const double cosv = dot / (ns * nt);
      loss_value = 1.0 - cosv;
      // Scalar cosine is locally constant (sign(z)sign(t)); its exact
      // gradient is zero, which cancellation dust would otherwise miss.
      if (d_out > 1)
        for (std::size_t o = 0; o < d_out; ++o)
          g_z[o] = -zt[o] / (ns * nt) + cosv * z[o] / ns2;
      break;
    }
    case LossKind::l1: {
      for (std::size_t o = 0; o < d_out; ++o) {
        const double d = z[o] - zt[o];
        loss_value += std::fabs(d);
        g_z[o] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      break;
    }
    default: {
      for (std::size_t o = 0; o < d_out; ++o) {
        const double d = z[o] - zt[o];
        loss_value += d * d;
        g_z[o] = 2.0 * d;
      }
      break;
    }
  }

  // Through tanh and the affine projection.
  std::vector<double> g_e(d_in, 0.0);
  for (std::size_t o = 0; o < d_out; ++o) {
    const double g_a = g_z[o] * (1.0 - z[o] * z[o]);
    g.bias[o] += g_a;
    double* g_row = g.weight.data() + o * d_in;
    const double* row = params.weight.data() + o * d_in;
    for (std::size_t j = 0; j < d_in; ++j) {
      g_row[j] += g_a * e[j];
      g_e[j] += row[j] * g_a;
    }
  }

  if (pooling == Pooling::attention) {
    // Softmax backward: g_s = v (g_v - v . g_v), then g_w = C^T g_s.
    std::vector<double> g_v(c.t, 0.0);
    for (std::size_t t = 0; t < c.t; ++t) {
      const double* frame = c.frame(t);
      double acc = 0.0;
      for (std::size_t j = 0; j < c.d_in; ++j) acc += frame[j] * g_e[j];
      g_v[t] = acc;
    }
    double dot_vg = 0.0;
    for (std::size_t t = 0; t < c.t; ++t) dot_vg += v[t] * g_v[t];
    for (std::size_t t = 0; t < c.t; ++t) {
      const double g_s = v[t] * (g_v[t] - dot_vg);
      const double* frame = c.frame(t);
      for (std::size_t j = 0; j < c.d_in; ++j) g.w[j] += g_s * frame[j];
    }
  }
  return loss_value;
}

}  // namespace detail

// Mean loss over a batch, mirroring the gradient path exactly.
inline double batch_mean_loss(const std::vector<TrainingExample>& batch,
                              const HeadParameters& params, LossKind loss_kind,
                              Pooling pooling) {
  if (batch.empty()) throw ValidationError("batch_mean_loss: empty batch");
  double acc = 0.0;
  for (const auto& ex : batch)
    acc += loss(head_forward(ex.features, params, pooling), ex.target, loss_kind);
  return acc / static_cast<double>(batch.size());
}

// Gradients of the mean batch loss w.r.t. w, W, b. Per-example passes may
// run on several threads; accumulation always walks examples in ascending
// index order, so the result is bit-identical for any worker count.
inline Gradients loss_gradients(const std::vector<TrainingExample>& batch,
                                const HeadParameters& params, LossKind loss_kind,
                                Pooling pooling, std::size_t threads = 1) {
  if (batch.empty()) throw ValidationError("loss_gradients: empty batch");
  params.validate();
  for (const auto& ex : batch) ex.features.validate();

  std::vector<Gradients> per_example(batch.size(), Gradients(params));
  std::vector<double> losses(batch.size(), 0.0);
  parallel_chunks(batch.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      losses[i] = detail::example_backward(batch[i], params, loss_kind, pooling,
                                           per_example[i]);
  });

  Gradients total(params);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < total.w.size(); ++j) total.w[j] += per_example[i].w[j];
    for (std::size_t j = 0; j < total.weight.size(); ++j)
      total.weight[j] += per_example[i].weight[j];
    for (std::size_t j = 0; j < total.bias.size(); ++j)
      total.bias[j] += per_example[i].bias[j];
    total.loss += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& x : total.w) x *= inv;
  for (auto& x : total.weight) x *= inv;
  for (auto& x : total.bias) x *= inv;
  total.loss *= inv;
  return total;
}

// Max relative disagreement between the supplied analytic gradient and
// central finite differences of the mean batch loss.
inline double fd_max_rel_error(const HeadParameters& params,
                               const std::vector<TrainingExample>& batch,
                               LossKind loss_kind, Pooling pooling, double eps,
                               const Gradients& analytic) {
  HeadParameters probe = params;
  double worst = 0.0;
  const auto probe_array = [&](std::vector<double>& values,
                               const std::vector<double>& grad) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = batch_mean_loss(batch, probe, loss_kind, pooling);
      values[i] = saved - eps;
      const double down = batch_mean_loss(batch, probe, loss_kind, pooling);
      values[i] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double rel = std::fabs(grad[i] - fd) /
                         std::max({std::fabs(grad[i]), std::fabs(fd), 1e-12});
      worst = std::max(worst, rel);
    }
  };
  probe_array(probe.w, analytic.w);
  probe_array(probe.weight, analytic.weight);
  probe_array(probe.bias, analytic.bias);
  return worst;
}

inline double finite_difference_check(const HeadParameters& params,
                                      const std::vector<TrainingExample>& batch,
                                      LossKind loss_kind, Pooling pooling,
                                      double eps) {
  if (!(eps > 1e-8) || !(eps < 1e-3))
    throw ParameterError("finite-difference step must lie in (1e-8, 1e-3)");
  const Gradients analytic = loss_gradients(batch, params, loss_kind, pooling);
  return fd_max_rel_error(params, batch, loss_kind, pooling, eps, analytic);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m_w, v_w, m_weight, v_weight, m_bias, v_bias;
  std::size_t step = 0;

  explicit AdamState(const HeadParameters& p)
      : m_w(p.d_in, 0.0),
        v_w(p.d_in, 0.0),
        m_weight(p.d_out * p.d_in, 0.0),
        v_weight(p.d_out * p.d_in, 0.0),
        m_bias(p.d_out, 0.0),
        v_bias(p.d_out, 0.0) {}
};

namespace detail {

inline void adam_update(std::vector<double>& values,
                        const std::vector<double>& grads,
                        std::vector<double>& m, std::vector<double>& v,
                        std::size_t step, double lr, const AdamConfig& cfg) {
  if (values.size() != grads.size() || m.size() != values.size() ||
      v.size() != values.size())
    throw ShapeError("adam_update: state shapes do not match parameters");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g))
      throw DivergenceError("non-finite gradient in Adam update");
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    values[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace detail

// One bias-corrected Adam step over all head parameters.
inline void adam_step(HeadParameters& params, const Gradients& grads,
                      AdamState& state, double lr, const AdamConfig& cfg = {}) {
  ++state.step;
  detail::adam_update(params.w, grads.w, state.m_w, state.v_w, state.step, lr, cfg);
  detail::adam_update(params.weight, grads.weight, state.m_weight, state.v_weight,
                      state.step, lr, cfg);
  detail::adam_update(params.bias, grads.bias, state.m_bias, state.v_bias,
                      state.step, lr, cfg);
}

struct MaskParams {
  std::size_t time_masks = 0;
  std::size_t max_time_width = 0;
  std::size_t channel_masks = 0;
  std::size_t max_channel_width = 0;

  bool active() const { return time_masks > 0 || channel_masks > 0; }
};

// Zero-fills seeded contiguous time spans and channel bands, SpecAugment
// style. Every mask draws a width uniform in [0, max_width] and then a
// start position; width 0 leaves the sequence untouched.
inline FeatureSequence feature_mask(const FeatureSequence& c,
                                    const MaskParams& mp, std::uint64_t seed) {
  c.validate();
  if (mp.time_masks > 0 && mp.max_time_width >= c.t)
    throw ParameterError("time mask width " + std::to_string(mp.max_time_width) +
                         " must be < T = " + std::to_string(c.t));
  if (mp.channel_masks > 0 && mp.max_channel_width >= c.d_in)
    throw ParameterError("channel mask width " +
                         std::to_string(mp.max_channel_width) +
                         " must be < d_in = " + std::to_string(c.d_in));
  FeatureSequence out = c;
  Xoshiro256StarStar rng(seed);
  for (std::size_t i = 0; i < mp.time_masks; ++i) {
    const std::size_t width =
        static_cast<std::size_t>(rng.uniform_in(0, mp.max_time_width));
    if (width == 0) continue;
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform_in(0, c.t - width));
    for (std::size_t t = start; t < start + width; ++t)
      std::fill_n(out.frame(t), c.d_in, 0.0);
  }
  for (std::size_t i = 0; i < mp.channel_masks; ++i) {
    const std::size_t width =
        static_cast<std::size_t>(rng.uniform_in(0, mp.max_channel_width));
    if (width == 0) continue;
    const std::size_t start =
        static_cast<std::size_t>(rng.uniform_in(0, c.d_in - width));
    for (std::size_t t = 0; t < c.t; ++t) {
      double* frame = out.frame(t);
      std::fill(frame + start, frame + start + width, 0.0);
    }
  }
  return out;
}

struct TrainConfig {
  std::size_t total_iters = 0;
  double max_lr = 1e-4;
  double warmup_frac = 0.10;
  double constant_frac = 0.40;
  double decay_frac = 0.50;
  std::size_t freeze_iters = 0;  // projection-only phase length
  std::size_t batch_size = 1;
  LossKind loss_kind = LossKind::cosine;
  Pooling pooling_kind = Pooling::attention;
  MaskParams mask;
  std::uint64_t seed = 0;
  AdamConfig adam;
  std::size_t threads = 1;

  void validate() const {
    if (total_iters == 0) throw ParameterError("total_iters must be positive");
    if (!(max_lr > 0.0)) throw ParameterError("max_lr must be positive");
    if (warmup_frac < 0.0 || constant_frac < 0.0 || decay_frac < 0.0)
      throw ParameterError("schedule fractions must be non-negative");
    if (std::fabs(warmup_frac + constant_frac + decay_frac - 1.0) > 1e-9)
      throw ParameterError("schedule fractions must sum to 1");
    if (freeze_iters > total_iters)
      throw ParameterError("freeze_iters exceeds total_iters");
    if (batch_size == 0) throw ParameterError("batch_size must be positive");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0))
      throw ParameterError("invalid Adam configuration");
    if (threads == 0) throw ParameterError("threads must be positive");
  }
};

// Three-phase schedule: linear ramp 0 -> max_lr over the warmup iterations,
// flat max_lr through the constant phase, then linear decay to 0 at
// total_iters. Phase boundaries are integer iteration counts.
inline double lr_schedule(std::size_t iter, const TrainConfig& cfg) {
  cfg.validate();
  if (iter > cfg.total_iters)
    throw ParameterError("iteration " + std::to_string(iter) +
                         " outside [0, total_iters]");
  const auto warm = static_cast<std::size_t>(
      std::llround(cfg.warmup_frac * static_cast<double>(cfg.total_iters)));
  const auto constant = static_cast<std::size_t>(
      std::llround(cfg.constant_frac * static_cast<double>(cfg.total_iters)));
  const std::size_t const_end = std::min(cfg.total_iters, warm + constant);
  if (iter <= warm)
    return warm == 0 ? cfg.max_lr
                     : cfg.max_lr * static_cast<double>(iter) /
                           static_cast<double>(warm);
  if (iter <= const_end) return cfg.max_lr;
  const std::size_t decay = cfg.total_iters - const_end;
  return cfg.max_lr * static_cast<double>(cfg.total_iters - iter) /
         static_cast<double>(decay);
}

struct TrainResult {
  HeadParameters params;
  struct CurvePoint {
    std::size_t iter;
    double lr;
    double loss;
  };
  std::vector<CurvePoint> curve;  // one entry per iteration, 1-based
};

// Seeded minibatch Adam over the head. Batches are drawn with replacement;
// for the first freeze_iters iterations the attention gradient is zeroed so
// only the projection trains. Mask widths are clamped per sequence so a
// short example cannot invalidate a config that is legal elsewhere.
inline TrainResult train(const std::vector<TrainingExample>& dataset,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  for (const auto& ex : dataset) ex.validate();
  const std::size_t d_in = dataset.front().features.d_in;
  const std::size_t d_out = dataset.front().target.size();
  for (const auto& ex : dataset) {
    if (ex.features.d_in != d_in || ex.target.size() != d_out)
      throw ShapeError("train: inconsistent feature/target dimensions");
  }

  TrainResult result;
  result.params = HeadParameters::init(d_in, d_out, derive_seed(cfg.seed, "init"));
  AdamState state(result.params);
  Xoshiro256StarStar batch_rng(derive_seed(cfg.seed, "batch"));
  result.curve.reserve(cfg.total_iters);

  std::vector<TrainingExample> batch;
  for (std::size_t iter = 1; iter <= cfg.total_iters; ++iter) {
    const double lr = lr_schedule(iter, cfg);

    batch.clear();
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t pick =
          static_cast<std::size_t>(batch_rng.uniform_below(dataset.size()));
      batch.push_back(dataset[pick]);
      if (cfg.mask.active()) {
        auto& features = batch.back().features;
        MaskParams clamped = cfg.mask;
        clamped.max_time_width = std::min(clamped.max_time_width, features.t - 1);
        clamped.max_channel_width =
            std::min(clamped.max_channel_width, features.d_in - 1);
        features = feature_mask(
            features, clamped,
            derive_seed(cfg.seed, "mask", (iter - 1) * cfg.batch_size + b));
      }
    }

    Gradients grads =
        loss_gradients(batch, result.params, cfg.loss_kind, cfg.pooling_kind,
                       cfg.threads);
    if (!std::isfinite(grads.loss))
      throw DivergenceError("training diverged at iteration " +
                            std::to_string(iter));
    if (iter <= cfg.freeze_iters) std::fill(grads.w.begin(), grads.w.end(), 0.0);
    adam_step(result.params, grads, state, lr, cfg.adam);
    result.curve.push_back({iter, lr, grads.loss});
  }
  return result;
}

}  // namespace xlemb
