#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "dsfm/schema.hpp"
#include "dsfm/tensor.hpp"

namespace dsfm {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Per-sample binary cross-entropy on a logit.
inline double bce(int label, double logit) { return label ? softplus(-logit) : softplus(logit); }

/// d bce / d logit
inline double bce_grad(int label, double logit) { return sigmoid(logit) - static_cast<double>(label); }

inline double bce_loss(std::span<const int> labels, std::span<const double> logits) {
  if (labels.size() != logits.size()) throw ShapeError("bce_loss: labels and logits differ in length");
  if (labels.empty()) throw ValueError("bce_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += bce(labels[i], logits[i]);
  return total / static_cast<double>(labels.size());
}

inline void init_uniform(Matrix& m, Rng& rng, double bound) {
  for (auto& v : m.data) v = uniform(rng, -bound, bound);
}

/// y = x W + b with W stored in×out.
struct Dense {
  Param weight;
  Param bias;

  Dense() = default;
  Dense(std::string name, std::size_t in, std::size_t out)
      : weight(name + ".W", in, out), bias(name + ".b", 1, out) {}

  std::size_t in() const { return weight.value.rows; }
  std::size_t out() const { return weight.value.cols; }

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
    init_uniform(weight.value, rng, bound);
    bias.value.fill(0.0);
  }

  Matrix forward(const Matrix& x) const {
    if (x.cols != in()) throw ShapeError("dense '" + weight.name + "': input width " + std::to_string(x.cols) +
                                         " != " + std::to_string(in()));
    Matrix y = matmul(x, weight.value);
    add_row_broadcast(y, bias.value);
    return y;
  }

  /// Accumulates parameter gradients; returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy) {
    add_matmul_tn(weight.grad, x, dy);
    add_column_sums(bias.grad, dy);
    return matmul_nt(dy, weight.value);
  }

  /// dL/dx only, leaving parameter gradients untouched.
  Matrix backward_input(const Matrix& dy) const { return matmul_nt(dy, weight.value); }

  std::vector<Param*> params() { return {&weight, &bias}; }
};

inline Matrix relu(const Matrix& x) {
  Matrix y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

/// ReLU backward with the subgradient 0 at exactly 0.
inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (!(pre.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

/// Forward intermediates of one MLP pass.
struct MlpTape {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  bool recorded = false;
};

/// ReLU hidden layers followed by a linear scalar output layer.
struct Mlp {
  std::vector<Dense> layers;

  Mlp() = default;
  Mlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& hidden) {
    std::size_t prev = in;
    for (std::size_t l = 0; l < hidden.size(); ++l) {
      layers.emplace_back(name + ".h" + std::to_string(l), prev, hidden[l]);
      prev = hidden[l];
    }
    layers.emplace_back(name + ".out", prev, 1);
  }

  std::size_t input_dim() const { return layers.front().in(); }
  std::size_t hidden_count() const { return layers.size() - 1; }
  const Dense& output_layer() const { return layers.back(); }
  Dense& output_layer() { return layers.back(); }

  void init(Rng& rng) {
    for (auto& l : layers) l.init(rng);
  }

  double forward(const Matrix& x, MlpTape* tape = nullptr) const {
    if (x.rows != 1 || x.cols != input_dim())
      throw ShapeError("mlp: input is " + std::to_string(x.rows) + "x" + std::to_string(x.cols) + ", expected 1x" +
                       std::to_string(input_dim()));
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
    }
    Matrix h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Matrix z = layers[l].forward(h);
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->pre.push_back(z);
      }
      h = l + 1 < layers.size() ? relu(z) : std::move(z);
    }
    if (tape) tape->recorded = true;
    return h.data[0];
  }

  /// Backpropagates d logit; accumulates parameter gradients and returns dL/dx.
  Matrix backward(const MlpTape& tape, double dlogit) {
    if (!tape.recorded || tape.inputs.size() != layers.size()) throw StateError("mlp: backward without a recorded forward pass");
    Matrix d(1, 1, dlogit);
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size()) d = relu_backward(tape.pre[l], d);
      d = layers[l].backward(tape.inputs[l], d);
    }
    return d;
  }

  /// Gradient of the logit w.r.t. the input; parameters are not touched, so
  /// this is safe on a shared immutable model.
  Matrix input_gradient(const MlpTape& tape) const {
    if (!tape.recorded || tape.inputs.size() != layers.size()) throw StateError("mlp: backward without a recorded forward pass");
    Matrix d(1, 1, 1.0);
    for (std::size_t l = layers.size(); l-- > 0;) {
      if (l + 1 < layers.size()) d = relu_backward(tape.pre[l], d);
      d = layers[l].backward_input(d);
    }
    return d;
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    for (auto& l : layers)
      for (auto* p : l.params()) ps.push_back(p);
    return ps;
  }
};

/// One embedding table per schema feature, all of width d.
struct EmbeddingTables {
  std::size_t dim = 0;
  std::vector<Param> tables;

  EmbeddingTables() = default;
  EmbeddingTables(const FeatureSchema& schema, std::size_t d) : dim(d) {
    for (const auto& f : schema.features) tables.emplace_back("emb." + f.name, f.value_count(), d);
  }

  void init(Rng& rng) {
    for (auto& t : tables) init_uniform(t.value, rng, 0.01);
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    for (auto& t : tables) ps.push_back(&t);
    return ps;
  }
};

/// Token matrix Z (m×d): row j is feature j's embedding, mean-pooled for
/// sequences (zero row for an empty sequence).
inline Matrix embed(const Sample& s, const FeatureSchema& schema, const EmbeddingTables& emb) {
  const std::size_t m = schema.size();
  const std::size_t d = emb.dim;
  if (emb.tables.size() != m) throw ShapeError("embed: table count does not match schema");
  Matrix z(m, d);
  for (std::size_t j = 0; j < m; ++j) {
    const Matrix& table = emb.tables[j].value;
    double* out = z.row(j);
    if (schema[j].sequential()) {
      const auto& seq = s.seqs[j];
      if (seq.empty()) continue;
      for (auto t : seq) {
        if (t >= table.rows) throw StateError("embed: token index out of range for '" + schema[j].name + "'");
        const double* r = table.row(t);
        for (std::size_t c = 0; c < d; ++c) out[c] += r[c];
      }
      const double inv = 1.0 / static_cast<double>(seq.size());
      for (std::size_t c = 0; c < d; ++c) out[c] *= inv;
    } else {
      const auto v = s.values[j];
      if (v >= table.rows) throw StateError("embed: value index out of range for '" + schema[j].name + "'");
      const double* r = table.row(v);
      for (std::size_t c = 0; c < d; ++c) out[c] = r[c];
    }
  }
  return z;
}

/// Scatters dL/dZ back into the embedding tables' gradients.
inline void embed_backward(const Sample& s, const FeatureSchema& schema, EmbeddingTables& emb, const Matrix& dz) {
  const std::size_t d = emb.dim;
  for (std::size_t j = 0; j < schema.size(); ++j) {
    Matrix& g = emb.tables[j].grad;
    const double* src = dz.row(j);
    if (schema[j].sequential()) {
      const auto& seq = s.seqs[j];
      if (seq.empty()) continue;
      const double inv = 1.0 / static_cast<double>(seq.size());
      for (auto t : seq) {
        double* r = g.row(t);
        for (std::size_t c = 0; c < d; ++c) r[c] += inv * src[c];
      }
    } else {
      double* r = g.row(s.values[j]);
      for (std::size_t c = 0; c < d; ++c) r[c] += src[c];
    }
  }
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators mirroring a parameter list.
struct AdamState {
  AdamConfig cfg;
  std::size_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  AdamState() = default;
  AdamState(const std::vector<Param*>& params, AdamConfig c) : cfg(c) {
    for (const auto* p : params) {
      m.emplace_back(p->value.rows, p->value.cols);
      v.emplace_back(p->value.rows, p->value.cols);
    }
  }
};

/// One bias-corrected Adam update. `batch_index` only labels error messages.
inline void adam_step(const std::vector<Param*>& params, AdamState& state, std::size_t batch_index = 0) {
  if (params.size() != state.m.size()) throw ShapeError("adam: parameter list does not match optimizer state");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->grad.size() != state.m[i].size()) throw ShapeError("adam: moment shape mismatch for " + params[i]->name);
    if (!all_finite(params[i]->grad))
      throw TrainingError("non-finite gradient in '" + params[i]->name + "' at batch " + std::to_string(batch_index));
  }
  ++state.step;
  const auto& c = state.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->value.data;
    const auto& g = params[i]->grad.data;
    auto& m = state.m[i].data;
    auto& v = state.v[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace dsfm
