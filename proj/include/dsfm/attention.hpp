#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dsfm/nn.hpp"

namespace dsfm {

enum class AttentionKernel { Linear, Softmax };

inline const char* to_string(AttentionKernel k) { return k == AttentionKernel::Linear ? "linear" : "softmax"; }
inline AttentionKernel parse_kernel(const std::string& s) {
  if (s == "linear") return AttentionKernel::Linear;
  if (s == "softmax") return AttentionKernel::Softmax;
  throw ConfigError("unknown attention kernel '" + s + "' (expected linear|softmax)");
}

/// phi(x) = ELU(x) + 1, floored at the smallest normal double so it stays
/// strictly positive where exp underflows.
inline double feature_map(double x) {
  return x > 0.0 ? x + 1.0 : std::max(std::exp(x), std::numeric_limits<double>::min());
}
inline double feature_map_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

inline Matrix feature_map(const Matrix& x) {
  Matrix y = x;
  for (auto& v : y.data) v = feature_map(v);
  return y;
}

struct AttentionTape {
  Matrix q, k, v;
  // linear kernel
  Matrix phi_q, phi_k, kv;  // kv = phi(K)^T V  (p × dv)
  Matrix ksum;              // 1 × p
  std::vector<double> denom;
  // softmax kernel
  Matrix probs;             // n × n_k
  Matrix out;
};

namespace detail {
inline void require_finite(const Matrix& m, const char* what) {
  if (!all_finite(m)) throw ValueError(std::string(what) + ": non-finite input");
}
}  // namespace detail

/// Row i = sum_j phi(Q_i).phi(K_j) V_j / sum_j phi(Q_i).phi(K_j), evaluated by
/// aggregating phi(K)^T V and sum_j phi(K_j) first: O(n p dv) instead of
/// O(n n_k p).
inline Matrix linear_attention(const Matrix& q, const Matrix& k, const Matrix& v, AttentionTape* tape = nullptr) {
  if (q.cols != k.cols) throw ShapeError("linear_attention: Q and K widths differ");
  if (k.rows != v.rows) throw ShapeError("linear_attention: K and V row counts differ");
  if (k.rows == 0) throw ShapeError("linear_attention: no keys");
  detail::require_finite(q, "linear_attention");
  detail::require_finite(k, "linear_attention");
  detail::require_finite(v, "linear_attention");
  const Matrix pq = feature_map(q);
  const Matrix pk = feature_map(k);
  Matrix kv(pk.cols, v.cols);
  add_matmul_tn(kv, pk, v);
  Matrix ksum(1, pk.cols);
  add_column_sums(ksum, pk);
  Matrix out = matmul(pq, kv);
  std::vector<double> denom(q.rows);
  for (std::size_t i = 0; i < q.rows; ++i) {
    double den = 0.0;
    for (std::size_t a = 0; a < pq.cols; ++a) den += pq(i, a) * ksum.data[a];
    denom[i] = den;
    for (std::size_t c = 0; c < out.cols; ++c) out(i, c) /= den;
  }
  if (tape) {
    tape->q = q;
    tape->k = k;
    tape->v = v;
    tape->phi_q = pq;
    tape->phi_k = pk;
    tape->kv = std::move(kv);
    tape->ksum = std::move(ksum);
    tape->denom = std::move(denom);
    tape->out = out;
  }
  return out;
}

struct AttentionGrads {
  Matrix dq, dk, dv;
};

inline AttentionGrads linear_attention_backward(const AttentionTape& t, const Matrix& dout) {
  const std::size_t n = t.q.rows, p = t.q.cols, dv = t.v.cols;
  Matrix dphi_q(n, p);
  Matrix dkv(p, dv);
  Matrix dksum(1, p);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / t.denom[i];
    // d out_i / d num_i = 1/den ; d out_i / d den = -out_i / den
    double dden = 0.0;
    for (std::size_t c = 0; c < dv; ++c) dden -= dout(i, c) * t.out(i, c);
    dden *= inv;
    for (std::size_t a = 0; a < p; ++a) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dv; ++c) {
        const double dnum = dout(i, c) * inv;
        acc += dnum * t.kv(a, c);
        dkv(a, c) += t.phi_q(i, a) * dnum;
      }
      dphi_q(i, a) = acc + dden * t.ksum.data[a];
      dksum.data[a] += dden * t.phi_q(i, a);
    }
  }
  AttentionGrads g{Matrix(n, p), Matrix(t.k.rows, p), Matrix(t.k.rows, dv)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a) g.dq(i, a) = dphi_q(i, a) * feature_map_grad(t.q(i, a));
  for (std::size_t j = 0; j < t.k.rows; ++j) {
    for (std::size_t a = 0; a < p; ++a) {
      double dphik = dksum.data[a];
      for (std::size_t c = 0; c < dv; ++c) dphik += dkv(a, c) * t.v(j, c);
      g.dk(j, a) = dphik * feature_map_grad(t.k(j, a));
    }
    for (std::size_t c = 0; c < dv; ++c) {
      double acc = 0.0;
      for (std::size_t a = 0; a < p; ++a) acc += t.phi_k(j, a) * dkv(a, c);
      g.dv(j, c) = acc;
    }
  }
  return g;
}

/// Scaled dot-product softmax attention, kept for the kernel comparison.
inline Matrix softmax_attention(const Matrix& q, const Matrix& k, const Matrix& v, AttentionTape* tape = nullptr) {
  if (q.cols != k.cols) throw ShapeError("softmax_attention: Q and K widths differ");
  if (k.rows != v.rows) throw ShapeError("softmax_attention: K and V row counts differ");
  if (k.rows == 0) throw ShapeError("softmax_attention: no keys");
  detail::require_finite(q, "softmax_attention");
  detail::require_finite(k, "softmax_attention");
  detail::require_finite(v, "softmax_attention");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Matrix probs = matmul_nt(q, k);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < probs.cols; ++j) mx = std::max(mx, probs(i, j) * scale);
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.cols; ++j) sum += (probs(i, j) = std::exp(probs(i, j) * scale - mx));
    for (std::size_t j = 0; j < probs.cols; ++j) probs(i, j) /= sum;
  }
  Matrix out = matmul(probs, v);
  if (tape) {
    tape->q = q;
    tape->k = k;
    tape->v = v;
    tape->probs = std::move(probs);
    tape->out = out;
  }
  return out;
}

inline AttentionGrads softmax_attention_backward(const AttentionTape& t, const Matrix& dout) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(t.q.cols));
  AttentionGrads g{Matrix(t.q.rows, t.q.cols), Matrix(t.k.rows, t.k.cols), Matrix(t.v.rows, t.v.cols)};
  add_matmul_tn(g.dv, t.probs, dout);
  Matrix dprobs = matmul_nt(dout, t.v);
  Matrix dscores(dprobs.rows, dprobs.cols);
  for (std::size_t i = 0; i < dprobs.rows; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < dprobs.cols; ++j) dot += dprobs(i, j) * t.probs(i, j);
    for (std::size_t j = 0; j < dprobs.cols; ++j) dscores(i, j) = t.probs(i, j) * (dprobs(i, j) - dot) * scale;
  }
  g.dq = matmul(dscores, t.k);
  add_matmul_tn(g.dk, dscores, t.q);
  return g;
}

inline Matrix attention(AttentionKernel kernel, const Matrix& q, const Matrix& k, const Matrix& v,
                        AttentionTape* tape = nullptr) {
  return kernel == AttentionKernel::Linear ? linear_attention(q, k, v, tape) : softmax_attention(q, k, v, tape);
}

inline AttentionGrads attention_backward(AttentionKernel kernel, const AttentionTape& t, const Matrix& dout) {
  return kernel == AttentionKernel::Linear ? linear_attention_backward(t, dout) : softmax_attention_backward(t, dout);
}

/// Cross-attention block: the base-side tokens Z query the extractor-side
/// tokens Z_ext, the attended values are projected back and added to Z, and
/// a residual two-layer FFN follows.
///   A = Attn(Z W_Q, Z_ext W_K, Z_ext W_V) W_O
///   Z_A = Z + A;  Z' = FFN(Z_A) + Z_A;  FFN(x) = ReLU(x W_1 + b_1) W_2 + b_2
struct Retriever {
  Param wq, wk, wv, wo;
  Dense ffn1, ffn2;

  struct Tape {
    Matrix z, z_ext, q, k, v;
    AttentionTape attn;
    Matrix attended;  // n × p
    Matrix za;        // Z + A
    Matrix h_pre;     // FFN hidden pre-activation
    Matrix h;         // FFN hidden post-ReLU
    bool recorded = false;
  };

  Retriever() = default;
  /// token_dim = d, attn_dim = d', ffn_width = FFN hidden width.
  Retriever(const std::string& name, std::size_t token_dim, std::size_t attn_dim, std::size_t ffn_width)
      : wq(name + ".Wq", token_dim, attn_dim),
        wk(name + ".Wk", token_dim, attn_dim),
        wv(name + ".Wv", token_dim, attn_dim),
        wo(name + ".Wo", attn_dim, token_dim),
        ffn1(name + ".ffn1", token_dim, ffn_width),
        ffn2(name + ".ffn2", ffn_width, token_dim) {
    if (token_dim < 1 || attn_dim < 1 || ffn_width < 1) throw ConfigError("retriever '" + name + "': sizes must be >= 1");
  }

  std::size_t token_dim() const { return wq.value.rows; }
  std::size_t attn_dim() const { return wq.value.cols; }
  std::size_t ffn_width() const { return ffn1.out(); }

  void init(Rng& rng) {
    const double bq = 1.0 / std::sqrt(static_cast<double>(token_dim()));
    init_uniform(wq.value, rng, bq);
    init_uniform(wk.value, rng, bq);
    init_uniform(wv.value, rng, bq);
    init_uniform(wo.value, rng, 1.0 / std::sqrt(static_cast<double>(attn_dim())));
    ffn1.init(rng);
    ffn2.init(rng);
  }

  Matrix forward(const Matrix& z, const Matrix& z_ext, AttentionKernel kernel, Tape* tape = nullptr) const {
    if (z.cols != token_dim() || z_ext.cols != token_dim())
      throw ShapeError("retriever: token width does not match projection width " + std::to_string(token_dim()));
    Tape local;
    Tape& t = tape ? *tape : local;
    t.z = z;
    t.z_ext = z_ext;
    t.q = matmul(z, wq.value);
    t.k = matmul(z_ext, wk.value);
    t.v = matmul(z_ext, wv.value);
    t.attended = attention(kernel, t.q, t.k, t.v, &t.attn);
    t.za = z;
    add_inplace(t.za, matmul(t.attended, wo.value));
    t.h_pre = ffn1.forward(t.za);
    t.h = relu(t.h_pre);
    Matrix out = ffn2.forward(t.h);
    add_inplace(out, t.za);
    t.recorded = true;
    return out;
  }

  struct InputGrads {
    Matrix dz, dz_ext;
  };

  InputGrads backward(const Tape& t, AttentionKernel kernel, const Matrix& dout) {
    if (!t.recorded) throw StateError("retriever: backward without a recorded forward pass");
    Matrix dh = ffn2.backward(t.h, dout);
    Matrix dza = ffn1.backward(t.za, relu_backward(t.h_pre, dh));
    add_inplace(dza, dout);
    InputGrads g{dza, Matrix(t.z_ext.rows, t.z_ext.cols)};
    add_matmul_tn(wo.grad, t.attended, dza);
    const Matrix dattended = matmul_nt(dza, wo.value);
    const AttentionGrads ag = attention_backward(kernel, t.attn, dattended);
    add_matmul_tn(wq.grad, t.z, ag.dq);
    add_matmul_tn(wk.grad, t.z_ext, ag.dk);
    add_matmul_tn(wv.grad, t.z_ext, ag.dv);
    add_inplace(g.dz, matmul_nt(ag.dq, wq.value));
    add_inplace(g.dz_ext, matmul_nt(ag.dk, wk.value));
    add_inplace(g.dz_ext, matmul_nt(ag.dv, wv.value));
    return g;
  }

  std::vector<Param*> params() { return {&wq, &wk, &wv, &wo, &ffn1.weight, &ffn1.bias, &ffn2.weight, &ffn2.bias}; }
};

}  // namespace dsfm
