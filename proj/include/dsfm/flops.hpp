#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsfm/memory_model.hpp"

namespace dsfm {

// Analytic forward-pass FLOP counts. A multiply-add counts as 2; bias adds,
// residual adds, divisions, exponentials and feature-map evaluations count 1
// per element. Activations (ReLU) are free.

struct RetrieverFlops {
  std::string site;
  std::uint64_t projections = 0;    // Q, K, V
  std::uint64_t attention_core = 0; // kernel-specific part (scores or aggregation)
  std::uint64_t output = 0;         // W_O projection + residual
  std::uint64_t ffn = 0;            // FFN + residual
  std::uint64_t total() const { return projections + attention_core + output + ffn; }
};

struct FlopsReport {
  AttentionKernel kernel = AttentionKernel::Linear;
  std::uint64_t embeddings = 0;
  std::uint64_t base_tower = 0;
  std::uint64_t extractor = 0;
  std::vector<RetrieverFlops> retrievers;

  std::uint64_t retriever_total() const {
    std::uint64_t t = 0;
    for (const auto& r : retrievers) t += r.total();
    return t;
  }
  std::uint64_t total() const { return embeddings + base_tower + extractor + retriever_total(); }
};

/// Shape facts the config alone does not carry.
struct FlopsShape {
  std::size_t token_count = 0;                // m (+1 with the domain token)
  std::vector<std::size_t> sequence_lengths;  // pooled length per sequential feature
};

inline FlopsShape flops_shape(const FeatureSchema& schema, bool include_domain) {
  FlopsShape s;
  s.token_count = schema.size() + (include_domain ? 1 : 0);
  for (const auto& f : schema.features)
    if (f.sequential()) s.sequence_lengths.push_back(f.max_seq_len);
  return s;
}

inline std::uint64_t dense_flops(std::uint64_t in, std::uint64_t out) { return 2 * in * out + out; }

inline std::uint64_t mlp_flops(std::uint64_t in, const std::vector<std::size_t>& hidden) {
  std::uint64_t total = 0;
  for (auto h : hidden) {
    total += dense_flops(in, h);
    in = h;
  }
  return total + dense_flops(in, 1);
}

/// The n × nk score matrix: Q K^T plus scaling.
inline std::uint64_t softmax_score_flops(std::uint64_t n, std::uint64_t nk, std::uint64_t p) {
  return 2 * n * nk * p + n * nk;
}

/// n query tokens attend over nk key tokens; tokens are d wide, attention is
/// p wide, the FFN hidden layer is f wide.
inline RetrieverFlops retriever_flops(std::string site, AttentionKernel kernel, std::uint64_t n, std::uint64_t nk,
                                      std::uint64_t d, std::uint64_t p, std::uint64_t f) {
  RetrieverFlops r;
  r.site = std::move(site);
  r.projections = 2 * n * d * p + 2 * (2 * nk * d * p);
  if (kernel == AttentionKernel::Linear) {
    const std::uint64_t feature_map = n * p + nk * p;
    const std::uint64_t aggregate = 2 * nk * p * p + nk * p;  // phi(K)^T V and sum phi(K)
    const std::uint64_t readout = 2 * n * p * p + 2 * n * p + n * p;
    r.attention_core = feature_map + aggregate + readout;
  } else {
    r.attention_core = softmax_score_flops(n, nk, p) + 3 * n * nk + 2 * n * nk * p;
  }
  r.output = 2 * n * p * d + n * d;
  r.ffn = dense_flops(d, f) * n + dense_flops(f, d) * n + n * d;
  return r;
}

inline std::uint64_t embedding_flops(const FlopsShape& shape, std::uint64_t d) {
  std::uint64_t total = 0;
  for (auto len : shape.sequence_lengths) total += len * d + d;  // sum then scale
  return total;
}

/// Plain embedding + MLP model.
inline FlopsReport count_base_flops(const BaseModelConfig& cfg, const FlopsShape& shape) {
  FlopsReport r;
  r.embeddings = embedding_flops(shape, cfg.embedding_dim);
  r.base_tower = mlp_flops(shape.token_count * cfg.embedding_dim, cfg.hidden);
  return r;
}

inline FlopsReport count_flops(const MemoryModelConfig& cfg, const FlopsShape& shape) {
  const std::uint64_t d = cfg.base.embedding_dim;
  const std::uint64_t ns = cfg.sensitive.size() + (cfg.base.include_domain && cfg.extractor_domain ? 1 : 0);
  FlopsReport r;
  r.kernel = cfg.kernel;
  r.embeddings = embedding_flops(shape, d);
  r.base_tower = mlp_flops(shape.token_count * d, cfg.base.hidden);
  if (cfg.use_aux_logit || cfg.use_hidden_attn) r.extractor = mlp_flops(ns * d, cfg.ext_hidden());
  if (cfg.use_emb_attn)
    r.retrievers.push_back(retriever_flops("emb", cfg.kernel, shape.token_count, ns, d, cfg.emb_attn_dim, cfg.emb_ffn()));
  if (cfg.use_hidden_attn)
    for (std::size_t l = 0; l + 1 < cfg.base.hidden.size(); ++l)
      r.retrievers.push_back(retriever_flops("h" + std::to_string(l), cfg.kernel, cfg.base.hidden[l],
                                             cfg.ext_hidden()[l], 1, cfg.hidden_attn_dim, cfg.hidden_ffn_width));
  return r;
}

inline nlohmann::json flops_to_json(const FlopsReport& r) {
  nlohmann::json j;
  j["kernel"] = to_string(r.kernel);
  j["embeddings"] = r.embeddings;
  j["base_tower"] = r.base_tower;
  j["extractor"] = r.extractor;
  j["retrievers"] = nlohmann::json::array();
  for (const auto& rt : r.retrievers)
    j["retrievers"].push_back({{"site", rt.site},
                               {"projections", rt.projections},
                               {"attention_core", rt.attention_core},
                               {"output", rt.output},
                               {"ffn", rt.ffn},
                               {"total", rt.total()}});
  j["total"] = r.total();
  return j;
}

}  // namespace dsfm
