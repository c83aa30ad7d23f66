#pragma once

#include <vector>

#include "dsfm/nn.hpp"

namespace dsfm {

struct BaseModelConfig {
  std::size_t embedding_dim = 8;
  std::vector<std::size_t> hidden{64, 32, 16};  // empty = linear model
  // Appends a learned domain-indicator token after the schema features.
  bool include_domain = true;
  std::uint64_t seed = 1;

  void validate() const {
    if (embedding_dim < 1) throw ConfigError("model: embedding_dim must be >= 1");
    for (auto h : hidden)
      if (h < 1) throw ConfigError("model: hidden sizes must be >= 1");
  }
};

/// Token matrix with an optional domain token appended as the last row.
inline Matrix embed_with_domain(const Sample& s, const FeatureSchema& schema, const EmbeddingTables& emb,
                                const Param* domain_table) {
  Matrix z = embed(s, schema, emb);
  if (!domain_table) return z;
  Matrix out(z.rows + 1, z.cols);
  std::copy(z.data.begin(), z.data.end(), out.data.begin());
  const double* r = domain_table->value.row(s.domain);
  std::copy(r, r + z.cols, out.row(z.rows));
  return out;
}

inline void embed_with_domain_backward(const Sample& s, const FeatureSchema& schema, EmbeddingTables& emb,
                                       Param* domain_table, const Matrix& dz) {
  embed_backward(s, schema, emb, dz);
  if (!domain_table) return;
  double* g = domain_table->grad.row(s.domain);
  const double* src = dz.row(schema.size());
  for (std::size_t c = 0; c < dz.cols; ++c) g[c] += src[c];
}

/// The plain embedding + MLP model. Serves as the shared-DNN baseline and as
/// the attribution model.
class BaseDnn {
 public:
  struct Tape {
    Matrix tokens;
    MlpTape mlp;
  };

  BaseDnn() = default;
  BaseDnn(FeatureSchema schema, BaseModelConfig cfg) : schema_(std::move(schema)), cfg_(std::move(cfg)) {
    schema_.validate();
    cfg_.validate();
    emb_ = EmbeddingTables(schema_, cfg_.embedding_dim);
    if (cfg_.include_domain) domain_ = Param("emb.__domain__", schema_.num_domains, cfg_.embedding_dim);
    tower_ = Mlp("base", token_count() * cfg_.embedding_dim, cfg_.hidden);
    Rng rng(derive_seed(cfg_.seed, "base/init"));
    emb_.init(rng);
    if (cfg_.include_domain) init_uniform(domain_.value, rng, 0.01);
    tower_.init(rng);
  }

  const FeatureSchema& schema() const { return schema_; }
  const BaseModelConfig& config() const { return cfg_; }
  std::size_t token_count() const { return schema_.size() + (cfg_.include_domain ? 1 : 0); }

  EmbeddingTables& embeddings() { return emb_; }
  const EmbeddingTables& embeddings() const { return emb_; }
  Param* domain_table() { return cfg_.include_domain ? &domain_ : nullptr; }
  const Param* domain_table() const { return cfg_.include_domain ? &domain_ : nullptr; }
  Mlp& tower() { return tower_; }
  const Mlp& tower() const { return tower_; }

  Matrix tokens(const Sample& s) const { return embed_with_domain(s, schema_, emb_, domain_table()); }

  /// F(Z): the logit as a function of the pooled token matrix.
  double logit_from_tokens(const Matrix& z, MlpTape* tape = nullptr) const {
    require_shape(z, token_count(), cfg_.embedding_dim, "base model tokens");
    return tower_.forward(z.reshaped(1, z.size()), tape);
  }

  /// dF/dZ at Z, shaped like Z.
  Matrix token_gradient(const Matrix& z) const {
    MlpTape tape;
    logit_from_tokens(z, &tape);
    return tower_.input_gradient(tape).reshaped(z.rows, z.cols);
  }

  double forward(const Sample& s, Tape& tape) const {
    tape.tokens = tokens(s);
    return logit_from_tokens(tape.tokens, &tape.mlp);
  }

  double predict(const Sample& s) const { return logit_from_tokens(tokens(s)); }

  void backward(const Sample& s, const Tape& tape, double dlogit) {
    const Matrix dx = tower_.backward(tape.mlp, dlogit);
    embed_with_domain_backward(s, schema_, emb_, domain_table(), dx.reshaped(tape.tokens.rows, tape.tokens.cols));
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps = emb_.params();
    if (cfg_.include_domain) ps.push_back(&domain_);
    for (auto* p : tower_.params()) ps.push_back(p);
    return ps;
  }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update("base-dnn");
    h.update_value(schema_.hash());
    h.update_value(static_cast<std::uint64_t>(cfg_.embedding_dim));
    for (auto w : cfg_.hidden) h.update_value(static_cast<std::uint64_t>(w));
    h.update_value(cfg_.include_domain);
    for (auto* p : const_cast<BaseDnn*>(this)->params())
      for (double v : p->value.data) h.update_value(v);
    return h.digest();
  }

 private:
  FeatureSchema schema_;
  BaseModelConfig cfg_;
  EmbeddingTables emb_;
  Param domain_;
  Mlp tower_;
};

}  // namespace dsfm
