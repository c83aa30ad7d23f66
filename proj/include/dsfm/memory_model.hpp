#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "dsfm/attention.hpp"
#include "dsfm/base_model.hpp"

namespace dsfm {

struct MemoryModelConfig {
  BaseModelConfig base;
  std::vector<std::size_t> extractor_hidden;  // empty = same as base.hidden
  std::size_t emb_attn_dim = 16;
  std::size_t hidden_attn_dim = 4;
  std::size_t emb_ffn_width = 0;     // 0 = 4 * embedding_dim
  std::size_t hidden_ffn_width = 4;  // hidden-site tokens are 1-wide
  std::vector<std::string> sensitive;
  AttentionKernel kernel = AttentionKernel::Linear;
  bool use_emb_attn = true;
  bool use_hidden_attn = true;
  bool use_aux_logit = true;
  bool extractor_domain = true;  // the domain token also feeds the extractor

  const std::vector<std::size_t>& ext_hidden() const {
    return extractor_hidden.empty() ? base.hidden : extractor_hidden;
  }
  std::size_t emb_ffn() const { return emb_ffn_width ? emb_ffn_width : 4 * base.embedding_dim; }

  void validate(const FeatureSchema& schema) const {
    base.validate();
    if (base.hidden.empty()) throw ConfigError("memory: towers need at least one hidden layer");
    if (ext_hidden().size() != base.hidden.size())
      throw ConfigError("memory: extractor and base towers must have the same number of layers");
    for (auto h : ext_hidden())
      if (h < 1) throw ConfigError("memory: extractor hidden sizes must be >= 1");
    if (sensitive.empty()) throw ConfigError("memory: the domain-sensitive feature set is empty");
    for (const auto& s : sensitive)
      if (!schema.find(s)) throw ConfigError("memory: sensitive feature '" + s + "' is not in the schema");
    if (emb_attn_dim < 1 || hidden_attn_dim < 1 || hidden_ffn_width < 1)
      throw ConfigError("memory: attention/FFN sizes must be >= 1");
  }
};

/// Dual-tower model over a shared embedding layer: the base MLP reads every
/// feature, the extractor MLP reads only the domain-sensitive ones, and
/// retrievers let the base tower attend to the extractor at the embedding
/// layer and after each hidden layer but the last. Final logit is
/// l_base + l_ext when the auxiliary logit is enabled. With extractor_domain
/// the domain token is appended to the extractor's inputs.
class MemoryModel {
 public:
  struct Tape {
    Matrix tokens;
    Matrix z_ext;
    Retriever::Tape emb_rt;
    std::vector<Matrix> base_in, base_pre;
    std::vector<Retriever::Tape> hid_rt;
    std::vector<Matrix> ext_in, ext_pre;
    double l_base = 0.0, l_ext = 0.0;
    bool ext_ran = false;
    bool recorded = false;
  };

  MemoryModel() = default;
  MemoryModel(FeatureSchema schema, MemoryModelConfig cfg) : schema_(std::move(schema)), cfg_(std::move(cfg)) {
    schema_.validate();
    cfg_.validate(schema_);
    for (const auto& s : cfg_.sensitive) sensitive_idx_.push_back(schema_.index_of(s));
    if (cfg_.base.include_domain && cfg_.extractor_domain) sensitive_idx_.push_back(schema_.size());
    const std::size_t d = cfg_.base.embedding_dim;
    emb_ = EmbeddingTables(schema_, d);
    if (cfg_.base.include_domain) domain_ = Param("emb.__domain__", schema_.num_domains, d);
    base_ = Mlp("base", token_count() * d, cfg_.base.hidden);
    extractor_ = Mlp("ext", sensitive_idx_.size() * d, cfg_.ext_hidden());
    emb_rt_ = Retriever("rt.emb", d, cfg_.emb_attn_dim, cfg_.emb_ffn());
    for (std::size_t l = 0; l + 1 < cfg_.base.hidden.size(); ++l)
      hid_rt_.emplace_back("rt.h" + std::to_string(l), 1, cfg_.hidden_attn_dim, cfg_.hidden_ffn_width);

    Rng rng(derive_seed(cfg_.base.seed, "memory/init"));
    emb_.init(rng);
    if (cfg_.base.include_domain) init_uniform(domain_.value, rng, 0.01);
    base_.init(rng);
    extractor_.init(rng);
    extractor_.output_layer().weight.value.fill(0.0);
    extractor_.output_layer().bias.value.fill(0.0);
    emb_rt_.init(rng);
    for (auto& r : hid_rt_) r.init(rng);
  }

  const FeatureSchema& schema() const { return schema_; }
  const MemoryModelConfig& config() const { return cfg_; }
  MemoryModelConfig& config() { return cfg_; }
  std::size_t token_count() const { return schema_.size() + (cfg_.base.include_domain ? 1 : 0); }
  const std::vector<std::size_t>& sensitive_indices() const { return sensitive_idx_; }

  EmbeddingTables& embeddings() { return emb_; }
  const EmbeddingTables& embeddings() const { return emb_; }
  Param* domain_table() { return cfg_.base.include_domain ? &domain_ : nullptr; }
  const Param* domain_table() const { return cfg_.base.include_domain ? &domain_ : nullptr; }
  Mlp& base_tower() { return base_; }
  const Mlp& base_tower() const { return base_; }
  Mlp& extractor() { return extractor_; }
  const Mlp& extractor() const { return extractor_; }
  Retriever& emb_retriever() { return emb_rt_; }
  std::vector<Retriever>& hidden_retrievers() { return hid_rt_; }

  /// Copies the shared embeddings and base tower from a trained plain DNN.
  void load_base(const BaseDnn& m) {
    if (m.schema().hash() != schema_.hash()) throw CompatibilityError("memory: base model schema differs");
    if (m.token_count() != token_count() || m.config().hidden != cfg_.base.hidden ||
        m.config().embedding_dim != cfg_.base.embedding_dim)
      throw CompatibilityError("memory: base model shape differs");
    emb_ = m.embeddings();
    if (m.domain_table()) domain_ = *m.domain_table();
    base_ = m.tower();
  }

  Matrix tokens(const Sample& s) const { return embed_with_domain(s, schema_, emb_, domain_table()); }

  Matrix sensitive_tokens(const Matrix& z) const {
    Matrix out(sensitive_idx_.size(), z.cols);
    for (std::size_t r = 0; r < sensitive_idx_.size(); ++r)
      std::copy(z.row(sensitive_idx_[r]), z.row(sensitive_idx_[r]) + z.cols, out.row(r));
    return out;
  }

  double forward_tokens(const Matrix& z, Tape& t) const {
    require_shape(z, token_count(), cfg_.base.embedding_dim, "memory model tokens");
    const std::size_t L = cfg_.base.hidden.size();
    t = Tape{};
    t.tokens = z;
    t.z_ext = sensitive_tokens(z);

    // Extractor runs first so its hidden states are available to retrievers.
    std::vector<Matrix> ext_hidden;
    t.ext_ran = cfg_.use_aux_logit || cfg_.use_hidden_attn;
    if (t.ext_ran) {
      Matrix g = t.z_ext.reshaped(1, t.z_ext.size());
      for (std::size_t l = 0; l < L; ++l) {
        Matrix pre = extractor_.layers[l].forward(g);
        t.ext_in.push_back(std::move(g));
        t.ext_pre.push_back(pre);
        g = relu(pre);
        ext_hidden.push_back(g);
      }
      t.ext_in.push_back(g);
      t.l_ext = extractor_.output_layer().forward(g).data[0];
    }

    Matrix h = cfg_.use_emb_attn ? emb_rt_.forward(z, t.z_ext, cfg_.kernel, &t.emb_rt) : z;
    h = h.reshaped(1, h.size());
    t.hid_rt.resize(hid_rt_.size());
    for (std::size_t l = 0; l < L; ++l) {
      Matrix pre = base_.layers[l].forward(h);
      t.base_in.push_back(std::move(h));
      t.base_pre.push_back(pre);
      h = relu(pre);
      if (cfg_.use_hidden_attn && l + 1 < L) {
        const Matrix q_tokens = h.reshaped(h.cols, 1);
        const Matrix kv_tokens = ext_hidden[l].reshaped(ext_hidden[l].cols, 1);
        h = hid_rt_[l].forward(q_tokens, kv_tokens, cfg_.kernel, &t.hid_rt[l]).reshaped(1, h.cols);
      }
    }
    t.base_in.push_back(h);
    t.l_base = base_.output_layer().forward(h).data[0];
    t.recorded = true;
    return cfg_.use_aux_logit ? t.l_base + t.l_ext : t.l_base;
  }

  double forward(const Sample& s, Tape& t) const { return forward_tokens(tokens(s), t); }

  double predict(const Sample& s) const {
    Tape t;
    return forward(s, t);
  }

  /// Accumulates parameter gradients and returns dL/dZ (tokens).
  Matrix backward_tokens(const Tape& t, double dlogit) {
    if (!t.recorded) throw StateError("memory model: backward without a recorded forward pass");
    const std::size_t L = cfg_.base.hidden.size();
    std::vector<Matrix> d_ext_hidden;
    if (t.ext_ran)
      for (std::size_t l = 0; l < L; ++l) d_ext_hidden.emplace_back(1, extractor_.layers[l].out());

    Matrix d = base_.output_layer().backward(t.base_in[L], Matrix(1, 1, dlogit));
    for (std::size_t l = L; l-- > 0;) {
      if (cfg_.use_hidden_attn && l + 1 < L) {
        const auto g = hid_rt_[l].backward(t.hid_rt[l], cfg_.kernel, d.reshaped(d.cols, 1));
        d = g.dz.reshaped(1, g.dz.rows);
        add_inplace(d_ext_hidden[l], g.dz_ext.reshaped(1, g.dz_ext.rows));
      }
      d = relu_backward(t.base_pre[l], d);
      d = base_.layers[l].backward(t.base_in[l], d);
    }
    const std::size_t dim = cfg_.base.embedding_dim;
    Matrix dz = d.reshaped(token_count(), dim);
    Matrix dz_ext(sensitive_idx_.size(), dim);
    if (cfg_.use_emb_attn) {
      const auto g = emb_rt_.backward(t.emb_rt, cfg_.kernel, dz);
      dz = g.dz;
      dz_ext = g.dz_ext;
    }

    if (t.ext_ran) {
      if (cfg_.use_aux_logit)
        add_inplace(d_ext_hidden[L - 1], extractor_.output_layer().backward(t.ext_in[L], Matrix(1, 1, dlogit)));
      Matrix de;
      for (std::size_t l = L; l-- > 0;) {
        de = relu_backward(t.ext_pre[l], d_ext_hidden[l]);
        de = extractor_.layers[l].backward(t.ext_in[l], de);
        if (l > 0) add_inplace(d_ext_hidden[l - 1], de);
      }
      add_inplace(dz_ext, de.reshaped(sensitive_idx_.size(), dim));
    }
    for (std::size_t r = 0; r < sensitive_idx_.size(); ++r)
      for (std::size_t c = 0; c < dim; ++c) dz(sensitive_idx_[r], c) += dz_ext(r, c);
    return dz;
  }

  void backward(const Sample& s, const Tape& t, double dlogit) {
    const Matrix dz = backward_tokens(t, dlogit);
    embed_with_domain_backward(s, schema_, emb_, domain_table(), dz);
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps = emb_.params();
    if (cfg_.base.include_domain) ps.push_back(&domain_);
    for (auto* p : base_.params()) ps.push_back(p);
    for (auto* p : extractor_.params()) ps.push_back(p);
    for (auto* p : emb_rt_.params()) ps.push_back(p);
    for (auto& r : hid_rt_)
      for (auto* p : r.params()) ps.push_back(p);
    return ps;
  }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update("memory-model");
    h.update_value(schema_.hash());
    h.update_value(static_cast<std::uint64_t>(cfg_.base.embedding_dim));
    for (auto w : cfg_.base.hidden) h.update_value(static_cast<std::uint64_t>(w));
    for (auto w : cfg_.ext_hidden()) h.update_value(static_cast<std::uint64_t>(w));
    for (const auto& s : cfg_.sensitive) h.update(s);
    h.update_value(static_cast<int>(cfg_.kernel));
    h.update_value(cfg_.use_emb_attn);
    h.update_value(cfg_.use_hidden_attn);
    h.update_value(cfg_.use_aux_logit);
    h.update_value(cfg_.extractor_domain);
    for (auto* p : const_cast<MemoryModel*>(this)->params())
      for (double v : p->value.data) h.update_value(v);
    return h.digest();
  }

 private:
  FeatureSchema schema_;
  MemoryModelConfig cfg_;
  std::vector<std::size_t> sensitive_idx_;
  EmbeddingTables emb_;
  Param domain_;
  Mlp base_;
  Mlp extractor_;
  Retriever emb_rt_;
  std::vector<Retriever> hid_rt_;
};

}  // namespace dsfm
