#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "dsfm/metrics.hpp"
#include "dsfm/nn.hpp"
#include "dsfm/schema.hpp"

namespace dsfm {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 5;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::size_t patience = 2;  // epochs without validation gain; 0 disables early stopping
  bool shuffle = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> valid_auc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> batch_losses;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

struct EvalReport {
  std::optional<double> overall;
  std::vector<std::optional<double>> per_domain;
  std::vector<std::size_t> counts;
  std::uint64_t model_fingerprint = 0;
  std::uint64_t dataset_fingerprint = 0;
};

/// What train/evaluate need from a model.
template <class M>
concept TrainableModel = requires(M m, const M cm, const Sample& s, typename M::Tape t) {
  { cm.forward(s, t) } -> std::convertible_to<double>;
  { m.backward(s, t, 0.0) };
  { cm.predict(s) } -> std::convertible_to<double>;
  { m.params() } -> std::convertible_to<std::vector<Param*>>;
  { cm.schema() } -> std::convertible_to<const FeatureSchema&>;
  { cm.fingerprint() } -> std::convertible_to<std::uint64_t>;
};

template <TrainableModel M>
std::vector<double> predict_all(const M& model, const MultiDomainDataset& ds) {
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = model.predict(ds.samples[i]);
  return out;
}

/// Overall AUC on the pooled set plus AUC within each domain. Single-class
/// domains are reported as nullopt and never as 0.
inline EvalReport evaluate_scores(const MultiDomainDataset& ds, const std::vector<double>& scores) {
  EvalReport r;
  std::vector<int> labels(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) labels[i] = ds.samples[i].label;
  r.overall = try_auc(labels, scores);
  r.counts = ds.domain_counts();
  for (std::size_t k = 0; k < ds.schema.num_domains; ++k) {
    std::vector<int> l;
    std::vector<double> s;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.samples[i].domain == k) {
        l.push_back(labels[i]);
        s.push_back(scores[i]);
      }
    r.per_domain.push_back(try_auc(l, s));
  }
  r.dataset_fingerprint = ds.fingerprint();
  return r;
}

template <TrainableModel M>
EvalReport evaluate(const M& model, const MultiDomainDataset& ds) {
  if (model.schema().hash() != ds.schema.hash()) throw CompatibilityError("evaluate: dataset schema differs from model");
  EvalReport r = evaluate_scores(ds, predict_all(model, ds));
  r.model_fingerprint = model.fingerprint();
  return r;
}

/// Mini-batch Adam on mean BCE over the pooled multi-domain training set.
/// Keeps the parameters of the epoch with the best validation overall AUC.
template <TrainableModel M>
TrainHistory train(M& model, const MultiDomainDataset& train_ds, const MultiDomainDataset& valid_ds,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (train_ds.size() == 0) throw ValueError("train: empty training set");
  if (model.schema().hash() != train_ds.schema.hash()) throw CompatibilityError("train: dataset schema differs from model");
  auto params = model.params();
  AdamState adam(params, AdamConfig{.lr = cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "train/shuffle"));
  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory hist;
  std::optional<double> best_auc;
  std::vector<Matrix> best_params;
  std::size_t since_best = 0;
  typename M::Tape tape;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle)
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (auto* p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const Sample& s = train_ds.samples[order[b]];
        const double logit = model.forward(s, tape);
        const double l = bce(s.label, logit);
        if (!std::isfinite(l)) throw TrainingError("non-finite loss at step " + std::to_string(hist.steps));
        batch_loss += l;
        model.backward(s, tape, bce_grad(s.label, logit) * inv_b);
      }
      adam_step(params, adam, hist.steps);
      ++hist.steps;
      hist.batch_losses.push_back(batch_loss * inv_b);
      epoch_loss += batch_loss;
    }
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), std::nullopt};
    if (valid_ds.size() > 0) rec.valid_auc = evaluate_scores(valid_ds, predict_all(model, valid_ds)).overall;
    hist.epochs.push_back(rec);

    const bool improved = !best_auc || (rec.valid_auc && *rec.valid_auc > *best_auc) || best_params.empty();
    if (improved) {
      if (rec.valid_auc) best_auc = rec.valid_auc;
      hist.best_epoch = epoch;
      best_params.clear();
      for (auto* p : params) best_params.push_back(p->value);
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  return hist;
}

inline nlohmann::json eval_to_json(const EvalReport& r, const FeatureSchema& schema) {
  nlohmann::json j;
  j["overall"] = r.overall ? nlohmann::json(*r.overall) : nlohmann::json(nullptr);
  j["per_domain"] = nlohmann::json::array();
  for (std::size_t k = 0; k < r.per_domain.size(); ++k)
    j["per_domain"].push_back({{"domain", schema.domain_label(k)},
                               {"auc", r.per_domain[k] ? nlohmann::json(*r.per_domain[k]) : nlohmann::json(nullptr)},
                               {"count", r.counts[k]}});
  j["model_fingerprint"] = to_hex(r.model_fingerprint);
  j["dataset_fingerprint"] = to_hex(r.dataset_fingerprint);
  return j;
}

inline nlohmann::json history_to_json(const TrainHistory& h) {
  nlohmann::json j;
  j["steps"] = h.steps;
  j["best_epoch"] = h.best_epoch;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : h.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"valid_auc", e.valid_auc ? nlohmann::json(*e.valid_auc) : nlohmann::json(nullptr)}});
  return j;
}

}  // namespace dsfm
