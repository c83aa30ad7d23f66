#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dsfm/attribution.hpp"
#include "dsfm/config.hpp"
#include "dsfm/memory_model.hpp"
#include "dsfm/sensitivity.hpp"
#include "dsfm/synthetic.hpp"
#include "dsfm/train.hpp"

namespace dsfm {

struct Datasets {
  MultiDomainDataset train;
  MultiDomainDataset valid;
  MultiDomainDataset test;
};

inline Datasets make_synthetic_datasets(const ExperimentConfig& cfg) {
  if (!cfg.synthetic) throw ConfigError("experiment config has no 'synthetic' section");
  Datasets d;
  d.train = generate_synthetic(*cfg.synthetic, Split::Train, cfg.train_samples);
  if (cfg.valid_samples) d.valid = generate_synthetic(*cfg.synthetic, Split::Valid, cfg.valid_samples);
  else d.valid.schema = d.train.schema, d.valid.split = Split::Valid;
  if (cfg.test_samples) d.test = generate_synthetic(*cfg.synthetic, Split::Test, cfg.test_samples);
  else d.test.schema = d.train.schema, d.test.split = Split::Test;
  return d;
}

/// Which features feed the extractor.
enum class Selection { TopK, LastK, AllFeat };

inline const char* to_string(Selection s) {
  switch (s) {
    case Selection::TopK: return "top-k";
    case Selection::LastK: return "last-k";
    case Selection::AllFeat: return "all-feat";
  }
  return "?";
}

inline Selection parse_selection(const std::string& s) {
  if (s == "top-k" || s == "top") return Selection::TopK;
  if (s == "last-k" || s == "last") return Selection::LastK;
  if (s == "all-feat" || s == "all") return Selection::AllFeat;
  throw ConfigError("unknown selection '" + s + "' (expected top-k|last-k|all-feat)");
}

inline std::vector<std::string> select_features(const SensitivityReport& report, const FeatureSchema& schema,
                                                const TopK& k, Selection sel, std::vector<std::string>* warnings = nullptr) {
  std::vector<std::size_t> idx;
  if (sel == Selection::AllFeat) {
    for (std::size_t j = 0; j < schema.size(); ++j) idx.push_back(j);
  } else {
    idx = pick_per_group(report, k, sel == Selection::TopK, warnings);
  }
  std::vector<std::string> names;
  for (auto j : idx) names.push_back(schema[j].name);
  if (names.empty()) throw ConfigError("feature selection is empty; raise a top-k value");
  return names;
}

// ---------------------------------------------------------------------------
// Stages. Every stage takes the run seed and derives its own named sub-seed.

inline BaseDnn train_base_model(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed,
                                TrainHistory* history = nullptr) {
  BaseModelConfig mc = cfg.model;
  mc.seed = derive_seed(seed, "base");
  BaseDnn model(data.train.schema, mc);
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "train/base");
  auto h = train(model, data.train, data.valid, tc);
  if (history) *history = std::move(h);
  return model;
}

inline MemoryModel build_memory_model(const ExperimentConfig& cfg, const FeatureSchema& schema,
                                      std::vector<std::string> sensitive, std::uint64_t seed) {
  MemoryModelConfig mc = cfg.memory();
  mc.base.seed = derive_seed(seed, "memory");
  mc.sensitive = std::move(sensitive);
  return MemoryModel(schema, mc);
}

inline void train_memory_model(MemoryModel& model, const ExperimentConfig& cfg, const Datasets& data,
                               std::uint64_t seed, TrainHistory* history = nullptr) {
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(seed, "train/memory");
  auto h = train(model, data.train, data.valid, tc);
  if (history) *history = std::move(h);
}

struct PipelineResult {
  BaseDnn base;
  TrainHistory base_history;
  EvalReport base_eval;
  AttributionMatrix attribution;
  SensitivityReport report;
  MemoryModel memory;
  TrainHistory memory_history;
  EvalReport memory_eval;
};

namespace detail {
template <class F>
auto run_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("stage '") + name + "': " + e.what());
  } catch (const CompatibilityError& e) {
    throw CompatibilityError(std::string("stage '") + name + "': " + e.what());
  } catch (const Error& e) {
    throw StateError(std::string("stage '") + name + "': " + e.what());
  }
}

inline void require_nonempty_selection(const TopK& k) {
  std::size_t total = 0;
  for (const auto& [g, v] : k) total += v;
  if (total == 0) throw ConfigError("top-k is 0 for every group; the domain-sensitive feature set would be empty");
}
}  // namespace detail

/// Full method: base DNN -> attribution -> ranking -> memory model -> eval.
/// A cached attribution is reused only if both of its fingerprints match.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed,
                                   const AttributionMatrix* cached = nullptr) {
  detail::require_nonempty_selection(cfg.top_k);
  PipelineResult r;
  r.base = detail::run_stage("train-base", [&] { return train_base_model(cfg, data, seed, &r.base_history); });
  if (data.test.size()) r.base_eval = detail::run_stage("evaluate-base", [&] { return evaluate(r.base, data.test); });
  r.attribution = detail::run_stage("attribute", [&] {
    if (cached && cached->model_fingerprint == r.base.fingerprint() &&
        cached->dataset_fingerprint == data.train.fingerprint() && cached->steps == cfg.ig.steps)
      return *cached;
    return attribute_dataset(r.base, data.train, cfg.ig, cfg.threads);
  });
  r.report = detail::run_stage("rank", [&] { return rank_features(data.train, r.attribution, cfg.top_k, cfg.weight_mode); });
  r.memory = detail::run_stage("train-memory", [&] {
    auto names = select_features(r.report, data.train.schema, cfg.top_k, Selection::TopK);
    MemoryModel m = build_memory_model(cfg, data.train.schema, names, seed);
    train_memory_model(m, cfg, data, seed, &r.memory_history);
    return m;
  });
  if (data.test.size()) r.memory_eval = detail::run_stage("evaluate-memory", [&] { return evaluate(r.memory, data.test); });
  return r;
}

// ---------------------------------------------------------------------------
// Comparative studies.

struct Variant {
  std::string name;
  bool baseline = false;  // shared DNN, no memory
  Selection selection = Selection::TopK;
  bool use_emb_attn = true;
  bool use_hidden_attn = true;
  bool use_aux_logit = true;
};

struct StudyResult {
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<EvalReport>> runs;  // variant -> per-seed report
  std::vector<std::string> warnings;

  std::optional<double> mean_overall(const std::string& v) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs.at(v))
      if (r.overall) s += *r.overall, ++n;
    return n ? std::optional<double>(s / n) : std::nullopt;
  }
  std::optional<double> mean_domain(const std::string& v, std::size_t k) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs.at(v))
      if (k < r.per_domain.size() && r.per_domain[k]) s += *r.per_domain[k], ++n;
    return n ? std::optional<double>(s / n) : std::nullopt;
  }
};

inline std::vector<std::uint64_t> study_seeds(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < cfg.seeds; ++i) s.push_back(cfg.seed + i);
  return s;
}

/// Trains every variant under identical per-seed sub-seeds. The base DNN,
/// attribution and ranking are computed once per seed and shared.
inline StudyResult run_study(const ExperimentConfig& cfg, const Datasets& data, const std::vector<Variant>& variants) {
  if (data.test.size() == 0) throw ConfigError("study: a test split is required");
  bool needs_memory = false;
  for (const auto& v : variants) needs_memory |= !v.baseline;
  if (needs_memory) detail::require_nonempty_selection(cfg.top_k);
  StudyResult res;
  res.seeds = study_seeds(cfg);
  for (const auto& v : variants) res.variants.push_back(v.name);
  for (auto seed : res.seeds) {
    const BaseDnn base = detail::run_stage("train-base", [&] { return train_base_model(cfg, data, seed); });
    std::optional<SensitivityReport> report;
    if (needs_memory)
      report = detail::run_stage("rank", [&] {
        const auto attr = attribute_dataset(base, data.train, cfg.ig, cfg.threads);
        return rank_features(data.train, attr, cfg.top_k, cfg.weight_mode);
      });
    for (const auto& v : variants) {
      if (v.baseline) {
        res.runs[v.name].push_back(evaluate(base, data.test));
        continue;
      }
      std::vector<std::string> warn;
      auto names = select_features(*report, data.train.schema, cfg.top_k, v.selection, &warn);
      if (seed == res.seeds.front())
        for (auto& w : warn) res.warnings.push_back(v.name + ": " + w);
      MemoryModel m = build_memory_model(cfg, data.train.schema, names, seed);
      m.config().use_emb_attn = v.use_emb_attn;
      m.config().use_hidden_attn = v.use_hidden_attn;
      m.config().use_aux_logit = v.use_aux_logit;
      detail::run_stage("train-memory", [&] {
        train_memory_model(m, cfg, data, seed);
        return 0;
      });
      res.runs[v.name].push_back(evaluate(m, data.test));
    }
  }
  return res;
}

inline StudyResult run_selection_study(const ExperimentConfig& cfg, const Datasets& data,
                                       const std::vector<Selection>& selections) {
  std::vector<Variant> vs;
  for (auto s : selections) vs.push_back(Variant{.name = to_string(s), .selection = s});
  return run_study(cfg, data, vs);
}

inline std::vector<Variant> ablation_variants() {
  return {Variant{.name = "full"},
          Variant{.name = "w/o emb_attn", .use_emb_attn = false},
          Variant{.name = "w/o hidden_attn", .use_hidden_attn = false},
          Variant{.name = "w/o aux_logit", .use_aux_logit = false}};
}

inline StudyResult run_ablation_study(const ExperimentConfig& cfg, const Datasets& data) {
  return run_study(cfg, data, ablation_variants());
}

/// Rows are domains then Overall; columns are variants (mean over seeds).
inline std::string format_study_table(const StudyResult& r, const FeatureSchema& schema) {
  std::ostringstream out;
  char buf[64];
  std::size_t width = 10;
  for (const auto& v : r.variants) width = std::max(width, v.size() + 2);
  std::snprintf(buf, sizeof(buf), "%-10s", "Domain");
  out << buf;
  for (const auto& v : r.variants) out << std::string(width - v.size(), ' ') << v;
  out << '\n';
  auto cell = [&](std::optional<double> x) {
    std::string s = x ? (std::snprintf(buf, sizeof(buf), "%.4f", *x), std::string(buf)) : std::string("n/a");
    out << std::string(width - s.size(), ' ') << s;
  };
  for (std::size_t k = 0; k < schema.num_domains; ++k) {
    std::snprintf(buf, sizeof(buf), "%-10s", schema.domain_label(k).c_str());
    out << buf;
    for (const auto& v : r.variants) cell(r.mean_domain(v, k));
    out << '\n';
  }
  std::snprintf(buf, sizeof(buf), "%-10s", "Overall");
  out << buf;
  for (const auto& v : r.variants) cell(r.mean_overall(v));
  out << '\n';
  return out.str();
}

inline nlohmann::json study_to_json(const StudyResult& r, const FeatureSchema& schema) {
  auto opt = [](std::optional<double> x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["seeds"] = r.seeds;
  j["variants"] = nlohmann::json::array();
  for (const auto& v : r.variants) {
    nlohmann::json vj;
    vj["name"] = v;
    vj["mean_overall"] = opt(r.mean_overall(v));
    vj["mean_per_domain"] = nlohmann::json::array();
    for (std::size_t k = 0; k < schema.num_domains; ++k) vj["mean_per_domain"].push_back(opt(r.mean_domain(v, k)));
    vj["runs"] = nlohmann::json::array();
    for (const auto& e : r.runs.at(v)) vj["runs"].push_back(eval_to_json(e, schema));
    j["variants"].push_back(vj);
  }
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace dsfm
