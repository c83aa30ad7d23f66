#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dsfm/schema.hpp"

namespace dsfm {

/// Generation knobs for one feature.
struct SyntheticFeature {
  std::string name;
  FeatureKind kind = FeatureKind::Categorical;
  Arity arity = Arity::Scalar;
  std::size_t cardinality = 20;  // categorical: real values (OOV is extra)
  std::size_t num_bins = 10;     // numerical: equal-width bins over [0, 1]
  std::size_t max_seq_len = 8;   // sequential: lengths are uniform in [0, max_seq_len]
  double effect_scale = 0.5;     // std-dev of the domain-shared label effect
  bool planted_sensitive = false;
  double domain_value_shift = 0.0;   // in [0,1]; 1 = disjoint per-domain supports
  double domain_effect_shift = 0.0;  // std-dev of the per-domain effect perturbation
};

struct SyntheticConfig {
  std::size_t num_domains = 4;
  std::vector<double> domain_proportions{0.8, 0.1, 0.06, 0.04};
  std::size_t num_samples = 10000;
  std::vector<SyntheticFeature> features;
  double base_positive_rate = 0.2;
  std::vector<double> positive_rates;  // optional per-domain override
  std::uint64_t seed = 1;

  void validate() const {
    if (num_domains < 2) throw ConfigError("synthetic: num_domains must be >= 2");
    if (domain_proportions.size() != num_domains) throw ConfigError("synthetic: need one proportion per domain");
    double total = 0.0;
    for (double p : domain_proportions) {
      if (!(p >= 0.0)) throw ConfigError("synthetic: proportions must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synthetic: proportions must sum to 1");
    if (num_samples == 0) throw ConfigError("synthetic: num_samples must be positive");
    if (features.empty()) throw ConfigError("synthetic: no features declared");
    if (!(base_positive_rate > 0.0 && base_positive_rate < 1.0))
      throw ConfigError("synthetic: base_positive_rate must be in (0,1)");
    if (!positive_rates.empty()) {
      if (positive_rates.size() != num_domains) throw ConfigError("synthetic: need one positive rate per domain");
      for (double r : positive_rates)
        if (!(r > 0.0 && r < 1.0)) throw ConfigError("synthetic: positive rates must be in (0,1)");
    }
    for (const auto& f : features) {
      if (f.kind == FeatureKind::Numerical && f.arity == Arity::Sequential)
        throw ConfigError("synthetic: '" + f.name + "': sequential features must be categorical");
      if (f.kind == FeatureKind::Categorical && f.cardinality < num_domains)
        throw ConfigError("synthetic: '" + f.name + "': cardinality must be >= num_domains");
      if (f.kind == FeatureKind::Numerical && f.num_bins < 1) throw ConfigError("synthetic: '" + f.name + "': num_bins");
      if (!(f.domain_value_shift >= 0.0 && f.domain_value_shift <= 1.0))
        throw ConfigError("synthetic: '" + f.name + "': domain_value_shift must be in [0,1]");
      if (!f.planted_sensitive && (f.domain_value_shift != 0.0 || f.domain_effect_shift != 0.0))
        throw ConfigError("synthetic: '" + f.name + "': only planted features may carry domain shifts");
    }
  }

  std::vector<std::string> planted() const {
    std::vector<std::string> out;
    for (const auto& f : features)
      if (f.planted_sensitive) out.push_back(f.name);
    return out;
  }

  FeatureSchema schema() const {
    FeatureSchema s;
    s.num_domains = num_domains;
    for (const auto& g : features) {
      FeatureSpec f;
      f.name = g.name;
      f.kind = g.kind;
      f.arity = g.arity;
      if (g.kind == FeatureKind::Categorical) {
        for (std::size_t v = 0; v < g.cardinality; ++v) f.vocab.push_back("v" + std::to_string(v));
      } else {
        f.num_bins = g.num_bins;
        for (std::size_t b = 0; b <= g.num_bins; ++b) f.bin_edges.push_back(static_cast<double>(b) / g.num_bins);
      }
      if (g.arity == Arity::Sequential) f.max_seq_len = std::max<std::size_t>(g.max_seq_len, 1);
      s.features.push_back(std::move(f));
    }
    s.validate();
    return s;
  }
};

/// Twelve-feature benchmark: six categorical scalars (c0, c1 planted), four
/// numerical scalars (n0 planted) and two categorical sequences.
inline SyntheticConfig planted_preset(std::size_t num_samples = 100000, std::uint64_t seed = 1,
                                      double value_shift = 0.6, double effect_shift = 1.5) {
  SyntheticConfig c;
  c.num_samples = num_samples;
  c.seed = seed;
  auto add = [&](std::string name, FeatureKind kind, Arity arity, bool planted) {
    SyntheticFeature f;
    f.name = std::move(name);
    f.kind = kind;
    f.arity = arity;
    if (planted) {
      f.planted_sensitive = true;
      f.domain_value_shift = value_shift;
      f.domain_effect_shift = effect_shift;
    }
    c.features.push_back(std::move(f));
  };
  for (int i = 0; i < 6; ++i) add("c" + std::to_string(i), FeatureKind::Categorical, Arity::Scalar, i < 2);
  for (int i = 0; i < 4; ++i) add("n" + std::to_string(i), FeatureKind::Numerical, Arity::Scalar, i == 0);
  for (int i = 0; i < 2; ++i) add("s" + std::to_string(i), FeatureKind::Categorical, Arity::Sequential, false);
  c.validate();
  return c;
}

namespace detail {

inline double sigmoid_scalar(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline std::size_t sample_discrete(Rng& rng, const std::vector<double>& cdf) {
  const double u = uniform(rng, 0.0, cdf.back());
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

inline std::vector<double> to_cdf(const std::vector<double>& p) {
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  return cdf;
}

// Per-feature world state shared by every split generated from one config.
struct FeatureWorld {
  std::vector<std::vector<double>> value_cdf;  // per domain (categorical)
  std::vector<std::vector<double>> effect;     // per domain, per value (categorical)
  std::vector<double> slope;                   // per domain (numerical)
};

struct World {
  std::vector<FeatureWorld> features;
  std::vector<double> bias;
  std::vector<double> domain_cdf;
};

inline double draw_numeric(Rng& rng, const SyntheticFeature& g, std::size_t k, std::size_t K) {
  if (g.domain_value_shift > 0.0 && uniform(rng, 0.0, 1.0) < g.domain_value_shift)
    return uniform(rng, static_cast<double>(k) / K, static_cast<double>(k + 1) / K);
  return uniform(rng, 0.0, 1.0);
}

// Draws one row and returns its label logit minus the domain bias.
inline double draw_row(Rng& rng, const SyntheticConfig& cfg, const World& w, std::size_t k, Sample& s) {
  const std::size_t m = cfg.features.size();
  s.domain = k;
  s.values.assign(m, 0);
  s.raw.assign(m, 0.0);
  s.seqs.assign(m, {});
  double logit = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto& g = cfg.features[j];
    const auto& fw = w.features[j];
    if (g.kind == FeatureKind::Numerical) {
      const double x = draw_numeric(rng, g, k, cfg.num_domains);
      s.raw[j] = x;
      std::size_t b = static_cast<std::size_t>(x * g.num_bins);
      s.values[j] = static_cast<std::uint32_t>(std::min(b, g.num_bins - 1));
      logit += fw.slope[k] * (2.0 * x - 1.0);
    } else if (g.arity == Arity::Sequential) {
      const std::size_t len = uniform_index(rng, g.max_seq_len + 1);
      double acc = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const auto v = sample_discrete(rng, fw.value_cdf[k]);
        s.seqs[j].push_back(static_cast<std::uint32_t>(v));
        acc += fw.effect[k][v];
      }
      if (len > 0) logit += acc / static_cast<double>(len);
    } else {
      const auto v = sample_discrete(rng, fw.value_cdf[k]);
      s.values[j] = static_cast<std::uint32_t>(v);
      logit += fw.effect[k][v];
    }
  }
  return logit;
}

inline World build_world(const SyntheticConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "synthetic/world"));
  const std::size_t K = cfg.num_domains;
  World w;
  for (const auto& g : cfg.features) {
    FeatureWorld fw;
    if (g.kind == FeatureKind::Categorical) {
      const std::size_t n = g.cardinality;
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
      // Zipf-like popularity over a random value order.
      std::vector<double> base(n);
      for (std::size_t r = 0; r < n; ++r) base[perm[r]] = 1.0 / std::pow(static_cast<double>(r + 1), 0.8);
      const double bsum = std::accumulate(base.begin(), base.end(), 0.0);
      for (auto& b : base) b /= bsum;
      std::vector<double> shared_effect(n);
      for (auto& e : shared_effect) e = g.effect_scale * normal(rng);
      for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> p = base;
        if (g.domain_value_shift > 0.0) {
          // Domain k owns a contiguous block of the permuted value order.
          std::vector<double> own(n, 0.0);
          const std::size_t lo = k * n / K, hi = (k + 1) * n / K;
          double osum = 0.0;
          for (std::size_t r = lo; r < hi; ++r) osum += (own[perm[r]] = base[perm[r]]);
          for (std::size_t v = 0; v < n; ++v)
            p[v] = (1.0 - g.domain_value_shift) * base[v] + g.domain_value_shift * own[v] / osum;
        }
        fw.value_cdf.push_back(to_cdf(p));
        std::vector<double> eff = shared_effect;
        if (g.domain_effect_shift > 0.0)
          for (auto& e : eff) e += g.domain_effect_shift * normal(rng);
        fw.effect.push_back(std::move(eff));
      }
    } else {
      const double shared = g.effect_scale * normal(rng);
      for (std::size_t k = 0; k < K; ++k)
        fw.slope.push_back(shared + (g.domain_effect_shift > 0.0 ? g.domain_effect_shift * normal(rng) : 0.0));
    }
    w.features.push_back(std::move(fw));
  }
  w.domain_cdf = to_cdf(cfg.domain_proportions);

  // Calibrate per-domain bias on a pilot draw so each domain hits its target rate.
  constexpr std::size_t kPilot = 4000;
  Sample scratch;
  for (std::size_t k = 0; k < K; ++k) {
    const double target = cfg.positive_rates.empty() ? cfg.base_positive_rate : cfg.positive_rates[k];
    std::vector<double> logits(kPilot);
    for (auto& l : logits) l = draw_row(rng, cfg, w, k, scratch);
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      double mean = 0.0;
      for (double l : logits) mean += sigmoid_scalar(mid + l);
      (mean / kPilot < target ? lo : hi) = mid;
    }
    w.bias.push_back(0.5 * (lo + hi));
  }
  return w;
}

}  // namespace detail

/// Draws a dataset from the planted logistic world described by `cfg`. The
/// world (value distributions, effects, biases) depends only on cfg.seed, so
/// train/valid/test splits drawn from the same config share it.
inline MultiDomainDataset generate_synthetic(const SyntheticConfig& cfg, Split split = Split::Train,
                                             std::size_t num_samples = 0) {
  cfg.validate();
  const auto world = detail::build_world(cfg);
  Rng rng(derive_seed(cfg.seed, std::string("synthetic/") + to_string(split)));
  MultiDomainDataset ds;
  ds.schema = cfg.schema();
  ds.split = split;
  const std::size_t n = num_samples ? num_samples : cfg.num_samples;
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    const std::size_t k = detail::sample_discrete(rng, world.domain_cdf);
    const double logit = world.bias[k] + detail::draw_row(rng, cfg, world, k, s);
    s.label = uniform(rng, 0.0, 1.0) < detail::sigmoid_scalar(logit) ? 1 : 0;
  }
  const auto counts = ds.domain_counts();
  for (std::size_t k = 0; k < counts.size(); ++k)
    if (counts[k] == 0)
      throw ConfigError("synthetic: domain " + std::to_string(k) + " received no samples; raise its proportion or N");
  ds.validate();
  return ds;
}

inline SyntheticFeature synthetic_feature_from_json(const nlohmann::json& j) {
  SyntheticFeature f;
  f.name = j.at("name").get<std::string>();
  const auto kind = j.value("kind", std::string("categorical"));
  if (kind != "categorical" && kind != "numerical") throw ConfigError("synthetic: unknown kind '" + kind + "'");
  f.kind = kind == "numerical" ? FeatureKind::Numerical : FeatureKind::Categorical;
  const auto arity = j.value("arity", std::string("scalar"));
  if (arity != "scalar" && arity != "sequential") throw ConfigError("synthetic: unknown arity '" + arity + "'");
  f.arity = arity == "sequential" ? Arity::Sequential : Arity::Scalar;
  f.cardinality = j.value("cardinality", f.cardinality);
  f.num_bins = j.value("num_bins", f.num_bins);
  f.max_seq_len = j.value("max_seq_len", f.max_seq_len);
  f.effect_scale = j.value("effect_scale", f.effect_scale);
  f.planted_sensitive = j.value("planted_sensitive", false);
  f.domain_value_shift = j.value("domain_value_shift", 0.0);
  f.domain_effect_shift = j.value("domain_effect_shift", 0.0);
  return f;
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.num_domains = j.value("num_domains", c.num_domains);
  if (j.contains("domain_proportions")) c.domain_proportions = j.at("domain_proportions").get<std::vector<double>>();
  c.num_samples = j.value("num_samples", c.num_samples);
  c.base_positive_rate = j.value("base_positive_rate", c.base_positive_rate);
  if (j.contains("positive_rates")) c.positive_rates = j.at("positive_rates").get<std::vector<double>>();
  c.seed = j.value("seed", c.seed);
  for (const auto& fj : j.at("features")) c.features.push_back(synthetic_feature_from_json(fj));
  c.validate();
  return c;
}

inline nlohmann::json synthetic_config_to_json(const SyntheticConfig& c) {
  nlohmann::json j;
  j["num_domains"] = c.num_domains;
  j["domain_proportions"] = c.domain_proportions;
  j["num_samples"] = c.num_samples;
  j["base_positive_rate"] = c.base_positive_rate;
  if (!c.positive_rates.empty()) j["positive_rates"] = c.positive_rates;
  j["seed"] = c.seed;
  j["features"] = nlohmann::json::array();
  for (const auto& f : c.features)
    j["features"].push_back({{"name", f.name},
                             {"kind", to_string(f.kind)},
                             {"arity", to_string(f.arity)},
                             {"cardinality", f.cardinality},
                             {"num_bins", f.num_bins},
                             {"max_seq_len", f.max_seq_len},
                             {"effect_scale", f.effect_scale},
                             {"planted_sensitive", f.planted_sensitive},
                             {"domain_value_shift", f.domain_value_shift},
                             {"domain_effect_shift", f.domain_effect_shift}});
  return j;
}

}  // namespace dsfm
