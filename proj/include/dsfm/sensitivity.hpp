#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dsfm/attribution.hpp"
#include "dsfm/distance.hpp"
#include "dsfm/schema.hpp"
#include "dsfm/tensor.hpp"

namespace dsfm {

/// How signed attribution scores become nonnegative weights.
enum class WeightMode { Abs, ClampNegative };

inline const char* to_string(WeightMode m) { return m == WeightMode::Abs ? "abs" : "raw-with-clamp-at-zero"; }
inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "abs") return WeightMode::Abs;
  if (s == "raw-with-clamp-at-zero" || s == "clamp") return WeightMode::ClampNegative;
  throw ConfigError("unknown attribution weight mode '" + s + "'");
}

inline double to_weight(double a, WeightMode mode) { return mode == WeightMode::Abs ? std::abs(a) : std::max(a, 0.0); }

struct EffectWeightedDistribution {
  std::string feature;
  std::size_t domain = 0;
  std::vector<double> weights;
  double normalizer = 0.0;
  // Set when every weight in the domain was zero and raw frequencies were used.
  bool fallback = false;
};

namespace detail {

inline void check_attribution(const MultiDomainDataset& ds, const AttributionMatrix& a) {
  if (a.rows != ds.size() || a.cols != ds.schema.size())
    throw CompatibilityError("attribution matrix shape does not match the dataset");
  if (a.dataset_fingerprint != ds.fingerprint())
    throw CompatibilityError("attribution was computed on a different dataset (fingerprint " +
                             to_hex(a.dataset_fingerprint) + ")");
}

inline EffectWeightedDistribution weighted_scalar(const MultiDomainDataset& ds, const AttributionMatrix& a,
                                                  std::size_t j, std::size_t k, WeightMode mode) {
  const auto& f = ds.schema[j];
  EffectWeightedDistribution out{f.name, k, std::vector<double>(f.value_count(), 0.0), 0.0, false};
  std::vector<double> counts(f.value_count(), 0.0);
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.domain != k) continue;
    const double w = to_weight(a(i, j), mode);
    out.weights[s.values[j]] += w;
    out.normalizer += w;
    counts[s.values[j]] += 1.0;
    ++n;
  }
  if (n == 0) throw ValueError("effect_weighted_dist: domain " + std::to_string(k) + " has no samples");
  if (out.normalizer > 0.0) {
    for (auto& w : out.weights) w /= out.normalizer;
  } else {
    out.fallback = true;
    for (std::size_t r = 0; r < counts.size(); ++r) out.weights[r] = counts[r] / static_cast<double>(n);
  }
  return out;
}

inline EffectWeightedDistribution weighted_sequence(const MultiDomainDataset& ds, const AttributionMatrix& a,
                                                    std::size_t j, std::size_t k, WeightMode mode) {
  const auto& f = ds.schema[j];
  EffectWeightedDistribution out{f.name, k, std::vector<double>(f.value_count(), 0.0), 0.0, false};
  std::vector<double> unweighted(f.value_count(), 0.0);
  std::size_t included = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.domain != k || s.seqs[j].empty()) continue;
    const double w = to_weight(a(i, j), mode);
    const double per_token = 1.0 / static_cast<double>(s.seqs[j].size());
    for (auto t : s.seqs[j]) {
      out.weights[t] += w * per_token;
      unweighted[t] += per_token;
    }
    out.normalizer += w;
    ++included;
  }
  if (included == 0)
    throw ValueError("effect_weighted_dist_seq: every sequence of '" + f.name + "' is empty in domain " +
                     std::to_string(k));
  if (out.normalizer > 0.0) {
    for (auto& w : out.weights) w /= out.normalizer;
  } else {
    out.fallback = true;
    for (std::size_t r = 0; r < unweighted.size(); ++r) out.weights[r] = unweighted[r] / static_cast<double>(included);
  }
  return out;
}

}  // namespace detail

/// Attribution-weighted value distribution of a scalar feature in one domain.
inline EffectWeightedDistribution effect_weighted_dist(const MultiDomainDataset& ds, const AttributionMatrix& a,
                                                       std::size_t feature, std::size_t domain,
                                                       WeightMode mode = WeightMode::Abs) {
  if (ds.schema[feature].sequential()) throw ValueError("effect_weighted_dist: feature is sequential");
  detail::check_attribution(ds, a);
  return detail::weighted_scalar(ds, a, feature, domain, mode);
}

/// Sequential variant: each token occurrence carries w_i / L_i; samples with
/// empty sequences are skipped.
inline EffectWeightedDistribution effect_weighted_dist_seq(const MultiDomainDataset& ds, const AttributionMatrix& a,
                                                           std::size_t feature, std::size_t domain,
                                                           WeightMode mode = WeightMode::Abs) {
  if (!ds.schema[feature].sequential()) throw ValueError("effect_weighted_dist_seq: feature is scalar");
  detail::check_attribution(ds, a);
  return detail::weighted_sequence(ds, a, feature, domain, mode);
}

/// K×K symmetric matrix of pairwise distances: JS for categorical features,
/// 1-Wasserstein over `locations` for numerical ones.
inline Matrix pairwise_distances(const std::vector<std::vector<double>>& dists, FeatureKind kind,
                                 std::span<const double> locations = {}) {
  const std::size_t K = dists.size();
  if (K < 2) throw ShapeError("domain_sensitivity: need at least two domains");
  for (const auto& d : dists)
    if (d.size() != dists.front().size()) throw ShapeError("domain_sensitivity: value sets differ across domains");
  if (kind == FeatureKind::Numerical && locations.size() != dists.front().size())
    throw ShapeError("domain_sensitivity: need one location per value for numerical features");
  Matrix out(K, K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a + 1; b < K; ++b) {
      const double v = kind == FeatureKind::Categorical ? js_divergence(dists[a], dists[b])
                                                        : wasserstein_1d(locations, dists[a], dists[b]);
      out(a, b) = out(b, a) = v;
    }
  return out;
}

/// Sum of distances over unordered domain pairs.
inline double domain_sensitivity(const std::vector<std::vector<double>>& dists, FeatureKind kind,
                                 std::span<const double> locations = {}) {
  const Matrix pd = pairwise_distances(dists, kind, locations);
  double ds = 0.0;
  for (std::size_t a = 0; a < pd.rows; ++a)
    for (std::size_t b = a + 1; b < pd.cols; ++b) ds += pd(a, b);
  return ds;
}

inline const std::vector<FeatureGroup>& all_groups() {
  static const std::vector<FeatureGroup> g{FeatureGroup::CategoricalScalar, FeatureGroup::CategoricalSequential,
                                           FeatureGroup::NumericalScalar, FeatureGroup::NumericalSequential};
  return g;
}

inline FeatureGroup parse_group(const std::string& s) {
  for (auto g : all_groups())
    if (s == to_string(g)) return g;
  throw ConfigError("unknown feature group '" + s + "'");
}

struct FeatureSensitivity {
  std::string name;
  std::size_t index = 0;  // schema position
  FeatureGroup group = FeatureGroup::CategoricalScalar;
  double score = 0.0;     // DS
  std::size_t rank = 0;   // 0-based within group
  bool selected = false;
  std::vector<std::size_t> fallback_domains;
  Matrix pairwise;
  std::vector<std::vector<double>> distributions;  // per domain
};

using TopK = std::map<FeatureGroup, std::size_t>;

struct SensitivityReport {
  std::vector<FeatureSensitivity> features;             // schema order
  std::map<FeatureGroup, std::vector<std::size_t>> ranking;  // schema indices, DS descending
  TopK top_k;
  WeightMode weight_mode = WeightMode::Abs;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t attribution_fingerprint = 0;
  std::vector<std::string> warnings;

  /// Selected features in schema order.
  std::vector<std::size_t> selected() const {
    std::vector<std::size_t> out;
    for (const auto& f : features)
      if (f.selected) out.push_back(f.index);
    return out;
  }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update_value(dataset_fingerprint);
    h.update_value(attribution_fingerprint);
    for (const auto& f : features) {
      h.update(f.name);
      h.update_value(f.score);
      h.update_value(static_cast<std::uint64_t>(f.rank));
      h.update_value(f.selected);
    }
    return h.digest();
  }
};

/// Top (or bottom) k of each group, clamped to the group size; returned in
/// schema order. Clamping is reported through `warnings`.
inline std::vector<std::size_t> pick_per_group(const SensitivityReport& r, const TopK& k, bool most_sensitive,
                                               std::vector<std::string>* warnings = nullptr) {
  std::vector<std::size_t> out;
  for (const auto& [g, want] : k) {
    const auto it = r.ranking.find(g);
    const std::size_t have = it == r.ranking.end() ? 0 : it->second.size();
    if (want > have && warnings)
      warnings->push_back(std::string("top-k for group ") + to_string(g) + " clamped from " + std::to_string(want) +
                          " to " + std::to_string(have));
    const std::size_t take = std::min(want, have);
    for (std::size_t i = 0; i < take; ++i)
      out.push_back(most_sensitive ? it->second[i] : it->second[have - 1 - i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Algorithm: per-domain effect-weighted distributions for each feature,
/// DS from pairwise distances, then ranking within each of the four groups.
inline SensitivityReport rank_features(const MultiDomainDataset& ds, const AttributionMatrix& a, const TopK& top_k,
                                       WeightMode mode = WeightMode::Abs) {
  detail::check_attribution(ds, a);
  const auto& schema = ds.schema;
  SensitivityReport report;
  report.weight_mode = mode;
  report.top_k = top_k;
  report.dataset_fingerprint = a.dataset_fingerprint;
  report.attribution_fingerprint = a.fingerprint();

  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    FeatureSensitivity fs;
    fs.name = f.name;
    fs.index = j;
    fs.group = f.group();
    for (std::size_t k = 0; k < schema.num_domains; ++k) {
      auto d = f.sequential() ? detail::weighted_sequence(ds, a, j, k, mode) : detail::weighted_scalar(ds, a, j, k, mode);
      if (d.fallback) fs.fallback_domains.push_back(k);
      fs.distributions.push_back(std::move(d.weights));
    }
    const std::vector<double> centers = f.categorical() ? std::vector<double>{} : f.bin_centers();
    fs.pairwise = pairwise_distances(fs.distributions, f.kind, centers);
    for (std::size_t p = 0; p < fs.pairwise.rows; ++p)
      for (std::size_t q = p + 1; q < fs.pairwise.cols; ++q) fs.score += fs.pairwise(p, q);
    if (!fs.fallback_domains.empty())
      report.warnings.push_back("feature '" + f.name + "': all attributions zero in " +
                                std::to_string(fs.fallback_domains.size()) + " domain(s); used raw frequencies");
    report.features.push_back(std::move(fs));
  }

  for (const auto& fs : report.features) report.ranking[fs.group].push_back(fs.index);
  for (auto& [g, idx] : report.ranking) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      return report.features[x].score > report.features[y].score;
    });
    for (std::size_t r = 0; r < idx.size(); ++r) report.features[idx[r]].rank = r;
  }
  for (auto j : pick_per_group(report, top_k, true, &report.warnings)) report.features[j].selected = true;
  return report;
}

inline nlohmann::json report_to_json(const SensitivityReport& r) {
  nlohmann::json j;
  j["dataset_fingerprint"] = to_hex(r.dataset_fingerprint);
  j["attribution_fingerprint"] = to_hex(r.attribution_fingerprint);
  j["report_fingerprint"] = to_hex(r.fingerprint());
  j["weight_mode"] = to_string(r.weight_mode);
  j["top_k"] = nlohmann::json::object();
  for (const auto& [g, k] : r.top_k) j["top_k"][to_string(g)] = k;
  j["features"] = nlohmann::json::array();
  for (const auto& f : r.features) {
    nlohmann::json fj;
    fj["name"] = f.name;
    fj["index"] = f.index;
    fj["group"] = to_string(f.group);
    fj["ds"] = f.score;
    fj["rank"] = f.rank;
    fj["selected"] = f.selected;
    fj["fallback_domains"] = f.fallback_domains;
    nlohmann::json pw = nlohmann::json::array();
    for (std::size_t a = 0; a < f.pairwise.rows; ++a) {
      std::vector<double> row(f.pairwise.row(a), f.pairwise.row(a) + f.pairwise.cols);
      pw.push_back(row);
    }
    fj["pairwise"] = pw;
    fj["distributions"] = f.distributions;
    j["features"].push_back(fj);
  }
  j["ranking"] = nlohmann::json::object();
  for (const auto& [g, idx] : r.ranking) {
    nlohmann::json names = nlohmann::json::array();
    for (auto i : idx) names.push_back(r.features[i].name);
    j["ranking"][to_string(g)] = names;
  }
  j["warnings"] = r.warnings;
  return j;
}

inline SensitivityReport report_from_json(const nlohmann::json& j) {
  SensitivityReport r;
  r.dataset_fingerprint = std::stoull(j.at("dataset_fingerprint").get<std::string>(), nullptr, 16);
  r.attribution_fingerprint = std::stoull(j.at("attribution_fingerprint").get<std::string>(), nullptr, 16);
  r.weight_mode = parse_weight_mode(j.at("weight_mode").get<std::string>());
  for (const auto& [g, k] : j.at("top_k").items()) r.top_k[parse_group(g)] = k.get<std::size_t>();
  for (const auto& fj : j.at("features")) {
    FeatureSensitivity f;
    f.name = fj.at("name").get<std::string>();
    f.index = fj.at("index").get<std::size_t>();
    f.group = parse_group(fj.at("group").get<std::string>());
    f.score = fj.at("ds").get<double>();
    f.rank = fj.at("rank").get<std::size_t>();
    f.selected = fj.at("selected").get<bool>();
    f.fallback_domains = fj.at("fallback_domains").get<std::vector<std::size_t>>();
    const auto pw = fj.at("pairwise").get<std::vector<std::vector<double>>>();
    f.pairwise = Matrix(pw.size(), pw.size());
    for (std::size_t a = 0; a < pw.size(); ++a)
      for (std::size_t b = 0; b < pw[a].size(); ++b) f.pairwise(a, b) = pw[a][b];
    f.distributions = fj.at("distributions").get<std::vector<std::vector<double>>>();
    r.features.push_back(std::move(f));
  }
  for (const auto& [g, names] : j.at("ranking").items()) {
    auto& idx = r.ranking[parse_group(g)];
    for (const auto& n : names) {
      const auto name = n.get<std::string>();
      for (const auto& f : r.features)
        if (f.name == name) idx.push_back(f.index);
    }
  }
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

/// One CSV per feature: a header of value labels, then one row per domain.
inline std::vector<std::string> write_distribution_csvs(const std::string& dir, const FeatureSchema& schema,
                                                        const SensitivityReport& r) {
  std::vector<std::string> paths;
  for (const auto& f : r.features) {
    const auto& spec = schema[f.index];
    const std::string path = dir + "/" + f.name + ".csv";
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write '" + path + "'");
    out.precision(17);
    out << "domain";
    if (spec.categorical()) {
      for (const auto& v : spec.vocab) out << ',' << v;
      out << ',' << kOovToken;
    } else {
      for (double c : spec.bin_centers()) out << ',' << c;
    }
    out << '\n';
    for (std::size_t k = 0; k < f.distributions.size(); ++k) {
      out << schema.domain_label(k);
      for (double p : f.distributions[k]) out << ',' << p;
      out << '\n';
    }
    paths.push_back(path);
  }
  return paths;
}

}  // namespace dsfm
