#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dsfm/core.hpp"
#include "json.hpp"

namespace dsfm {

enum class FeatureKind { Categorical, Numerical };
enum class Arity { Scalar, Sequential };
enum class Split { Train, Valid, Test };

/// The four ranking groups. Features are only ever compared within a group.
enum class FeatureGroup { CategoricalScalar, CategoricalSequential, NumericalScalar, NumericalSequential };

inline const char* to_string(FeatureKind k) { return k == FeatureKind::Categorical ? "categorical" : "numerical"; }
inline const char* to_string(Arity a) { return a == Arity::Scalar ? "scalar" : "sequential"; }
inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}
inline const char* to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::CategoricalScalar: return "categorical-scalar";
    case FeatureGroup::CategoricalSequential: return "categorical-sequential";
    case FeatureGroup::NumericalScalar: return "numerical-scalar";
    case FeatureGroup::NumericalSequential: return "numerical-sequential";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

inline constexpr const char* kOovToken = "<OOV>";
inline constexpr std::size_t kDefaultMaxSeqLen = 50;

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Categorical;
  Arity arity = Arity::Scalar;
  // Categorical: real values in index order; index vocab.size() is the OOV slot.
  std::vector<std::string> vocab;
  // Numerical: bins are right-closed, (edge[b], edge[b+1]], first bin also takes edge[0].
  std::size_t num_bins = 0;
  std::vector<double> bin_edges;
  std::size_t max_seq_len = kDefaultMaxSeqLen;

  bool categorical() const { return kind == FeatureKind::Categorical; }
  bool sequential() const { return arity == Arity::Sequential; }
  std::size_t vocab_size() const { return vocab.size() + 1; }
  std::size_t oov_index() const { return vocab.size(); }
  /// Size of the value set the feature's distributions live on.
  std::size_t value_count() const { return categorical() ? vocab_size() : num_bins; }
  bool has_edges() const { return !bin_edges.empty(); }

  FeatureGroup group() const {
    if (categorical()) return sequential() ? FeatureGroup::CategoricalSequential : FeatureGroup::CategoricalScalar;
    return sequential() ? FeatureGroup::NumericalSequential : FeatureGroup::NumericalScalar;
  }

  /// Bin index for a raw value; values outside the edge range clamp.
  std::size_t bin_of(double v) const {
    const auto it = std::lower_bound(bin_edges.begin(), bin_edges.end(), v);
    const auto pos = static_cast<std::ptrdiff_t>(it - bin_edges.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(pos, 0, static_cast<std::ptrdiff_t>(num_bins) - 1));
  }

  std::vector<double> bin_centers() const {
    std::vector<double> c(num_bins);
    for (std::size_t b = 0; b < num_bins; ++b) c[b] = 0.5 * (bin_edges[b] + bin_edges[b + 1]);
    return c;
  }

  void validate() const {
    if (name.empty()) throw SchemaError("feature with empty name");
    if (categorical()) {
      if (vocab_size() < 2) throw SchemaError("feature '" + name + "': vocab_size must be >= 2");
      std::unordered_set<std::string> seen;
      for (const auto& v : vocab)
        if (!seen.insert(v).second) throw SchemaError("feature '" + name + "': duplicate vocabulary entry '" + v + "'");
    } else {
      if (sequential()) throw SchemaError("feature '" + name + "': sequential features must be categorical");
      if (num_bins < 1) throw SchemaError("feature '" + name + "': num_bins must be >= 1");
      if (has_edges()) {
        if (bin_edges.size() != num_bins + 1)
          throw SchemaError("feature '" + name + "': expected num_bins+1 bin edges");
        for (std::size_t i = 1; i < bin_edges.size(); ++i)
          if (!(bin_edges[i] > bin_edges[i - 1]))
            throw SchemaError("feature '" + name + "': bin edges must be strictly increasing");
      }
    }
    if (sequential() && max_seq_len < 1) throw SchemaError("feature '" + name + "': max_seq_len must be >= 1");
  }
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string domain_field = "domain";
  std::string label_field = "label";
  std::size_t num_domains = 0;
  // Optional dictionary for string domain labels; empty means integer ids.
  std::vector<std::string> domain_names;

  std::size_t size() const { return features.size(); }
  const FeatureSpec& operator[](std::size_t j) const { return features[j]; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t j = 0; j < features.size(); ++j)
      if (features[j].name == name) return j;
    return std::nullopt;
  }
  std::size_t index_of(const std::string& name) const {
    if (auto j = find(name)) return *j;
    throw SchemaError("unknown feature '" + name + "'");
  }

  void validate() const {
    if (num_domains < 2) throw SchemaError("schema needs at least 2 domains");
    if (!domain_names.empty() && domain_names.size() != num_domains)
      throw SchemaError("domain_names length does not match num_domains");
    std::unordered_set<std::string> names;
    for (const auto& f : features) {
      f.validate();
      if (!names.insert(f.name).second) throw SchemaError("duplicate feature name '" + f.name + "'");
      if (f.name == domain_field || f.name == label_field)
        throw SchemaError("feature '" + f.name + "' collides with the domain/label column");
    }
    if (domain_field == label_field) throw SchemaError("domain and label columns must differ");
  }

  /// Domain label -> dense id.
  std::size_t encode_domain(const std::string& raw) const {
    if (!domain_names.empty()) {
      for (std::size_t k = 0; k < domain_names.size(); ++k)
        if (domain_names[k] == raw) return k;
      throw ValueError("unknown domain label '" + raw + "'");
    }
    std::size_t pos = 0;
    long long k = -1;
    try {
      k = std::stoll(raw, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != raw.size() || k < 0 || static_cast<std::size_t>(k) >= num_domains)
      throw ValueError("domain '" + raw + "' is not an id in [0, " + std::to_string(num_domains) + ")");
    return static_cast<std::size_t>(k);
  }
  std::string domain_label(std::size_t k) const {
    return domain_names.empty() ? std::to_string(k) : domain_names[k];
  }

  std::uint64_t hash() const {
    Fnv1a h;
    h.update(domain_field);
    h.update(label_field);
    h.update_value(static_cast<std::uint64_t>(num_domains));
    for (const auto& d : domain_names) h.update(d);
    for (const auto& f : features) {
      h.update(f.name);
      h.update_value(static_cast<int>(f.kind));
      h.update_value(static_cast<int>(f.arity));
      for (const auto& v : f.vocab) h.update(v);
      h.update_value(static_cast<std::uint64_t>(f.num_bins));
      for (double e : f.bin_edges) h.update_value(e);
      h.update_value(static_cast<std::uint64_t>(f.max_seq_len));
    }
    return h.digest();
  }
};

/// One encoded row. Scalar features use `values[j]` (categorical index or bin
/// index) and `raw[j]` (numerical raw value, 0 otherwise); sequential features
/// use `seqs[j]`. Vectors are indexed by schema position.
struct Sample {
  std::size_t domain = 0;
  int label = 0;
  std::vector<std::uint32_t> values;
  std::vector<double> raw;
  std::vector<std::vector<std::uint32_t>> seqs;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct MultiDomainDataset {
  FeatureSchema schema;
  std::vector<Sample> samples;
  Split split = Split::Train;

  std::size_t size() const { return samples.size(); }

  std::vector<std::size_t> domain_counts() const {
    std::vector<std::size_t> counts(schema.num_domains, 0);
    for (const auto& s : samples) ++counts[s.domain];
    return counts;
  }

  std::vector<std::size_t> domain_indices(std::size_t k) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].domain == k) idx.push_back(i);
    return idx;
  }

  void validate() const {
    schema.validate();
    const std::size_t m = schema.size();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      auto bad = [&](const std::string& what) {
        return ValueError("sample " + std::to_string(i) + ": " + what);
      };
      if (s.domain >= schema.num_domains) throw bad("domain out of range");
      if (s.label != 0 && s.label != 1) throw bad("label not in {0,1}");
      if (s.values.size() != m || s.raw.size() != m || s.seqs.size() != m) throw bad("row width mismatch");
      for (std::size_t j = 0; j < m; ++j) {
        const auto& f = schema[j];
        if (f.sequential()) {
          for (auto t : s.seqs[j])
            if (t >= f.value_count()) throw bad("token out of range in '" + f.name + "'");
        } else if (s.values[j] >= f.value_count()) {
          throw bad("value out of range in '" + f.name + "'");
        }
      }
    }
    if (split == Split::Train) {
      const auto counts = domain_counts();
      for (std::size_t k = 0; k < counts.size(); ++k)
        if (counts[k] == 0) throw ValueError("training split has no samples for domain " + schema.domain_label(k));
    }
  }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update_value(schema.hash());
    h.update_value(static_cast<int>(split));
    h.update_value(static_cast<std::uint64_t>(samples.size()));
    for (const auto& s : samples) {
      h.update_value(static_cast<std::uint64_t>(s.domain));
      h.update_value(s.label);
      for (auto v : s.values) h.update_value(v);
      for (double r : s.raw) h.update_value(r);
      for (const auto& q : s.seqs) {
        h.update_value(static_cast<std::uint64_t>(q.size()));
        for (auto t : q) h.update_value(t);
      }
    }
    return h.digest();
  }
};

/// Equal-frequency edges from raw values. Duplicate quantiles are collapsed,
/// so the result may have fewer than `num_bins` bins on heavily tied data.
inline std::vector<double> equal_frequency_edges(std::vector<double> values, std::size_t num_bins) {
  if (values.empty()) throw ValueError("cannot fit bin edges on an empty column");
  if (num_bins < 1) throw ValueError("num_bins must be >= 1");
  std::sort(values.begin(), values.end());
  std::vector<double> edges{values.front()};
  for (std::size_t b = 1; b < num_bins; ++b) {
    const double q = values[(b * values.size()) / num_bins];
    if (q > edges.back() && q < values.back()) edges.push_back(q);
  }
  edges.push_back(values.back() > edges.back() ? values.back() : edges.back() + 1.0);
  return edges;
}

/// Frequency of each value of a scalar feature within one domain.
inline std::vector<double> empirical_frequency(const MultiDomainDataset& ds, std::size_t feature, std::size_t domain) {
  const auto& f = ds.schema[feature];
  if (f.sequential()) throw ValueError("empirical_frequency: '" + f.name + "' is sequential");
  std::vector<double> counts(f.value_count(), 0.0);
  std::size_t n = 0;
  for (const auto& s : ds.samples) {
    if (s.domain != domain) continue;
    counts[s.values[feature]] += 1.0;
    ++n;
  }
  if (n == 0) throw ValueError("empirical_frequency: domain " + std::to_string(domain) + " has no samples");
  for (auto& c : counts) c /= static_cast<double>(n);
  return counts;
}

// ---------------------------------------------------------------------------
// Schema (de)serialization. The on-disk form is a JSON tree:
//   {"domain_field": "...", "label_field": "...", "num_domains": K,
//    "domain_names": [...]?,
//    "features": [{"name", "kind", "arity", "vocab": [...] | "vocab_size": n,
//                  "num_bins", "bin_edges": [...]?, "max_seq_len"?}]}

inline FeatureSpec feature_from_json(const nlohmann::json& j) {
  FeatureSpec f;
  f.name = j.at("name").get<std::string>();
  const auto kind = j.value("kind", std::string("categorical"));
  if (kind == "categorical") f.kind = FeatureKind::Categorical;
  else if (kind == "numerical") f.kind = FeatureKind::Numerical;
  else throw SchemaError("feature '" + f.name + "': unknown kind '" + kind + "'");
  const auto arity = j.value("arity", std::string("scalar"));
  if (arity == "scalar") f.arity = Arity::Scalar;
  else if (arity == "sequential") f.arity = Arity::Sequential;
  else throw SchemaError("feature '" + f.name + "': unknown arity '" + arity + "'");
  if (f.categorical()) {
    if (j.contains("vocab")) {
      f.vocab = j.at("vocab").get<std::vector<std::string>>();
    } else if (j.contains("vocab_size")) {
      // Integer tokens "0".."n-2"; the last index is OOV.
      const auto n = j.at("vocab_size").get<std::size_t>();
      if (n < 2) throw SchemaError("feature '" + f.name + "': vocab_size must be >= 2");
      for (std::size_t v = 0; v + 1 < n; ++v) f.vocab.push_back(std::to_string(v));
    } else {
      throw SchemaError("feature '" + f.name + "': categorical feature needs 'vocab' or 'vocab_size'");
    }
  } else {
    if (j.contains("bin_edges")) {
      f.bin_edges = j.at("bin_edges").get<std::vector<double>>();
      f.num_bins = f.bin_edges.empty() ? 0 : f.bin_edges.size() - 1;
      if (j.contains("num_bins") && j.at("num_bins").get<std::size_t>() != f.num_bins)
        throw SchemaError("feature '" + f.name + "': num_bins disagrees with bin_edges");
    } else {
      f.num_bins = j.at("num_bins").get<std::size_t>();
    }
  }
  f.max_seq_len = j.value("max_seq_len", kDefaultMaxSeqLen);
  return f;
}

inline nlohmann::json feature_to_json(const FeatureSpec& f) {
  nlohmann::json j;
  j["name"] = f.name;
  j["kind"] = to_string(f.kind);
  j["arity"] = to_string(f.arity);
  if (f.categorical()) {
    j["vocab"] = f.vocab;
  } else {
    j["num_bins"] = f.num_bins;
    if (f.has_edges()) j["bin_edges"] = f.bin_edges;
  }
  if (f.sequential()) j["max_seq_len"] = f.max_seq_len;
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.domain_field = j.value("domain_field", std::string("domain"));
  s.label_field = j.value("label_field", std::string("label"));
  if (j.contains("domain_names")) s.domain_names = j.at("domain_names").get<std::vector<std::string>>();
  s.num_domains = j.contains("num_domains") ? j.at("num_domains").get<std::size_t>() : s.domain_names.size();
  for (const auto& fj : j.at("features")) s.features.push_back(feature_from_json(fj));
  s.validate();
  return s;
}

inline nlohmann::json schema_to_json(const FeatureSchema& s) {
  nlohmann::json j;
  j["domain_field"] = s.domain_field;
  j["label_field"] = s.label_field;
  j["num_domains"] = s.num_domains;
  if (!s.domain_names.empty()) j["domain_names"] = s.domain_names;
  j["features"] = nlohmann::json::array();
  for (const auto& f : s.features) j["features"].push_back(feature_to_json(f));
  return j;
}

}  // namespace dsfm
