#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dsfm/dsfm.hpp"

namespace dsfm::testing {

// Two categorical scalars, one numerical scalar, one categorical sequence.
inline FeatureSchema small_schema(std::size_t num_domains = 3) {
  FeatureSchema s;
  s.num_domains = num_domains;
  FeatureSpec a{.name = "site", .vocab = {"a", "b", "c", "d"}};
  FeatureSpec b{.name = "app", .vocab = {"x", "y", "z"}};
  FeatureSpec n{.name = "price", .kind = FeatureKind::Numerical, .num_bins = 4, .bin_edges = {0.0, 1.0, 2.0, 3.0, 4.0}};
  FeatureSpec q{.name = "hist", .arity = Arity::Sequential, .vocab = {"A", "B", "C"}, .max_seq_len = 5};
  s.features = {a, b, n, q};
  s.validate();
  return s;
}

inline Sample random_sample(const FeatureSchema& schema, Rng& rng) {
  Sample s;
  const std::size_t m = schema.size();
  s.domain = uniform_index(rng, schema.num_domains);
  s.label = uniform(rng, 0.0, 1.0) < 0.4 ? 1 : 0;
  s.values.assign(m, 0);
  s.raw.assign(m, 0.0);
  s.seqs.assign(m, {});
  for (std::size_t j = 0; j < m; ++j) {
    const auto& f = schema[j];
    if (f.sequential()) {
      const auto len = uniform_index(rng, f.max_seq_len + 1);
      for (std::size_t t = 0; t < len; ++t) s.seqs[j].push_back(static_cast<std::uint32_t>(uniform_index(rng, f.value_count())));
    } else if (f.categorical()) {
      s.values[j] = static_cast<std::uint32_t>(uniform_index(rng, f.value_count()));
    } else {
      s.raw[j] = uniform(rng, f.bin_edges.front(), f.bin_edges.back());
      s.values[j] = static_cast<std::uint32_t>(f.bin_of(s.raw[j]));
    }
  }
  return s;
}

inline MultiDomainDataset random_dataset(const FeatureSchema& schema, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  MultiDomainDataset ds;
  ds.schema = schema;
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back(random_sample(schema, rng));
  for (std::size_t k = 0; k < schema.num_domains && k < n; ++k) ds.samples[k].domain = k;
  if (n < schema.num_domains) ds.split = Split::Test;
  ds.validate();
  return ds;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.data) v = uniform(rng, -scale, scale);
  return m;
}

/// Central difference of f with respect to x, restoring x afterwards.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double x0 = x;
  x = x0 + h;
  const double fp = f();
  x = x0 - h;
  const double fm = f();
  x = x0;
  return (fp - fm) / (2.0 * h);
}

/// Relative agreement with a small absolute floor for near-zero gradients.
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-7) {
  return std::abs(analytic - numeric) <= rel * std::max(std::abs(analytic), std::abs(numeric)) + abs_floor;
}

}  // namespace dsfm::testing
