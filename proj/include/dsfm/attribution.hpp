#pragma once

#include <cstring>
#include <fstream>
#include <thread>
#include <vector>

#include "dsfm/base_model.hpp"

namespace dsfm {

enum class IgBaseline { ZeroEmbedding };

struct IgConfig {
  std::size_t steps = 5;
  IgBaseline baseline = IgBaseline::ZeroEmbedding;

  void validate() const {
    if (steps < 1) throw ConfigError("ig: steps must be >= 1");
  }
};

/// Integrated Gradients of the logit over the pooled token matrix, with a
/// right-endpoint Riemann sum at t/T, t = 1..T, against the all-zero
/// baseline. Each token row's vector attribution is summed to a scalar.
/// Returns one score per token (schema features, then the domain token when
/// the model has one).
inline std::vector<double> integrated_gradients(const BaseDnn& model, const Sample& s, const IgConfig& cfg) {
  cfg.validate();
  const Matrix z = model.tokens(s);
  Matrix grad_sum(z.rows, z.cols);
  Matrix scaled(z.rows, z.cols);
  const double T = static_cast<double>(cfg.steps);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const double alpha = static_cast<double>(t) / T;
    for (std::size_t i = 0; i < z.data.size(); ++i) scaled.data[i] = alpha * z.data[i];
    add_inplace(grad_sum, model.token_gradient(scaled));
  }
  std::vector<double> scores(z.rows, 0.0);
  for (std::size_t r = 0; r < z.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < z.cols; ++c) acc += z(r, c) * grad_sum(r, c);
    scores[r] = acc / T;
  }
  return scores;
}

/// Per-sample, per-feature attribution scores a[i][j] over schema features.
struct AttributionMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t model_fingerprint = 0;
  std::size_t steps = 0;

  double operator()(std::size_t i, std::size_t j) const { return scores[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return scores[i * cols + j]; }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update_value(dataset_fingerprint);
    h.update_value(model_fingerprint);
    h.update_value(static_cast<std::uint64_t>(steps));
    h.update_value(static_cast<std::uint64_t>(rows));
    h.update_value(static_cast<std::uint64_t>(cols));
    for (double v : scores) h.update_value(v);
    return h.digest();
  }
};

/// Runs integrated_gradients on every sample. Rows land in preassigned slots,
/// so the result does not depend on `threads`.
inline AttributionMatrix attribute_dataset(const BaseDnn& model, const MultiDomainDataset& ds, const IgConfig& cfg,
                                           std::size_t threads = 1) {
  cfg.validate();
  if (model.schema().hash() != ds.schema.hash())
    throw CompatibilityError("attribution: model was trained on a different schema than the dataset");
  AttributionMatrix out;
  out.rows = ds.size();
  out.cols = ds.schema.size();
  out.scores.assign(out.rows * out.cols, 0.0);
  out.dataset_fingerprint = ds.fingerprint();
  out.model_fingerprint = model.fingerprint();
  out.steps = cfg.steps;

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::vector<double> a;
      try {
        a = integrated_gradients(model, ds.samples[i], cfg);
      } catch (const Error& e) {
        throw StateError("attribution failed at sample " + std::to_string(i) + ": " + e.what());
      }
      for (std::size_t j = 0; j < out.cols; ++j) {
        if (!std::isfinite(a[j])) throw ValueError("attribution: non-finite score at sample " + std::to_string(i));
        out(i, j) = a[j];
      }
    }
  };

  threads = std::max<std::size_t>(1, std::min(threads, out.rows));
  if (threads == 1) {
    work(0, out.rows);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = out.rows * t / threads, e = out.rows * (t + 1) / threads;
    pool.emplace_back([&, t, b, e] {
      try {
        work(b, e);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

// Binary layout: "DSFMATTR" | u32 version | u64 dataset fp | u64 model fp |
// u64 T | u64 m | u64 |D| | |D|*m f64 scores, row-major, host byte order.
inline constexpr char kAttributionMagic[8] = {'D', 'S', 'F', 'M', 'A', 'T', 'T', 'R'};
inline constexpr std::uint32_t kAttributionVersion = 1;

inline void save_attribution(const std::string& path, const AttributionMatrix& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write attribution file '" + path + "'");
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kAttributionMagic, sizeof(kAttributionMagic));
  put(kAttributionVersion);
  put(a.dataset_fingerprint);
  put(a.model_fingerprint);
  put(static_cast<std::uint64_t>(a.steps));
  put(static_cast<std::uint64_t>(a.cols));
  put(static_cast<std::uint64_t>(a.rows));
  out.write(reinterpret_cast<const char*>(a.scores.data()), static_cast<std::streamsize>(a.scores.size() * sizeof(double)));
  if (!out) throw ParseError("failed writing attribution file '" + path + "'");
}

inline AttributionMatrix load_attribution(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open attribution file '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kAttributionMagic, sizeof(magic)) != 0)
    throw ParseError("'" + path + "' is not an attribution file");
  auto get = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof(v)); };
  std::uint32_t version = 0;
  get(version);
  if (version != kAttributionVersion) throw ParseError("unsupported attribution file version");
  AttributionMatrix a;
  std::uint64_t steps = 0, cols = 0, rows = 0;
  get(a.dataset_fingerprint);
  get(a.model_fingerprint);
  get(steps);
  get(cols);
  get(rows);
  a.steps = steps;
  a.cols = cols;
  a.rows = rows;
  a.scores.resize(rows * cols);
  in.read(reinterpret_cast<char*>(a.scores.data()), static_cast<std::streamsize>(a.scores.size() * sizeof(double)));
  if (!in) throw ParseError("attribution file '" + path + "' is truncated");
  return a;
}

}  // namespace dsfm
