#pragma once

#include <fstream>
#include <string>

#include "dsfm/attribution.hpp"
#include "dsfm/memory_model.hpp"
#include "dsfm/sensitivity.hpp"
#include "dsfm/synthetic.hpp"
#include "dsfm/train.hpp"

namespace dsfm {

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline BaseModelConfig base_config_from_json(const nlohmann::json& j) {
  BaseModelConfig c;
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.include_domain = j.value("include_domain", c.include_domain);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json base_config_to_json(const BaseModelConfig& c) {
  return {{"embedding_dim", c.embedding_dim}, {"hidden", c.hidden}, {"include_domain", c.include_domain}, {"seed", c.seed}};
}

/// The [memory] section; embedding size and base widths come from `base`.
inline MemoryModelConfig memory_config_from_json(const nlohmann::json& j, const BaseModelConfig& base) {
  MemoryModelConfig c;
  c.base = base;
  if (j.contains("extractor_hidden")) c.extractor_hidden = j.at("extractor_hidden").get<std::vector<std::size_t>>();
  c.emb_attn_dim = j.value("emb_attn_dim", c.emb_attn_dim);
  c.hidden_attn_dim = j.value("hidden_attn_dim", c.hidden_attn_dim);
  c.emb_ffn_width = j.value("emb_ffn_width", c.emb_ffn_width);
  c.hidden_ffn_width = j.value("hidden_ffn_width", c.hidden_ffn_width);
  if (j.contains("sensitive")) c.sensitive = j.at("sensitive").get<std::vector<std::string>>();
  if (j.contains("kernel")) c.kernel = parse_kernel(j.at("kernel").get<std::string>());
  c.use_emb_attn = j.value("use_emb_attn", c.use_emb_attn);
  c.use_hidden_attn = j.value("use_hidden_attn", c.use_hidden_attn);
  c.use_aux_logit = j.value("use_aux_logit", c.use_aux_logit);
  c.extractor_domain = j.value("extractor_domain", c.extractor_domain);
  return c;
}

inline nlohmann::json memory_config_to_json(const MemoryModelConfig& c) {
  return {{"base", base_config_to_json(c.base)},
          {"extractor_hidden", c.extractor_hidden},
          {"emb_attn_dim", c.emb_attn_dim},
          {"hidden_attn_dim", c.hidden_attn_dim},
          {"emb_ffn_width", c.emb_ffn_width},
          {"hidden_ffn_width", c.hidden_ffn_width},
          {"sensitive", c.sensitive},
          {"kernel", to_string(c.kernel)},
          {"use_emb_attn", c.use_emb_attn},
          {"use_hidden_attn", c.use_hidden_attn},
          {"use_aux_logit", c.use_aux_logit},
          {"extractor_domain", c.extractor_domain}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
  c.patience = j.value("patience", c.patience);
  c.shuffle = j.value("shuffle", c.shuffle);
  c.validate();
  return c;
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs},   {"learning_rate", c.learning_rate},
          {"seed", c.seed},             {"patience", c.patience}, {"shuffle", c.shuffle}};
}

inline TopK top_k_from_json(const nlohmann::json& j) {
  TopK k;
  for (const auto& [g, v] : j.items()) k[parse_group(g)] = v.get<std::size_t>();
  return k;
}

inline nlohmann::json top_k_to_json(const TopK& k) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [g, v] : k) j[to_string(g)] = v;
  return j;
}

/// Everything one experiment needs, read from a single JSON document:
///   {"seed", "threads", "seeds",
///    "schema": {...}?, "synthetic": {...}?,
///    "splits": {"train", "valid", "test"},   // synthetic sample counts
///    "model": {...}, "memory": {...}, "train": {...},
///    "ig": {"steps", "weight_mode"}, "top_k": {"<group>": k, ...}}
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t seeds = 5;
  std::optional<FeatureSchema> schema;
  std::optional<SyntheticConfig> synthetic;
  std::size_t train_samples = 0, valid_samples = 0, test_samples = 0;
  BaseModelConfig model;
  nlohmann::json memory_section = nlohmann::json::object();
  TrainConfig train;
  IgConfig ig;
  WeightMode weight_mode = WeightMode::Abs;
  TopK top_k{{FeatureGroup::CategoricalScalar, 5}};

  /// Memory config with the sensitive set left for the caller to fill.
  MemoryModelConfig memory() const { return memory_config_from_json(memory_section, model); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["seeds"] = seeds;
    if (schema) j["schema"] = schema_to_json(*schema);
    if (synthetic) j["synthetic"] = synthetic_config_to_json(*synthetic);
    j["splits"] = {{"train", train_samples}, {"valid", valid_samples}, {"test", test_samples}};
    j["model"] = base_config_to_json(model);
    j["memory"] = memory_section;
    j["train"] = train_config_to_json(train);
    j["ig"] = {{"steps", ig.steps}, {"weight_mode", to_string(weight_mode)}};
    j["top_k"] = top_k_to_json(top_k);
    return j;
  }
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("schema")) c.schema = schema_from_json(j.at("schema"));
  if (j.contains("synthetic")) {
    c.synthetic = synthetic_config_from_json(j.at("synthetic"));
    c.train_samples = c.synthetic->num_samples;
  }
  if (j.contains("splits")) {
    const auto& s = j.at("splits");
    c.train_samples = s.value("train", c.train_samples);
    c.valid_samples = s.value("valid", c.valid_samples);
    c.test_samples = s.value("test", c.test_samples);
  }
  if (j.contains("model")) c.model = base_config_from_json(j.at("model"));
  if (j.contains("memory")) c.memory_section = j.at("memory");
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("ig")) {
    c.ig.steps = j.at("ig").value("steps", c.ig.steps);
    if (j.at("ig").contains("weight_mode")) c.weight_mode = parse_weight_mode(j.at("ig").at("weight_mode").get<std::string>());
  }
  c.ig.validate();
  if (j.contains("top_k")) c.top_k = top_k_from_json(j.at("top_k"));
  return c;
}

}  // namespace dsfm
