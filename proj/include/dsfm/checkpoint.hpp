#pragma once

#include <string>

#include "dsfm/config.hpp"

namespace dsfm {

// Checkpoints are JSON documents:
//   {"format": "dsfm-checkpoint", "version": 1, "model_type": "base"|"memory",
//    "schema_hash": hex, "schema": {...}, "config": {...},
//    "params": {"<name>": {"rows", "cols", "data": [...]}}, "fingerprint": hex}
// Doubles are written with round-trip precision, so save/load is exact.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json params_to_json(const std::vector<Param*>& ps) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* p : ps) j[p->name] = {{"rows", p->value.rows}, {"cols", p->value.cols}, {"data", p->value.data}};
  return j;
}

inline void params_from_json(const nlohmann::json& j, const std::vector<Param*>& ps) {
  for (auto* p : ps) {
    if (!j.contains(p->name)) throw CompatibilityError("checkpoint is missing parameter '" + p->name + "'");
    const auto& pj = j.at(p->name);
    if (pj.at("rows").get<std::size_t>() != p->value.rows || pj.at("cols").get<std::size_t>() != p->value.cols)
      throw CompatibilityError("checkpoint parameter '" + p->name + "' has the wrong shape");
    p->value.data = pj.at("data").get<std::vector<double>>();
  }
}

inline const nlohmann::json& checked_header(const nlohmann::json& j, const std::string& type,
                                            const FeatureSchema* expected) {
  if (j.value("format", std::string()) != "dsfm-checkpoint") throw CompatibilityError("not a dsfm checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw CompatibilityError("unsupported checkpoint version");
  if (j.value("model_type", std::string()) != type)
    throw CompatibilityError("checkpoint holds a '" + j.value("model_type", std::string("?")) + "' model, expected '" +
                             type + "'");
  const auto stored = schema_from_json(j.at("schema"));
  if (to_hex(stored.hash()) != j.at("schema_hash").get<std::string>())
    throw CompatibilityError("checkpoint schema hash does not match its embedded schema");
  if (expected && expected->hash() != stored.hash())
    throw CompatibilityError("checkpoint was trained on a different schema (hash " + to_hex(stored.hash()) + ")");
  return j;
}

}  // namespace detail

inline std::string checkpoint_type(const nlohmann::json& j) { return j.value("model_type", std::string()); }

inline nlohmann::json base_checkpoint(const BaseDnn& m) {
  auto& mm = const_cast<BaseDnn&>(m);
  return {{"format", "dsfm-checkpoint"},
          {"version", kCheckpointVersion},
          {"model_type", "base"},
          {"schema_hash", to_hex(m.schema().hash())},
          {"schema", schema_to_json(m.schema())},
          {"config", base_config_to_json(m.config())},
          {"params", detail::params_to_json(mm.params())},
          {"fingerprint", to_hex(m.fingerprint())}};
}

inline BaseDnn base_from_checkpoint(const nlohmann::json& j, const FeatureSchema* expected = nullptr) {
  detail::checked_header(j, "base", expected);
  BaseDnn m(schema_from_json(j.at("schema")), base_config_from_json(j.at("config")));
  detail::params_from_json(j.at("params"), m.params());
  if (to_hex(m.fingerprint()) != j.at("fingerprint").get<std::string>())
    throw CompatibilityError("checkpoint parameters do not match the recorded fingerprint");
  return m;
}

inline nlohmann::json memory_checkpoint(const MemoryModel& m) {
  auto& mm = const_cast<MemoryModel&>(m);
  return {{"format", "dsfm-checkpoint"},
          {"version", kCheckpointVersion},
          {"model_type", "memory"},
          {"schema_hash", to_hex(m.schema().hash())},
          {"schema", schema_to_json(m.schema())},
          {"config", memory_config_to_json(m.config())},
          {"params", detail::params_to_json(mm.params())},
          {"fingerprint", to_hex(m.fingerprint())}};
}

inline MemoryModel memory_from_checkpoint(const nlohmann::json& j, const FeatureSchema* expected = nullptr) {
  detail::checked_header(j, "memory", expected);
  const auto& cj = j.at("config");
  const auto base = base_config_from_json(cj.at("base"));
  MemoryModel m(schema_from_json(j.at("schema")), memory_config_from_json(cj, base));
  detail::params_from_json(j.at("params"), m.params());
  if (to_hex(m.fingerprint()) != j.at("fingerprint").get<std::string>())
    throw CompatibilityError("checkpoint parameters do not match the recorded fingerprint");
  return m;
}

}  // namespace dsfm
