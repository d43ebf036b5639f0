#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "ldyn/compress.hpp"
#include "ldyn/data.hpp"
#include "ldyn/jepa.hpp"
#include "ldyn/layers.hpp"
#include "ldyn/train.hpp"

namespace ldyn {

/// Training run settings. The JSON form mirrors the fields; keys that are
/// not listed here are rejected.
struct RunConfig {
  ModelKind model = ModelKind::Jepa;
  JepaConfig jepa;
  LstmSpec lstm;
  TrainOptions training;
  SplitFractions split;
  std::string data;  // optional; the command line wins

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
};

ModelKind model_kind_from_string(const std::string& name);

RunConfig load_run_config(const std::string& path);

/// Reads LDYN_SEED; throws ContractError when it is set but not an integer.
std::optional<std::uint64_t> seed_from_environment();

}  // namespace ldyn
