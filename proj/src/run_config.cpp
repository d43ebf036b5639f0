#include "ldyn/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

namespace ldyn {

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ContractError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) throw ContractError("unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& field) {
  if (obj.contains(key)) field = obj.at(key).get<T>();
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "jepa") return ModelKind::Jepa;
  if (name == "lstm") return ModelKind::Lstm;
  throw ContractError("unknown model kind '" + name + "' (expected jepa or lstm)");
}

void RunConfig::validate() const {
  jepa.validate();
  lstm.validate();
  training.validate();
  split.validate();
  if (lstm.input_dim != kInputChannels || lstm.output_dim != kEmissionChannels) {
    throw ContractError("LSTM input/output widths are fixed by the data channels");
  }
  if (jepa.input_channels != kInputChannels || jepa.emission_channels != kEmissionChannels) {
    throw ContractError("JEPA channel counts are fixed by the data channels");
  }
}

nlohmann::json RunConfig::to_json() const {
  const auto& o = training.optimizer;
  const auto& l = training.loss;
  nlohmann::json doc{
      {"model", to_string(model)},
      {"jepa",
       {{"latent_dim", jepa.latent_dim},
        {"past_steps", jepa.past_steps},
        {"future_steps", jepa.future_steps},
        {"encoder_hidden", jepa.encoder_hidden},
        {"predictor_hidden", jepa.predictor_hidden}}},
      {"lstm", {{"hidden_width", lstm.hidden_width}, {"depth", lstm.depth}, {"timesteps", lstm.timesteps}}},
      {"loss",
       {{"eps1", l.eps1},
        {"eps2", l.eps2},
        {"w_var", l.w_var},
        {"w_inv", l.w_inv},
        {"w_cov", l.w_cov},
        {"w_xcov", l.w_xcov}}},
      {"optimizer", {{"lr", o.learning_rate}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.epsilon}}},
      {"epochs", training.epochs},
      {"decoder_epochs", training.decoder_epochs},
      {"batch_size", training.batch_size},
      {"seed", training.seed},
      {"split", {{"train", split.train}, {"validation", split.validation}, {"test", split.test}}}};
  if (!data.empty()) doc["data"] = data;
  return doc;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  RunConfig c;
  try {
    check_keys(doc,
               {"model", "jepa", "lstm", "loss", "optimizer", "epochs", "decoder_epochs", "batch_size", "seed", "split",
                "data"},
               "config");
    if (doc.contains("model")) c.model = model_kind_from_string(doc.at("model").get<std::string>());
    if (doc.contains("jepa")) {
      const auto& j = doc.at("jepa");
      check_keys(j, {"latent_dim", "past_steps", "future_steps", "encoder_hidden", "predictor_hidden"}, "config.jepa");
      read(j, "latent_dim", c.jepa.latent_dim);
      read(j, "past_steps", c.jepa.past_steps);
      read(j, "future_steps", c.jepa.future_steps);
      read(j, "encoder_hidden", c.jepa.encoder_hidden);
      read(j, "predictor_hidden", c.jepa.predictor_hidden);
    }
    if (doc.contains("lstm")) {
      const auto& j = doc.at("lstm");
      check_keys(j, {"hidden_width", "depth", "timesteps"}, "config.lstm");
      read(j, "hidden_width", c.lstm.hidden_width);
      read(j, "depth", c.lstm.depth);
      read(j, "timesteps", c.lstm.timesteps);
    }
    if (doc.contains("loss")) {
      const auto& j = doc.at("loss");
      check_keys(j, {"eps1", "eps2", "w_var", "w_inv", "w_cov", "w_xcov"}, "config.loss");
      auto& l = c.training.loss;
      read(j, "eps1", l.eps1);
      read(j, "eps2", l.eps2);
      read(j, "w_var", l.w_var);
      read(j, "w_inv", l.w_inv);
      read(j, "w_cov", l.w_cov);
      read(j, "w_xcov", l.w_xcov);
    }
    if (doc.contains("optimizer")) {
      const auto& j = doc.at("optimizer");
      check_keys(j, {"lr", "beta1", "beta2", "eps"}, "config.optimizer");
      auto& o = c.training.optimizer;
      read(j, "lr", o.learning_rate);
      read(j, "beta1", o.beta1);
      read(j, "beta2", o.beta2);
      read(j, "eps", o.epsilon);
    }
    read(doc, "epochs", c.training.epochs);
    read(doc, "decoder_epochs", c.training.decoder_epochs);
    read(doc, "batch_size", c.training.batch_size);
    read(doc, "seed", c.training.seed);
    if (doc.contains("split")) {
      const auto& j = doc.at("split");
      check_keys(j, {"train", "validation", "test"}, "config.split");
      read(j, "train", c.split.train);
      read(j, "validation", c.split.validation);
      read(j, "test", c.split.test);
    }
    read(doc, "data", c.data);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config " + path + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(doc);
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("LDYN_SEED");
  if (!raw || !*raw) return std::nullopt;
  const std::string text(raw);
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ContractError("LDYN_SEED must be a non-negative integer, got '" + text + "'");
  }
  return value;
}

}  // namespace ldyn
