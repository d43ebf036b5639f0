#include "ldyn/jepa.hpp"

#include <algorithm>

namespace ldyn {

namespace {

std::vector<std::size_t> reversed(std::vector<std::size_t> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

std::vector<std::size_t> size_list(const nlohmann::json& doc, const char* key) {
  return doc.at(key).get<std::vector<std::size_t>>();
}

Tensor<float> as_row(const Tensor<float>& v) { return v.reshaped(Shape{1, v.size()}); }

Tensor<float> row_vector(const Tensor<float>& m) { return m.reshaped(Shape{m.size()}); }

void check_latent(const Tensor<float>& v, std::size_t d, const char* what) {
  if (v.size() != d) {
    throw DimensionError(std::string(what) + " has " + std::to_string(v.size()) + " values, latent dim is " +
                         std::to_string(d));
  }
}

}  // namespace

void JepaConfig::validate() const {
  if (input_channels == 0 || emission_channels == 0) throw ContractError("channel counts must be positive");
  if (latent_dim < 1) throw ContractError("latent dimension must be at least 1");
  if (past_steps < 1) throw ContractError("past horizon must be at least 1");
  if (future_steps < 2) throw ContractError("future horizon must be at least 2");
  for (auto h : encoder_hidden)
    if (h == 0) throw ContractError("encoder widths must be positive");
  for (auto h : predictor_hidden)
    if (h == 0) throw ContractError("predictor widths must be positive");
}

MlpSpec JepaConfig::input_encoder_spec() const { return {input_channels, encoder_hidden, latent_dim}; }
MlpSpec JepaConfig::observation_encoder_spec() const {
  return {observation_width(), encoder_hidden, latent_dim};
}
MlpSpec JepaConfig::predictor_spec() const { return {2 * latent_dim, predictor_hidden, latent_dim}; }
MlpSpec JepaConfig::emission_decoder_spec() const {
  return {latent_dim, reversed(encoder_hidden), emission_channels};
}
MlpSpec JepaConfig::input_decoder_spec() const { return {latent_dim, reversed(encoder_hidden), input_channels}; }

nlohmann::json JepaConfig::to_json() const {
  return {{"input_channels", input_channels},     {"emission_channels", emission_channels},
          {"latent_dim", latent_dim},             {"past_steps", past_steps},
          {"future_steps", future_steps},         {"encoder_hidden", encoder_hidden},
          {"predictor_hidden", predictor_hidden}};
}

JepaConfig JepaConfig::from_json(const nlohmann::json& doc) {
  JepaConfig c;
  c.input_channels = doc.at("input_channels").get<std::size_t>();
  c.emission_channels = doc.at("emission_channels").get<std::size_t>();
  c.latent_dim = doc.at("latent_dim").get<std::size_t>();
  c.past_steps = doc.at("past_steps").get<std::size_t>();
  c.future_steps = doc.at("future_steps").get<std::size_t>();
  c.encoder_hidden = size_list(doc, "encoder_hidden");
  c.predictor_hidden = size_list(doc, "predictor_hidden");
  c.validate();
  return c;
}

std::string to_string(ForecastMode mode) {
  return mode == ForecastMode::TeacherForced ? "teacher-forced" : "closed-loop";
}

JepaModel::JepaModel(JepaConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      input_encoder_(config_.input_encoder_spec(), seed * 5 + 1),
      observation_encoder_(config_.observation_encoder_spec(), seed * 5 + 2),
      predictor_(config_.predictor_spec(), seed * 5 + 3),
      emission_decoder_(config_.emission_decoder_spec(), seed * 5 + 4),
      input_decoder_(config_.input_decoder_spec(), seed * 5 + 5) {
  config_.validate();
}

JepaModel::JepaModel(JepaConfig config, Mlp<float> input_encoder, Mlp<float> observation_encoder,
                     Mlp<float> predictor, Mlp<float> emission_decoder, Mlp<float> input_decoder)
    : config_(std::move(config)),
      input_encoder_(std::move(input_encoder)),
      observation_encoder_(std::move(observation_encoder)),
      predictor_(std::move(predictor)),
      emission_decoder_(std::move(emission_decoder)),
      input_decoder_(std::move(input_decoder)) {
  config_.validate();
  const std::size_t d = config_.latent_dim;
  auto check = [](const MlpSpec& s, std::size_t in, std::size_t out, const char* name) {
    if (s.input_dim != in || s.output_dim != out) {
      throw DimensionError(std::string(name) + " maps " + std::to_string(s.input_dim) + "->" +
                           std::to_string(s.output_dim) + ", expected " + std::to_string(in) + "->" +
                           std::to_string(out));
    }
  };
  check(input_encoder_.spec(), config_.input_channels, d, "input encoder");
  check(observation_encoder_.spec(), config_.observation_width(), d, "observation encoder");
  check(predictor_.spec(), 2 * d, d, "predictor");
  check(emission_decoder_.spec(), d, config_.emission_channels, "emission decoder");
  check(input_decoder_.spec(), d, config_.input_channels, "input decoder");
}

JepaModel JepaModel::zeros(JepaConfig config) {
  config.validate();
  return JepaModel(config, Mlp<float>::zeros(config.input_encoder_spec()),
                   Mlp<float>::zeros(config.observation_encoder_spec()), Mlp<float>::zeros(config.predictor_spec()),
                   Mlp<float>::zeros(config.emission_decoder_spec()), Mlp<float>::zeros(config.input_decoder_spec()));
}

std::vector<LatentInput> JepaModel::encode_inputs(const Tensor<float>& future_inputs) const {
  if (future_inputs.rank() != 2 || future_inputs.dim(1) != config_.input_channels) {
    throw DimensionError("input encoder expects [rows x " + std::to_string(config_.input_channels) + "], got " +
                         to_string(future_inputs.shape()));
  }
  const Tensor<float> encoded = input_encoder_.forward(future_inputs);
  std::vector<LatentInput> out;
  for (std::size_t r = 0; r < encoded.dim(0); ++r) out.push_back({row_vector(encoded.rows(r, r + 1))});
  return out;
}

LatentState JepaModel::encode_observations(const Tensor<float>& past_emissions) const {
  if (past_emissions.rank() != 2 || past_emissions.dim(0) != config_.past_steps ||
      past_emissions.dim(1) != config_.emission_channels) {
    throw DimensionError("observation encoder expects a [" + std::to_string(config_.past_steps) + " x " +
                         std::to_string(config_.emission_channels) + "] window, got " +
                         to_string(past_emissions.shape()));
  }
  return {row_vector(observation_encoder_.forward(as_row(past_emissions)))};
}

LatentState JepaModel::predict_next(const LatentState& s, const LatentInput& z) const {
  const std::size_t d = config_.latent_dim;
  check_latent(s.s, d, "latent state");
  check_latent(z.z, d, "latent input");
  std::vector<float> joined(s.s.values());
  joined.insert(joined.end(), z.z.values().begin(), z.z.values().end());
  return {row_vector(predictor_.forward(Tensor<float>(Shape{1, 2 * d}, std::move(joined))))};
}

std::vector<LatentState> JepaModel::rollout(const LatentState& start, const std::vector<LatentInput>& inputs,
                                            std::size_t horizon) const {
  if (horizon == 0) throw ContractError("rollout horizon must be at least 1");
  if (inputs.size() < horizon) {
    throw ContractError("rollout over " + std::to_string(horizon) + " steps needs as many latent inputs, got " +
                        std::to_string(inputs.size()));
  }
  std::vector<LatentState> out;
  out.reserve(horizon);
  LatentState current = start;
  for (std::size_t k = 0; k < horizon; ++k) {
    current = predict_next(current, inputs[k]);
    out.push_back(current);
  }
  return out;
}

Tensor<float> JepaModel::decode_emissions(const LatentState& s) const {
  check_latent(s.s, config_.latent_dim, "latent state");
  return row_vector(emission_decoder_.forward(as_row(s.s)));
}

Tensor<float> JepaModel::decode_inputs(const LatentInput& z) const {
  check_latent(z.z, config_.latent_dim, "latent input");
  return row_vector(input_decoder_.forward(as_row(z.z)));
}

Var<float> JepaModel::encode_inputs_batch(const Var<float>& inputs) const { return input_encoder_.forward(inputs); }

Var<float> JepaModel::encode_observations_batch(const Var<float>& flat_windows) const {
  return observation_encoder_.forward(flat_windows);
}

Var<float> JepaModel::predict_next_batch(const Var<float>& s, const Var<float>& z) const {
  if (s.shape() != z.shape()) {
    throw DimensionError("predictor operands differ: " + to_string(s.shape()) + " vs " + to_string(z.shape()));
  }
  return predictor_.forward(concat_cols<float>({s, z}));
}

Var<float> JepaModel::decode_emissions_batch(const Var<float>& s) const { return emission_decoder_.forward(s); }

Var<float> JepaModel::decode_inputs_batch(const Var<float>& z) const { return input_decoder_.forward(z); }

std::vector<Var<float>> JepaModel::core_parameters() const {
  std::vector<Var<float>> out;
  for (const auto* m : {&input_encoder_, &observation_encoder_, &predictor_}) {
    auto p = m->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<Var<float>> JepaModel::decoder_parameters() const {
  std::vector<Var<float>> out = emission_decoder_.parameters();
  auto p = input_decoder_.parameters();
  out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::size_t JepaModel::parameter_count() const {
  return input_encoder_.parameter_count() + observation_encoder_.parameter_count() + predictor_.parameter_count() +
         emission_decoder_.parameter_count() + input_decoder_.parameter_count();
}

JepaModel JepaModel::clone() const {
  return JepaModel(config_, input_encoder_.clone(), observation_encoder_.clone(), predictor_.clone(),
                   emission_decoder_.clone(), input_decoder_.clone());
}

Tensor<float> flatten_windows(const std::vector<const Tensor<float>*>& windows) {
  if (windows.empty()) throw ContractError("no windows to flatten");
  const std::size_t width = windows.front()->size();
  std::vector<float> data;
  data.reserve(width * windows.size());
  for (const auto* w : windows) {
    if (w->size() != width) throw DimensionError("windows differ in size");
    data.insert(data.end(), w->values().begin(), w->values().end());
  }
  return Tensor<float>(Shape{windows.size(), width}, std::move(data));
}

JepaForward jepa_forward(const JepaModel& model, const std::vector<const SequenceWindow*>& batch) {
  const auto& cfg = model.config();
  const std::size_t n = batch.size();
  const std::size_t tp = cfg.past_steps;
  const std::size_t tf = cfg.future_steps;
  const std::size_t mp = cfg.emission_channels;
  const std::size_t mu = cfg.input_channels;
  const std::size_t d = cfg.latent_dim;
  if (n == 0) throw ContractError("empty batch");

  // Rows 0..n-1 hold P_k^(-); block j (1..T_f) holds the window ending at k+j.
  Tensor<float> windows(Shape{(tf + 1) * n, tp * mp});
  // Block kappa holds u_{k+kappa}, kappa = 1..T_f-1.
  Tensor<float> inputs(Shape{(tf - 1) * n, mu});
  for (std::size_t b = 0; b < n; ++b) {
    const auto& w = *batch[b];
    if (w.past_emissions.shape() != Shape{tp, mp} || w.future_emissions.shape() != Shape{tf, mp} ||
        w.future_inputs.shape() != Shape{tf - 1, mu}) {
      throw DimensionError("window shapes do not match the model horizons");
    }
    for (std::size_t j = 0; j <= tf; ++j) {
      float* dst = &windows.at(j * n + b, 0);
      for (std::size_t r = 0; r < tp; ++r) {
        const std::size_t src = r + j;  // row in the concatenated [past; future] history
        const float* row = src < tp ? &w.past_emissions.at(src, 0) : &w.future_emissions.at(src - tp, 0);
        std::copy_n(row, mp, dst + r * mp);
      }
    }
    for (std::size_t k = 0; k + 1 < tf; ++k) std::copy_n(&w.future_inputs.at(k, 0), mu, &inputs.at(k * n + b, 0));
  }

  const Var<float> encoded = model.encode_observations_batch(Var<float>(std::move(windows)));
  const Var<float> latent_inputs = model.encode_inputs_batch(Var<float>(std::move(inputs)));

  JepaForward out;
  out.current_states = slice_rows(encoded, 0, n);
  std::vector<Var<float>> target_blocks;
  for (std::size_t j = 1; j <= tf; ++j) target_blocks.push_back(slice_rows(encoded, j * n, (j + 1) * n));
  out.targets = reshape(concat_cols(target_blocks), Shape{n, tf, d});

  std::vector<Var<float>> predicted;
  Var<float> state = out.current_states;
  for (std::size_t k = 0; k + 1 < tf; ++k) {
    const Var<float> z = slice_rows(latent_inputs, k * n, (k + 1) * n);
    if (k == 0) out.first_inputs = z;
    state = model.predict_next_batch(state, z);
    predicted.push_back(state);
  }
  out.predictions = reshape(concat_cols(predicted), Shape{n, tf - 1, d});
  return out;
}

Tensor<float> closed_loop_forecast(const JepaModel& model, const Tensor<float>& seed_window,
                                   const Tensor<float>& future_inputs, ForecastMode mode,
                                   const Tensor<float>* measurements) {
  const auto& cfg = model.config();
  const std::size_t tp = cfg.past_steps;
  const std::size_t mp = cfg.emission_channels;
  if (seed_window.shape() != Shape{tp, mp}) {
    throw DimensionError("seed window must be [" + std::to_string(tp) + " x " + std::to_string(mp) + "], got " +
                         to_string(seed_window.shape()));
  }
  if (future_inputs.rank() != 2 || future_inputs.dim(1) != cfg.input_channels) {
    throw DimensionError("future inputs must be [H x " + std::to_string(cfg.input_channels) + "], got " +
                         to_string(future_inputs.shape()));
  }
  const std::size_t horizon = future_inputs.dim(0);
  if (mode == ForecastMode::TeacherForced) {
    if (!measurements) throw ContractError("teacher-forced forecasting needs measured emissions");
    if (measurements->shape() != Shape{horizon, mp}) {
      throw DimensionError("measurements must be [" + std::to_string(horizon) + " x " + std::to_string(mp) +
                           "], got " + to_string(measurements->shape()));
    }
  }

  NoGradGuard guard;
  // history holds the seed window followed by one row per completed step.
  std::vector<float> history(seed_window.values());
  history.reserve((tp + horizon) * mp);
  Tensor<float> out(Shape{horizon, mp});
  for (std::size_t i = 0; i < horizon; ++i) {
    const auto first = history.end() - static_cast<std::ptrdiff_t>(tp * mp);
    Tensor<float> window(Shape{1, tp * mp}, std::vector<float>(first, history.end()));
    const Var<float> s = model.encode_observations_batch(Var<float>(std::move(window)));
    const Var<float> z = model.encode_inputs_batch(Var<float>(future_inputs.rows(i, i + 1)));
    const Var<float> p = model.decode_emissions_batch(model.predict_next_batch(s, z));
    std::copy_n(p.value().data().data(), mp, &out.at(i, 0));
    const float* next = mode == ForecastMode::TeacherForced ? &measurements->at(i, 0) : &out.at(i, 0);
    history.insert(history.end(), next, next + mp);
  }
  return out;
}

}  // namespace ldyn
