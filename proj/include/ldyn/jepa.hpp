#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"

#include "ldyn/data.hpp"
#include "ldyn/layers.hpp"

namespace ldyn {

struct JepaConfig {
  std::size_t input_channels = kInputChannels;        // m_u
  std::size_t emission_channels = kEmissionChannels;  // m_p
  std::size_t latent_dim = 50;                        // D
  std::size_t past_steps = 10;                        // T_p
  std::size_t future_steps = 2;                       // T_f
  std::vector<std::size_t> encoder_hidden{512, 256, 128};
  std::vector<std::size_t> predictor_hidden{512, 512, 512};

  void validate() const;
  std::size_t observation_width() const { return past_steps * emission_channels; }

  MlpSpec input_encoder_spec() const;
  MlpSpec observation_encoder_spec() const;
  MlpSpec predictor_spec() const;
  MlpSpec emission_decoder_spec() const;
  MlpSpec input_decoder_spec() const;

  nlohmann::json to_json() const;
  static JepaConfig from_json(const nlohmann::json& doc);
  bool operator==(const JepaConfig&) const = default;
};

/// Encoded emission history s_k, [D].
struct LatentState {
  Tensor<float> s;
};

/// Encoded exogenous input z_k, [D].
struct LatentInput {
  Tensor<float> z;
};

enum class ForecastMode { TeacherForced, ClosedLoop };

std::string to_string(ForecastMode mode);

// Input encoder, observation encoder, latent predictor and the two
// reconstruction decoders. Parameters are real32.
class JepaModel {
 public:
  JepaModel(JepaConfig config, std::uint64_t seed);
  JepaModel(JepaConfig config, Mlp<float> input_encoder, Mlp<float> observation_encoder, Mlp<float> predictor,
            Mlp<float> emission_decoder, Mlp<float> input_decoder);

  static JepaModel zeros(JepaConfig config);

  const JepaConfig& config() const { return config_; }
  const Mlp<float>& input_encoder() const { return input_encoder_; }
  const Mlp<float>& observation_encoder() const { return observation_encoder_; }
  const Mlp<float>& predictor() const { return predictor_; }
  const Mlp<float>& emission_decoder() const { return emission_decoder_; }
  const Mlp<float>& input_decoder() const { return input_decoder_; }

  /// Applies the input encoder to each row of future_inputs [rows × m_u].
  std::vector<LatentInput> encode_inputs(const Tensor<float>& future_inputs) const;
  /// Flattens the window [T_p × m_p] oldest row first and encodes it.
  LatentState encode_observations(const Tensor<float>& past_emissions) const;
  /// Predictor applied to the concatenation [s; z].
  LatentState predict_next(const LatentState& s, const LatentInput& z) const;
  /// Feeds each prediction back with the next input; returns `horizon`
  /// states s̃_{k+1} .. s̃_{k+horizon}. Needs at least `horizon` inputs.
  std::vector<LatentState> rollout(const LatentState& start, const std::vector<LatentInput>& inputs,
                                   std::size_t horizon) const;
  Tensor<float> decode_emissions(const LatentState& s) const;
  Tensor<float> decode_inputs(const LatentInput& z) const;

  // Batched graph versions used for training; every operand is [batch × width].
  Var<float> encode_inputs_batch(const Var<float>& inputs) const;
  Var<float> encode_observations_batch(const Var<float>& flat_windows) const;
  Var<float> predict_next_batch(const Var<float>& s, const Var<float>& z) const;
  Var<float> decode_emissions_batch(const Var<float>& s) const;
  Var<float> decode_inputs_batch(const Var<float>& z) const;

  /// Encoders and predictor (η, φ, θ).
  std::vector<Var<float>> core_parameters() const;
  std::vector<Var<float>> decoder_parameters() const;
  std::size_t parameter_count() const;

  JepaModel clone() const;

 private:
  JepaConfig config_;
  Mlp<float> input_encoder_;
  Mlp<float> observation_encoder_;
  Mlp<float> predictor_;
  Mlp<float> emission_decoder_;
  Mlp<float> input_decoder_;
};

/// Flattens windows to [count × T_p·m_p], time-major.
Tensor<float> flatten_windows(const std::vector<const Tensor<float>*>& windows);

/// Graph outputs of one JEPA training forward pass.
struct JepaForward {
  Var<float> targets;         // [N × T_f × D], encodings of the windows ending at k+1 .. k+T_f
  Var<float> predictions;     // [N × (T_f−1) × D], rollout from s_k
  Var<float> first_inputs;    // z_k, [N × D]
  Var<float> current_states;  // s_k, [N × D]
};

JepaForward jepa_forward(const JepaModel& model, const std::vector<const SequenceWindow*>& batch);

/// Forecast of emissions for H steps after the seed window.
///
/// Teacher-forced mode re-encodes measured emissions each step and needs
/// `measurements` [H × m_p]; closed-loop mode feeds decoded predictions back
/// into the rolling window and never reads measurements.
Tensor<float> closed_loop_forecast(const JepaModel& model, const Tensor<float>& seed_window,
                                   const Tensor<float>& future_inputs, ForecastMode mode,
                                   const Tensor<float>* measurements = nullptr);

}  // namespace ldyn
