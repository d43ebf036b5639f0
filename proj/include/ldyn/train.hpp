#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ldyn/data.hpp"
#include "ldyn/jepa.hpp"
#include "ldyn/layers.hpp"
#include "ldyn/losses.hpp"
#include "ldyn/optimizer.hpp"

namespace ldyn {

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t decoder_epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  AdamConfig optimizer;
  LossConfig loss;

  void validate() const;
};

/// One row of the training log; for decoder and LSTM phases only `total`
/// is meaningful and the term columns hold zeros.
struct LossLogRow {
  std::size_t step = 0;
  double variance = 0.0;
  double invariance = 0.0;
  double covariance = 0.0;
  double cross_covariance = 0.0;
  double total = 0.0;
};

using LossLogger = std::function<void(const LossLogRow&)>;

inline constexpr const char* kTrainingLogHeader = "step,L_v,L_i,L_c,L_xc,total";

struct TrainingSummary {
  std::size_t steps = 0;
  double final_epoch_loss = 0.0;  // mean total loss over the last epoch
};

/// Trains the encoders and predictor on the composite latent loss. On a
/// non-finite loss the parameters are restored to the end of the last
/// completed epoch and NumericError is thrown.
TrainingSummary train_jepa_core(JepaModel& model, const std::vector<SequenceWindow>& windows,
                                const TrainOptions& options, const LossLogger& logger = {});

/// Trains both decoders with plain MSE against frozen encoder/predictor
/// outputs. Only decoder parameters change.
TrainingSummary train_decoders(JepaModel& model, const std::vector<SequenceWindow>& windows,
                               const TrainOptions& options, const LossLogger& logger = {});

/// Sequence-to-emission samples for the recurrent baseline: the input
/// history u_{t−timesteps+1..t} paired with p_t.
struct LstmSamples {
  Tensor<float> inputs;   // [count × timesteps × m_u]
  Tensor<float> targets;  // [count × m_p]
  std::size_t count() const { return targets.dim(0); }
};

LstmSamples make_lstm_samples(const NormalizedSeries& series, std::size_t timesteps, std::size_t first_target = 0);

/// Trains on the weighted MSE (unit weights).
TrainingSummary train_lstm(Lstm<float>& model, const LstmSamples& samples, const TrainOptions& options,
                           const LossLogger& logger = {});

}  // namespace ldyn
