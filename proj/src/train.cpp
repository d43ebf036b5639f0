#include "ldyn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldyn/rng.hpp"

namespace ldyn {

void TrainOptions::validate() const {
  if (batch_size < 2) throw ContractError("batch size must be at least 2");
  if (!(optimizer.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ContractError("Adam betas must lie in [0, 1)");
  }
  if (!(optimizer.epsilon > 0.0)) throw ContractError("Adam eps must be positive");
  loss.validate();
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    if (end - start < 2) break;  // batch statistics need two samples
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<Tensor<float>> snapshot(const std::vector<Var<float>>& params) {
  std::vector<Tensor<float>> out;
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

void restore(std::vector<Var<float>>& params, const std::vector<Tensor<float>>& saved) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = saved[i];
}

Tensor<float> gather_rows(const Tensor<float>& source, const std::vector<std::size_t>& rows) {
  const std::size_t width = source.size() / source.dim(0);
  Shape shape = source.shape();
  shape[0] = rows.size();
  std::vector<float> data;
  data.reserve(rows.size() * width);
  for (auto r : rows) {
    const auto first = source.values().begin() + static_cast<std::ptrdiff_t>(r * width);
    data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(width));
  }
  return Tensor<float>(std::move(shape), std::move(data));
}

// Runs `epochs` passes of minibatch Adam over `count` samples. `loss_fn`
// builds the graph for one batch and may fill the log row.
template <class LossFn>
TrainingSummary run_epochs(std::vector<Var<float>> params, std::size_t count, const TrainOptions& options,
                           std::size_t epochs, std::uint64_t seed, const LossLogger& logger, LossFn&& loss_fn) {
  options.validate();
  if (count < 2) throw ContractError("training needs at least two samples");
  Adam<float> opt(params, options.optimizer);
  Rng rng(seed);
  TrainingSummary summary;
  auto last_good = snapshot(params);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double epoch_total = 0.0;
    std::size_t epoch_batches_seen = 0;
    for (const auto& batch : epoch_batches(count, options.batch_size, rng)) {
      LossLogRow row;
      row.step = summary.steps;
      try {
        const Var<float> loss = loss_fn(batch, row);
        row.total = loss.item();
        if (!std::isfinite(row.total)) throw NumericError("loss is " + std::to_string(row.total));
        opt.zero_grad();
        backward(loss);
        opt.step();
      } catch (const NumericError& e) {
        restore(params, last_good);
        throw NumericError("training diverged at step " + std::to_string(summary.steps) + " (" + e.what() + ")");
      }
      if (logger) logger(row);
      epoch_total += row.total;
      ++epoch_batches_seen;
      ++summary.steps;
    }
    summary.final_epoch_loss = epoch_batches_seen ? epoch_total / static_cast<double>(epoch_batches_seen) : 0.0;
    last_good = snapshot(params);
  }
  return summary;
}

}  // namespace

TrainingSummary train_jepa_core(JepaModel& model, const std::vector<SequenceWindow>& windows,
                                const TrainOptions& options, const LossLogger& logger) {
  return run_epochs(model.core_parameters(), windows.size(), options, options.epochs, options.seed, logger,
                    [&](const std::vector<std::size_t>& batch, LossLogRow& row) {
                      std::vector<const SequenceWindow*> items;
                      for (auto i : batch) items.push_back(&windows[i]);
                      const JepaForward fwd = jepa_forward(model, items);
                      const auto terms = composite_loss(fwd.targets, fwd.predictions, fwd.first_inputs,
                                                        fwd.current_states, options.loss);
                      row.variance = terms.variance.item();
                      row.invariance = terms.invariance.item();
                      row.covariance = terms.covariance.item();
                      row.cross_covariance = terms.cross_covariance.item();
                      return terms.total;
                    });
}

TrainingSummary train_decoders(JepaModel& model, const std::vector<SequenceWindow>& windows,
                               const TrainOptions& options, const LossLogger& logger) {
  if (windows.empty()) throw ContractError("no windows for decoder training");
  const std::size_t n = windows.size();
  const std::size_t d = model.config().latent_dim;
  const std::size_t mp = model.config().emission_channels;
  const std::size_t mu = model.config().input_channels;

  // Frozen latents, computed once: encoded s_{k+1}, predicted s̃_{k+1} and z_k.
  Tensor<float> encoded(Shape{n, d});
  Tensor<float> predicted(Shape{n, d});
  Tensor<float> latent_inputs(Shape{n, d});
  Tensor<float> next_emissions(Shape{n, mp});
  Tensor<float> inputs(Shape{n, mu});
  {
    NoGradGuard guard;
    constexpr std::size_t chunk = 512;
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t end = std::min(n, start + chunk);
      std::vector<const SequenceWindow*> items;
      for (std::size_t i = start; i < end; ++i) items.push_back(&windows[i]);
      const JepaForward fwd = jepa_forward(model, items);
      for (std::size_t b = 0; b < items.size(); ++b) {
        const std::size_t i = start + b;
        std::copy_n(&fwd.targets.value().at(b, 0, 0), d, &encoded.at(i, 0));
        std::copy_n(&fwd.predictions.value().at(b, 0, 0), d, &predicted.at(i, 0));
        std::copy_n(&fwd.first_inputs.value().at(b, 0), d, &latent_inputs.at(i, 0));
        std::copy_n(&items[b]->future_emissions.at(0, 0), mp, &next_emissions.at(i, 0));
        std::copy_n(&items[b]->future_inputs.at(0, 0), mu, &inputs.at(i, 0));
      }
    }
  }

  const auto core_before = snapshot(model.core_parameters());
  const WmseWeights emission_weights = WmseWeights::uniform(mp);
  const WmseWeights input_weights = WmseWeights::uniform(mu);
  auto summary = run_epochs(model.decoder_parameters(), n, options, options.decoder_epochs, options.seed + 1, logger,
                            [&](const std::vector<std::size_t>& batch, LossLogRow&) {
                              const Var<float> latent = concat_rows<float>(
                                  {Var<float>(gather_rows(encoded, batch)), Var<float>(gather_rows(predicted, batch))});
                              const Tensor<float> target_rows = gather_rows(next_emissions, batch);
                              const Var<float> target = concat_rows<float>({Var<float>(target_rows), Var<float>(target_rows)});
                              const Var<float> emission_loss =
                                  wmse_loss(model.decode_emissions_batch(latent), target, emission_weights);
                              const Var<float> input_loss =
                                  wmse_loss(model.decode_inputs_batch(Var<float>(gather_rows(latent_inputs, batch))),
                                            Var<float>(gather_rows(inputs, batch)), input_weights);
                              return add(emission_loss, input_loss);
                            });
  const auto core_after = snapshot(model.core_parameters());
  if (core_before != core_after) throw ContractError("decoder training modified encoder or predictor parameters");
  return summary;
}

LstmSamples make_lstm_samples(const NormalizedSeries& series, std::size_t timesteps, std::size_t first_target) {
  const std::size_t len = series.length();
  const std::size_t start = std::max(first_target, timesteps - 1);
  if (timesteps == 0 || start >= len) throw ContractError("series too short for the LSTM input window");
  const std::size_t count = len - start;
  const std::size_t mu = series.inputs.dim(1);
  const std::size_t mp = series.emissions.dim(1);
  LstmSamples out{Tensor<float>(Shape{count, timesteps, mu}), Tensor<float>(Shape{count, mp})};
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t t = start + i;
    for (std::size_t s = 0; s < timesteps; ++s) {
      std::copy_n(&series.inputs.at(t + 1 - timesteps + s, 0), mu, &out.inputs.at(i, s, 0));
    }
    std::copy_n(&series.emissions.at(t, 0), mp, &out.targets.at(i, 0));
  }
  return out;
}

TrainingSummary train_lstm(Lstm<float>& model, const LstmSamples& samples, const TrainOptions& options,
                           const LossLogger& logger) {
  if (samples.inputs.dim(1) != model.spec().timesteps) throw DimensionError("LSTM samples have the wrong length");
  const WmseWeights weights = WmseWeights::uniform(samples.targets.dim(1));
  return run_epochs(model.parameters(), samples.count(), options, options.epochs, options.seed, logger,
                    [&](const std::vector<std::size_t>& batch, LossLogRow&) {
                      const Var<float> x(gather_rows(samples.inputs, batch));
                      const Var<float> y(gather_rows(samples.targets, batch));
                      return wmse_loss(model.forward(x), y, weights);
                    });
}

}  // namespace ldyn
