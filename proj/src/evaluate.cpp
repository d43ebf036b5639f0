#include "ldyn/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ldyn/losses.hpp"

namespace ldyn {

namespace {

void require_rows(const NormalizedSeries& series, std::size_t first_row, std::size_t history) {
  if (first_row < history) {
    throw ContractError("prediction needs " + std::to_string(history) + " history rows, first row is " +
                        std::to_string(first_row));
  }
  if (first_row >= series.length()) {
    throw ContractError("series of length " + std::to_string(series.length()) + " is shorter than one window");
  }
}

}  // namespace

Tensor<float> actual_emissions(const NormalizedSeries& series, std::size_t first_row) {
  return series.emissions.rows(first_row, series.length());
}

Tensor<float> predict_jepa(const JepaModel& model, const NormalizedSeries& series, ForecastMode mode,
                           std::size_t first_row) {
  const std::size_t tp = model.config().past_steps;
  require_rows(series, first_row, tp);
  const Tensor<float> seed = series.emissions.rows(first_row - tp, first_row);
  const Tensor<float> inputs = series.inputs.rows(first_row, series.length());
  const Tensor<float> measured = actual_emissions(series, first_row);
  return closed_loop_forecast(model, seed, inputs, mode, mode == ForecastMode::TeacherForced ? &measured : nullptr);
}

Tensor<float> predict_lstm(const Lstm<float>& model, const NormalizedSeries& series, std::size_t first_row) {
  const std::size_t steps = model.spec().timesteps;
  require_rows(series, first_row, steps - 1);
  const std::size_t count = series.length() - first_row;
  const std::size_t mu = series.inputs.dim(1);
  const std::size_t mp = model.spec().output_dim;
  Tensor<float> out(Shape{count, mp});
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t n = std::min(chunk, count - start);
    Tensor<float> seq(Shape{n, steps, mu});
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t t = first_row + start + b;
      std::copy_n(&series.inputs.at(t + 1 - steps, 0), steps * mu, &seq.at(b, 0, 0));
    }
    const Tensor<float> pred = model.forward(seq);
    std::copy_n(pred.data().data(), n * mp, &out.at(start, 0));
  }
  return out;
}

Tensor<float> predict(const LoadedModel& model, const NormalizedSeries& series, ForecastMode mode,
                      std::size_t first_row) {
  if (model.kind == ModelKind::Jepa) return predict_jepa(*model.jepa, series, mode, first_row);
  return predict_lstm(*model.lstm, series, first_row);
}

Tensor<float> predict_persistence(const NormalizedSeries& series, std::size_t first_row) {
  require_rows(series, first_row, 1);
  return series.emissions.rows(first_row - 1, series.length() - 1);
}

ScoreRow score(std::string model, std::string mode, const Tensor<float>& actual, const Tensor<float>& predicted) {
  ScoreRow row{std::move(model), std::move(mode), 0.0, {}};
  const auto mse = per_channel_mse(actual, predicted);
  if (mse.size() != kEmissionChannels) throw DimensionError("scores expect four emission channels");
  std::copy(mse.begin(), mse.end(), row.mse.begin());
  row.wmse = wmse(actual, predicted, WmseWeights::uniform(kEmissionChannels));
  return row;
}

std::string format_score_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << kScoreHeader << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << r.mode << ',' << r.wmse;
    for (double m : r.mse) out << ',' << m;
    out << '\n';
  }
  return out.str();
}

BenchmarkRow benchmark(const std::filesystem::path& archive_path, const std::vector<EmissionRecord>& records,
                       std::size_t repeats, std::size_t first_row) {
  if (repeats < 3) throw ContractError("benchmark needs at least 3 repeats");
  const LoadedModel model = load_model(load_archive(archive_path));
  const NormalizedSeries series = model.normalizer.apply(records);
  if (first_row == 0) first_row = model.history_rows();
  if (series.length() <= first_row) {
    throw ContractError("dataset of " + std::to_string(series.length()) + " records is shorter than one window");
  }

  Tensor<float> predictions;
  std::vector<double> per_step_ms;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    predictions = predict(model, series, ForecastMode::TeacherForced, first_row);
    const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
    per_step_ms.push_back(elapsed.count() / static_cast<double>(predictions.dim(0)));
  }
  double mean = 0.0;
  for (double v : per_step_ms) mean += v;
  mean /= static_cast<double>(repeats);
  double var = 0.0;
  for (double v : per_step_ms) var += (v - mean) * (v - mean);

  const ScoreRow s = score("", "", actual_emissions(series, first_row), predictions);
  BenchmarkRow row;
  row.model = archive_path.stem().string();
  row.scheme = to_string(model.scheme);
  row.size_bytes = std::filesystem::file_size(archive_path);
  row.latency_ms_per_step = mean;
  row.latency_sd_ms = std::sqrt(var / static_cast<double>(repeats - 1));
  row.wmse = s.wmse;
  row.mse = s.mse;
  return row;
}

void sort_by_size(std::vector<BenchmarkRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const BenchmarkRow& a, const BenchmarkRow& b) { return a.size_bytes > b.size_bytes; });
}

std::string format_benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << kBenchmarkHeader << '\n';
  for (const auto& r : rows) {
    out << r.model << ',' << r.scheme << ',' << r.size_bytes << ',' << r.latency_ms_per_step << ',' << r.wmse;
    for (double m : r.mse) out << ',' << m;
    out << '\n';
  }
  return out.str();
}

}  // namespace ldyn
