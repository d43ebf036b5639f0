#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ldyn/compress.hpp"
#include "ldyn/data.hpp"
#include "ldyn/jepa.hpp"

namespace ldyn {

/// One-step-ahead emission predictions for series rows first_row .. len−1,
/// [len − first_row × m_p] on the normalized scale. The JEPA forecasts
/// sequentially from the window before `first_row`; the LSTM reads only
/// inputs, so both modes give the same result for it.
Tensor<float> predict_jepa(const JepaModel& model, const NormalizedSeries& series, ForecastMode mode,
                           std::size_t first_row);
Tensor<float> predict_lstm(const Lstm<float>& model, const NormalizedSeries& series, std::size_t first_row);
Tensor<float> predict(const LoadedModel& model, const NormalizedSeries& series, ForecastMode mode,
                      std::size_t first_row);
/// x̃(t) = x(t − 1).
Tensor<float> predict_persistence(const NormalizedSeries& series, std::size_t first_row);

/// Emission rows first_row .. len−1.
Tensor<float> actual_emissions(const NormalizedSeries& series, std::size_t first_row);

struct ScoreRow {
  std::string model;
  std::string mode;
  double wmse = 0.0;
  std::array<double, kEmissionChannels> mse{};
};

ScoreRow score(std::string model, std::string mode, const Tensor<float>& actual, const Tensor<float>& predicted);

inline constexpr const char* kScoreHeader = "model,mode,wmse,mse_nox,mse_co2,mse_co,mse_thc";
std::string format_score_csv(const std::vector<ScoreRow>& rows);

struct BenchmarkRow {
  std::string model;
  std::string scheme;
  std::size_t size_bytes = 0;
  double latency_ms_per_step = 0.0;
  double latency_sd_ms = 0.0;
  double wmse = 0.0;
  std::array<double, kEmissionChannels> mse{};
};

inline constexpr const char* kBenchmarkHeader =
    "model,scheme,size_bytes,latency_ms_per_step,wmse,mse_nox,mse_co2,mse_co,mse_thc";

/// Teacher-forced evaluation of one archive on `records`, timed over
/// `repeats` (≥ 3) full passes. Accuracy is scored on rows from
/// `first_row`, or the model's own history length when it is 0.
BenchmarkRow benchmark(const std::filesystem::path& archive_path, const std::vector<EmissionRecord>& records,
                       std::size_t repeats, std::size_t first_row = 0);

/// Sorts by size, largest first; ties keep their order.
void sort_by_size(std::vector<BenchmarkRow>& rows);
std::string format_benchmark_csv(const std::vector<BenchmarkRow>& rows);

}  // namespace ldyn
