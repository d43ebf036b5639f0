#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ldyn/tensor.hpp"

namespace ldyn {

inline constexpr double kSampleInterval = 0.2;  // 5 Hz
inline constexpr std::size_t kInputChannels = 3;     // torque, speed, lambda
inline constexpr std::size_t kEmissionChannels = 4;  // NOx, CO2, CO, THC
inline constexpr std::size_t kChannels = kInputChannels + kEmissionChannels;

inline constexpr const char* kCsvHeader = "time_s,torque_nm,speed_rpm,lambda,nox,co2,co,thc";
inline const std::array<std::string, kEmissionChannels> kSpeciesNames{"nox", "co2", "co", "thc"};

struct EmissionRecord {
  double time_s = 0.0;
  double torque_nm = 0.0;
  double speed_rpm = 0.0;
  double lambda = 1.0;
  double nox = 0.0;
  double co2 = 0.0;
  double co = 0.0;
  double thc = 0.0;

  /// Channel c in order torque, speed, lambda, nox, co2, co, thc.
  double channel(std::size_t c) const;
  bool operator==(const EmissionRecord&) const = default;
};

/// Throws FormatError naming the offending 1-based line.
std::vector<EmissionRecord> load_csv(const std::filesystem::path& path);
std::vector<EmissionRecord> parse_csv(const std::string& text, const std::string& source = "<memory>");
/// Values are written in shortest round-trip form.
void save_csv(const std::filesystem::path& path, const std::vector<EmissionRecord>& records);
std::string format_csv(const std::vector<EmissionRecord>& records);

/// Checks record invariants: 0.2 s time grid, non-negative species, lambda > 0.
void validate_records(const std::vector<EmissionRecord>& records);

/// Series scaled to the training range: inputs [len × 3], emissions [len × 4].
struct NormalizedSeries {
  Tensor<float> inputs;
  Tensor<float> emissions;
  std::size_t length() const { return inputs.dim(0); }
};

// Per-channel min–max scaling fitted on the training split. A constant
// channel (min == max) maps to 0 and inverts back to the stored constant.
// Values outside the training range are not clipped.
class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::array<double, kChannels> min, std::array<double, kChannels> max);

  static Normalizer fit(const std::vector<EmissionRecord>& train);

  double apply(std::size_t channel, double value) const;
  double invert(std::size_t channel, double scaled) const;
  NormalizedSeries apply(const std::vector<EmissionRecord>& records) const;

  const std::array<double, kChannels>& min() const { return min_; }
  const std::array<double, kChannels>& max() const { return max_; }

  nlohmann::json to_json() const;
  static Normalizer from_json(const nlohmann::json& doc);

 private:
  std::array<double, kChannels> min_{};
  std::array<double, kChannels> max_{};
};

/// One training sample anchored at origin k (index of the last past step).
struct SequenceWindow {
  Tensor<float> past_emissions;   // [T_p × m_p], rows k−T_p+1 .. k
  Tensor<float> future_inputs;    // [(T_f−1) × m_u], rows k+1 .. k+T_f−1
  Tensor<float> future_emissions; // [T_f × m_p], rows k+1 .. k+T_f
  std::size_t origin = 0;
};

/// Number of windows for a series of `length`; requires length ≥ T_p + T_f.
std::size_t window_count(std::size_t length, std::size_t past_steps, std::size_t future_steps, std::size_t stride);

std::vector<SequenceWindow> window_dataset(const NormalizedSeries& series, std::size_t past_steps,
                                           std::size_t future_steps, std::size_t stride = 1);

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
  void validate() const;
};

struct RecordSplit {
  std::vector<EmissionRecord> train;
  std::vector<EmissionRecord> validation;
  std::vector<EmissionRecord> test;
};

/// Contiguous split in time order; never shuffles.
RecordSplit split_contiguous(const std::vector<EmissionRecord>& records, const SplitFractions& fractions);

}  // namespace ldyn
