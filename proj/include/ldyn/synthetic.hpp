#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ldyn/data.hpp"

namespace ldyn {

// Deterministic surrogate for transient engine-out emission measurements.
// The equations are documented in docs/synthetic_generator.md.

struct OperatingPoint {
  double torque_nm = 0.0;
  double speed_rpm = 800.0;
  double lambda = 1.0;
};

struct GeneratorParams {
  // First-order lag time constants [s] for NOx, CO2, CO, THC.
  std::array<double, kEmissionChannels> lag_s{0.3, 0.8, 0.4, 0.6};
  // Transient response per unit of the filtered positive torque increment [Nm].
  std::array<double, kEmissionChannels> transient_gain{6.0, 0.0, 0.004, 1.5};
  double transient_decay = 0.5;  // per-sample decay of the torque-increment state
  // Measurement noise standard deviation per species, in generator units.
  std::array<double, kEmissionChannels> noise_sd{4.0, 0.04, 0.003, 0.6};
};

inline constexpr double kMaxTorque = 290.0;
inline constexpr double kMinSpeed = 800.0;
inline constexpr double kMaxSpeed = 5000.0;
inline constexpr double kLambdaEnrichment = 0.0008;  // lambda drop per Nm of filtered increment

/// Steady-state species levels (NOx ppm, CO2 %, CO %, THC ppm).
std::array<double, kEmissionChannels> static_emission_map(const OperatingPoint& point);

/// Speed/torque/lambda trajectory on the 5 Hz grid.
std::vector<OperatingPoint> generate_input_profile(std::uint64_t seed, double duration_s);

/// Runs the lag + transient + noise model over a given input profile.
std::vector<EmissionRecord> simulate_emissions(const std::vector<OperatingPoint>& profile, std::uint64_t seed,
                                               const GeneratorParams& params = {});

/// Input profile and emissions for one cycle; duration_s ≥ 60.
std::vector<EmissionRecord> generate_synthetic_cycle(std::uint64_t seed, double duration_s);

}  // namespace ldyn
