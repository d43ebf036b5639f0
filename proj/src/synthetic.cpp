#include "ldyn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ldyn/error.hpp"
#include "ldyn/rng.hpp"

namespace ldyn {

std::array<double, kEmissionChannels> static_emission_map(const OperatingPoint& p) {
  const double load = std::clamp(p.torque_nm / kMaxTorque, 0.0, 1.0);
  const double speed = std::clamp((p.speed_rpm - kMinSpeed) / (kMaxSpeed - kMinSpeed), 0.0, 1.0);
  const double lam = p.lambda;
  const double rich = std::max(0.0, 1.0 - lam);

  const double lam_nox = (lam - 1.04) / 0.12;
  const double nox = 20.0 + 1500.0 * std::pow(load, 1.3) * (0.4 + 0.6 * speed) * std::exp(-lam_nox * lam_nox);
  const double combustion = lam >= 1.0 ? 1.0 / lam : 1.0 - 1.2 * rich;
  const double co2 = 1.5 + 12.5 * (0.2 + 0.8 * load) * combustion;
  const double co = 0.04 + 0.3 * load * speed + 12.0 * std::pow(rich, 1.2);
  const double thc = 30.0 + 150.0 * (1.0 - load) * (1.0 - load) * (1.0 - 0.5 * speed) + 900.0 * rich +
                     60.0 * std::max(0.0, lam - 1.15);
  return {nox, co2, co, thc};
}

std::vector<OperatingPoint> generate_input_profile(std::uint64_t seed, double duration_s) {
  if (!(duration_s >= 60.0)) throw ContractError("cycle duration must be at least 60 s");
  const auto n = static_cast<std::size_t>(std::llround(duration_s / kSampleInterval));
  Rng rng(seed);

  // Speed: piecewise linear ramps between random set points, then smoothed.
  std::vector<double> speed_target(n);
  {
    double current = rng.uniform(kMinSpeed, 2500.0);
    std::size_t i = 0;
    while (i < n) {
      const double target = rng.uniform(kMinSpeed, kMaxSpeed);
      const auto ramp = static_cast<std::size_t>(rng.uniform(1.5, 5.0) / kSampleInterval);
      const auto hold = static_cast<std::size_t>(rng.uniform(4.0, 12.0) / kSampleInterval);
      for (std::size_t k = 0; k < ramp && i < n; ++k, ++i) {
        speed_target[i] = current + (target - current) * static_cast<double>(k + 1) / static_cast<double>(ramp);
      }
      current = target;
      for (std::size_t k = 0; k < hold && i < n; ++k, ++i) speed_target[i] = current;
    }
  }

  // Torque: ramps, tip-ins, tip-outs and holds at random intervals.
  std::vector<double> torque(n);
  {
    double current = rng.uniform(20.0, 120.0);
    std::size_t i = 0;
    while (i < n) {
      const double kind = rng.uniform();
      const auto span = static_cast<std::size_t>(rng.uniform(1.5, 6.0) / kSampleInterval);
      double target = current;
      std::size_t ramp = 1;
      if (kind < 0.35) {
        target = rng.uniform(0.0, kMaxTorque);
        ramp = std::max<std::size_t>(1, static_cast<std::size_t>(rng.uniform(0.6, 3.0) / kSampleInterval));
      } else if (kind < 0.65) {
        target = std::min(kMaxTorque, current + rng.uniform(60.0, 160.0));
        ramp = 1 + rng.index(2);
      } else if (kind < 0.85) {
        target = rng.uniform(0.0, 30.0);
        ramp = 1 + rng.index(2);
      }
      ramp = std::min(ramp, span);
      for (std::size_t k = 0; k < span && i < n; ++k, ++i) {
        const double frac = std::min(1.0, static_cast<double>(k + 1) / static_cast<double>(ramp));
        torque[i] = current + (target - current) * frac;
      }
      current = target;
    }
  }

  std::vector<OperatingPoint> out(n);
  const double speed_alpha = 1.0 - std::exp(-kSampleInterval / 0.5);
  const double lean_alpha = 1.0 - std::exp(-kSampleInterval / 1.0);
  double speed = speed_target[0];
  double lean = 0.0;
  double increment = 0.0;
  const GeneratorParams defaults;
  for (std::size_t i = 0; i < n; ++i) {
    speed += speed_alpha * (speed_target[i] - speed);
    const double t = static_cast<double>(i) * kSampleInterval;
    const double overrun = torque[i] < 20.0 ? 0.25 * (1.0 - torque[i] / 20.0) : 0.0;
    lean += lean_alpha * (overrun - lean);
    const double rise = i == 0 ? 0.0 : std::max(0.0, torque[i] - torque[i - 1]);
    increment = defaults.transient_decay * increment + rise;
    const double base = 1.0 + 0.015 * std::sin(2.0 * std::numbers::pi * t / 23.0) + lean;
    out[i] = {torque[i], std::clamp(speed, kMinSpeed, kMaxSpeed),
              std::clamp(base - kLambdaEnrichment * increment, 0.7, 1.5)};
  }
  return out;
}

std::vector<EmissionRecord> simulate_emissions(const std::vector<OperatingPoint>& profile, std::uint64_t seed,
                                               const GeneratorParams& params) {
  std::vector<EmissionRecord> out;
  if (profile.empty()) return out;
  out.reserve(profile.size());
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::array<double, kEmissionChannels> alpha{};
  for (std::size_t s = 0; s < kEmissionChannels; ++s) alpha[s] = 1.0 - std::exp(-kSampleInterval / params.lag_s[s]);

  auto state = static_emission_map(profile.front());
  double increment = 0.0;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const auto& p = profile[i];
    const auto target = static_emission_map(p);
    const double rise = i == 0 ? 0.0 : std::max(0.0, p.torque_nm - profile[i - 1].torque_nm);
    increment = params.transient_decay * increment + rise;
    const double speed = std::clamp((p.speed_rpm - kMinSpeed) / (kMaxSpeed - kMinSpeed), 0.0, 1.0);
    std::array<double, kEmissionChannels> measured{};
    for (std::size_t s = 0; s < kEmissionChannels; ++s) {
      state[s] += alpha[s] * (target[s] - state[s]);
      double transient = params.transient_gain[s] * increment;
      if (s == 0) transient *= 0.5 + speed;  // NOx peaks grow with engine speed
      measured[s] = std::max(0.0, state[s] + transient + params.noise_sd[s] * rng.normal());
    }
    out.push_back({static_cast<double>(i) * kSampleInterval, p.torque_nm, p.speed_rpm, p.lambda, measured[0],
                   measured[1], measured[2], measured[3]});
  }
  return out;
}

std::vector<EmissionRecord> generate_synthetic_cycle(std::uint64_t seed, double duration_s) {
  return simulate_emissions(generate_input_profile(seed, duration_s), seed);
}

}  // namespace ldyn
