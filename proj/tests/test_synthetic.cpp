#include <gtest/gtest.h>

#include <cmath>

#include "ldyn/synthetic.hpp"

namespace ldyn {
namespace {

TEST(Generator, SameSeedIsByteIdentical) {
  EXPECT_EQ(format_csv(generate_synthetic_cycle(42, 120)), format_csv(generate_synthetic_cycle(42, 120)));
  EXPECT_NE(format_csv(generate_synthetic_cycle(42, 120)), format_csv(generate_synthetic_cycle(43, 120)));
}

TEST(Generator, RecordsSatisfyInvariants) {
  const auto records = generate_synthetic_cycle(3, 600);
  ASSERT_EQ(records.size(), 3000u);
  EXPECT_NO_THROW(validate_records(records));
  for (const auto& r : records) {
    EXPECT_GE(r.torque_nm, 0.0);
    EXPECT_LE(r.torque_nm, kMaxTorque);
    EXPECT_GE(r.speed_rpm, kMinSpeed);
    EXPECT_LE(r.speed_rpm, kMaxSpeed);
  }
}

TEST(Generator, ShortDurationIsRejected) { EXPECT_THROW(generate_synthetic_cycle(1, 30), ContractError); }

std::vector<OperatingPoint> constant_profile(std::size_t n, OperatingPoint p) { return std::vector(n, p); }

// A speed step at constant torque: no torque increments, so only the lags act.
TEST(Generator, FlatTorqueSettlesToStaticMapWithinFiveLags) {
  GeneratorParams quiet;
  quiet.noise_sd = {0, 0, 0, 0};
  auto profile = constant_profile(20, {120, 1500, 1.0});
  const auto tail = constant_profile(40, {120, 3200, 1.02});
  profile.insert(profile.end(), tail.begin(), tail.end());
  const auto records = simulate_emissions(profile, 0, quiet);
  const auto before = static_emission_map(profile.front());
  const auto after = static_emission_map(profile.back());
  for (std::size_t s = 0; s < kEmissionChannels; ++s) {
    const auto settle = static_cast<std::size_t>(std::ceil(5 * quiet.lag_s[s] / kSampleInterval));
    const double measured = records[20 + settle].channel(kInputChannels + s);
    const double gap = std::abs(after[s] - before[s]);
    EXPECT_LE(std::abs(measured - after[s]), std::exp(-5.0) * gap * 1.01 + 1e-12) << "species " << s;
  }
}

TEST(Generator, TorqueStepRaisesNoxAbovePreStepLevel) {
  GeneratorParams quiet;
  quiet.noise_sd = {0, 0, 0, 0};
  auto profile = constant_profile(30, {60, 2500, 1.0});
  const auto high = constant_profile(30, {200, 2500, 1.0});
  profile.insert(profile.end(), high.begin(), high.end());
  const auto records = simulate_emissions(profile, 0, quiet);
  const double pre = records[29].nox;
  double peak = 0.0;
  for (std::size_t i = 30; i < 40; ++i) peak = std::max(peak, records[i].nox);
  EXPECT_GT(peak, pre);
  // The transient overshoots the new steady level as well.
  EXPECT_GT(peak, records.back().nox);
}

TEST(StaticMap, RichMixtureRaisesCoAndThc) {
  const auto stoich = static_emission_map({150, 2500, 1.0});
  const auto rich = static_emission_map({150, 2500, 0.9});
  EXPECT_GT(rich[2], stoich[2]);
  EXPECT_GT(rich[3], stoich[3]);
  EXPECT_LT(rich[1], stoich[1]);
}

}  // namespace
}  // namespace ldyn
