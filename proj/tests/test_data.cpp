#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ldyn/data.hpp"
#include "ldyn/rng.hpp"

namespace ldyn {
namespace {

std::vector<EmissionRecord> ramp_records(std::size_t n) {
  std::vector<EmissionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    out.push_back({0.2 * x, 10 * x, 800 + 50 * x, 1.0 + 0.01 * x, 100 + x, 12 - 0.1 * x, 0.05 * x, 40 + 2 * x});
  }
  return out;
}

std::string with_header(const std::string& rows) { return std::string(kCsvHeader) + "\n" + rows; }

void expect_format_error(const std::string& text, const std::string& fragment) {
  try {
    parse_csv(text, "cycle.csv");
    FAIL() << "expected FormatError containing '" << fragment << "'";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Csv, EmptyDataSectionGivesEmptyList) { EXPECT_TRUE(parse_csv(with_header("")).empty()); }

TEST(Csv, RoundTripIsValueExact) {
  auto records = ramp_records(25);
  records[3].nox = 1.0 / 3.0;
  records[7].lambda = 0.1 + 0.2;
  records[9].co = 1e-17;
  EXPECT_EQ(parse_csv(format_csv(records)), records);

  const auto path = std::filesystem::temp_directory_path() / "ldyn_roundtrip.csv";
  save_csv(path, records);
  EXPECT_EQ(load_csv(path), records);
  std::filesystem::remove(path);
}

TEST(Csv, LambdaZeroNamesTheRow) {
  expect_format_error(with_header("0,10,900,1,1,1,1,1\n0.2,10,900,0,1,1,1,1\n"), "cycle.csv:3");
  expect_format_error(with_header("0,10,900,0,1,1,1,1\n"), "lambda");
}

TEST(Csv, MalformedRowsAreRejectedWithLineNumbers) {
  expect_format_error(with_header("0,10,900,1,1,1,1\n"), "cycle.csv:2: missing column");
  expect_format_error(with_header("0,10,900,1,1,abc,1,1\n"), "non-numeric cell 'abc'");
  expect_format_error(with_header("0,10,900,1,1,1,1,1\n0,10,900,1,1,1,1,1\n"), "strictly increasing");
  expect_format_error(with_header("0,10,900,1,1,1,1,1\n0.4,10,900,1,1,1,1,1\n"), "0.2 s");
  expect_format_error(with_header("0,10,900,1,-1,1,1,1\n"), "non-negative");
  expect_format_error("time,torque\n", "expected header");
}

TEST(Normalizer, MapsTrainRangeToUnitInterval) {
  std::vector<EmissionRecord> r(3);
  const double values[] = {0, 5, 10};
  for (int i = 0; i < 3; ++i) {
    r[i].time_s = 0.2 * i;
    r[i].torque_nm = values[i];
  }
  const Normalizer n = Normalizer::fit(r);
  EXPECT_EQ(n.apply(0, 0), 0.0);
  EXPECT_EQ(n.apply(0, 5), 0.5);
  EXPECT_EQ(n.apply(0, 10), 1.0);
}

TEST(Normalizer, ConstantChannelMapsToZeroAndInvertsBack) {
  const auto records = ramp_records(10);
  auto constant = records;
  for (auto& r : constant) r.co2 = 7.25;
  const Normalizer n = Normalizer::fit(constant);
  const auto series = n.apply(constant);
  for (std::size_t i = 0; i < series.length(); ++i) EXPECT_EQ(series.emissions.at(i, 1), 0.0f);
  EXPECT_EQ(n.invert(4, 0.0), 7.25);
}

TEST(Normalizer, DoesNotClipOutOfRangeValues) {
  const Normalizer n = Normalizer::fit(ramp_records(10));
  EXPECT_GT(n.apply(0, 1000.0), 1.0);
  EXPECT_LT(n.apply(0, -50.0), 0.0);
}

TEST(Normalizer, RoundTripWithinTolerance) {
  const auto records = ramp_records(40);
  const Normalizer n = Normalizer::fit(records);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const std::size_t c = rng.index(kChannels);
    const double scaled = rng.uniform(-0.2, 1.2);
    EXPECT_NEAR(n.apply(c, n.invert(c, scaled)), scaled, 1e-6);
  }
  const Normalizer restored = Normalizer::from_json(n.to_json());
  EXPECT_EQ(restored.min(), n.min());
  EXPECT_EQ(restored.max(), n.max());
}

TEST(Normalizer, EmptyInputIsRejected) { EXPECT_THROW(Normalizer::fit({}), ContractError); }

NormalizedSeries indexed_series(std::size_t len) {
  NormalizedSeries s{Tensor<float>(Shape{len, 3}), Tensor<float>(Shape{len, 4})};
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t c = 0; c < 3; ++c) s.inputs.at(i, c) = static_cast<float>(i);
    for (std::size_t c = 0; c < 4; ++c) s.emissions.at(i, c) = static_cast<float>(i) + 0.25f * c;
  }
  return s;
}

TEST(Windows, CountExamples) {
  EXPECT_EQ(window_dataset(indexed_series(12), 10, 2).size(), 1u);
  EXPECT_EQ(window_dataset(indexed_series(2011), 10, 2).size(), 2000u);
  EXPECT_EQ(window_dataset(indexed_series(40), 10, 2, 40).size(), 1u);
}

TEST(Windows, CountMatchesEnumerationForRandomTuples) {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const std::size_t tp = 1 + rng.index(15);
    const std::size_t tf = 2 + rng.index(8);
    const std::size_t len = tp + tf + rng.index(80);
    const std::size_t stride = 1 + rng.index(7);
    std::size_t enumerated = 0;
    for (std::size_t k = tp - 1; k + tf <= len - 1; k += stride) ++enumerated;
    EXPECT_EQ(window_count(len, tp, tf, stride), enumerated);
    EXPECT_EQ(window_dataset(indexed_series(len), tp, tf, stride).size(), enumerated);
  }
}

TEST(Windows, ContentsAreContiguousAroundOrigin) {
  const auto windows = window_dataset(indexed_series(30), 4, 3, 5);
  for (const auto& w : windows) {
    const float k = static_cast<float>(w.origin);
    EXPECT_EQ(w.past_emissions.at(0, 0), k - 3);
    EXPECT_EQ(w.past_emissions.at(3, 2), k + 0.5f);
    EXPECT_EQ(w.future_inputs.shape(), (Shape{2, 3}));
    EXPECT_EQ(w.future_inputs.at(0, 0), k + 1);
    EXPECT_EQ(w.future_emissions.at(2, 0), k + 3);
  }
}

TEST(Windows, ShortSeriesIsRejected) {
  EXPECT_THROW(window_dataset(indexed_series(11), 10, 2), ContractError);
  EXPECT_THROW(window_count(20, 10, 2, 0), ContractError);
}

TEST(Split, ContiguousAndInOrder) {
  const auto records = ramp_records(100);
  const auto split = split_contiguous(records, {});
  EXPECT_EQ(split.train.size(), 70u);
  EXPECT_EQ(split.validation.size(), 15u);
  EXPECT_EQ(split.test.size(), 15u);
  EXPECT_EQ(split.train.back(), records[69]);
  EXPECT_EQ(split.validation.front(), records[70]);
  EXPECT_EQ(split.test.back(), records[99]);
  EXPECT_THROW(split_contiguous(records, {0.5, 0.5, 0.5}), ContractError);
}

}  // namespace
}  // namespace ldyn
