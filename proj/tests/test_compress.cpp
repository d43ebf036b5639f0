#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "ldyn/compress.hpp"
#include "ldyn/evaluate.hpp"
#include "ldyn/synthetic.hpp"
#include "test_support.hpp"

namespace ldyn {
namespace {

namespace fs = std::filesystem;

JepaConfig small_config() {
  JepaConfig c;
  c.latent_dim = 8;
  c.past_steps = 3;
  c.encoder_hidden = {20, 10};
  c.predictor_hidden = {16, 16};
  return c;
}

Normalizer some_normalizer() { return Normalizer::fit(generate_synthetic_cycle(1, 60)); }

Tensor<float> random_floats(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  return testing::random_tensor(std::move(shape), rng, lo, hi).cast<float>();
}

// bf16 oracle: exact rational rounding of the float value to 8 significant bits.
float bf16_oracle(float x) {
  if (x == 0.0f || !std::isfinite(x)) return x;
  int exp = 0;
  const double m = std::frexp(static_cast<double>(x), &exp);  // |m| in [0.5, 1)
  const double scaled = std::ldexp(m, 8);
  double r = std::nearbyint(scaled);  // ties to even under the default rounding mode
  return static_cast<float>(std::ldexp(r, exp - 8));
}

TEST(Bf16, MatchesRoundToNearestEvenOracle) {
  Rng rng(3);
  for (int i = 0; i < 20000; ++i) {
    const float x = static_cast<float>(rng.uniform(-1, 1) * std::pow(10.0, rng.uniform(-6, 6)));
    ASSERT_EQ(from_bf16(to_bf16(x)), bf16_oracle(x)) << x;
  }
  // Halfway cases go to the even mantissa.
  EXPECT_EQ(from_bf16(to_bf16(1.0f + std::ldexp(1.0f, -8))), 1.0f);
  EXPECT_EQ(from_bf16(to_bf16(1.0f + 3 * std::ldexp(1.0f, -8))), 1.0f + std::ldexp(1.0f, -6));
  EXPECT_TRUE(std::isnan(from_bf16(to_bf16(std::nanf("")))));
}

TEST(Int8, RoundTripErrorWithinHalfScale) {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const double lo = rng.uniform(-50, 10);
    const auto t = random_floats({1 + rng.index(100)}, rng, lo, lo + rng.uniform(0, 60));
    const StoredTensor q = encode_tensor("w", t, Scheme::Int8);
    ASSERT_GT(q.quant.scale, 0.0);
    ASSERT_GE(q.quant.zero_point, -128);
    ASSERT_LE(q.quant.zero_point, 127);
    const auto back = decode_tensor(q);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float ulp = std::nextafter(std::abs(t[i]), INFINITY) - std::abs(t[i]);
      ASSERT_LE(std::abs(back[i] - t[i]), 0.5 * q.quant.scale + ulp);
    }
  }
}

TEST(Int8, DegenerateTensorsAreExact) {
  const StoredTensor zeros = encode_tensor("z", Tensor<float>(Shape{7}), Scheme::Int8);
  EXPECT_EQ(zeros.quant.scale, kMinQuantScale);
  const auto zeros_back = decode_tensor(zeros);
  for (float v : zeros_back.data()) EXPECT_EQ(v, 0.0f);
  for (float c : {0.37f, -2.5f, 1e-3f}) {
    const auto back = decode_tensor(encode_tensor("c", Tensor<float>(Shape{5}, c), Scheme::Int8));
    for (float v : back.data()) EXPECT_EQ(v, c);
  }
}

TEST(Archive, PayloadSizesPerScheme) {
  const ModelArchive f32 = jepa_archive(JepaModel(small_config(), 1), some_normalizer());
  const auto bf16 = quantize(f32, Scheme::Bf16);
  const auto int8 = quantize(f32, Scheme::Int8);
  EXPECT_EQ(2 * bf16.payload_bytes(), f32.payload_bytes());
  EXPECT_EQ(4 * int8.payload_bytes(), f32.payload_bytes());
  EXPECT_LT(serialize_archive(int8).size(), serialize_archive(bf16).size());
  EXPECT_LT(serialize_archive(bf16).size(), serialize_archive(f32).size());
  EXPECT_THROW(quantize(bf16, Scheme::Int8), ContractError);
}

TEST(Archive, HeaderLayout) {
  const auto bytes = serialize_archive(jepa_archive(JepaModel(small_config(), 1), some_normalizer()));
  ASSERT_GT(bytes.size(), 10u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "LDYN");
  EXPECT_EQ(bytes[4] | bytes[5] << 8, kArchiveVersion);
  const std::size_t meta = bytes[6] | bytes[7] << 8 | bytes[8] << 16 | static_cast<std::size_t>(bytes[9]) << 24;
  const auto doc = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + static_cast<std::ptrdiff_t>(meta));
  std::size_t declared = 0;
  for (const auto& t : doc.at("tensors")) declared += t.at("bytes").get<std::size_t>();
  EXPECT_EQ(10 + meta + declared, bytes.size());
  // The first payload value is the first weight, little-endian.
  const float w0 = JepaModel(small_config(), 1).input_encoder().layers()[0].weight.value()[0];
  float stored = 0;
  std::memcpy(&stored, bytes.data() + 10 + meta, 4);
  EXPECT_EQ(stored, w0);
}

TEST(Archive, SaveLoadSaveIsByteIdentical) {
  const Normalizer norm = some_normalizer();
  const ModelArchive f32 = jepa_archive(JepaModel(small_config(), 2), norm);
  for (const ModelArchive& a : {f32, quantize(f32, Scheme::Bf16), quantize(f32, Scheme::Int8),
                                lstm_archive(Lstm<float>({3, 5, 2, 4, 6}, 3), norm)}) {
    const auto bytes = serialize_archive(a);
    EXPECT_EQ(serialize_archive(parse_archive(bytes)), bytes);
  }
  const auto path = fs::temp_directory_path() / "ldyn_test_archive.ldyn";
  save_archive(f32, path);
  EXPECT_EQ(serialize_archive(load_archive(path)), serialize_archive(f32));
  fs::remove(path);
}

TEST(Archive, CorruptInputIsRejected) {
  auto bytes = serialize_archive(jepa_archive(JepaModel(small_config(), 2), some_normalizer()));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_archive(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(parse_archive(truncated), FormatError);
  auto bad_json = bytes;
  bad_json[10] = '!';
  EXPECT_THROW(parse_archive(bad_json), FormatError);

  ModelArchive wrong = parse_archive(bytes);
  wrong.model["components"]["predictor"]["hidden_dims"] = {3};
  EXPECT_THROW(load_model(wrong), FormatError);
}

TEST(Archive, LoadedModelsReproduceOutputs) {
  const Normalizer norm = some_normalizer();
  const JepaModel jepa(small_config(), 4);
  const Lstm<float> lstm({3, 6, 2, 4, 3}, 4);
  const LoadedModel a = load_model(parse_archive(serialize_archive(jepa_archive(jepa, norm))));
  const LoadedModel b = load_model(parse_archive(serialize_archive(lstm_archive(lstm, norm))));
  Rng rng(1);
  const auto x = random_floats({5, 12}, rng);
  EXPECT_EQ(a.jepa->observation_encoder().forward(x), jepa.observation_encoder().forward(x));
  const auto seq = random_floats({2, 3, 3}, rng);
  EXPECT_EQ(b.lstm->forward(seq), lstm.forward(seq));
  EXPECT_EQ(a.normalizer.min(), norm.min());
  EXPECT_EQ(a.history_rows(), 3u);
  EXPECT_EQ(b.history_rows(), 2u);
}

TEST(Archive, Bf16ModelIsABoundedPerturbation) {
  const JepaModel jepa(small_config(), 6);
  const auto f32 = jepa_archive(jepa, some_normalizer());
  const LoadedModel half = load_model(quantize(f32, Scheme::Bf16));
  Rng rng(2);
  const auto x = random_floats({32, 12}, rng, 0, 1);
  const auto a = jepa.observation_encoder().forward(x);
  const auto b = half.jepa->observation_encoder().forward(x);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, double(std::abs(a[i] - b[i])));
  EXPECT_GT(worst, 0.0);
  EXPECT_LT(worst, 0.05);
}

TEST(Prune, CountFollowsFloor) {
  EXPECT_EQ(pruned_count(512, 0.3), 153u);
  EXPECT_EQ(pruned_count(20, 0.15), 3u);
  EXPECT_EQ(pruned_count(10, 0.0), 0u);
  EXPECT_THROW(pruned_count(10, 1.0), ContractError);
  EXPECT_THROW(pruned_count(10, -0.1), ContractError);
}

TEST(Prune, RatioZeroIsBitIdentical) {
  const JepaModel m(small_config(), 7);
  const auto pruned = prune_structured(m, 0.0);
  EXPECT_EQ(serialize_archive(jepa_archive(pruned.model, some_normalizer())),
            serialize_archive(jepa_archive(m, some_normalizer())));
}

TEST(Prune, ReportAndShapes) {
  JepaConfig c = small_config();
  c.encoder_hidden = {512, 10};
  const JepaModel m(c, 8);
  const auto pruned = prune_structured(m, 0.3);
  const auto& enc = pruned.model.observation_encoder();
  EXPECT_EQ(enc.spec().hidden_dims, (std::vector<std::size_t>{359, 7}));
  EXPECT_EQ(enc.layers()[1].weight.shape(), (Shape{7, 359}));
  EXPECT_EQ(enc.spec().output_dim, 8u);
  EXPECT_EQ(pruned.report.parameters_before, m.parameter_count());
  EXPECT_EQ(pruned.report.parameters_after, pruned.model.parameter_count());
  ASSERT_EQ(pruned.report.layers.size(), 10u);  // two hidden layers in each of five components
  EXPECT_EQ(pruned.report.layers[2].removed.size(), 153u);
  EXPECT_EQ(pruned.report.layers[2].kept, 359u);
}

TEST(Prune, RemovesLowestScoringNeurons) {
  // Hidden neuron 1 has the smallest incoming row and outgoing column.
  const MlpSpec spec{2, {3}, 1};
  std::vector<DenseLayer<float>> layers{
      {Var<float>(Tensor<float>::matrix(3, 2, {1, 1, 0.1f, 0.1f, 2, 0}), true),
       Var<float>(Tensor<float>(Shape{3}, std::vector<float>{0.5f, 0.25f, -0.5f}), true)},
      {Var<float>(Tensor<float>::matrix(1, 3, {1, 0.1f, 1}), true), Var<float>(Tensor<float>(Shape{1}), true)}};
  const Mlp<float> mlp(spec, std::move(layers));
  PruneReport report;
  const auto pruned = prune_mlp(mlp, 0.34, "m", report);
  EXPECT_EQ(report.layers[0].removed, (std::vector<std::size_t>{1}));
  EXPECT_NEAR(report.layers[0].scores[1], std::sqrt(0.03), 1e-6);
  EXPECT_EQ(pruned.layers()[0].weight.value().values(), (std::vector<float>{1, 1, 2, 0}));
  EXPECT_EQ(pruned.layers()[0].bias.value().values(), (std::vector<float>{0.5f, -0.5f}));
  EXPECT_EQ(pruned.layers()[1].weight.value().values(), (std::vector<float>{1, 1}));
}

TEST(Prune, HighRatioKeepsAtLeastOneNeuron) {
  JepaConfig c = small_config();
  c.predictor_hidden = {1};
  const auto pruned = prune_structured(JepaModel(c, 1), 0.9);
  EXPECT_EQ(pruned.model.predictor().spec().hidden_dims, (std::vector<std::size_t>{1}));
  EXPECT_THROW(prune_structured(JepaModel(c, 1), 1.0), ContractError);
}

// Masked-network oracle: keep full shapes and zero the removed neurons.
TEST(Prune, StructuredRemovalEqualsZeroMasking) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpSpec spec{1 + rng.index(6), {4 + rng.index(20), 4 + rng.index(20), 4 + rng.index(20)}, 1 + rng.index(5)};
    const Mlp<float> full(spec, static_cast<std::uint64_t>(trial));
    PruneReport report;
    const double ratio = rng.uniform(0.05, 0.6);
    const Mlp<float> pruned = prune_mlp(full, ratio, "m", report);
    Mlp<float> masked = full.clone();
    for (const auto& layer : report.layers) {
      auto& in = masked.layers()[layer.layer];
      auto& next = masked.layers()[layer.layer + 1];
      for (auto j : layer.removed) {
        for (std::size_t c = 0; c < in.weight.dim(1); ++c) in.weight.mutable_value().at(j, c) = 0;
        in.bias.mutable_value()[j] = 0;
        for (std::size_t r = 0; r < next.weight.dim(0); ++r) next.weight.mutable_value().at(r, j) = 0;
      }
    }
    const auto x = random_floats({16, spec.input_dim}, rng, -4, 4);
    const auto a = masked.forward(x);
    const auto b = pruned.forward(x);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-6) << "trial " << trial;
  }
}

TEST(Benchmark, ReportsSizeAccuracyAndOrdering) {
  const auto records = generate_synthetic_cycle(2, 80);
  const Normalizer norm = Normalizer::fit(records);
  const JepaModel m(small_config(), 9);
  const auto dir = fs::temp_directory_path() / "ldyn_bench_test";
  fs::create_directories(dir);
  save_archive(jepa_archive(m, norm), dir / "parent.ldyn");
  save_archive(quantize(jepa_archive(m, norm), Scheme::Int8), dir / "int8.ldyn");
  std::vector<BenchmarkRow> rows{benchmark(dir / "int8.ldyn", records, 3), benchmark(dir / "parent.ldyn", records, 3)};
  const auto again = benchmark(dir / "parent.ldyn", records, 3);
  EXPECT_EQ(again.wmse, rows[1].wmse);
  EXPECT_EQ(rows[1].size_bytes, fs::file_size(dir / "parent.ldyn"));
  EXPECT_EQ(rows[0].scheme, "int8");
  EXPECT_GT(rows[1].latency_ms_per_step, 0.0);
  sort_by_size(rows);
  EXPECT_EQ(rows[0].model, "parent");
  const std::string csv = format_benchmark_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kBenchmarkHeader);
  EXPECT_THROW(benchmark(dir / "parent.ldyn", records, 2), ContractError);
  EXPECT_THROW(benchmark(dir / "parent.ldyn", std::vector<EmissionRecord>(records.begin(), records.begin() + 3), 3),
               ContractError);
  fs::remove_all(dir);
}

TEST(Evaluate, PersistenceAndPerfectPredictions) {
  const auto records = generate_synthetic_cycle(3, 60);
  const auto series = Normalizer::fit(records).apply(records);
  const auto actual = actual_emissions(series, 10);
  EXPECT_EQ(score("self", "", actual, actual).wmse, 0.0);
  const auto persistence = predict_persistence(series, 10);
  EXPECT_EQ(persistence.rows(1, 2), actual.rows(0, 1));
  const ScoreRow row = score("p", "", actual, persistence);
  EXPECT_NEAR(row.wmse, (row.mse[0] + row.mse[1] + row.mse[2] + row.mse[3]) / 4, 1e-12);
}

}  // namespace
}  // namespace ldyn
