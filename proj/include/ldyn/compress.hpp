#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ldyn/data.hpp"
#include "ldyn/jepa.hpp"
#include "ldyn/layers.hpp"

namespace ldyn {

// ---- tensor storage ---------------------------------------------------------

enum class Scheme { Real32, Bf16, Int8 };

std::string to_string(Scheme scheme);  // "f32", "bf16", "int8"
Scheme scheme_from_string(const std::string& name);
std::size_t bytes_per_element(Scheme scheme);

inline constexpr double kMinQuantScale = 1e-8;

struct QuantParams {
  Scheme scheme = Scheme::Real32;
  double scale = 1.0;     // int8 only
  int zero_point = 0;     // int8 only, in [−128, 127]
  bool operator==(const QuantParams&) const = default;
};

/// Per-tensor affine parameters from the tensor range extended to include 0.
QuantParams int8_params(std::span<const float> values);

std::uint16_t to_bf16(float value);  // round to nearest, ties to even
float from_bf16(std::uint16_t bits);
std::int8_t quantize_int8(float value, const QuantParams& params);
float dequantize_int8(std::int8_t q, const QuantParams& params);

struct StoredTensor {
  std::string name;
  Shape shape;
  QuantParams quant;
  std::vector<std::uint8_t> payload;  // little-endian

  bool operator==(const StoredTensor&) const = default;
};

StoredTensor encode_tensor(std::string name, const Tensor<float>& values, Scheme scheme);
Tensor<float> decode_tensor(const StoredTensor& stored);

// ---- archive ------------------------------------------------------------------

inline constexpr std::uint16_t kArchiveVersion = 1;

/// `model` holds the architecture, normalizer and provenance of the
/// stored weights; the tensor table is generated from `tensors` on save.
struct ModelArchive {
  nlohmann::json model;
  std::vector<StoredTensor> tensors;

  std::size_t payload_bytes() const;
  const StoredTensor& tensor(const std::string& name) const;
};

std::vector<std::uint8_t> serialize_archive(const ModelArchive& archive);
ModelArchive parse_archive(std::span<const std::uint8_t> bytes);
void save_archive(const ModelArchive& archive, const std::filesystem::path& path);
ModelArchive load_archive(const std::filesystem::path& path);

// ---- model <-> archive ------------------------------------------------------

enum class ModelKind { Jepa, Lstm };

std::string to_string(ModelKind kind);

/// A model expanded to real32 together with its normalizer.
struct LoadedModel {
  ModelKind kind = ModelKind::Jepa;
  Scheme scheme = Scheme::Real32;
  Normalizer normalizer;
  std::optional<JepaModel> jepa;
  std::optional<Lstm<float>> lstm;

  /// Number of leading series rows a prediction needs as history.
  std::size_t history_rows() const;
};

ModelArchive jepa_archive(const JepaModel& model, const Normalizer& normalizer);
ModelArchive lstm_archive(const Lstm<float>& model, const Normalizer& normalizer);
/// Dequantizes every tensor once; throws FormatError on inconsistent metadata.
LoadedModel load_model(const ModelArchive& archive);

// ---- compression ----------------------------------------------------------------

/// Re-encodes every tensor of a real32 archive under `scheme`.
ModelArchive quantize(const ModelArchive& archive, Scheme scheme);

struct PrunedLayer {
  std::string component;
  std::size_t layer = 0;  // index of the hidden layer within the component
  std::size_t width = 0;
  std::size_t kept = 0;
  std::vector<std::size_t> removed;  // neuron indices in the original layer
  std::vector<double> scores;        // per original neuron
};

struct PruneReport {
  double ratio = 0.0;
  std::vector<PrunedLayer> layers;
  std::size_t parameters_before = 0;
  std::size_t parameters_after = 0;
};

/// Neurons removed from a hidden layer of `width` at `ratio`.
std::size_t pruned_count(std::size_t width, double ratio);

/// Removes the lowest-scoring hidden neurons of every hidden layer, the score
/// being the L2 norm of the neuron's incoming row and outgoing column.
Mlp<float> prune_mlp(const Mlp<float>& mlp, double ratio, const std::string& component, PruneReport& report);

struct PrunedJepa {
  JepaModel model;
  PruneReport report;
};

/// Applies the same ratio to every hidden layer of all five components.
PrunedJepa prune_structured(const JepaModel& model, double ratio);

}  // namespace ldyn
