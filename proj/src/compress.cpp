#include "ldyn/compress.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

namespace ldyn {

namespace {

constexpr std::uint8_t kMagic[4] = {'L', 'D', 'Y', 'N'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

nlohmann::json spec_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"output_dim", s.output_dim},
          {"activation", to_string(s.activation)}};
}

MlpSpec spec_from_json(const nlohmann::json& doc) {
  MlpSpec s;
  s.input_dim = doc.at("input_dim").get<std::size_t>();
  s.hidden_dims = doc.at("hidden_dims").get<std::vector<std::size_t>>();
  s.output_dim = doc.at("output_dim").get<std::size_t>();
  s.activation = activation_from_string(doc.at("activation").get<std::string>());
  s.validate();
  return s;
}

nlohmann::json lstm_spec_json(const LstmSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_width", s.hidden_width},
          {"depth", s.depth},
          {"output_dim", s.output_dim},
          {"timesteps", s.timesteps}};
}

LstmSpec lstm_spec_from_json(const nlohmann::json& doc) {
  LstmSpec s;
  s.input_dim = doc.at("input_dim").get<std::size_t>();
  s.hidden_width = doc.at("hidden_width").get<std::size_t>();
  s.depth = doc.at("depth").get<std::size_t>();
  s.output_dim = doc.at("output_dim").get<std::size_t>();
  s.timesteps = doc.at("timesteps").get<std::size_t>();
  s.validate();
  return s;
}

constexpr const char* kJepaComponents[] = {"input_encoder", "observation_encoder", "predictor", "emission_decoder",
                                           "input_decoder"};

const Mlp<float>& component(const JepaModel& m, std::size_t i) {
  switch (i) {
    case 0: return m.input_encoder();
    case 1: return m.observation_encoder();
    case 2: return m.predictor();
    case 3: return m.emission_decoder();
    default: return m.input_decoder();
  }
}

void add_mlp_tensors(ModelArchive& archive, const std::string& prefix, const Mlp<float>& mlp) {
  for (std::size_t l = 0; l < mlp.layers().size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    archive.tensors.push_back(encode_tensor(base + ".weight", mlp.layers()[l].weight.value(), Scheme::Real32));
    archive.tensors.push_back(encode_tensor(base + ".bias", mlp.layers()[l].bias.value(), Scheme::Real32));
  }
}

Var<float> param(const Tensor<float>& t) { return Var<float>(t, true); }

Mlp<float> read_mlp(const ModelArchive& archive, const std::string& prefix, const MlpSpec& spec) {
  std::vector<DenseLayer<float>> layers;
  for (std::size_t l = 0; l + 1 < spec.widths().size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    layers.push_back({param(decode_tensor(archive.tensor(base + ".weight"))),
                      param(decode_tensor(archive.tensor(base + ".bias")))});
  }
  return Mlp<float>(spec, std::move(layers));
}

}  // namespace

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::Real32: return "f32";
    case Scheme::Bf16: return "bf16";
    case Scheme::Int8: return "int8";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& name) {
  if (name == "f32") return Scheme::Real32;
  if (name == "bf16") return Scheme::Bf16;
  if (name == "int8") return Scheme::Int8;
  throw FormatError("unknown tensor scheme '" + name + "' (expected f32, bf16 or int8)");
}

std::size_t bytes_per_element(Scheme scheme) {
  switch (scheme) {
    case Scheme::Real32: return 4;
    case Scheme::Bf16: return 2;
    case Scheme::Int8: return 1;
  }
  return 0;
}

std::string to_string(ModelKind kind) { return kind == ModelKind::Jepa ? "jepa" : "lstm"; }

QuantParams int8_params(std::span<const float> values) {
  double lo = 0.0;
  double hi = 0.0;
  for (float v : values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  QuantParams p{Scheme::Int8, std::max((hi - lo) / 255.0, kMinQuantScale), 0};
  p.zero_point = static_cast<int>(std::clamp(std::round(-128.0 - lo / p.scale), -128.0, 127.0));
  return p;
}

std::uint16_t to_bf16(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  if (std::isnan(value)) return static_cast<std::uint16_t>((bits >> 16) | 0x40);  // keep it a NaN
  const std::uint32_t rounding = 0x7fff + ((bits >> 16) & 1);
  return static_cast<std::uint16_t>((bits + rounding) >> 16);
}

float from_bf16(std::uint16_t bits) { return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16); }

std::int8_t quantize_int8(float value, const QuantParams& params) {
  const double q = std::round(static_cast<double>(value) / params.scale) + params.zero_point;
  return static_cast<std::int8_t>(std::clamp(q, -128.0, 127.0));
}

float dequantize_int8(std::int8_t q, const QuantParams& params) {
  return static_cast<float>((static_cast<double>(q) - params.zero_point) * params.scale);
}

StoredTensor encode_tensor(std::string name, const Tensor<float>& values, Scheme scheme) {
  StoredTensor out{std::move(name), values.shape(), {scheme, 1.0, 0}, {}};
  out.payload.reserve(values.size() * bytes_per_element(scheme));
  switch (scheme) {
    case Scheme::Real32:
      for (float v : values.data()) put_u32(out.payload, std::bit_cast<std::uint32_t>(v));
      break;
    case Scheme::Bf16:
      for (float v : values.data()) put_u16(out.payload, to_bf16(v));
      break;
    case Scheme::Int8:
      out.quant = int8_params(values.data());
      for (float v : values.data()) out.payload.push_back(std::bit_cast<std::uint8_t>(quantize_int8(v, out.quant)));
      break;
  }
  return out;
}

Tensor<float> decode_tensor(const StoredTensor& stored) {
  const std::size_t n = element_count(stored.shape);
  if (stored.payload.size() != n * bytes_per_element(stored.quant.scheme)) {
    throw FormatError("tensor '" + stored.name + "' payload has " + std::to_string(stored.payload.size()) +
                      " bytes, shape " + to_string(stored.shape) + " needs " +
                      std::to_string(n * bytes_per_element(stored.quant.scheme)));
  }
  std::vector<float> values(n);
  const std::uint8_t* p = stored.payload.data();
  for (std::size_t i = 0; i < n; ++i) {
    switch (stored.quant.scheme) {
      case Scheme::Real32: values[i] = std::bit_cast<float>(get_u32(p + 4 * i)); break;
      case Scheme::Bf16:
        values[i] = from_bf16(static_cast<std::uint16_t>(p[2 * i] | p[2 * i + 1] << 8));
        break;
      case Scheme::Int8: values[i] = dequantize_int8(std::bit_cast<std::int8_t>(p[i]), stored.quant); break;
    }
  }
  return Tensor<float>(stored.shape, std::move(values));
}

std::size_t ModelArchive::payload_bytes() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.payload.size();
  return total;
}

const StoredTensor& ModelArchive::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("archive has no tensor '" + name + "'");
}

std::vector<std::uint8_t> serialize_archive(const ModelArchive& archive) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& t : archive.tensors) {
    nlohmann::json entry{{"name", t.name}, {"shape", t.shape}, {"dtype", to_string(t.quant.scheme)},
                         {"bytes", t.payload.size()}};
    if (t.quant.scheme == Scheme::Int8) {
      entry["scale"] = t.quant.scale;
      entry["zero_point"] = t.quant.zero_point;
    }
    table.push_back(std::move(entry));
  }
  const std::string meta = nlohmann::json{{"model", archive.model}, {"tensors", table}}.dump();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u16(out, kArchiveVersion);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  for (const auto& t : archive.tensors) out.insert(out.end(), t.payload.begin(), t.payload.end());
  return out;
}

ModelArchive parse_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 10 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("not a model archive (bad magic)");
  }
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kArchiveVersion) throw FormatError("unsupported archive version " + std::to_string(version));
  const std::size_t meta_len = get_u32(bytes.data() + 6);
  if (bytes.size() < 10 + meta_len) throw FormatError("archive metadata is truncated");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + static_cast<std::ptrdiff_t>(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt archive metadata: ") + e.what());
  }

  ModelArchive archive;
  std::size_t offset = 10 + meta_len;
  try {
    archive.model = meta.at("model");
    for (const auto& entry : meta.at("tensors")) {
      StoredTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      t.quant.scheme = scheme_from_string(entry.at("dtype").get<std::string>());
      if (t.quant.scheme == Scheme::Int8) {
        t.quant.scale = entry.at("scale").get<double>();
        t.quant.zero_point = entry.at("zero_point").get<int>();
        if (!(t.quant.scale > 0.0) || t.quant.zero_point < -128 || t.quant.zero_point > 127) {
          throw FormatError("tensor '" + t.name + "' has invalid quantization parameters");
        }
      }
      const std::size_t n = entry.at("bytes").get<std::size_t>();
      if (n != element_count(t.shape) * bytes_per_element(t.quant.scheme)) {
        throw FormatError("tensor '" + t.name + "' byte count does not match its shape and dtype");
      }
      if (offset + n > bytes.size()) throw FormatError("archive payload is truncated at tensor '" + t.name + "'");
      t.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                       bytes.begin() + static_cast<std::ptrdiff_t>(offset + n));
      offset += n;
      archive.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt archive metadata: ") + e.what());
  }
  if (offset != bytes.size()) throw FormatError("archive has trailing bytes after the declared tensors");
  return archive;
}

void save_archive(const ModelArchive& archive, const std::filesystem::path& path) {
  const auto bytes = serialize_archive(archive);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

std::size_t LoadedModel::history_rows() const {
  if (kind == ModelKind::Jepa) return jepa->config().past_steps;
  return lstm->spec().timesteps - 1;
}

ModelArchive jepa_archive(const JepaModel& model, const Normalizer& normalizer) {
  ModelArchive archive;
  nlohmann::json components;
  for (std::size_t i = 0; i < 5; ++i) {
    components[kJepaComponents[i]] = spec_json(component(model, i).spec());
    add_mlp_tensors(archive, kJepaComponents[i], component(model, i));
  }
  archive.model = {{"kind", "jepa"},
                   {"scheme", "f32"},
                   {"config", model.config().to_json()},
                   {"components", components},
                   {"normalizer", normalizer.to_json()}};
  return archive;
}

ModelArchive lstm_archive(const Lstm<float>& model, const Normalizer& normalizer) {
  ModelArchive archive;
  archive.model = {{"kind", "lstm"},
                   {"scheme", "f32"},
                   {"config", lstm_spec_json(model.spec())},
                   {"normalizer", normalizer.to_json()}};
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const std::string base = "lstm." + std::to_string(l);
    const auto& layer = model.layers()[l];
    archive.tensors.push_back(encode_tensor(base + ".w_input", layer.w_input.value(), Scheme::Real32));
    archive.tensors.push_back(encode_tensor(base + ".w_hidden", layer.w_hidden.value(), Scheme::Real32));
    archive.tensors.push_back(encode_tensor(base + ".bias", layer.bias.value(), Scheme::Real32));
  }
  archive.tensors.push_back(encode_tensor("head.weight", model.head().weight.value(), Scheme::Real32));
  archive.tensors.push_back(encode_tensor("head.bias", model.head().bias.value(), Scheme::Real32));
  return archive;
}

LoadedModel load_model(const ModelArchive& archive) {
  LoadedModel out;
  try {
    const auto& m = archive.model;
    out.scheme = scheme_from_string(m.at("scheme").get<std::string>());
    out.normalizer = Normalizer::from_json(m.at("normalizer"));
    const std::string kind = m.at("kind").get<std::string>();
    if (kind == "jepa") {
      out.kind = ModelKind::Jepa;
      const JepaConfig config = JepaConfig::from_json(m.at("config"));
      std::vector<Mlp<float>> parts;
      for (const char* name : kJepaComponents) {
        parts.push_back(read_mlp(archive, name, spec_from_json(m.at("components").at(name))));
      }
      out.jepa.emplace(config, std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), std::move(parts[3]),
                       std::move(parts[4]));
    } else if (kind == "lstm") {
      out.kind = ModelKind::Lstm;
      const LstmSpec spec = lstm_spec_from_json(m.at("config"));
      std::vector<LstmLayer<float>> layers;
      for (std::size_t l = 0; l < spec.depth; ++l) {
        const std::string base = "lstm." + std::to_string(l);
        layers.push_back({param(decode_tensor(archive.tensor(base + ".w_input"))),
                          param(decode_tensor(archive.tensor(base + ".w_hidden"))),
                          param(decode_tensor(archive.tensor(base + ".bias")))});
      }
      DenseLayer<float> head{param(decode_tensor(archive.tensor("head.weight"))),
                             param(decode_tensor(archive.tensor("head.bias")))};
      out.lstm.emplace(spec, std::move(layers), std::move(head));
    } else {
      throw FormatError("unknown model kind '" + kind + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt model metadata: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("archive tensors do not match the architecture: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid architecture in archive: ") + e.what());
  }
  return out;
}

ModelArchive quantize(const ModelArchive& archive, Scheme scheme) {
  if (archive.model.value("scheme", "") != "f32") {
    throw ContractError("quantization needs a real32 archive, got scheme '" + archive.model.value("scheme", "") + "'");
  }
  ModelArchive out;
  out.model = archive.model;
  out.model["scheme"] = to_string(scheme);
  for (const auto& t : archive.tensors) out.tensors.push_back(encode_tensor(t.name, decode_tensor(t), scheme));
  return out;
}

}  // namespace ldyn
