#include "ldyn/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ldyn/error.hpp"

namespace ldyn {

double EmissionRecord::channel(std::size_t c) const {
  switch (c) {
    case 0: return torque_nm;
    case 1: return speed_rpm;
    case 2: return lambda;
    case 3: return nox;
    case 4: return co2;
    case 5: return co;
    case 6: return thc;
    default: throw DimensionError("channel index " + std::to_string(c) + " out of range");
  }
}

namespace {

std::string line_ref(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

double parse_cell(std::string_view cell, const std::string& where) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw FormatError(where + "non-numeric cell '" + std::string(cell) + "'");
  }
  return value;
}

void validate_record(const EmissionRecord& r, const std::string& where) {
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!std::isfinite(r.channel(c))) throw FormatError(where + "non-finite value");
  }
  if (!(r.lambda > 0.0)) throw FormatError(where + "lambda must be positive, got " + std::to_string(r.lambda));
  if (r.nox < 0.0 || r.co2 < 0.0 || r.co < 0.0 || r.thc < 0.0) {
    throw FormatError(where + "species concentrations must be non-negative");
  }
}

void validate_step(double previous, double current, const std::string& where) {
  if (!(current > previous)) throw FormatError(where + "time must be strictly increasing");
  if (std::abs((current - previous) - kSampleInterval) > 1e-6) {
    throw FormatError(where + "time step must be 0.2 s, got " + std::to_string(current - previous));
  }
}

void append_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

std::vector<EmissionRecord> parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<EmissionRecord> records;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line != kCsvHeader) {
        throw FormatError(line_ref(source, line_no) + "expected header '" + kCsvHeader + "'");
      }
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::string where = line_ref(source, line_no);
    std::array<double, kChannels + 1> cells{};
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell(line.data() + start, (comma == std::string::npos ? line.size() : comma) - start);
      if (count >= cells.size()) throw FormatError(where + "too many columns");
      cells[count++] = parse_cell(cell, where);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (count != cells.size()) throw FormatError(where + "missing column (expected 8, got " + std::to_string(count) + ")");
    EmissionRecord r{cells[0], cells[1], cells[2], cells[3], cells[4], cells[5], cells[6], cells[7]};
    validate_record(r, where);
    if (!records.empty()) validate_step(records.back().time_s, r.time_s, where);
    records.push_back(r);
  }
  if (!have_header) throw FormatError(source + ": missing header");
  return records;
}

std::vector<EmissionRecord> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path.string());
}

std::string format_csv(const std::vector<EmissionRecord>& records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    append_number(out, r.time_s);
    for (std::size_t c = 0; c < kChannels; ++c) {
      out += ',';
      append_number(out, r.channel(c));
    }
    out += '\n';
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const std::vector<EmissionRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << format_csv(records);
  if (!out) throw FormatError("failed writing " + path.string());
}

void validate_records(const std::vector<EmissionRecord>& records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string where = "record " + std::to_string(i) + ": ";
    validate_record(records[i], where);
    if (i > 0) validate_step(records[i - 1].time_s, records[i].time_s, where);
  }
}

Normalizer::Normalizer(std::array<double, kChannels> min, std::array<double, kChannels> max) : min_(min), max_(max) {
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!(max_[c] >= min_[c])) throw ContractError("normalizer max below min for channel " + std::to_string(c));
  }
}

Normalizer Normalizer::fit(const std::vector<EmissionRecord>& train) {
  if (train.empty()) throw ContractError("cannot fit a normalizer on an empty record set");
  std::array<double, kChannels> lo{};
  std::array<double, kChannels> hi{};
  for (std::size_t c = 0; c < kChannels; ++c) lo[c] = hi[c] = train.front().channel(c);
  for (const auto& r : train) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      lo[c] = std::min(lo[c], r.channel(c));
      hi[c] = std::max(hi[c], r.channel(c));
    }
  }
  return Normalizer(lo, hi);
}

double Normalizer::apply(std::size_t channel, double value) const {
  const double span = max_.at(channel) - min_[channel];
  if (span == 0.0) return 0.0;
  return (value - min_[channel]) / span;
}

double Normalizer::invert(std::size_t channel, double scaled) const {
  const double span = max_.at(channel) - min_[channel];
  return min_[channel] + scaled * span;
}

NormalizedSeries Normalizer::apply(const std::vector<EmissionRecord>& records) const {
  if (records.empty()) throw ContractError("cannot normalize an empty series");
  NormalizedSeries out{Tensor<float>(Shape{records.size(), kInputChannels}),
                       Tensor<float>(Shape{records.size(), kEmissionChannels})};
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t c = 0; c < kInputChannels; ++c) {
      out.inputs.at(i, c) = static_cast<float>(apply(c, records[i].channel(c)));
    }
    for (std::size_t c = 0; c < kEmissionChannels; ++c) {
      const std::size_t ch = kInputChannels + c;
      out.emissions.at(i, c) = static_cast<float>(apply(ch, records[i].channel(ch)));
    }
  }
  return out;
}

nlohmann::json Normalizer::to_json() const {
  return {{"min", std::vector<double>(min_.begin(), min_.end())},
          {"max", std::vector<double>(max_.begin(), max_.end())}};
}

Normalizer Normalizer::from_json(const nlohmann::json& doc) {
  const auto lo = doc.at("min").get<std::vector<double>>();
  const auto hi = doc.at("max").get<std::vector<double>>();
  if (lo.size() != kChannels || hi.size() != kChannels) throw FormatError("normalizer needs 7 channels");
  std::array<double, kChannels> a{};
  std::array<double, kChannels> b{};
  std::copy(lo.begin(), lo.end(), a.begin());
  std::copy(hi.begin(), hi.end(), b.begin());
  return Normalizer(a, b);
}

std::size_t window_count(std::size_t length, std::size_t past_steps, std::size_t future_steps, std::size_t stride) {
  if (stride == 0) throw ContractError("window stride must be at least 1");
  if (past_steps == 0 || future_steps == 0) throw ContractError("window horizons must be positive");
  if (length < past_steps + future_steps) {
    throw ContractError("series of length " + std::to_string(length) + " is shorter than one window (" +
                        std::to_string(past_steps + future_steps) + ")");
  }
  return (length - past_steps - future_steps) / stride + 1;
}

std::vector<SequenceWindow> window_dataset(const NormalizedSeries& series, std::size_t past_steps,
                                           std::size_t future_steps, std::size_t stride) {
  if (future_steps < 2) throw ContractError("future horizon must be at least 2 steps");
  const std::size_t count = window_count(series.length(), past_steps, future_steps, stride);
  std::vector<SequenceWindow> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t start = w * stride;
    const std::size_t origin = start + past_steps - 1;
    out.push_back({series.emissions.rows(start, origin + 1),
                   series.inputs.rows(origin + 1, origin + future_steps),
                   series.emissions.rows(origin + 1, origin + 1 + future_steps), origin});
  }
  return out;
}

void SplitFractions::validate() const {
  if (train <= 0.0 || validation < 0.0 || test < 0.0 || std::abs(train + validation + test - 1.0) > 1e-9) {
    throw ContractError("split fractions must be non-negative, train positive, and sum to 1");
  }
}

RecordSplit split_contiguous(const std::vector<EmissionRecord>& records, const SplitFractions& fractions) {
  fractions.validate();
  const auto n = records.size();
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n)));
  RecordSplit out;
  out.train.assign(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.validation.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train),
                        records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(records.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), records.end());
  return out;
}

}  // namespace ldyn
