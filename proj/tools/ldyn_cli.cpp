// ldyn: synthetic data generation, training, evaluation, compression and
// benchmarking of latent emission models.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ldyn/compress.hpp"
#include "ldyn/evaluate.hpp"
#include "ldyn/run_config.hpp"
#include "ldyn/synthetic.hpp"
#include "ldyn/train.hpp"

namespace fs = std::filesystem;
using namespace ldyn;

namespace {

constexpr int kUsageError = 2;
constexpr int kFailure = 1;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

fs::path sidecar(const fs::path& artifact, const std::string& suffix) {
  return fs::path(artifact.string() + suffix);
}

void echo_config(const fs::path& artifact, const nlohmann::json& resolved) {
  write_text(sidecar(artifact, ".config.json"), resolved.dump(2) + "\n");
}

std::uint64_t resolve_seed(std::uint64_t flag) { return seed_from_environment().value_or(flag); }

// ---- gen-data -------------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  double duration_s = 600.0;
  std::string out;
};

int gen_data(const GenArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  if (!(a.duration_s >= 60.0)) throw UsageError("--duration-s must be at least 60");
  const auto records = generate_synthetic_cycle(seed, a.duration_s);
  save_csv(a.out, records);
  echo_config(a.out, {{"command", "gen-data"}, {"seed", seed}, {"duration_s", a.duration_s}, {"records", records.size()}});
  std::cout << "wrote " << records.size() << " records to " << a.out << "\n";
  return 0;
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  std::string model;
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
};

class CsvLog {
 public:
  explicit CsvLog(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_.precision(9);
    out_ << kTrainingLogHeader << '\n';
  }
  void operator()(const LossLogRow& r) {
    out_ << r.step << ',' << r.variance << ',' << r.invariance << ',' << r.covariance << ',' << r.cross_covariance
         << ',' << r.total << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void report_validation(const LoadedModel& model, const NormalizedSeries& validation) {
  const std::size_t first = model.history_rows() == 0 ? 1 : model.history_rows();
  if (validation.length() <= first) return;
  const auto actual = actual_emissions(validation, first);
  const auto base = score("persistence", "", actual, predict_persistence(validation, first));
  const auto mine = score("", "", actual, predict(model, validation, ForecastMode::TeacherForced, first));
  std::cout << "validation WMSE " << mine.wmse << " (persistence " << base.wmse << ")\n";
}

int train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.model.empty()) cfg.model = model_kind_from_string(a.model);
  if (a.seed) cfg.training.seed = *a.seed;
  cfg.training.seed = resolve_seed(cfg.training.seed);
  const std::string data_path = a.data.empty() ? cfg.data : a.data;
  if (data_path.empty()) throw UsageError("no training data: pass --data or set \"data\" in the config");
  cfg.data = data_path;
  cfg.validate();

  const auto records = load_csv(data_path);
  const RecordSplit split = split_contiguous(records, cfg.split);
  const Normalizer normalizer = Normalizer::fit(split.train);
  const NormalizedSeries train_series = normalizer.apply(split.train);
  const fs::path out(a.out);
  CsvLog log(sidecar(out, ".log.csv"));
  echo_config(out, cfg.to_json());

  if (cfg.model == ModelKind::Jepa) {
    JepaModel model(cfg.jepa, cfg.training.seed);
    const auto windows = window_dataset(train_series, cfg.jepa.past_steps, cfg.jepa.future_steps);
    try {
      const auto core = train_jepa_core(model, windows, cfg.training, std::ref(log));
      std::cout << "core: " << core.steps << " steps, final epoch loss " << core.final_epoch_loss << "\n";
      CsvLog decoder_log(sidecar(out, ".decoder.log.csv"));
      const auto dec = train_decoders(model, windows, cfg.training, std::ref(decoder_log));
      std::cout << "decoders: " << dec.steps << " steps, final epoch loss " << dec.final_epoch_loss << "\n";
    } catch (const NumericError& e) {
      save_archive(jepa_archive(model, normalizer), out);
      throw std::runtime_error(std::string(e.what()) + "; last good checkpoint saved to " + out.string());
    }
    save_archive(jepa_archive(model, normalizer), out);
  } else {
    Lstm<float> model(cfg.lstm, cfg.training.seed);
    try {
      const auto s = train_lstm(model, make_lstm_samples(train_series, cfg.lstm.timesteps), cfg.training, std::ref(log));
      std::cout << "lstm: " << s.steps << " steps, final epoch loss " << s.final_epoch_loss << "\n";
    } catch (const NumericError& e) {
      save_archive(lstm_archive(model, normalizer), out);
      throw std::runtime_error(std::string(e.what()) + "; last good checkpoint saved to " + out.string());
    }
    save_archive(lstm_archive(model, normalizer), out);
  }
  if (!split.validation.empty()) {
    report_validation(load_model(load_archive(out)), normalizer.apply(split.validation));
  }
  std::cout << "saved " << out.string() << "\n";
  return 0;
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string model_file;
  std::string data;
  std::string mode = "teacher-forced";
  std::string report;
  std::string predictions;
};

int eval(const EvalArgs& a) {
  std::vector<ForecastMode> modes;
  if (a.mode == "teacher-forced" || a.mode == "both") modes.push_back(ForecastMode::TeacherForced);
  if (a.mode == "closed-loop" || a.mode == "both") modes.push_back(ForecastMode::ClosedLoop);

  const LoadedModel model = load_model(load_archive(a.model_file));
  const auto records = load_csv(a.data);
  const NormalizedSeries series = model.normalizer.apply(records);
  const std::size_t first = std::max<std::size_t>(1, model.history_rows());
  if (series.length() <= first) throw std::runtime_error("dataset is shorter than one window");
  const Tensor<float> actual = actual_emissions(series, first);
  const std::string name = fs::path(a.model_file).stem().string();

  std::vector<ScoreRow> rows;
  std::vector<Tensor<float>> outputs;
  for (ForecastMode m : modes) {
    outputs.push_back(predict(model, series, m, first));
    rows.push_back(score(name, to_string(m), actual, outputs.back()));
  }
  rows.push_back(score("persistence", "one-step", actual, predict_persistence(series, first)));
  const std::string csv = format_score_csv(rows);
  write_text(a.report, csv);
  echo_config(a.report, {{"command", "eval"},
                         {"model_file", a.model_file},
                         {"data", a.data},
                         {"mode", a.mode},
                         {"first_scored_row", first},
                         {"scored_steps", actual.dim(0)}});
  std::cout << csv;

  if (!a.predictions.empty()) {
    std::ostringstream out;
    out.precision(9);
    out << "time_s,mode";
    for (const auto& s : kSpeciesNames) out << ',' << s << ',' << s << "_pred";
    out << '\n';
    for (std::size_t m = 0; m < modes.size(); ++m) {
      for (std::size_t i = 0; i < actual.dim(0); ++i) {
        out << records[first + i].time_s << ',' << to_string(modes[m]);
        for (std::size_t c = 0; c < kEmissionChannels; ++c) {
          const std::size_t ch = kInputChannels + c;
          out << ',' << model.normalizer.invert(ch, actual.at(i, c)) << ','
              << model.normalizer.invert(ch, outputs[m].at(i, c));
        }
        out << '\n';
      }
    }
    write_text(a.predictions, out.str());
  }
  return 0;
}

// ---- compress -------------------------------------------------------------------

struct PruneArgs {
  std::vector<double> ratios;
  bool sweep = false;
  std::string in;
  std::string out;
  std::size_t finetune_epochs = 0;
  std::string data;
  std::uint64_t seed = 0;
};

void print_report(const PruneReport& r) {
  std::cout << "ratio " << r.ratio << ": parameters " << r.parameters_before << " -> " << r.parameters_after << "\n";
  for (const auto& l : r.layers) {
    std::cout << "  " << l.component << " hidden " << l.layer << ": kept " << l.kept << " of " << l.width
              << ", removed " << l.removed.size() << "\n";
  }
}

std::string ratio_tag(double ratio) {
  std::ostringstream s;
  s << 'p' << std::setw(2) << std::setfill('0') << std::lround(ratio * 100);
  return s.str();
}

int prune(const PruneArgs& a) {
  std::vector<double> ratios = a.ratios;
  if (a.sweep) ratios = {0.05, 0.10, 0.15, 0.20, 0.30};
  if (ratios.empty()) throw UsageError("pass --ratio or --sweep");
  for (double r : ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw UsageError("--ratio must be in [0, 1)");
  }
  if (a.finetune_epochs > 0 && a.data.empty()) throw UsageError("--finetune-epochs needs --data");

  const ModelArchive parent = load_archive(a.in);
  const LoadedModel loaded = load_model(parent);
  if (loaded.kind != ModelKind::Jepa) throw UsageError("structured pruning supports JEPA archives only");
  if (loaded.scheme != Scheme::Real32) throw UsageError("prune a real32 archive before quantizing it");

  std::vector<SequenceWindow> windows;
  if (a.finetune_epochs > 0) {
    const auto train = split_contiguous(load_csv(a.data), {}).train;
    const auto& cfg = loaded.jepa->config();
    windows = window_dataset(loaded.normalizer.apply(train), cfg.past_steps, cfg.future_steps);
  }

  const bool many = ratios.size() > 1;
  if (many) fs::create_directories(a.out);
  for (double r : ratios) {
    PrunedJepa pruned = prune_structured(*loaded.jepa, r);
    if (a.finetune_epochs > 0) {
      TrainOptions o;
      o.epochs = a.finetune_epochs;
      o.decoder_epochs = a.finetune_epochs;
      o.seed = resolve_seed(a.seed);
      train_jepa_core(pruned.model, windows, o);
      train_decoders(pruned.model, windows, o);
    }
    ModelArchive archive = jepa_archive(pruned.model, loaded.normalizer);
    archive.model["pruning"] = {{"ratio", r},
                                {"parameters_before", pruned.report.parameters_before},
                                {"parameters_after", pruned.report.parameters_after},
                                {"finetune_epochs", a.finetune_epochs}};
    const fs::path path = many ? fs::path(a.out) / (fs::path(a.in).stem().string() + "_" + ratio_tag(r) + ".ldyn")
                               : fs::path(a.out);
    save_archive(archive, path);
    echo_config(path, {{"command", "compress prune"}, {"in", a.in}, {"ratio", r}, {"finetune_epochs", a.finetune_epochs}});
    print_report(pruned.report);
    std::cout << "  wrote " << path.string() << "\n";
  }
  return 0;
}

struct QuantizeArgs {
  std::string format;
  std::string in;
  std::string out;
};

int quantize_cmd(const QuantizeArgs& a) {
  if (a.format != "bf16" && a.format != "int8") throw UsageError("--format must be bf16 or int8");
  const Scheme scheme = scheme_from_string(a.format);
  const ModelArchive parent = load_archive(a.in);
  const ModelArchive out = quantize(parent, scheme);
  save_archive(out, a.out);
  echo_config(a.out, {{"command", "compress quantize"}, {"in", a.in}, {"format", a.format}});
  std::cout << a.format << ": " << out.tensors.size() << " tensors, payload " << parent.payload_bytes() << " -> "
            << out.payload_bytes() << " bytes\n";
  if (scheme == Scheme::Int8) {
    for (const auto& t : out.tensors) {
      std::cout << "  " << t.name << " scale " << t.quant.scale << " zero_point " << t.quant.zero_point << "\n";
    }
  }
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

// ---- bench ----------------------------------------------------------------------

struct BenchArgs {
  std::string models;
  std::string data;
  std::size_t repeat = 3;
  std::string out;
};

int bench(const BenchArgs& a) {
  if (a.repeat < 3) throw UsageError("--repeat must be at least 3");
  if (!fs::is_directory(a.models)) throw UsageError("--models must be a directory");
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(a.models)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ldyn") paths.push_back(entry.path());
  }
  if (paths.empty()) throw std::runtime_error("no .ldyn archives in " + a.models);
  std::sort(paths.begin(), paths.end());

  // Score every model on the same rows.
  std::size_t first = 1;
  for (const auto& p : paths) first = std::max(first, load_model(load_archive(p)).history_rows());
  const auto records = load_csv(a.data);

  std::vector<BenchmarkRow> rows;
  for (const auto& p : paths) {
    rows.push_back(benchmark(p, records, a.repeat, first));
    std::cerr << rows.back().model << ": " << rows.back().latency_ms_per_step << " +/- " << rows.back().latency_sd_ms
              << " ms/step\n";
  }
  sort_by_size(rows);
  const std::string csv = format_benchmark_csv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text(a.out, csv);
    echo_config(a.out, {{"command", "bench"}, {"models", a.models}, {"data", a.data}, {"repeat", a.repeat},
                        {"first_scored_row", first}});
    std::cout << "wrote " << rows.size() << " rows to " << a.out << "\n";
  }
  return 0;
}

std::string one_line(std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  return message;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent emission dynamics: data, training, evaluation and compression"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic drive cycle CSV");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (LDYN_SEED overrides)");
  gen_cmd->add_option("--duration-s", gen.duration_s, "Cycle length in seconds (>= 60)");
  gen_cmd->add_option("--out", gen.out, "Output CSV")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a JEPA or LSTM model");
  train_cmd->add_option("--model", tr.model, "jepa or lstm (overrides the config)")
      ->check(CLI::IsMember({"jepa", "lstm"}));
  train_cmd->add_option("--config", tr.config, "JSON run config")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Training CSV");
  train_cmd->add_option("--seed", tr.seed, "Seed (LDYN_SEED overrides)");
  train_cmd->add_option("--out", tr.out, "Output archive")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model on a CSV");
  eval_cmd->add_option("--model-file", ev.model_file, "Model archive")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Evaluation CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--mode", ev.mode, "teacher-forced, closed-loop or both")
      ->check(CLI::IsMember({"teacher-forced", "closed-loop", "both"}));
  eval_cmd->add_option("--report", ev.report, "Report CSV")->required();
  eval_cmd->add_option("--predictions", ev.predictions, "Per-timestep predictions CSV");

  auto* compress_cmd = app.add_subcommand("compress", "Prune or quantize an archive");
  compress_cmd->require_subcommand(1);
  PruneArgs pr;
  auto* prune_cmd = compress_cmd->add_subcommand("prune", "Structured neuron pruning");
  prune_cmd->add_option("--ratio", pr.ratios, "Pruning ratio(s) in [0, 1)");
  prune_cmd->add_flag("--sweep", pr.sweep, "Ratios 0.05, 0.10, 0.15, 0.20, 0.30");
  prune_cmd->add_option("--in", pr.in, "Input archive")->required()->check(CLI::ExistingFile);
  prune_cmd->add_option("--out", pr.out, "Output archive, or directory for several ratios")->required();
  prune_cmd->add_option("--finetune-epochs", pr.finetune_epochs, "Retraining epochs after pruning (default 0)");
  prune_cmd->add_option("--data", pr.data, "Training CSV for fine-tuning");
  prune_cmd->add_option("--seed", pr.seed, "Fine-tuning seed (LDYN_SEED overrides)");
  QuantizeArgs qu;
  auto* quant_cmd = compress_cmd->add_subcommand("quantize", "Post-training quantization");
  quant_cmd->add_option("--format", qu.format, "bf16 or int8")->required();
  quant_cmd->add_option("--in", qu.in, "Input archive")->required()->check(CLI::ExistingFile);
  quant_cmd->add_option("--out", qu.out, "Output archive")->required();

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Size/latency/accuracy report over a directory of archives");
  bench_cmd->add_option("--models", be.models, "Directory of .ldyn archives")->required();
  bench_cmd->add_option("--data", be.data, "Evaluation CSV")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--repeat", be.repeat, "Timed passes (>= 3)");
  bench_cmd->add_option("--out", be.out, "Report CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ldyn: usage error: " << one_line(e.what()) << "\n";
    return kUsageError;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_cmd) return train(tr);
    if (*eval_cmd) return eval(ev);
    if (*prune_cmd) return prune(pr);
    if (*quant_cmd) return quantize_cmd(qu);
    if (*bench_cmd) return bench(be);
  } catch (const UsageError& e) {
    std::cerr << "ldyn: usage error: " << one_line(e.what()) << "\n";
    return kUsageError;
  } catch (const ContractError& e) {
    std::cerr << "ldyn: error: " << one_line(e.what()) << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "ldyn: error: " << one_line(e.what()) << "\n";
    return kFailure;
  }
  return kFailure;
}
