// Command-line front end: period detection, training, evaluation, ablation
// grids, interval sweeps and forecasting.

#include <malloc.h>

#include <CLI11.hpp>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "ctpnet/checkpoint.hpp"
#include "ctpnet/errors.hpp"
#include "ctpnet/harness.hpp"
#include "ctpnet/series.hpp"
#include "ctpnet/train.hpp"

namespace {

using namespace ctpnet;

int cmd_detect_period(const std::string& csv, std::optional<std::string> time_column, std::size_t min_lag,
                      std::size_t max_lag, double threshold, bool verbose) {
  if (!time_column) time_column = guess_time_column(csv);
  const RawSeries series = load_csv(csv, time_column);
  const auto det = detect_period_detail(series, min_lag, max_lag, threshold);
  std::cout << det.period << "\n";
  if (verbose) std::cerr << "mean ACF at lag " << det.period << ": " << det.score << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, bool quiet) {
  const auto cfg = ExperimentConfig::load(config_path);
  const auto data = prepare_data(cfg);
  const CellSpec cell{cfg.model.l_out, 0, Variant{"full", cfg.model.ablate_i1, cfg.model.ablate_i2, cfg.model.ablate_i3},
                      cfg.seeds.front()};
  // Surface config errors before any data-dependent work.
  cell_model_config(cfg, data, cell).validate();
  auto res = run_cell(cfg, data, cell, quiet ? nullptr : &std::cerr);

  nlohmann::json meta;
  meta["dataset"] = data.dataset;
  meta["batch_size"] = cfg.train.batch_size;
  meta["test"] = {{"mse", res.record.test.mse}, {"mae", res.record.test.mae}, {"n", res.record.test.n}};
  meta["record"] = res.record.to_json();
  save_checkpoint(cfg.checkpoint, res.model, data.norm, data.normalized.channel_names, meta);
  if (!cfg.results_log.empty()) append_results_log(cfg.results_log, res.record, res.record.model.period);

  std::cout << std::setprecision(17) << "dataset=" << data.dataset << " horizon=" << res.record.model.l_out
            << " period=" << res.record.model.period << " tq_period=" << res.record.model.tq_period
            << " epochs=" << res.record.epochs.size() << " best_epoch=" << res.record.best_epoch << "\n"
            << "test mse=" << res.record.test.mse << " mae=" << res.record.test.mae << "\n"
            << "checkpoint: " << cfg.checkpoint.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& config_path) {
  const auto ck = load_checkpoint(ckpt_path);
  const auto cfg = ExperimentConfig::load(config_path);
  const auto data = prepare_data(cfg);
  if (data.norm.mean != ck.norm.mean || data.norm.std != ck.norm.std) {
    std::cerr << "warning: dataset normalization differs from the checkpoint's\n";
  }
  const auto& mc = ck.model.config();
  const std::size_t batch = ck.meta.value("batch_size", cfg.train.batch_size);
  const Metrics m = evaluate(ck.model, data.windows(Split::kTest, mc.l_in, mc.l_out), batch);
  std::cout << std::setprecision(17) << "test mse=" << m.mse << " mae=" << m.mae << " n=" << m.n << "\n";
  if (ck.meta.contains("test")) {
    const bool same = ck.meta["test"]["mse"].get<double>() == m.mse && ck.meta["test"]["mae"].get<double>() == m.mae;
    std::cout << "matches training-time metrics: " << (same ? "yes" : "no") << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, bool quiet) {
  const auto cfg = ExperimentConfig::load(config_path);
  const auto data = prepare_data(cfg);
  const auto table = run_ablation(cfg, data, quiet ? nullptr : &std::cerr);
  std::cout << table.markdown();
  return 0;
}

int cmd_sweep(const std::string& config_path, bool quiet) {
  const auto cfg = ExperimentConfig::load(config_path);
  const auto data = prepare_data(cfg);
  const auto table = sweep_interval(cfg, data, quiet ? nullptr : &std::cerr);
  std::cout << table.markdown();
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& csv, std::optional<std::string> time_column,
                const std::string& output) {
  const auto ck = load_checkpoint(ckpt_path);
  if (!time_column) time_column = guess_time_column(csv);
  const RawSeries raw = load_csv(csv, time_column);
  const auto& mc = ck.model.config();
  if (raw.n_channels() != mc.n_channels) {
    throw ConfigInvalid("CSV has " + std::to_string(raw.n_channels()) + " channels, model expects " +
                        std::to_string(mc.n_channels));
  }
  if (raw.length() < mc.l_in) throw SeriesTooShort("CSV shorter than the look-back window");
  const std::size_t start = raw.length() - mc.l_in;
  const RawSeries window = apply_norm(raw.segment(start, mc.l_in), ck.norm);
  const std::int64_t t[] = {static_cast<std::int64_t>(start)};
  Tensor forecast;
  {
    NoGradGuard no_grad;
    forecast = ck.model.forward(Tensor({1, mc.n_channels, mc.l_in}, window.values.to_vector()), t);
  }
  const Tensor out = invert_norm(Tensor({mc.n_channels, mc.l_out}, forecast.to_vector()), ck.norm);

  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw IoError("cannot write " + output);
  }
  std::ostream& os = output.empty() ? std::cout : file;
  const auto& names = raw.channel_names;
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n' << std::setprecision(10);
  const auto v = out.data();
  for (std::size_t s = 0; s < mc.l_out; ++s) {
    for (std::size_t c = 0; c < mc.n_channels; ++c) os << (c ? "," : "") << v[c * mc.l_out + s];
    os << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"CTPNet forecasting toolkit"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress per-epoch progress");

  std::string csv, config, ckpt, output;
  std::optional<std::string> time_column;
  std::size_t min_lag = 2, max_lag = 48;
  double threshold = 0.1;
  bool verbose = false;

  auto* detect = app.add_subcommand("detect-period", "Print the dominant ACF period of a CSV series");
  detect->add_option("csv", csv, "Input CSV")->required();
  detect->add_option("--time-column", time_column, "Column to exclude from values");
  detect->add_option("--min-lag", min_lag, "Smallest candidate lag")->capture_default_str();
  detect->add_option("--max-lag", max_lag, "Largest candidate lag")->capture_default_str();
  detect->add_option("--threshold", threshold, "Minimum mean ACF at the peak")->capture_default_str();
  detect->add_flag("-v,--verbose", verbose, "Also print the peak ACF value");

  auto* train = app.add_subcommand("train", "Train one model and save a checkpoint");
  train->add_option("config", config, "Experiment config (JSON)")->required();

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  eval->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("config", config, "Experiment config (JSON)")->required();

  auto* ablate = app.add_subcommand("ablate", "Train every ablation variant and print the averaged table");
  ablate->add_option("config", config, "Experiment config (JSON)")->required();

  auto* sweep = app.add_subcommand("sweep-interval", "Train one model per (interval, horizon)");
  sweep->add_option("config", config, "Experiment config (JSON)")->required();

  auto* predict = app.add_subcommand("predict", "Forecast the steps after the end of a CSV");
  predict->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  predict->add_option("csv", csv, "Input CSV")->required();
  predict->add_option("--time-column", time_column, "Column to exclude from values");
  predict->add_option("-o,--output", output, "Write the forecast here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*detect) return cmd_detect_period(csv, time_column, min_lag, max_lag, threshold, verbose);
    if (*train) return cmd_train(config, quiet);
    if (*eval) return cmd_evaluate(ckpt, config);
    if (*ablate) return cmd_ablate(config, quiet);
    if (*sweep) return cmd_sweep(config, quiet);
    if (*predict) return cmd_predict(ckpt, csv, time_column, output);
  } catch (const Diverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
