#include "ctpnet/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "ctpnet/errors.hpp"

namespace ctpnet {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "dataset", "data_path", "time_column", "horizons", "intervals", "seeds", "variants", "split_fractions",
      "results_log", "checkpoint",
      // model
      "l_in", "l_out", "period", "tq_period", "d_model", "heads_crl", "heads_block", "heads_prl", "n_channels",
      "blocks", "ablate_i1", "ablate_i2", "ablate_i3",
      // training
      "lr", "beta1", "beta2", "eps", "batch_size", "max_epochs", "patience", "seed", "max_train_windows"};
  return keys;
}

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigInvalid("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) throw ConfigInvalid("unknown config key '" + key + "'");
  }
  ExperimentConfig c;
  try {
    if (!j.contains("data_path")) throw ConfigInvalid("config needs 'data_path'");
    c.data_path = j.at("data_path").get<std::string>();
    c.dataset = j.value("dataset", c.data_path.stem().string());
    if (j.contains("time_column")) c.time_column = j.at("time_column").get<std::string>();
    c.model = j.get<CTPNetConfig>();
    c.train = j.get<TrainConfig>();
    if (j.contains("horizons")) j.at("horizons").get_to(c.horizons);
    if (j.contains("intervals")) j.at("intervals").get_to(c.intervals);
    if (j.contains("seeds")) {
      j.at("seeds").get_to(c.seeds);
    } else if (j.contains("seed")) {
      c.seeds = {c.train.seed};
    }
    if (j.contains("variants")) j.at("variants").get_to(c.variants);
    if (j.contains("split_fractions")) c.split_fractions = j.at("split_fractions").get<std::vector<double>>();
    if (j.contains("results_log")) c.results_log = j.at("results_log").get<std::string>();
    if (j.contains("checkpoint")) c.checkpoint = j.at("checkpoint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("bad config value: ") + e.what());
  }
  if (c.split_fractions && c.split_fractions->size() != 3) throw ConfigInvalid("split_fractions needs 3 values");
  if (c.seeds.empty()) throw ConfigInvalid("seeds must not be empty");
  for (const auto& v : c.variants) find_variant(v);
  c.train.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto cfg = from_json(j);
  if (cfg.data_path.is_relative()) cfg.data_path = path.parent_path() / cfg.data_path;
  return cfg;
}

std::vector<Variant> ablation_variants() {
  return {{"full", false, false, false},     {"no_i1", true, false, false},   {"no_i2", false, true, false},
          {"no_i3", false, false, true},     {"no_i1_i2", true, true, false}, {"no_i1_i3", true, false, true},
          {"no_i2_i3", false, true, true}};
}

const Variant& find_variant(const std::string& name) {
  static const auto all = ablation_variants();
  for (const auto& v : all)
    if (v.name == name) return v;
  throw ConfigInvalid("unknown variant '" + name + "'");
}

WindowSet PreparedData::windows(Split which, std::size_t l_in, std::size_t l_out) const {
  const std::size_t tr = split.train_rows, va = split.val_rows, te = split.test_rows;
  switch (which) {
    case Split::kTrain:
      return WindowSet(normalized.segment(0, tr), l_in, l_out);
    case Split::kVal:
      if (tr < l_in) throw SeriesTooShort("training segment shorter than the look-back");
      return WindowSet(normalized.segment(tr - l_in, va + l_in), l_in, l_out);
    case Split::kTest:
      if (tr + va < l_in) throw SeriesTooShort("train+val shorter than the look-back");
      return WindowSet(normalized.segment(tr + va - l_in, te + l_in), l_in, l_out);
  }
  throw ConfigInvalid("bad split");
}

RawSeries PreparedData::train_segment() const { return normalized.segment(0, split.train_rows); }

std::optional<std::string> guess_time_column(const std::filesystem::path& csv) {
  std::ifstream f(csv);
  std::string line;
  if (!f || !std::getline(f, line)) return std::nullopt;
  const auto comma = line.find(',');
  std::string first = line.substr(0, comma);
  first.erase(std::remove_if(first.begin(), first.end(), [](char ch) { return ch == '"' || ch == '\r' || ch == ' '; }),
              first.end());
  for (const char* name : {"date", "Date", "time", "timestamp"})
    if (first == name) return first;
  return std::nullopt;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  const auto tcol = cfg.time_column ? cfg.time_column : guess_time_column(cfg.data_path);
  RawSeries raw = load_csv(cfg.data_path, tcol);
  PreparedData d;
  d.dataset = cfg.dataset.empty() ? cfg.data_path.stem().string() : cfg.dataset;
  d.split = cfg.split_fractions
                ? SplitSpec::from_fractions((*cfg.split_fractions)[0], (*cfg.split_fractions)[1],
                                            (*cfg.split_fractions)[2], raw.length())
                : SplitSpec::for_dataset(d.dataset, raw.length());
  if (d.split.train_rows < 2 || d.split.val_rows == 0 || d.split.test_rows == 0) {
    throw SeriesTooShort("dataset too small to split");
  }
  d.norm = fit_norm(raw.segment(0, d.split.train_rows));
  const std::size_t used = d.split.train_rows + d.split.val_rows + d.split.test_rows;
  d.normalized = apply_norm(raw.segment(0, used), d.norm);
  return d;
}

std::size_t resolve_tq_period(const PreparedData& data, std::size_t period) {
  constexpr std::size_t kFallback = 168;
  const RawSeries train = data.train_segment();
  const std::size_t max_lag = std::min<std::size_t>(2 * 168, train.length() - 2);
  if (max_lag < period + 1) return kFallback;
  try {
    return detect_period(train, period + 1, max_lag);
  } catch (const Error&) {
    return kFallback;
  }
}

CTPNetConfig cell_model_config(const ExperimentConfig& cfg, const PreparedData& data, const CellSpec& cell) {
  CTPNetConfig m = cfg.model;
  m.l_out = cell.horizon;
  if (cell.interval != 0) m.period = cell.interval;
  m.n_channels = data.normalized.n_channels();
  m.ablate_i1 = cell.variant.ablate_i1;
  m.ablate_i2 = cell.variant.ablate_i2;
  m.ablate_i3 = cell.variant.ablate_i3;
  if (m.tq_period == 0) m.tq_period = resolve_tq_period(data, m.period);
  return m;
}

CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data, const CellSpec& cell, std::ostream* log) {
  const CTPNetConfig mc = cell_model_config(cfg, data, cell);
  mc.validate();
  TrainConfig tc = cfg.train;
  tc.seed = cell.seed;
  CTPNetModel model(mc, cell.seed);

  const WindowSet train_w = data.windows(Split::kTrain, mc.l_in, mc.l_out);
  const WindowSet val_w = data.windows(Split::kVal, mc.l_in, mc.l_out);
  const WindowSet test_w = data.windows(Split::kTest, mc.l_in, mc.l_out);

  TrainHooks hooks;
  if (log) {
    hooks.on_epoch = [&](std::size_t epoch, const EpochLog& e) {
      *log << "[" << data.dataset << " H=" << mc.l_out << " P=" << mc.period << " " << cell.variant.name
           << " seed=" << cell.seed << "] epoch " << epoch << " train_l1=" << e.train_loss << " val_mae=" << e.val_mae
           << " val_mse=" << e.val_mse << std::endl;
    };
  }
  RunRecord rec = train(model, train_w, val_w, tc, hooks);
  rec.dataset = data.dataset;
  rec.variant = cell.variant.name;
  rec.test = evaluate(model, test_w, tc.batch_size);
  if (log) *log << "  test mse=" << rec.test.mse << " mae=" << rec.test.mae << std::endl;
  return CellResult{std::move(rec), std::move(model)};
}

void append_results_log(const std::filesystem::path& path, const RunRecord& rec, std::size_t interval) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw IoError("cannot append to " + path.string());
  if (fresh) os << "dataset,horizon,variant,interval,seed,mse,mae,epochs,wall_s\n";
  os << std::setprecision(17) << rec.dataset << ',' << rec.model.l_out << ',' << rec.variant << ',' << interval << ','
     << rec.seed << ',' << rec.test.mse << ',' << rec.test.mae << ',' << rec.epochs.size() << ','
     << std::setprecision(6) << rec.wall_s << '\n';
}

AblationTable run_ablation(const ExperimentConfig& cfg, const PreparedData& data, std::ostream* log) {
  std::vector<Variant> variants;
  if (cfg.variants.empty()) {
    variants = ablation_variants();
  } else {
    for (const auto& n : cfg.variants) variants.push_back(find_variant(n));
  }
  AblationTable table;
  table.dataset = data.dataset;
  for (const auto& v : variants) {
    AblationRow row{v.name};
    for (auto h : cfg.horizons) {
      for (auto seed : cfg.seeds) {
        auto res = run_cell(cfg, data, CellSpec{h, 0, v, seed}, log);
        if (!cfg.results_log.empty()) append_results_log(cfg.results_log, res.record, res.record.model.period);
        row.mse += res.record.test.mse;
        row.mae += res.record.test.mae;
        ++row.runs;
        table.records.push_back(std::move(res.record));
      }
    }
    row.mse /= static_cast<double>(row.runs);
    row.mae /= static_cast<double>(row.runs);
    table.rows.push_back(row);
  }
  return table;
}

std::string AblationTable::markdown() const {
  std::ostringstream os;
  os << "| " << dataset << " |";
  for (const auto& r : rows) os << ' ' << r.variant << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < rows.size(); ++i) os << "---|";
  os << "\n| MSE |";
  for (const auto& r : rows) os << ' ' << fmt3(r.mse) << " |";
  os << "\n| MAE |";
  for (const auto& r : rows) os << ' ' << fmt3(r.mae) << " |";
  os << '\n';
  return os.str();
}

SweepTable sweep_interval(const ExperimentConfig& cfg, const PreparedData& data, std::ostream* log) {
  SweepTable table;
  table.dataset = data.dataset;
  for (auto p : cfg.intervals) {
    for (auto h : cfg.horizons) {
      if (p == 0 || cfg.model.l_in % p != 0 || h % p != 0) {
        table.notes.push_back("skipped interval " + std::to_string(p) + " at horizon " + std::to_string(h) +
                              ": does not divide l_in " + std::to_string(cfg.model.l_in) + " and horizon");
        continue;
      }
      ExperimentConfig local = cfg;
      if (p % local.model.prl_heads() != 0) local.model.heads_prl = std::gcd(local.model.prl_heads(), p);
      SweepCell cell{p, h};
      for (auto seed : cfg.seeds) {
        auto res = run_cell(local, data, CellSpec{h, p, Variant{"full"}, seed}, log);
        if (!cfg.results_log.empty()) append_results_log(cfg.results_log, res.record, p);
        cell.mse += res.record.test.mse;
        cell.mae += res.record.test.mae;
        table.records.push_back(std::move(res.record));
      }
      cell.mse /= static_cast<double>(cfg.seeds.size());
      cell.mae /= static_cast<double>(cfg.seeds.size());
      table.cells.push_back(cell);
    }
  }
  return table;
}

std::string SweepTable::markdown() const {
  std::vector<std::size_t> intervals, horizons;
  for (const auto& c : cells) {
    if (std::find(intervals.begin(), intervals.end(), c.interval) == intervals.end()) intervals.push_back(c.interval);
    if (std::find(horizons.begin(), horizons.end(), c.horizon) == horizons.end()) horizons.push_back(c.horizon);
  }
  std::ostringstream os;
  os << "| " << dataset << " horizon |";
  for (auto p : intervals) os << " P=" << p << " MSE | P=" << p << " MAE |";
  os << "\n|---|";
  for (std::size_t i = 0; i < intervals.size(); ++i) os << "---|---|";
  os << '\n';
  for (auto h : horizons) {
    os << "| " << h << " |";
    for (auto p : intervals) {
      auto it = std::find_if(cells.begin(), cells.end(), [&](const SweepCell& c) { return c.interval == p && c.horizon == h; });
      if (it == cells.end()) {
        os << " - | - |";
      } else {
        os << ' ' << fmt3(it->mse) << " | " << fmt3(it->mae) << " |";
      }
    }
    os << '\n';
  }
  for (const auto& n : notes) os << "\n_" << n << "_";
  if (!notes.empty()) os << '\n';
  return os.str();
}

}  // namespace ctpnet
