#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctpnet/model.hpp"
#include "ctpnet/series.hpp"
#include "ctpnet/train.hpp"

namespace ctpnet {

/// Flat JSON experiment description; model and training keys sit at the top
/// level next to the dataset keys.
struct ExperimentConfig {
  std::string dataset;  // defaults to the CSV file stem
  std::filesystem::path data_path;
  std::optional<std::string> time_column;  // unset: "date" when present
  CTPNetConfig model;                      // tq_period 0 means ACF-detect
  TrainConfig train;
  std::vector<std::size_t> horizons{96, 192, 336, 720};
  std::vector<std::size_t> intervals{2, 4, 8, 16, 24};
  std::vector<std::uint64_t> seeds{2025};
  std::vector<std::string> variants;  // empty: all seven
  std::optional<std::vector<double>> split_fractions;
  std::filesystem::path results_log = "results.csv";
  std::filesystem::path checkpoint = "ctpnet.ckpt";

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct Variant {
  std::string name;
  bool ablate_i1 = false;
  bool ablate_i2 = false;
  bool ablate_i3 = false;
};

// Full model plus every single and pairwise removal of I1/I2/I3.
std::vector<Variant> ablation_variants();
const Variant& find_variant(const std::string& name);

enum class Split { kTrain, kVal, kTest };

/// Dataset normalized with train-only statistics, split chronologically.
/// Validation and test windows draw their look-back from the preceding rows;
/// targets never cross segment boundaries.
struct PreparedData {
  std::string dataset;
  RawSeries normalized;
  NormStats norm;
  SplitSpec split;

  WindowSet windows(Split which, std::size_t l_in, std::size_t l_out) const;
  RawSeries train_segment() const;
};

std::optional<std::string> guess_time_column(const std::filesystem::path& csv);
PreparedData prepare_data(const ExperimentConfig& cfg);

// W from the ACF over [P+1, 336]; 168 when no peak qualifies.
std::size_t resolve_tq_period(const PreparedData& data, std::size_t period);

struct CellSpec {
  std::size_t horizon = 96;
  std::size_t interval = 0;  // 0: use the config's period
  Variant variant{"full"};
  std::uint64_t seed = 2025;
};

CTPNetConfig cell_model_config(const ExperimentConfig& cfg, const PreparedData& data, const CellSpec& cell);

struct CellResult {
  RunRecord record;
  CTPNetModel model;
};

CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data, const CellSpec& cell,
                    std::ostream* log = nullptr);

void append_results_log(const std::filesystem::path& path, const RunRecord& rec, std::size_t interval);

struct AblationRow {
  std::string variant;
  double mse = 0.0;
  double mae = 0.0;
  std::size_t runs = 0;
};

struct AblationTable {
  std::string dataset;
  std::vector<RunRecord> records;
  std::vector<AblationRow> rows;  // averaged over horizons and seeds
  std::string markdown() const;
};

AblationTable run_ablation(const ExperimentConfig& cfg, const PreparedData& data, std::ostream* log = nullptr);

struct SweepCell {
  std::size_t interval = 0;
  std::size_t horizon = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct SweepTable {
  std::string dataset;
  std::vector<RunRecord> records;
  std::vector<SweepCell> cells;  // seed-averaged
  std::vector<std::string> notes;
  std::string markdown() const;
};

SweepTable sweep_interval(const ExperimentConfig& cfg, const PreparedData& data, std::ostream* log = nullptr);

}  // namespace ctpnet
