#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctpnet/errors.hpp"
#include "ctpnet/model.hpp"
#include "ctpnet/series.hpp"

namespace ctpnet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;  // epochs without validation-MAE improvement
  std::uint64_t seed = 2025;
  // 0 = use every training window each epoch.
  std::size_t max_train_windows = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
};

struct EpochLog {
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_mse = 0.0;
};

struct RunRecord {
  std::string dataset;
  std::string variant = "full";
  CTPNetConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;  // 1-based
  Metrics test;
  double wall_s = 0.0;
  std::string version;

  nlohmann::json to_json() const;
};

class Diverged : public Error {
 public:
  Diverged(const std::string& what_arg, RunRecord record)
      : Error("Diverged: " + what_arg), record_(std::move(record)) {}
  const RunRecord& record() const { return record_; }

 private:
  RunRecord record_;
};

// Mean |pred - target| as a differentiable scalar.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);
double mse(const Tensor& pred, const Tensor& target);
double mae(const Tensor& pred, const Tensor& target);

/// First/second moments of one parameter.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update of `param` in place.
void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, const AdamConfig& config);

class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamConfig config);
  void zero_grad();
  void step();
  const std::vector<Parameter>& params() const { return params_; }

 private:
  std::vector<Parameter> params_;
  std::vector<AdamMoments> state_;
  AdamConfig config_;
};

struct Batch {
  Tensor x;  // (B, C, l_in)
  Tensor y;  // (B, C, l_out)
  std::vector<std::int64_t> t;
};

Batch make_batch(const WindowSet& windows, std::span<const std::size_t> idx);

// Maps a batch of look-back windows to forecasts (B, C, l_out).
using Forecaster = std::function<Tensor(const Tensor& x, std::span<const std::int64_t> t)>;

// Aggregates MSE/MAE over every window in order; batching never changes the
// summation order across windows.
Metrics evaluate(const Forecaster& f, const WindowSet& windows, std::size_t batch_size = 32);
Metrics evaluate(const CTPNetModel& model, const WindowSet& windows, std::size_t batch_size = 32);

struct TrainHooks {
  std::function<void(std::size_t epoch, const EpochLog&)> on_epoch;
};

// Shuffled mini-batch L1/Adam training with early stopping on validation MAE;
// the best-validation weights are restored before returning.
RunRecord train(CTPNetModel& model, const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& config,
                const TrainHooks& hooks = {});

}  // namespace ctpnet
