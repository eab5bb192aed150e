#include "ctpnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "ctpnet/ops.hpp"

namespace ctpnet {

namespace {
constexpr const char* kVersion = "ctpnet 0.1.0";

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeMismatch("prediction has " + std::to_string(a) + " values, target " + std::to_string(b));
}
}  // namespace

void TrainConfig::validate() const {
  if (!(adam.lr >= 0.0) || batch_size == 0 || max_epochs == 0 || patience == 0) {
    throw ConfigInvalid("lr must be >= 0; batch_size, max_epochs and patience must be positive");
  }
  if (patience > max_epochs) throw ConfigInvalid("patience must not exceed max_epochs");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigInvalid("Adam betas must lie in [0, 1) and eps must be positive");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.adam.lr},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"eps", c.adam.eps},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"max_train_windows", c.max_train_windows}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("lr", c.adam.lr);
  get("beta1", c.adam.beta1);
  get("beta2", c.adam.beta2);
  get("eps", c.adam.eps);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("seed", c.seed);
  get("max_train_windows", c.max_train_windows);
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["variant"] = variant;
  j["model"] = model;
  j["train"] = train;
  j["seed"] = seed;
  auto& ep = j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) ep.push_back({{"train_loss", e.train_loss}, {"val_mae", e.val_mae}, {"val_mse", e.val_mse}});
  j["best_epoch"] = best_epoch;
  j["test"] = {{"mse", test.mse}, {"mae", test.mae}, {"n", test.n}};
  j["wall_s"] = wall_s;
  j["version"] = version;
  return j;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeMismatch("l1_loss " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  return mean(abs(sub(pred, target)));
}

double mse(std::span<const double> pred, std::span<const double> target) {
  check_same(pred.size(), target.size());
  if (pred.empty()) throw DataEmpty("mse of nothing");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s = std::fma(d, d, s);
  }
  return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
  check_same(pred.size(), target.size());
  if (pred.empty()) throw DataEmpty("mae of nothing");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("mse shapes differ");
  return mse(pred.data(), target.data());
}

double mae(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw ShapeMismatch("mae shapes differ");
  return mae(pred.data(), target.data());
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, const AdamConfig& config) {
  check_same(param.size(), grad.size());
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(std::vector<Parameter> params, AdamConfig config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    const auto g = t.grad();
    if (g.empty()) {
      // Unreached parameter: behaves as a zero gradient.
      const std::vector<double> zeros(t.numel(), 0.0);
      adam_step(t.mutable_data(), zeros, state_[i], config_);
    } else {
      adam_step(t.mutable_data(), g, state_[i], config_);
    }
  }
}

Batch make_batch(const WindowSet& windows, std::span<const std::size_t> idx) {
  std::vector<double> x, y;
  windows.gather(idx, x, y);
  Batch b;
  const std::size_t n = idx.size(), c = windows.n_channels();
  b.x = Tensor({n, c, windows.l_in()}, std::move(x));
  b.y = Tensor({n, c, windows.l_out()}, std::move(y));
  b.t.reserve(n);
  for (auto i : idx) b.t.push_back(windows.t_at(i));
  return b;
}

Metrics evaluate(const Forecaster& f, const WindowSet& windows, std::size_t batch_size) {
  if (windows.empty()) throw DataEmpty("no evaluation windows");
  if (batch_size == 0) throw ConfigInvalid("batch_size must be positive");
  NoGradGuard no_grad;
  double ssq = 0.0, sab = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(windows.size(), start + batch_size); ++i) idx.push_back(i);
    const Batch b = make_batch(windows, idx);
    const Tensor pred = f(b.x, b.t);
    if (pred.shape() != b.y.shape()) {
      throw ShapeMismatch("forecast " + shape_str(pred.shape()) + " vs target " + shape_str(b.y.shape()));
    }
    const auto p = pred.data();
    const auto y = b.y.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = p[i] - y[i];
      ssq = std::fma(d, d, ssq);
      sab += std::fabs(d);
    }
    n += p.size();
  }
  return Metrics{ssq / static_cast<double>(n), sab / static_cast<double>(n), n};
}

Metrics evaluate(const CTPNetModel& model, const WindowSet& windows, std::size_t batch_size) {
  return evaluate([&model](const Tensor& x, std::span<const std::int64_t> t) { return model.forward(x, t); },
                  windows, batch_size);
}

RunRecord train(CTPNetModel& model, const WindowSet& train_set, const WindowSet& val_set, const TrainConfig& config,
                const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw DataEmpty("training and validation windows are required");
  const auto started = std::chrono::steady_clock::now();

  RunRecord rec;
  rec.model = model.config();
  rec.train = config;
  rec.seed = config.seed;
  rec.version = kVersion;

  auto params = model.parameters();
  Adam opt(params, config.adam);
  Rng rng(config.seed);

  std::vector<std::vector<double>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : params) best.push_back(p.tensor.to_vector());
  };
  snapshot();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  std::vector<std::size_t> order(train_set.size());
  std::vector<std::size_t> idx;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t used =
        config.max_train_windows == 0 ? order.size() : std::min(order.size(), config.max_train_windows);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < used; start += config.batch_size) {
      const std::size_t end = std::min(used, start + config.batch_size);
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch b = make_batch(train_set, idx);
      opt.zero_grad();
      const Tensor loss = l1_loss(model.forward(b.x, b.t), b.y);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        throw Diverged("non-finite training loss at epoch " + std::to_string(epoch), rec);
      }
      loss.backward();
      opt.step();
      loss_sum += lv * static_cast<double>(end - start);
    }

    const Metrics val = evaluate(model, val_set, config.batch_size);
    EpochLog log{loss_sum / static_cast<double>(used), val.mae, val.mse};
    rec.epochs.push_back(log);
    if (hooks.on_epoch) hooks.on_epoch(epoch, log);
    if (!std::isfinite(val.mae)) {
      rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw Diverged("non-finite validation MAE at epoch " + std::to_string(epoch), rec);
    }

    if (val.mae < best_val) {
      best_val = val.mae;
      rec.best_epoch = epoch;
      stale = 0;
      snapshot();
    } else if (++stale >= config.patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i].tensor.mutable_data().begin());
  }
  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

}  // namespace ctpnet
