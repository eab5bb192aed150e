// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
// Exit status: 0 all selected passed, 1 any failed, 77 everything selected skipped.

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctpnet/block.hpp"
#include "ctpnet/crl.hpp"
#include "ctpnet/harness.hpp"
#include "ctpnet/model.hpp"
#include "ctpnet/ops.hpp"
#include "ctpnet/series.hpp"
#include "ctpnet/train.hpp"
#include "oracles.hpp"

using namespace ctpnet;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

fs::path g_data_dir;
std::size_t g_bench_epochs = 15;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::kPass : Status::kFail, std::move(detail)}; }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

CTPNetConfig tiny_config() {
  CTPNetConfig c;
  c.n_channels = 2;
  c.l_in = 8;
  c.l_out = 8;
  c.period = 2;
  c.tq_period = 6;
  c.d_model = 4;
  c.heads_crl = 2;
  c.heads_block = 2;
  c.heads_prl = 2;
  return c;
}

// sin(2*pi*t/24) + channel offset (+ Gaussian noise), normalized and split 70/10/20.
PreparedData synthetic(std::size_t channels, std::size_t length, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  std::vector<double> v(channels * length);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < length; ++i)
      v[c * length + i] = std::sin(2.0 * M_PI * static_cast<double>(i) / 24.0) + static_cast<double>(c) +
                          (sigma > 0 ? sigma * n01(rng) : 0.0);
  const RawSeries raw{Tensor({channels, length}, std::move(v)), std::vector<std::string>(channels, "s"), 0};
  PreparedData d;
  d.dataset = "synthetic";
  d.split = SplitSpec::for_dataset(d.dataset, length);
  d.norm = fit_norm(raw.segment(0, d.split.train_rows));
  d.normalized = apply_norm(raw, d.norm);
  return d;
}

ExperimentConfig synthetic_experiment() {
  ExperimentConfig cfg;
  cfg.dataset = "synthetic";
  cfg.model.d_model = 32;
  cfg.model.tq_period = 0;
  cfg.train.max_epochs = 5;
  cfg.train.patience = 3;
  return cfg;
}

std::optional<fs::path> dataset(const std::string& file) {
  if (g_data_dir.empty()) return std::nullopt;
  const auto p = g_data_dir / file;
  if (!fs::exists(p)) return std::nullopt;
  return p;
}

ExperimentConfig ett_experiment(const fs::path& csv) {
  ExperimentConfig cfg;
  cfg.data_path = csv;
  cfg.dataset = csv.stem().string();
  cfg.time_column = "date";
  cfg.train.max_epochs = g_bench_epochs;
  cfg.train.patience = std::min<std::size_t>(3, g_bench_epochs);
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome downsample_bijection() {
  std::mt19937_64 rng(1);
  std::size_t checked = 0;
  for (std::size_t p : {1, 2, 3, 4, 6, 8, 12, 24}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = oracle::random_tensor({7, 96}, rng, false, -10, 10);
      if (de_downsample(downsample(x, p), p).to_vector() != x.to_vector()) {
        return {Status::kFail, fmt("round trip differs at P=%zu", p)};
      }
      ++checked;
    }
  }
  return {Status::kPass, fmt("%zu tensors, bit-exact", checked)};
}

Outcome gradient_audit() {
  const CTPNetModel m(tiny_config(), 7);
  std::mt19937_64 rng(8);
  const auto x = oracle::random_tensor({3, 2, 8}, rng, false, -2, 2);
  const auto y = oracle::random_tensor({3, 2, 8}, rng, false, -2, 2);
  const std::vector<std::int64_t> t{0, 4, 13};
  auto loss = [&] { return l1_loss(m.forward(x, t), y); };
  std::vector<Tensor> params;
  for (auto& p : m.parameters()) {
    p.tensor.zero_grad();
    params.push_back(p.tensor);
  }
  loss().backward();
  const auto fd = oracle::finite_difference([&] { NoGradGuard g; return loss().item(); }, params);
  return verdict(fd.checked == param_count(m) && fd.max_rel_err < 1e-4,
                 fmt("%zu parameters, max rel err %.2e (tol 1e-4)", fd.checked, fd.max_rel_err));
}

Outcome attention_associativity() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 48, d = 1 + rng() % 32;
    const auto q = oracle::random_tensor({n, d}, rng), k = oracle::random_tensor({n, d}, rng),
               v = oracle::random_tensor({n, d}, rng);
    auto s = oracle::matmul(q.to_vector(), oracle::transpose(k.to_vector(), n, d), n, d, n);
    for (auto& e : s) e /= std::sqrt(static_cast<double>(d)) * std::sqrt(static_cast<double>(n));
    const auto left = oracle::matmul(s, v.to_vector(), n, n, d);
    const auto right = efficient_attention(q, k, v);
    worst = std::max(worst, max_abs_diff(right.data(), left));
  }
  return verdict(worst < 1e-9, fmt("100 cases, max diff %.2e (tol 1e-9)", worst));
}

Outcome tq_periodicity() {
  Rng init(4);
  const auto w = CrlWeights::init(7, 96, 168, 4, init);
  std::mt19937_64 rng(5);
  std::size_t checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = oracle::random_tensor({7, 96}, rng, false, -3, 3);
    const std::int64_t t = static_cast<std::int64_t>(rng() % 10000);
    const auto a = crl_forward(w, x, t);
    for (std::int64_t k : {1, 2, 7}) {
      if (crl_forward(w, x, t + k * 168).to_vector() != a.to_vector()) {
        return {Status::kFail, fmt("t=%lld and t+%lldW differ", static_cast<long long>(t), static_cast<long long>(k))};
      }
      ++checked;
    }
  }
  return {Status::kPass, fmt("%zu pairs bit-identical (W=168)", checked)};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  double crl_worst = 0.0, blk_worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng() % 5, heads = 1 + rng() % 3, l = heads * (1 + rng() % 4), win = 1 + rng() % 9;
    Rng ir(rng());
    const auto cw = CrlWeights::init(c, l, win, heads, ir);
    for (const Tensor* p : {&cw.theta_tq, &cw.w_k1, &cw.w_v1, &cw.w_o})
      for (auto& v : Tensor(*p).mutable_data()) v = u(rng);
    const auto x = oracle::random_tensor({c, l}, rng, false, -2, 2);
    const std::int64_t t = static_cast<std::int64_t>(rng() % 500);
    const auto expect = oracle::crl(x.to_vector(), cw.theta_tq.to_vector(), cw.w_k1.to_vector(), cw.w_v1.to_vector(),
                                    cw.w_o.to_vector(), c, l, win, heads, t);
    crl_worst = std::max(crl_worst, max_abs_diff(crl_forward(cw, x, t).data(), expect));

    const std::size_t p = 1 + rng() % 6, bh = 1 + rng() % 3, d = bh * (1 + rng() % 3);
    auto bw = BlockWeights::init(d, bh, ir);
    for (const Tensor* q : {&bw.w_q, &bw.w_k, &bw.w_v, &bw.w_o, &bw.ffn_w1, &bw.ffn_b1, &bw.ffn_w2, &bw.ffn_b2,
                            &bw.ln1_scale, &bw.ln1_shift, &bw.ln2_scale, &bw.ln2_shift})
      for (auto& v : Tensor(*q).mutable_data()) v = u(rng);
    const oracle::BlockParams op{bw.w_q.to_vector(),     bw.w_k.to_vector(),     bw.w_v.to_vector(),
                                 bw.w_o.to_vector(),     bw.ffn_w1.to_vector(),  bw.ffn_b1.to_vector(),
                                 bw.ffn_w2.to_vector(),  bw.ffn_b2.to_vector(),  bw.ln1_scale.to_vector(),
                                 bw.ln1_shift.to_vector(), bw.ln2_scale.to_vector(), bw.ln2_shift.to_vector(),
                                 bw.heads};
    const auto z = oracle::random_tensor({p, d}, rng, false, -2, 2);
    blk_worst = std::max(blk_worst, max_abs_diff(block_forward(bw, z).data(), oracle::block(z.to_vector(), op, p, d)));
  }
  return verdict(crl_worst < 1e-10 && blk_worst < 1e-10,
                 fmt("20 cases, CRL max diff %.2e, block max diff %.2e (tol 1e-10)", crl_worst, blk_worst));
}

Outcome norm_equivariance() {
  const CTPNetModel m(CTPNetConfig{}, 9);
  std::mt19937_64 rng(10);
  const auto x = oracle::random_tensor({4, 7, 96}, rng, false, -2, 5);
  const std::vector<std::int64_t> t{0, 37, 168, 5000};
  NoGradGuard g;
  const auto base = m.forward(x, t);
  double worst = 0.0;
  for (double a : {0.5, 3.0})
    for (double b : {-2.0, 7.0}) {
      const auto y = m.forward(add_scalar(mul_scalar(x, a), b), t);
      worst = std::max(worst, max_abs_diff(y.data(), add_scalar(mul_scalar(base, a), b).data()));
    }
  return verdict(worst < 1e-6, fmt("max diff %.2e (tol 1e-6)", worst));
}

double superposition_residual(const CTPNetModel& m, std::mt19937_64& rng) {
  const auto& c = m.config();
  const auto x = oracle::random_tensor({2, c.n_channels, c.l_in}, rng, false, -2, 2);
  const auto y = oracle::random_tensor({2, c.n_channels, c.l_in}, rng, false, -2, 2);
  const std::vector<std::int64_t> t{3, 77};
  NoGradGuard g;
  const auto r = add(sub(sub(m.forward_normalized(add(x, y), t), m.forward_normalized(x, t)),
                         m.forward_normalized(y, t)),
                     m.forward_normalized(Tensor::zeros(x.shape()), t));
  double worst = 0.0;
  for (double v : r.data()) worst = std::max(worst, std::fabs(v));
  return worst;
}

Outcome ablation_affinity() {
  CTPNetConfig c;
  c.ablate_i2 = c.ablate_i3 = true;
  std::mt19937_64 rng(11);
  const double stated = superposition_residual(CTPNetModel(c, 12), rng);
  c.ablate_i1 = true;
  const double without_crl = superposition_residual(CTPNetModel(c, 12), rng);
  return verdict(stated < 1e-8, fmt("residual %.2e (tol 1e-8); channel attention is still active; "
                                    "with I1 also ablated: %.2e",
                                    stated, without_crl));
}

Outcome seasonal_overfit() {
  const auto data = synthetic(3, 2000, 0.0, 13);
  const auto cfg = synthetic_experiment();
  const auto res = run_cell(cfg, data, CellSpec{96, 24, Variant{"full"}, 1});
  return verdict(res.record.test.mse < 1e-2,
                 fmt("test MSE %.5f (tol < 1e-2), %zu epochs", res.record.test.mse, res.record.epochs.size()));
}

Outcome period_match() {
  const auto data = synthetic(3, 2000, 0.1, 14);
  auto cfg = synthetic_experiment();
  std::vector<double> p24, p16;
  for (std::uint64_t seed : {1, 2, 3}) {
    p24.push_back(run_cell(cfg, data, CellSpec{96, 24, Variant{"full"}, seed}).record.test.mse);
    p16.push_back(run_cell(cfg, data, CellSpec{96, 16, Variant{"full"}, seed}).record.test.mse);
  }
  const double m24 = median3(p24), m16 = median3(p16);
  return verdict(m24 < m16, fmt("median test MSE P=24 %.4f vs P=16 %.4f", m24, m16));
}

Outcome detect_period_check() {
  const auto data = synthetic(3, 2000, 0.1, 15);
  const std::size_t synth = detect_period(data.normalized, 2, 48);
  if (synth != 24) return {Status::kFail, fmt("synthetic data gave %zu", synth)};
  const auto csv = dataset("ETTh1.csv");
  if (!csv) return {Status::kSkip, "synthetic=24; ETTh1.csv not found (set CTPNET_DATA_DIR)"};
  const std::size_t ett = detect_period(load_csv(*csv, "date"), 2, 48);
  return verdict(ett == 24, fmt("synthetic=24, ETTh1=%zu", ett));
}

Outcome etth1_benchmark() {
  const auto csv = dataset("ETTh1.csv");
  if (!csv) return {Status::kSkip, "ETTh1.csv not found (set CTPNET_DATA_DIR)"};
  const auto cfg = ett_experiment(*csv);
  const auto data = prepare_data(cfg);
  const auto res = run_cell(cfg, data, CellSpec{96, 24, Variant{"full"}, 2025}, &std::cerr);
  const auto& m = res.record.test;
  return verdict(m.mse <= 0.42 && m.mae <= 0.45,
                 fmt("MSE %.4f (<= 0.42), MAE %.4f (<= 0.45), %zu epochs", m.mse, m.mae, res.record.epochs.size()));
}

Outcome etth2_ablation() {
  const auto csv = dataset("ETTh2.csv");
  if (!csv) return {Status::kSkip, "ETTh2.csv not found (set CTPNET_DATA_DIR)"};
  const auto cfg = ett_experiment(*csv);
  const auto data = prepare_data(cfg);
  std::vector<double> full, ablated;
  for (std::uint64_t seed : {1, 2, 3}) {
    double f = 0.0, a = 0.0;
    for (std::size_t h : {96, 192}) {
      f += run_cell(cfg, data, CellSpec{h, 24, find_variant("full"), seed}, &std::cerr).record.test.mse / 2.0;
      a += run_cell(cfg, data, CellSpec{h, 24, find_variant("no_i2_i3"), seed}, &std::cerr).record.test.mse / 2.0;
    }
    full.push_back(f);
    ablated.push_back(a);
  }
  const double mf = median3(full), ma = median3(ablated);
  return verdict(mf < ma, fmt("median avg MSE full %.4f vs no_i2_i3 %.4f", mf, ma));
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"CTPNet acceptance suite"};
  std::vector<int> selected;
  std::string data_dir = std::getenv("CTPNET_DATA_DIR") ? std::getenv("CTPNET_DATA_DIR") : "";
  app.add_option("-c,--criterion", selected, "Criterion number(s) to run; default all");
  app.add_option("--data-dir", data_dir, "Directory holding ETTh1.csv / ETTh2.csv");
  app.add_option("--bench-epochs", g_bench_epochs, "max_epochs for the ETT benchmark criteria")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  g_data_dir = data_dir;

  const std::vector<Criterion> all{
      {1, "downsample bijection", downsample_bijection},
      {2, "gradient audit (tiny model)", gradient_audit},
      {3, "efficient-attention associativity", attention_associativity},
      {4, "temporal-query periodicity", tq_periodicity},
      {5, "CRL/block loop-oracle equivalence", oracle_equivalence},
      {6, "instance-norm equivariance", norm_equivariance},
      {7, "ablation affinity (I2, I3 removed)", ablation_affinity},
      {8, "synthetic seasonal overfit", seasonal_overfit},
      {9, "period-match advantage", period_match},
      {10, "detect-period", detect_period_check},
      {11, "ETTh1 96->96 benchmark", etth1_benchmark},
      {12, "ETTh2 ablation ordering", etth2_ablation},
  };

  std::size_t passed = 0, failed = 0, skipped = 0;
  for (const auto& c : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    std::printf("%s %2d  %-36s %s [%.1fs]\n", tag, c.id, c.title, o.detail.c_str(), secs);
    std::fflush(stdout);
    (o.status == Status::kPass ? passed : o.status == Status::kFail ? failed : skipped)++;
  }
  std::printf("%zu passed, %zu failed, %zu skipped\n", passed, failed, skipped);
  if (failed > 0) return 1;
  if (passed == 0 && skipped > 0) return 77;
  return 0;
}
