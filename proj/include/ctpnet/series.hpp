#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctpnet/tensor.hpp"

namespace ctpnet {

/// A multivariate series, channels x time.
struct RawSeries {
  Tensor values;  // (n_channels, length)
  std::vector<std::string> channel_names;
  std::int64_t start_index = 0;  // absolute time index of column 0

  std::size_t n_channels() const { return values.dim(0); }
  std::size_t length() const { return values.dim(1); }

  // Columns [begin, begin + count) as a series with the matching start_index.
  RawSeries segment(std::size_t begin, std::size_t count) const;
};

struct WindowSample {
  Tensor x_in;      // (n_channels, l_in)
  Tensor x_target;  // (n_channels, l_out)
  std::int64_t t = 0;
};

/// Row counts of the chronological train/val/test segments.
struct SplitSpec {
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;

  // ETTh*: 8640/2880/2880, ETTm*: 34560/11520/11520, otherwise 70/10/20.
  static SplitSpec for_dataset(const std::string& dataset, std::size_t total_rows);
  static SplitSpec from_fractions(double train, double val, double test, std::size_t total_rows);
};

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;  // population std, strictly positive
};

RawSeries load_csv(const std::filesystem::path& path, const std::optional<std::string>& time_column = std::nullopt);
RawSeries parse_csv(const std::string& text, const std::optional<std::string>& time_column = std::nullopt);

NormStats fit_norm(const RawSeries& train_segment);
RawSeries apply_norm(const RawSeries& series, const NormStats& stats);
RawSeries invert_norm(const RawSeries& series, const NormStats& stats);
// Same transforms on a (..., n_channels, length) tensor.
Tensor apply_norm(const Tensor& values, const NormStats& stats);
Tensor invert_norm(const Tensor& values, const NormStats& stats);

/// Lazily materialized sliding windows over a series.
class WindowSet {
 public:
  WindowSet(RawSeries series, std::size_t l_in, std::size_t l_out, std::size_t stride = 1);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t l_in() const { return l_in_; }
  std::size_t l_out() const { return l_out_; }
  std::size_t n_channels() const { return series_.n_channels(); }
  const RawSeries& series() const { return series_; }

  WindowSample at(std::size_t i) const;
  std::int64_t t_at(std::size_t i) const;
  // Fills x (n, C, l_in) and y (n, C, l_out) row-major for the given windows.
  void gather(std::span<const std::size_t> idx, std::vector<double>& x, std::vector<double>& y) const;

 private:
  RawSeries series_;
  std::size_t l_in_, l_out_, stride_, count_;
};

std::vector<WindowSample> make_windows(const RawSeries& series, std::size_t l_in, std::size_t l_out,
                                       std::size_t stride = 1);

// (..., L) -> (..., P, L/P); subsequence p holds offsets p, p+P, ...
Tensor downsample(const Tensor& x, std::size_t period);
// (..., P, N) -> (..., P*N); exact inverse of downsample.
Tensor de_downsample(const Tensor& xs, std::size_t period);

// Biased-denominator autocorrelation r_0..r_max_lag.
std::vector<double> acf(std::span<const double> x, std::size_t max_lag);
Tensor acf(const Tensor& x, std::size_t max_lag);

struct PeriodDetection {
  std::size_t period = 0;
  double score = 0.0;
  std::vector<double> mean_acf;  // channel-averaged r_0..r_{max_lag+1}
};

// Lag in [min_lag, max_lag] with the highest channel-averaged ACF among strict
// local maxima; smallest lag wins ties.
PeriodDetection detect_period_detail(const RawSeries& series, std::size_t min_lag, std::size_t max_lag,
                                     double threshold = 0.1);
std::size_t detect_period(const RawSeries& series, std::size_t min_lag, std::size_t max_lag,
                          double threshold = 0.1);

}  // namespace ctpnet
