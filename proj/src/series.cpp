#include "ctpnet/series.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctpnet/errors.hpp"
#include "ctpnet/ops.hpp"

namespace ctpnet {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

bool starts_with(const std::string& s, std::string_view prefix) {
  return s.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), s.begin());
}

}  // namespace

RawSeries RawSeries::segment(std::size_t begin, std::size_t count) const {
  if (count == 0 || begin + count > length()) {
    throw SeriesTooShort("segment [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") exceeds length " + std::to_string(length()));
  }
  return RawSeries{slice(values.detach(), 1, begin, count), channel_names,
                   start_index + static_cast<std::int64_t>(begin)};
}

SplitSpec SplitSpec::for_dataset(const std::string& dataset, std::size_t total_rows) {
  SplitSpec s;
  if (starts_with(dataset, "ETTh")) {
    s = {8640, 2880, 2880};
  } else if (starts_with(dataset, "ETTm")) {
    s = {34560, 11520, 11520};
  } else {
    return from_fractions(0.7, 0.1, 0.2, total_rows);
  }
  if (s.train_rows + s.val_rows + s.test_rows > total_rows) {
    throw SeriesTooShort(dataset + " split needs " + std::to_string(s.train_rows + s.val_rows + s.test_rows) +
                         " rows, file has " + std::to_string(total_rows));
  }
  return s;
}

SplitSpec SplitSpec::from_fractions(double train, double val, double test, std::size_t total_rows) {
  if (train <= 0 || val < 0 || test <= 0 || std::fabs(train + val + test - 1.0) > 1e-9) {
    throw ConfigInvalid("split fractions must be positive and sum to 1");
  }
  SplitSpec s;
  s.train_rows = static_cast<std::size_t>(static_cast<double>(total_rows) * train);
  s.test_rows = static_cast<std::size_t>(static_cast<double>(total_rows) * test);
  s.val_rows = total_rows - s.train_rows - s.test_rows;
  return s;
}

RawSeries parse_csv(const std::string& text, const std::optional<std::string>& time_column) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw TooFewRows("empty CSV");
  const auto header = split_row(line);
  std::optional<std::size_t> time_idx;
  if (time_column) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == *time_column) time_idx = i;
    if (!time_idx) throw ParseError("time column '" + *time_column + "' not in header");
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (i != time_idx) names.emplace_back(header[i]);
  if (names.empty()) throw ParseError("no value columns");

  std::vector<std::vector<double>> cols(names.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    std::size_t c = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == time_idx) continue;
      const auto cell = cells[i];
      if (cell.empty()) {
        throw MissingValue("row " + std::to_string(row) + " column '" + names[c] + "'");
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("row " + std::to_string(row) + " column '" + names[c] + "': '" + std::string(cell) + "'");
      }
      cols[c++].push_back(v);
    }
  }
  const std::size_t t = cols[0].size();
  if (t < 2) throw TooFewRows("need at least 2 data rows, got " + std::to_string(t));
  std::vector<double> data;
  data.reserve(names.size() * t);
  for (const auto& col : cols) data.insert(data.end(), col.begin(), col.end());
  return RawSeries{Tensor({names.size(), t}, std::move(data)), std::move(names), 0};
}

RawSeries load_csv(const std::filesystem::path& path, const std::optional<std::string>& time_column) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), time_column);
}

NormStats fit_norm(const RawSeries& train_segment) {
  const std::size_t c = train_segment.n_channels(), t = train_segment.length();
  const auto v = train_segment.values.data();
  NormStats s;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* row = v.data() + ch * t;
    double mu = 0.0;
    for (std::size_t i = 0; i < t; ++i) mu += row[i];
    mu /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(t);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      const auto& name = ch < train_segment.channel_names.size() ? train_segment.channel_names[ch] : std::to_string(ch);
      throw DegenerateChannel("channel '" + name + "' is constant on the training segment");
    }
    s.mean.push_back(mu);
    s.std.push_back(sd);
  }
  return s;
}

namespace {

Tensor affine_channels(const Tensor& values, const NormStats& stats, bool forward) {
  if (values.rank() < 2 || values.dim(-2) != stats.mean.size()) {
    throw ShapeMismatch("normalization stats for " + std::to_string(stats.mean.size()) + " channels vs " +
                        shape_str(values.shape()));
  }
  const std::size_t c = values.dim(-2), t = values.dim(-1);
  std::vector<double> out = values.to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t ch = (i / t) % c;
    out[i] = forward ? (out[i] - stats.mean[ch]) / stats.std[ch] : out[i] * stats.std[ch] + stats.mean[ch];
  }
  return Tensor(values.shape(), std::move(out));
}

}  // namespace

Tensor apply_norm(const Tensor& values, const NormStats& stats) { return affine_channels(values, stats, true); }
Tensor invert_norm(const Tensor& values, const NormStats& stats) { return affine_channels(values, stats, false); }

RawSeries apply_norm(const RawSeries& series, const NormStats& stats) {
  return RawSeries{apply_norm(series.values, stats), series.channel_names, series.start_index};
}

RawSeries invert_norm(const RawSeries& series, const NormStats& stats) {
  return RawSeries{invert_norm(series.values, stats), series.channel_names, series.start_index};
}

WindowSet::WindowSet(RawSeries series, std::size_t l_in, std::size_t l_out, std::size_t stride)
    : series_(std::move(series)), l_in_(l_in), l_out_(l_out), stride_(stride), count_(0) {
  if (l_in == 0 || l_out == 0 || stride == 0) throw ConfigInvalid("window lengths and stride must be >= 1");
  const std::size_t t = series_.length();
  if (t < l_in + l_out) {
    throw SeriesTooShort("series of length " + std::to_string(t) + " cannot hold a window of " +
                         std::to_string(l_in) + " + " + std::to_string(l_out));
  }
  count_ = (t - l_in - l_out) / stride + 1;
}

std::int64_t WindowSet::t_at(std::size_t i) const {
  return series_.start_index + static_cast<std::int64_t>(i * stride_);
}

WindowSample WindowSet::at(std::size_t i) const {
  if (i >= count_) throw ShapeMismatch("window index out of range");
  std::vector<double> x, y;
  const std::size_t idx[] = {i};
  gather(idx, x, y);
  const std::size_t c = n_channels();
  return WindowSample{Tensor({c, l_in_}, std::move(x)), Tensor({c, l_out_}, std::move(y)), t_at(i)};
}

void WindowSet::gather(std::span<const std::size_t> idx, std::vector<double>& x, std::vector<double>& y) const {
  const std::size_t c = n_channels(), t = series_.length();
  const auto v = series_.values.data();
  x.resize(idx.size() * c * l_in_);
  y.resize(idx.size() * c * l_out_);
  double* xo = x.data();
  double* yo = y.data();
  for (auto w : idx) {
    const std::size_t s = w * stride_;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* row = v.data() + ch * t + s;
      xo = std::copy_n(row, l_in_, xo);
      yo = std::copy_n(row + l_in_, l_out_, yo);
    }
  }
}

std::vector<WindowSample> make_windows(const RawSeries& series, std::size_t l_in, std::size_t l_out,
                                       std::size_t stride) {
  WindowSet set(series, l_in, l_out, stride);
  std::vector<WindowSample> out;
  out.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) out.push_back(set.at(i));
  return out;
}

Tensor downsample(const Tensor& x, std::size_t period) {
  if (x.rank() < 1) throw RankTooLow("downsample needs rank >= 1");
  const std::size_t l = x.dim(-1);
  if (period == 0 || l % period != 0) {
    throw IndivisibleLength("length " + std::to_string(l) + " is not divisible by period " + std::to_string(period));
  }
  // (..., N, P) viewed row-major is exactly the interleaving; transpose puts phases first.
  Shape s(x.shape().begin(), x.shape().end() - 1);
  s.push_back(l / period);
  s.push_back(period);
  return transpose_last_two(reshape(x, std::move(s)));
}

Tensor de_downsample(const Tensor& xs, std::size_t period) {
  if (xs.rank() < 2) throw RankTooLow("de_downsample needs rank >= 2");
  if (xs.dim(-2) != period) {
    throw ShapeMismatch("expected " + std::to_string(period) + " subsequences, got " + shape_str(xs.shape()));
  }
  Shape s(xs.shape().begin(), xs.shape().end() - 2);
  s.push_back(xs.dim(-1) * period);
  return reshape(transpose_last_two(xs), std::move(s));
}

std::vector<double> acf(std::span<const double> x, std::size_t max_lag) {
  const std::size_t l = x.size();
  if (l < 3) throw SeriesTooShort("acf needs at least 3 points");
  if (max_lag >= l) throw SeriesTooShort("max_lag must be < series length");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  if (*mn == *mx) throw ConstantSeries("acf of a constant series is undefined");
  double mu = 0.0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(l);
  std::vector<double> d(l);
  for (std::size_t i = 0; i < l; ++i) d[i] = x[i] - mu;
  double denom = 0.0;
  for (double v : d) denom += v * v;
  std::vector<double> r(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t i = 0; i + k < l; ++i) num += d[i] * d[i + k];
    r[k] = num / denom;
  }
  return r;
}

Tensor acf(const Tensor& x, std::size_t max_lag) {
  if (x.rank() != 1) throw ShapeMismatch("acf expects a 1-D tensor");
  auto r = acf(x.data(), max_lag);
  return Tensor({r.size()}, std::move(r));
}

PeriodDetection detect_period_detail(const RawSeries& series, std::size_t min_lag, std::size_t max_lag,
                                     double threshold) {
  if (min_lag < 2) throw ConfigInvalid("min_lag must be >= 2");
  if (max_lag < min_lag) throw ConfigInvalid("max_lag must be >= min_lag");
  const std::size_t t = series.length();
  if (max_lag + 1 >= t) {
    throw SeriesTooShort("max_lag " + std::to_string(max_lag) + " too large for length " + std::to_string(t));
  }
  const auto v = series.values.data();
  std::vector<double> avg(max_lag + 2, 0.0);
  std::size_t used = 0;
  for (std::size_t ch = 0; ch < series.n_channels(); ++ch) {
    const auto row = v.subspan(ch * t, t);
    const auto [mn, mx] = std::minmax_element(row.begin(), row.end());
    if (*mn == *mx) continue;
    const auto r = acf(row, max_lag + 1);
    for (std::size_t k = 0; k < r.size(); ++k) avg[k] += r[k];
    ++used;
  }
  if (used == 0) throw ConstantSeries("every channel is constant");
  for (auto& a : avg) a /= static_cast<double>(used);

  PeriodDetection det;
  det.mean_acf = avg;
  bool found = false;
  for (std::size_t k = min_lag; k <= max_lag; ++k) {
    if (avg[k] > avg[k - 1] && avg[k] > avg[k + 1] && (!found || avg[k] > det.score)) {
      det.period = k;
      det.score = avg[k];
      found = true;
    }
  }
  if (!found || det.score < threshold) {
    throw NoSignificantPeriod("no ACF peak >= " + std::to_string(threshold) + " in lags [" + std::to_string(min_lag) +
                              ", " + std::to_string(max_lag) + "]");
  }
  return det;
}

std::size_t detect_period(const RawSeries& series, std::size_t min_lag, std::size_t max_lag, double threshold) {
  return detect_period_detail(series, min_lag, max_lag, threshold).period;
}

}  // namespace ctpnet
