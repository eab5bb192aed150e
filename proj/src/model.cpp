#include "ctpnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ctpnet/errors.hpp"
#include "ctpnet/ops.hpp"
#include "ctpnet/series.hpp"

namespace ctpnet {

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " or " : "") << v[i];
  return os.str();
}

}  // namespace

std::vector<std::size_t> nearest_valid_periods(std::size_t l_in, std::size_t l_out, std::size_t period) {
  const std::size_t g = std::gcd(l_in, l_out);
  std::vector<std::size_t> divisors;
  for (std::size_t d = 1; d <= g; ++d)
    if (g % d == 0) divisors.push_back(d);
  if (divisors.empty()) return {};
  std::size_t best = SIZE_MAX;
  for (auto d : divisors) best = std::min(best, d > period ? d - period : period - d);
  std::vector<std::size_t> out;
  for (auto d : divisors)
    if ((d > period ? d - period : period - d) == best) out.push_back(d);
  return out;
}

void CTPNetConfig::validate() const {
  if (l_in == 0 || l_out == 0 || period == 0 || tq_period == 0 || d_model == 0 || heads_crl == 0 ||
      heads_block == 0 || n_channels == 0 || blocks == 0) {
    throw ConfigInvalid("all sizes and head counts must be positive");
  }
  if (l_in % period != 0 || l_out % period != 0) {
    std::ostringstream os;
    os << "period " << period << " must divide l_in " << l_in << " and l_out " << l_out
       << "; nearest valid period: " << join(nearest_valid_periods(l_in, l_out, period));
    if (l_in % period == 0) {
      const std::size_t lo = l_out / period * period;
      os << "; nearest valid horizons for this period: " << (lo == 0 ? period : lo);
      if (lo != 0) os << " or " << lo + period;
    }
    throw ConfigInvalid(os.str());
  }
  if (!ablate_i1 && l_in % heads_crl != 0) {
    throw ConfigInvalid("heads_crl " + std::to_string(heads_crl) + " must divide l_in " + std::to_string(l_in));
  }
  if (!ablate_i2 && d_model % heads_block != 0) {
    throw ConfigInvalid("heads_block " + std::to_string(heads_block) + " must divide d_model " +
                        std::to_string(d_model));
  }
  if (!ablate_i3 && period % prl_heads() != 0) {
    throw ConfigInvalid("periodic-branch heads " + std::to_string(prl_heads()) + " must divide period " +
                        std::to_string(period) + " (set heads_prl)");
  }
}

void to_json(nlohmann::json& j, const CTPNetConfig& c) {
  j = nlohmann::json{{"l_in", c.l_in},
                     {"l_out", c.l_out},
                     {"period", c.period},
                     {"tq_period", c.tq_period},
                     {"d_model", c.d_model},
                     {"heads_crl", c.heads_crl},
                     {"heads_block", c.heads_block},
                     {"heads_prl", c.heads_prl},
                     {"n_channels", c.n_channels},
                     {"blocks", c.blocks},
                     {"ablate_i1", c.ablate_i1},
                     {"ablate_i2", c.ablate_i2},
                     {"ablate_i3", c.ablate_i3}};
}

void from_json(const nlohmann::json& j, CTPNetConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("l_in", c.l_in);
  get("l_out", c.l_out);
  get("period", c.period);
  get("tq_period", c.tq_period);
  get("d_model", c.d_model);
  get("heads_crl", c.heads_crl);
  get("heads_block", c.heads_block);
  get("heads_prl", c.heads_prl);
  get("n_channels", c.n_channels);
  get("blocks", c.blocks);
  get("ablate_i1", c.ablate_i1);
  get("ablate_i2", c.ablate_i2);
  get("ablate_i3", c.ablate_i3);
}

std::pair<Tensor, InstanceStats> instance_norm(const Tensor& x) {
  if (x.rank() != 3) throw ShapeMismatch("instance_norm expects (B, C, L), got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), c = x.dim(1), l = x.dim(2);
  const auto xd = x.data();
  std::vector<double> mu(b * c), sd(b * c);
  for (std::size_t r = 0; r < b * c; ++r) {
    const double* row = xd.data() + r * l;
    double m = 0.0;
    for (std::size_t i = 0; i < l; ++i) m += row[i];
    m /= static_cast<double>(l);
    double var = 0.0;
    for (std::size_t i = 0; i < l; ++i) var += (row[i] - m) * (row[i] - m);
    var /= static_cast<double>(l);
    mu[r] = m;
    sd[r] = std::max(std::sqrt(var), kInstanceNormEps);
  }
  InstanceStats stats{Tensor({b, c, 1}, std::move(mu)), Tensor({b, c, 1}, sd)};
  std::vector<double> inv(b * c);
  for (std::size_t r = 0; r < b * c; ++r) inv[r] = 1.0 / sd[r];
  Tensor normalized = mul(sub(x, stats.mean), Tensor({b, c, 1}, std::move(inv)));
  return {std::move(normalized), std::move(stats)};
}

Tensor invert_instance_norm(const Tensor& y, const InstanceStats& stats) {
  return add(mul(y, stats.std), stats.mean);
}

CTPNetModel::CTPNetModel(const CTPNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& c = config_;
  if (!c.ablate_i1) crl_ = CrlWeights::init(c.n_channels, c.l_in, c.tq_period, c.heads_crl, rng);
  encoder_ = LinearWeights::init(c.n_pin(), c.d_model, rng);
  if (!c.ablate_i2) {
    for (std::size_t i = 0; i < c.blocks; ++i) trl_.push_back(BlockWeights::init(c.d_model, c.heads_block, rng));
  }
  if (!c.ablate_i3) {
    for (std::size_t i = 0; i < c.blocks; ++i) prl_.push_back(BlockWeights::init(c.period, c.prl_heads(), rng));
  }
  decoder_ = LinearWeights::init(c.d_model, c.n_pout(), rng);
}

Tensor CTPNetModel::forward(const Tensor& x, std::span<const std::int64_t> t) const {
  auto [xn, stats] = instance_norm(x);
  return invert_instance_norm(forward_normalized(xn, t), stats);
}

Tensor CTPNetModel::forward_normalized(const Tensor& xn, std::span<const std::int64_t> t) const {
  const auto& c = config_;
  if (xn.rank() != 3 || xn.dim(1) != c.n_channels || xn.dim(2) != c.l_in) {
    throw ShapeMismatch("model expects (B, " + std::to_string(c.n_channels) + ", " + std::to_string(c.l_in) +
                        "), got " + shape_str(xn.shape()));
  }
  if (t.size() != xn.dim(0)) throw ShapeMismatch("need one time index per batch element");
  const Tensor x_res = crl_ ? add(xn, crl_forward(*crl_, xn, t)) : xn;
  const Tensor z = encode(encoder_, downsample(x_res, c.period));  // (B, C, P, D)

  Tensor u = z;
  if (!trl_.empty()) {
    Tensor i2 = z;
    for (const auto& blk : trl_) i2 = trl_forward(blk, i2);
    u = add(z, i2);
  }
  Tensor i3 = u;
  for (const auto& blk : prl_) i3 = prl_forward(blk, i3);

  return de_downsample(decode(decoder_, i3), c.period);  // (B, C, l_out)
}

std::vector<Parameter> CTPNetModel::parameters() const {
  std::vector<Parameter> out;
  if (crl_) crl_->collect(out, "crl");
  encoder_.collect(out, "encoder");
  for (std::size_t i = 0; i < trl_.size(); ++i) trl_[i].collect(out, "trl." + std::to_string(i));
  for (std::size_t i = 0; i < prl_.size(); ++i) prl_[i].collect(out, "prl." + std::to_string(i));
  decoder_.collect(out, "decoder");
  return out;
}

CTPNetModel CTPNetModel::clone() const {
  CTPNetModel copy(config_, 0);
  auto dst = copy.parameters();
  const auto src = parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), dst[i].tensor.mutable_data().begin());
  }
  return copy;
}

std::size_t param_count(const CTPNetModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.parameters()) n += p.tensor.numel();
  return n;
}

ModelSummary describe(const CTPNetModel& model) {
  ModelSummary s;
  s.config = model.config();
  for (const auto& p : model.parameters()) {
    s.params.emplace_back(p.name, p.tensor.shape());
    s.total_params += p.tensor.numel();
  }
  return s;
}

nlohmann::json ModelSummary::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  j["total_params"] = total_params;
  auto& arr = j["params"] = nlohmann::json::array();
  for (const auto& [name, shape] : params) arr.push_back({{"name", name}, {"shape", shape}});
  return j;
}

}  // namespace ctpnet
