#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctpnet/block.hpp"
#include "ctpnet/crl.hpp"
#include "ctpnet/tensor.hpp"

namespace ctpnet {

struct CTPNetConfig {
  std::size_t l_in = 96;
  std::size_t l_out = 96;
  std::size_t period = 24;      // downsampling period P
  std::size_t tq_period = 168;  // temporal-query bank width W
  std::size_t d_model = 128;
  std::size_t heads_crl = 4;
  std::size_t heads_block = 4;
  std::size_t heads_prl = 0;  // 0: same as heads_block
  std::size_t n_channels = 7;
  std::size_t blocks = 1;
  bool ablate_i1 = false;
  bool ablate_i2 = false;
  bool ablate_i3 = false;

  std::size_t n_pin() const { return l_in / period; }
  std::size_t n_pout() const { return l_out / period; }
  std::size_t prl_heads() const { return heads_prl == 0 ? heads_block : heads_prl; }

  // Throws ConfigInvalid naming the nearest valid period / horizons.
  void validate() const;
};

void to_json(nlohmann::json& j, const CTPNetConfig& c);
void from_json(const nlohmann::json& j, CTPNetConfig& c);

// Divisors of gcd(l_in, l_out) closest to `period` (one or two values).
std::vector<std::size_t> nearest_valid_periods(std::size_t l_in, std::size_t l_out, std::size_t period);

/// Per-(instance, channel) statistics of the look-back window.
struct InstanceStats {
  Tensor mean;  // (B, C, 1)
  Tensor std;   // (B, C, 1)
};

inline constexpr double kInstanceNormEps = 1e-5;

// Standardizes each (instance, channel) slice of x (B, C, L). The scale is the
// population std floored at eps, so constant slices map to zero.
std::pair<Tensor, InstanceStats> instance_norm(const Tensor& x);
Tensor invert_instance_norm(const Tensor& y, const InstanceStats& stats);

struct ModelSummary {
  CTPNetConfig config;
  std::size_t total_params = 0;
  std::vector<std::pair<std::string, Shape>> params;
  nlohmann::json to_json() const;
};

class CTPNetModel {
 public:
  CTPNetModel(const CTPNetConfig& config, std::uint64_t seed);

  const CTPNetConfig& config() const { return config_; }

  // x: (B, C, l_in) raw values, t: absolute start index of each window.
  Tensor forward(const Tensor& x, std::span<const std::int64_t> t) const;
  // Same pipeline on an already instance-normalized window, without the
  // final de-normalization.
  Tensor forward_normalized(const Tensor& xn, std::span<const std::int64_t> t) const;

  std::vector<Parameter> parameters() const;
  // Deep copy with independent storage.
  CTPNetModel clone() const;

  const std::optional<CrlWeights>& crl() const { return crl_; }
  const LinearWeights& encoder() const { return encoder_; }
  const LinearWeights& decoder() const { return decoder_; }
  const std::vector<BlockWeights>& trl() const { return trl_; }
  const std::vector<BlockWeights>& prl() const { return prl_; }

 private:
  CTPNetConfig config_;
  std::optional<CrlWeights> crl_;
  LinearWeights encoder_;
  std::vector<BlockWeights> trl_;
  std::vector<BlockWeights> prl_;
  LinearWeights decoder_;
};

std::size_t param_count(const CTPNetModel& model);
ModelSummary describe(const CTPNetModel& model);

}  // namespace ctpnet
