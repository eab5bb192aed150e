#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctpnet/init.hpp"
#include "ctpnet/tensor.hpp"

namespace ctpnet {

/// Channel-wise representation learning: multi-head attention across
/// channels whose queries come from a periodic learnable bank.
struct CrlWeights {
  Tensor theta_tq;  // (n_channels, tq_period)
  Tensor w_k1;      // (l_in, l_in)
  Tensor w_v1;      // (l_in, l_in)
  Tensor w_o;       // (l_in, l_in)
  std::size_t heads = 1;

  static CrlWeights init(std::size_t n_channels, std::size_t l_in, std::size_t tq_period, std::size_t heads, Rng& rng);

  std::size_t n_channels() const { return theta_tq.dim(0); }
  std::size_t tq_period() const { return theta_tq.dim(1); }
  std::size_t l_in() const { return w_k1.dim(0); }

  void collect(std::vector<Parameter>& out, const std::string& prefix) const;
};

// Column indices (t + j) mod W for j in [0, l_in).
std::vector<std::size_t> tq_query_columns(std::int64_t t, std::size_t tq_period, std::size_t l_in);

// Q = theta_tq[:, (t + j) mod W], shape (n_channels, l_in).
Tensor tq_select_query(const CrlWeights& w, std::int64_t t, std::size_t l_in);

// x: (B, n_channels, l_in) with one t per batch element -> I_1 of the same shape.
Tensor crl_forward(const CrlWeights& w, const Tensor& x, std::span<const std::int64_t> t);
// x: (n_channels, l_in).
Tensor crl_forward(const CrlWeights& w, const Tensor& x, std::int64_t t);

}  // namespace ctpnet
