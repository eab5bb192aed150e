#pragma once

#include <string>
#include <vector>

#include "ctpnet/init.hpp"
#include "ctpnet/tensor.hpp"

namespace ctpnet {

/// Efficient-attention transformer block. The same code serves the trend
/// branch (tokens = subsequences, features = hidden width) and the periodic
/// branch (tokens = hidden width, features = subsequences).
struct BlockWeights {
  Tensor w_q, w_k, w_v, w_o;  // (F, F), no bias
  Tensor ffn_w1, ffn_b1;      // (F, 2F), (2F)
  Tensor ffn_w2, ffn_b2;      // (2F, F), (F)
  Tensor ln1_scale, ln1_shift, ln2_scale, ln2_shift;  // (F)
  std::size_t heads = 1;

  static BlockWeights init(std::size_t width, std::size_t heads, Rng& rng);
  std::size_t width() const { return w_q.dim(0); }
  void collect(std::vector<Parameter>& out, const std::string& prefix) const;
};

/// Affine map over the last axis (encoder / decoder).
struct LinearWeights {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)

  static LinearWeights init(std::size_t in, std::size_t out, Rng& rng);
  void collect(std::vector<Parameter>& out, const std::string& prefix) const;
};

// (q / sqrt(d_head)) * ((k^T / sqrt(n_tokens)) * v); the d_head x d_head
// product is formed first so cost is linear in n_tokens.
Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor block_forward(const BlockWeights& w, const Tensor& z);

// z: (..., P, D); attends across the P subsequence tokens.
Tensor trl_forward(const BlockWeights& w, const Tensor& z);
// u: (..., P, D); runs the block on (..., D, P) and transposes back.
Tensor prl_forward(const BlockWeights& w, const Tensor& u);

Tensor encode(const LinearWeights& w, const Tensor& x_ds);
Tensor decode(const LinearWeights& w, const Tensor& i3);

}  // namespace ctpnet
