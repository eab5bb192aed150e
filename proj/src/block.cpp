#include "ctpnet/block.hpp"

#include <cmath>

#include "ctpnet/errors.hpp"
#include "ctpnet/ops.hpp"

namespace ctpnet {

BlockWeights BlockWeights::init(std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigInvalid("block heads " + std::to_string(heads) + " must divide width " + std::to_string(width));
  }
  const std::size_t hidden = 2 * width;
  BlockWeights w;
  w.w_q = uniform_init({width, width}, width, rng);
  w.w_k = uniform_init({width, width}, width, rng);
  w.w_v = uniform_init({width, width}, width, rng);
  w.w_o = uniform_init({width, width}, width, rng);
  w.ffn_w1 = uniform_init({width, hidden}, width, rng);
  w.ffn_b1 = uniform_init({hidden}, width, rng);
  w.ffn_w2 = uniform_init({hidden, width}, hidden, rng);
  w.ffn_b2 = uniform_init({width}, hidden, rng);
  w.ln1_scale = Tensor::full({width}, 1.0, true);
  w.ln1_shift = Tensor::zeros({width}, true);
  w.ln2_scale = Tensor::full({width}, 1.0, true);
  w.ln2_shift = Tensor::zeros({width}, true);
  w.heads = heads;
  return w;
}

void BlockWeights::collect(std::vector<Parameter>& out, const std::string& prefix) const {
  out.push_back({prefix + ".w_q", w_q});
  out.push_back({prefix + ".w_k", w_k});
  out.push_back({prefix + ".w_v", w_v});
  out.push_back({prefix + ".w_o", w_o});
  out.push_back({prefix + ".ffn_w1", ffn_w1});
  out.push_back({prefix + ".ffn_b1", ffn_b1});
  out.push_back({prefix + ".ffn_w2", ffn_w2});
  out.push_back({prefix + ".ffn_b2", ffn_b2});
  out.push_back({prefix + ".ln1_scale", ln1_scale});
  out.push_back({prefix + ".ln1_shift", ln1_shift});
  out.push_back({prefix + ".ln2_scale", ln2_scale});
  out.push_back({prefix + ".ln2_shift", ln2_shift});
}

LinearWeights LinearWeights::init(std::size_t in, std::size_t out, Rng& rng) {
  return LinearWeights{uniform_init({in, out}, in, rng), uniform_init({out}, in, rng)};
}

void LinearWeights::collect(std::vector<Parameter>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 2 || q.shape() != k.shape() || k.shape() != v.shape()) {
    throw ShapeMismatch("efficient_attention needs equal (..., n, d) operands: " + shape_str(q.shape()) + ", " +
                        shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const double n_tokens = static_cast<double>(q.dim(-2));
  const double d_head = static_cast<double>(q.dim(-1));
  const Tensor q_scaled = mul_scalar(q, 1.0 / std::sqrt(d_head));
  const Tensor kt_scaled = mul_scalar(transpose_last_two(k), 1.0 / std::sqrt(n_tokens));
  return matmul(q_scaled, matmul(kt_scaled, v));
}

Tensor block_forward(const BlockWeights& w, const Tensor& z) {
  const std::size_t f = w.width();
  if (z.rank() < 2 || z.dim(-1) != f) {
    throw ShapeMismatch("block of width " + std::to_string(f) + " got input " + shape_str(z.shape()));
  }
  const Tensor q = matmul(z, w.w_q);
  const Tensor k = matmul(z, w.w_k);
  const Tensor v = matmul(z, w.w_v);

  Tensor attended;
  if (w.heads == 1) {
    attended = efficient_attention(q, k, v);
  } else {
    const std::size_t dh = f / w.heads;
    std::vector<Tensor> heads;
    heads.reserve(w.heads);
    for (std::size_t h = 0; h < w.heads; ++h) {
      heads.push_back(efficient_attention(slice(q, -1, h * dh, dh), slice(k, -1, h * dh, dh), slice(v, -1, h * dh, dh)));
    }
    attended = concat(heads, -1);
  }
  const Tensor e_mha = matmul(attended, w.w_o);

  const Tensor i1 = layer_norm_last(add(z, e_mha), w.ln1_scale, w.ln1_shift);
  const Tensor hidden = gelu(add(matmul(i1, w.ffn_w1), w.ffn_b1));
  const Tensor i2 = add(matmul(hidden, w.ffn_w2), w.ffn_b2);
  return layer_norm_last(add(i1, i2), w.ln2_scale, w.ln2_shift);
}

Tensor trl_forward(const BlockWeights& w, const Tensor& z) { return block_forward(w, z); }

Tensor prl_forward(const BlockWeights& w, const Tensor& u) {
  if (u.rank() < 2) throw ShapeMismatch("prl_forward expects (..., P, D)");
  return transpose_last_two(block_forward(w, transpose_last_two(u)));
}

Tensor encode(const LinearWeights& w, const Tensor& x_ds) {
  if (x_ds.rank() < 1 || x_ds.dim(-1) != w.weight.dim(0)) {
    throw ShapeMismatch("linear map expects trailing " + std::to_string(w.weight.dim(0)) + ", got " +
                        shape_str(x_ds.shape()));
  }
  return add(matmul(x_ds, w.weight), w.bias);
}

Tensor decode(const LinearWeights& w, const Tensor& i3) { return encode(w, i3); }

}  // namespace ctpnet
