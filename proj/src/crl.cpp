#include "ctpnet/crl.hpp"

#include <cmath>

#include "ctpnet/errors.hpp"
#include "ctpnet/ops.hpp"

namespace ctpnet {

CrlWeights CrlWeights::init(std::size_t n_channels, std::size_t l_in, std::size_t tq_period, std::size_t heads,
                            Rng& rng) {
  if (heads == 0 || l_in % heads != 0) {
    throw ConfigInvalid("CRL heads " + std::to_string(heads) + " must divide l_in " + std::to_string(l_in));
  }
  CrlWeights w;
  w.theta_tq = normal_init({n_channels, tq_period}, 0.02, rng);
  w.w_k1 = uniform_init({l_in, l_in}, l_in, rng);
  w.w_v1 = uniform_init({l_in, l_in}, l_in, rng);
  w.w_o = uniform_init({l_in, l_in}, l_in, rng);
  w.heads = heads;
  return w;
}

void CrlWeights::collect(std::vector<Parameter>& out, const std::string& prefix) const {
  out.push_back({prefix + ".theta_tq", theta_tq});
  out.push_back({prefix + ".w_k1", w_k1});
  out.push_back({prefix + ".w_v1", w_v1});
  out.push_back({prefix + ".w_o", w_o});
}

std::vector<std::size_t> tq_query_columns(std::int64_t t, std::size_t tq_period, std::size_t l_in) {
  const auto w = static_cast<std::int64_t>(tq_period);
  const std::int64_t start = ((t % w) + w) % w;
  std::vector<std::size_t> cols(l_in);
  for (std::size_t j = 0; j < l_in; ++j) cols[j] = static_cast<std::size_t>((start + static_cast<std::int64_t>(j)) % w);
  return cols;
}

Tensor tq_select_query(const CrlWeights& w, std::int64_t t, std::size_t l_in) {
  const auto cols = tq_query_columns(t, w.tq_period(), l_in);
  return index_select(w.theta_tq, 1, cols);
}

Tensor crl_forward(const CrlWeights& w, const Tensor& x, std::span<const std::int64_t> t) {
  if (x.rank() != 3) throw ShapeMismatch("crl_forward expects (B, C, L), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), c = x.dim(1), l = x.dim(2);
  if (c != w.n_channels() || l != w.l_in()) {
    throw ShapeMismatch("crl_forward input " + shape_str(x.shape()) + " vs weights for " +
                        std::to_string(w.n_channels()) + " channels, l_in " + std::to_string(w.l_in()));
  }
  if (t.size() != batch) throw ShapeMismatch("need one time index per batch element");

  std::vector<Tensor> queries;
  queries.reserve(batch);
  for (auto ti : t) queries.push_back(tq_select_query(w, ti, l));
  const Tensor q = stack(queries);  // (B, C, L)
  const Tensor k = matmul(x, w.w_k1);
  const Tensor v = matmul(x, w.w_v1);

  // Scores scale by the full look-back length, not the head width.
  const double scale = 1.0 / std::sqrt(static_cast<double>(l));
  const std::size_t dh = l / w.heads;
  std::vector<Tensor> heads;
  heads.reserve(w.heads);
  for (std::size_t h = 0; h < w.heads; ++h) {
    const Tensor qh = slice(q, -1, h * dh, dh);
    const Tensor kh = slice(k, -1, h * dh, dh);
    const Tensor vh = slice(v, -1, h * dh, dh);
    const Tensor attn = softmax_last(mul_scalar(matmul(qh, transpose_last_two(kh)), scale));  // (B, C, C)
    heads.push_back(matmul(attn, vh));
  }
  const Tensor merged = w.heads == 1 ? heads[0] : concat(heads, -1);
  return matmul(merged, w.w_o);
}

Tensor crl_forward(const CrlWeights& w, const Tensor& x, std::int64_t t) {
  if (x.rank() != 2) throw ShapeMismatch("expected (C, L), got " + shape_str(x.shape()));
  const std::int64_t ts[] = {t};
  const Tensor out = crl_forward(w, reshape(x, {1, x.dim(0), x.dim(1)}), ts);
  return reshape(out, x.shape());
}

}  // namespace ctpnet
