#pragma once

#include <random>

#include "ctpnet/tensor.hpp"

namespace ctpnet {

using Rng = std::mt19937_64;

// i.i.d. uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], requires_grad set.
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);
Tensor normal_init(Shape shape, double stddev, Rng& rng);

}  // namespace ctpnet
