#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ctpnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float64 array and autograd handle.
///
/// Copies share storage; results of ops are never mutated afterwards. Leaf
/// tensors (parameters) may be updated in place through mutable_data().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Negative axes count from the end.
  std::size_t dim(int axis) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // Copy of the values without graph history.
  Tensor detach() const;
  // Deep copy; the clone keeps requires_grad but no history.
  Tensor clone() const;

  // Reverse-mode sweep from a scalar: accumulates d(this)/d(leaf) into every
  // reachable leaf that requires grad.
  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Used by op implementations.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// A named learnable tensor. The handle aliases the owning model's storage.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace ctpnet
