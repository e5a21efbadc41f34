#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace posereg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

/// Handle to a node of the compute graph. Copies share the node, so a value
/// used by several ops accumulates gradient from each of them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<double> values();
  std::span<const double> values() const;
  std::span<double> grad();
  std::span<const double> grad() const;

  double item() const;
  bool requires_grad() const;
  void set_requires_grad(bool flag);
  void zero_grad();

  /// Deep copy of values only; the result is a fresh leaf.
  Tensor detach() const;

  /// Seeds d(this)/d(this) = 1 and accumulates into every reachable tensor
  /// that requires grad. Throws std::invalid_argument unless this is a scalar.
  void backward() const;

  // Op construction. Parents are recorded only while grad mode is enabled and
  // at least one parent requires grad.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);
  detail::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

void backward(const Tensor& objective);

bool grad_mode_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace posereg
