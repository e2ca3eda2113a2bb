#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record their inputs and a backward closure; backprop()
// walks the recorded graph in reverse topological order and accumulates
// gradients into every reachable leaf.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgrlab::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Writable view. Only meaningful for leaves (parameters, inputs); writing
  // into a recorded intermediate invalidates its backward pass.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Identity of the underlying node within the recording.
  std::uint64_t tape_id() const;

  // Same values, cut from the recording.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  std::uint64_t tape_id = 0;

  std::span<double> grad_buffer();
};

}  // namespace detail

// Build the result of an operation. The backward closure is recorded only
// when gradient recording is enabled and some input requires a gradient.
Tensor detail_make(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// Reverse pass from a scalar loss. Gradients accumulate additively into
// every reachable tensor that requires a gradient. Returns the reachable
// leaves in discovery order.
std::vector<Tensor> backprop(const Tensor& loss);

}  // namespace dgrlab::ad
