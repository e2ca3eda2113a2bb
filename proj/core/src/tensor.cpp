#include "dgrlab/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace dgrlab::ad {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};
thread_local bool recording_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> values,
                                        bool requires_grad) {
  if (values.size() != element_count(shape)) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->tape_id = next_tape_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

const detail::Node& checked(const detail::Node* node) {
  if (node == nullptr) throw std::logic_error("use of an undefined tensor");
  return *node;
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(element_count(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_.get()).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_.get()).value.size(); }

std::span<const double> Tensor::data() const { return checked(node_.get()).value; }

std::span<double> Tensor::mutable_data() {
  checked(node_.get());
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return checked(node_.get()).requires_grad; }

bool Tensor::is_leaf() const { return !static_cast<bool>(checked(node_.get()).backward); }

bool Tensor::has_grad() const { return !checked(node_.get()).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(node_.get()).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(node_.get());
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  checked(node_.get());
  node_->grad.clear();
}

std::uint64_t Tensor::tape_id() const { return checked(node_.get()).tape_id; }

Tensor Tensor::detach() const {
  const auto& n = checked(node_.get());
  return Tensor(make_leaf(n.shape, n.value, false));
}

Tensor detail_make(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto node = make_leaf(std::move(shape), std::move(value), false);
  if (!recording_enabled) return Tensor::from_node(std::move(node));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Tensor::from_node(std::move(node));
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.shared_node());
  node->backward = std::move(backward);
  return Tensor::from_node(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(recording_enabled) { recording_enabled = false; }
NoGradGuard::~NoGradGuard() { recording_enabled = previous_; }

bool grad_recording_enabled() { return recording_enabled; }

std::vector<Tensor> backprop(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backprop on an undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backprop requires a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backprop on a detached tensor: loss does not depend on any parameter");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::vector<Tensor> leaves;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }

  // Collect leaves with owning handles.
  std::unordered_set<const detail::Node*> seen;
  if (!loss.node()->backward) leaves.push_back(loss);
  for (auto* node : order) {
    for (const auto& in : node->inputs) {
      if (in->requires_grad && !in->backward && seen.insert(in.get()).second) {
        leaves.push_back(Tensor::from_node(in));
      }
    }
  }
  return leaves;
}

}  // namespace dgrlab::ad
