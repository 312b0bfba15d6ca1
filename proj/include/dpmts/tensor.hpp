#pragma once

// Dense float64 tensors with reverse-mode gradients.
//
// A Tensor is a shared handle to a graph node. Operations on tensors that
// require gradients record their inputs and a backward rule on the result
// node; backward() orders the reachable nodes so that every node is
// processed after all of its consumers, replays the rules in that order and
// then drops the recorded graph. Leaf gradients accumulate across calls
// until zero_grad() is called.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dpmts/error.hpp"
#include "dpmts/random.hpp"

namespace dpmts {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

inline thread_local bool g_grad_enabled = true;

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::g_grad_enabled; }

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
    for (auto d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    if (shape_size(shape) != data.size())
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const auto n = values.size();
    return Tensor({n}, std::move(values), requires_grad);
  }

  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false) {
    if (rows.empty()) throw DimensionError("matrix needs at least one row");
    std::vector<double> flat;
    for (const auto& r : rows) {
      if (r.size() != rows.front().size()) throw DimensionError("ragged matrix rows");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), rows.front().size()}, std::move(flat), requires_grad);
  }

  /// Uniform in [-bound, bound].
  static Tensor uniform(Shape shape, double bound, Rng& rng, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }

  /// Rows of the matrix view: product of all leading dimensions.
  std::size_t rows() const { return size() / cols(); }
  /// Length of the trailing dimension.
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; only meant for leaves (parameters, optimizers, probes).
  std::span<double> mutable_data() { return node_->data; }

  double item() const {
    if (size() != 1) throw ContractViolation("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; empty span when no gradient has reached this tensor.
  std::span<const double> grad() const { return node_->grad; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  void zero_grad() { node_->grad.clear(); }

  /// Independent leaf copy carrying no graph.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  std::vector<double> to_vector() const { return node_->data; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Builds the result node; records inputs and the backward rule only when
/// grad mode is on and some input requires gradients.
inline Tensor make_result(Shape shape, std::vector<double> data,
                          std::vector<std::shared_ptr<Node>> inputs,
                          std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in->requires_grad;
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  n.inputs = std::move(inputs);
  n.backward_fn = std::move(backward_fn);
  return out;
}

}  // namespace detail

/// Topologically ordered interior nodes reachable from `root`, consumers
/// before producers. This is the replay order of the recorded tape.
inline std::vector<detail::Node*> tape_order(const Tensor& root) {
  std::vector<detail::Node*> post;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

/// Populates gradients of every reachable requires_grad tensor and clears the tape.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractViolation("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;
  const auto order = tape_order(loss);
  loss.node()->grad_buffer()[0] += 1.0;
  for (detail::Node* n : order)
    if (n->backward_fn) n->backward_fn(*n);
  // Detach everything first and release afterwards: dropping an input link
  // can free a node that is still listed in `order`.
  std::vector<std::shared_ptr<detail::Node>> released;
  for (detail::Node* n : order) {
    for (auto& in : n->inputs) released.push_back(std::move(in));
    n->inputs.clear();
    n->backward_fn = nullptr;
  }
}

/// A named model tensor. trainable == false tensors never receive gradients
/// and are skipped by the optimizer.
struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor t, bool train) : name(std::move(n)), tensor(std::move(t)), trainable(train) {
    tensor.set_requires_grad(trainable);
  }
};

/// FNV-1a over the raw bytes of a tensor's values.
inline std::uint64_t checksum(std::span<const double> values) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace dpmts
