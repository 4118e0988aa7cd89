#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nefnet/fieldops.hpp"

/// Minimal reverse-mode automatic differentiation over dense 2-D arrays.
/// Graphs are built per sample and discarded after backward(); nodes that
/// do not depend on a trainable leaf keep no backward state.
namespace nef::ad {

// Aligned so Eigen reductions peel the same way on every allocation; with
// plain vectors the summation order, and so the rounding, depended on the
// address.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Node {
  int rows = 0;
  int cols = 0;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  Eigen::Map<const RowMatrix> mat() const { return {value.data(), rows, cols}; }
  Eigen::Map<RowMatrix> grad_mat();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  Eigen::Map<const RowMatrix> mat() const { return node_->mat(); }
  RowMatrix matrix() const { return node_->mat(); }
  double item() const;

  /// Empty until backward() reached this node.
  std::span<const double> grad() const { return node_->grad; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(const ConstMatrixRef& value);
Var constant(std::vector<double> values, int rows, int cols);
/// Trainable leaf.
Var variable(std::vector<double> values, int rows, int cols);
/// Same value, cut from the graph.
Var detach(const Var& x);

/// Seeds d(root)/d(root) = 1 and propagates to every trainable leaf.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Elementwise mean of equally shaped inputs, computed as
/// x_0 + sum_l (x_l - x_0) / L so that identical inputs average exactly.
Var mean(std::span<const Var> xs);
Var concat_rows(const Var& top, const Var& bottom);

Var silu(const Var& x);
Var sigmoid(const Var& x);

/// y = W x + b with x: n x 1, W: m x n, b: m x 1.
Var linear(const Var& x, const Var& weight, const Var& bias);

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// x: Cin x T, weight: Cout x (Cin * K), bias: Cout x 1.
Var conv1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g);
/// x: Cin x T, weight: Cin x (Cout * K), bias: Cout x 1.
/// Output length (T - 1) * stride - 2 * padding + K.
Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g);

/// Normalizes over all entries, then per-channel affine.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

/// y[c, t] = x[c, t] * g[c].
Var scale_channels(const Var& x, const Var& gate);

Var roi_align(const Var& features, Span span, int bins);
Var reverse_roi_align(std::span<const Var> reps, std::span<const Span> spans, int feature_length);

/// sum(a .* b) as a 1 x 1 value.
Var dot(const Var& a, const Var& b);

/// mean |prediction - target|.
Var mae(const Var& prediction, const Var& target);

}  // namespace nef::ad
