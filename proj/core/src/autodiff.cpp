#include "nefnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "nefnet/errors.hpp"

namespace nef::ad {

namespace {

using NodePtr = std::shared_ptr<Node>;

NodePtr new_node(int rows, int cols) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  return node;
}

/// Attaches inputs and the backward rule only when some input is trainable.
Var finish(NodePtr node, std::vector<NodePtr> inputs, std::function<void(Node&)> backprop) {
  const bool trainable =
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (trainable) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()));
  }
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// cols[(c * K + k), t] = x[c, t * stride + k - pad]
RowMatrix im2col(const Eigen::Map<const RowMatrix>& x, ConvGeometry g, int out_len) {
  const int channels = static_cast<int>(x.rows());
  const int len = static_cast<int>(x.cols());
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(channels) * g.kernel, out_len);
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < g.kernel; ++k) {
      double* row = cols.row(c * g.kernel + k).data();
      for (int t = 0; t < out_len; ++t) {
        const int src = t * g.stride + k - g.padding;
        if (src >= 0 && src < len) row[t] = x(c, src);
      }
    }
  }
  return cols;
}

// Adjoint of im2col: out[c, t * stride + k - pad] += cols[(c * K + k), t]
void col2im(const RowMatrix& cols, ConvGeometry g, Eigen::Map<RowMatrix> out) {
  const int channels = static_cast<int>(out.rows());
  const int len = static_cast<int>(out.cols());
  const int in_len = static_cast<int>(cols.cols());
  for (int c = 0; c < channels; ++c) {
    for (int k = 0; k < g.kernel; ++k) {
      const double* row = cols.row(c * g.kernel + k).data();
      for (int t = 0; t < in_len; ++t) {
        const int dst = t * g.stride + k - g.padding;
        if (dst >= 0 && dst < len) out(c, dst) += row[t];
      }
    }
  }
}

}  // namespace

Eigen::Map<RowMatrix> Node::grad_mat() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return {grad.data(), rows, cols};
}

double Var::item() const {
  if (size() != 1) throw Error(ErrorKind::kShapeMismatch, "item() on a non-scalar");
  return node_->value.front();
}

Var constant(const ConstMatrixRef& value) {
  auto node = new_node(static_cast<int>(value.rows()), static_cast<int>(value.cols()));
  Eigen::Map<RowMatrix>(node->value.data(), node->rows, node->cols) = value;
  return Var(std::move(node));
}

Var constant(std::vector<double> values, int rows, int cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw Error(ErrorKind::kShapeMismatch, "constant: value count does not match shape");
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(values.begin(), values.end());
  return Var(std::move(node));
}

Var variable(std::vector<double> values, int rows, int cols) {
  Var v = constant(std::move(values), rows, cols);
  v.node()->requires_grad = true;
  return v;
}

Var detach(const Var& x) { return constant(std::vector<double>(x.value().begin(), x.value().end()), x.rows(), x.cols()); }

void backward(const Var& root) {
  if (root.size() != 1) throw Error(ErrorKind::kShapeMismatch, "backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Post-order DFS gives inputs before consumers; walk it in reverse.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_mat()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  auto out = new_node(a.rows(), a.cols());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = a.value()[i] + b.value()[i];
  return finish(out, {a.ptr(), b.ptr()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad_mat() += Eigen::Map<const RowMatrix>(self.grad.data(), self.rows, self.cols);
    }
  });
}

Var scale(const Var& x, double factor) {
  auto out = new_node(x.rows(), x.cols());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = factor * x.value()[i];
  return finish(out, {x.ptr()}, [factor](Node& self) {
    self.inputs[0]->grad_mat() += factor * Eigen::Map<const RowMatrix>(self.grad.data(), self.rows, self.cols);
  });
}

Var mean(std::span<const Var> xs) {
  if (xs.empty()) throw Error(ErrorKind::kFusion, "mean of an empty list");
  for (const auto& x : xs) require_same_shape(xs.front(), x, "mean");
  const double inv = 1.0 / static_cast<double>(xs.size());
  auto out = new_node(xs.front().rows(), xs.front().cols());
  const auto anchor = xs.front().value();
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    double offset = 0.0;
    for (const auto& x : xs) offset += x.value()[i] - anchor[i];
    out->value[i] = anchor[i] + offset * inv;
  }
  std::vector<NodePtr> inputs;
  for (const auto& x : xs) inputs.push_back(x.ptr());
  return finish(out, std::move(inputs), [inv](Node& self) {
    const Eigen::Map<const RowMatrix> g(self.grad.data(), self.rows, self.cols);
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->grad_mat() += inv * g;
    }
  });
}

Var concat_rows(const Var& top, const Var& bottom) {
  if (top.cols() != bottom.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "concat_rows: column counts differ");
  }
  auto out = new_node(top.rows() + bottom.rows(), top.cols());
  std::copy(top.value().begin(), top.value().end(), out->value.begin());
  std::copy(bottom.value().begin(), bottom.value().end(), out->value.begin() + top.size());
  return finish(out, {top.ptr(), bottom.ptr()}, [](Node& self) {
    const Eigen::Map<const RowMatrix> g(self.grad.data(), self.rows, self.cols);
    Node& a = *self.inputs[0];
    Node& b = *self.inputs[1];
    if (a.requires_grad) a.grad_mat() += g.topRows(a.rows);
    if (b.requires_grad) b.grad_mat() += g.bottomRows(b.rows);
  });
}

Var silu(const Var& x) {
  auto out = new_node(x.rows(), x.cols());
  for (std::size_t i = 0; i < out->value.size(); ++i) {
    const double v = x.value()[i];
    out->value[i] = v * sigmoid_scalar(v);
  }
  return finish(out, {x.ptr()}, [](Node& self) {
    Node& in = *self.inputs[0];
    in.grad_mat();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = in.value[i];
      const double s = sigmoid_scalar(v);
      in.grad[i] += self.grad[i] * (s + v * s * (1.0 - s));
    }
  });
}

Var sigmoid(const Var& x) {
  auto out = new_node(x.rows(), x.cols());
  for (std::size_t i = 0; i < out->value.size(); ++i) out->value[i] = sigmoid_scalar(x.value()[i]);
  return finish(out, {x.ptr()}, [](Node& self) {
    Node& in = *self.inputs[0];
    in.grad_mat();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      in.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != 1 || weight.cols() != x.rows() || bias.rows() != weight.rows() || bias.cols() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "linear: incompatible shapes");
  }
  auto out = new_node(weight.rows(), 1);
  Eigen::Map<RowMatrix>(out->value.data(), out->rows, 1) = weight.mat() * x.mat() + bias.mat();
  return finish(out, {x.ptr(), weight.ptr(), bias.ptr()}, [](Node& self) {
    const Eigen::Map<const RowMatrix> g(self.grad.data(), self.rows, 1);
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    if (xn.requires_grad) xn.grad_mat().noalias() += wn.mat().transpose() * g;
    if (wn.requires_grad) wn.grad_mat().noalias() += g * xn.mat().transpose();
    if (bn.requires_grad) bn.grad_mat() += g;
  });
}

Var conv1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  const int in_channels = x.rows();
  const int out_channels = weight.rows();
  if (weight.cols() != in_channels * g.kernel || bias.rows() != out_channels || bias.cols() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "conv1d: weight/bias do not match input channels");
  }
  const int out_len = (x.cols() + 2 * g.padding - g.kernel) / g.stride + 1;
  if (out_len < 1) throw Error(ErrorKind::kShapeMismatch, "conv1d: input shorter than kernel");

  RowMatrix cols = im2col(x.mat(), g, out_len);
  auto out = new_node(out_channels, out_len);
  Eigen::Map<RowMatrix> y(out->value.data(), out_channels, out_len);
  y.noalias() = weight.mat() * cols;
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), out_channels);

  const bool keep_cols = weight.requires_grad();
  return finish(out, {x.ptr(), weight.ptr(), bias.ptr()},
                [g, cols = keep_cols ? std::move(cols) : RowMatrix()](Node& self) {
                  const Eigen::Map<const RowMatrix> dy(self.grad.data(), self.rows, self.cols);
                  Node& xn = *self.inputs[0];
                  Node& wn = *self.inputs[1];
                  Node& bn = *self.inputs[2];
                  if (wn.requires_grad) wn.grad_mat().noalias() += dy * cols.transpose();
                  if (bn.requires_grad) bn.grad_mat() += dy.rowwise().sum();
                  if (xn.requires_grad) {
                    const RowMatrix dcols = wn.mat().transpose() * dy;
                    col2im(dcols, g, xn.grad_mat());
                  }
                });
}

Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, ConvGeometry g) {
  const int in_channels = x.rows();
  const int out_channels = bias.rows();
  if (weight.rows() != in_channels || weight.cols() != out_channels * g.kernel || bias.cols() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "conv_transpose1d: weight/bias do not match channels");
  }
  const int in_len = x.cols();
  const int out_len = (in_len - 1) * g.stride - 2 * g.padding + g.kernel;
  if (out_len < 1) throw Error(ErrorKind::kShapeMismatch, "conv_transpose1d: empty output");

  const RowMatrix cols = weight.mat().transpose() * x.mat();  // (Cout*K) x T
  auto out = new_node(out_channels, out_len);
  Eigen::Map<RowMatrix> y(out->value.data(), out_channels, out_len);
  col2im(cols, g, y);
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), out_channels);

  return finish(out, {x.ptr(), weight.ptr(), bias.ptr()}, [g, in_len](Node& self) {
    const Eigen::Map<const RowMatrix> dy(self.grad.data(), self.rows, self.cols);
    Node& xn = *self.inputs[0];
    Node& wn = *self.inputs[1];
    Node& bn = *self.inputs[2];
    const RowMatrix dcols = im2col(Eigen::Map<const RowMatrix>(self.grad.data(), self.rows, self.cols), g, in_len);
    if (xn.requires_grad) xn.grad_mat().noalias() += wn.mat() * dcols;
    if (wn.requires_grad) wn.grad_mat().noalias() += xn.mat() * dcols.transpose();
    if (bn.requires_grad) bn.grad_mat() += dy.rowwise().sum();
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int channels = x.rows();
  if (gain.rows() != channels || bias.rows() != channels || gain.cols() != 1 || bias.cols() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "layer_norm: gain/bias must be channels x 1");
  }
  const auto xm = x.mat();
  const double n = static_cast<double>(x.size());
  const double mu = xm.sum() / n;
  const double var = (xm.array() - mu).square().sum() / n;
  const double inv_std = 1.0 / std::sqrt(var + eps);
  RowMatrix normalized = (xm.array() - mu) * inv_std;

  auto out = new_node(channels, x.cols());
  Eigen::Map<RowMatrix> y(out->value.data(), channels, x.cols());
  const Eigen::Map<const Eigen::VectorXd> g(gain.value().data(), channels);
  const Eigen::Map<const Eigen::VectorXd> b(bias.value().data(), channels);
  y = (normalized.array().colwise() * g.array()).colwise() + b.array();

  return finish(out, {x.ptr(), gain.ptr(), bias.ptr()},
                [normalized = std::move(normalized), inv_std, n](Node& self) {
                  const Eigen::Map<const RowMatrix> dy(self.grad.data(), self.rows, self.cols);
                  Node& xn = *self.inputs[0];
                  Node& gn = *self.inputs[1];
                  Node& bn = *self.inputs[2];
                  if (gn.requires_grad) gn.grad_mat() += (dy.array() * normalized.array()).rowwise().sum().matrix();
                  if (bn.requires_grad) bn.grad_mat() += dy.rowwise().sum();
                  if (xn.requires_grad) {
                    const Eigen::Map<const Eigen::VectorXd> gvec(gn.value.data(), gn.rows);
                    const RowMatrix dxhat = dy.array().colwise() * gvec.array();
                    const double mean_dxhat = dxhat.sum() / n;
                    const double mean_dxhat_xhat = (dxhat.array() * normalized.array()).sum() / n;
                    xn.grad_mat().array() +=
                        inv_std * (dxhat.array() - mean_dxhat - normalized.array() * mean_dxhat_xhat);
                  }
                });
}

Var scale_channels(const Var& x, const Var& gate) {
  if (gate.rows() != x.rows() || gate.cols() != 1) {
    throw Error(ErrorKind::kShapeMismatch, "scale_channels: gate must be channels x 1");
  }
  auto out = new_node(x.rows(), x.cols());
  const Eigen::Map<const Eigen::VectorXd> g(gate.value().data(), gate.rows());
  Eigen::Map<RowMatrix>(out->value.data(), x.rows(), x.cols()) = x.mat().array().colwise() * g.array();
  return finish(out, {x.ptr(), gate.ptr()}, [](Node& self) {
    const Eigen::Map<const RowMatrix> dy(self.grad.data(), self.rows, self.cols);
    Node& xn = *self.inputs[0];
    Node& gn = *self.inputs[1];
    if (xn.requires_grad) {
      const Eigen::Map<const Eigen::VectorXd> g(gn.value.data(), gn.rows);
      xn.grad_mat().array() += dy.array().colwise() * g.array();
    }
    if (gn.requires_grad) gn.grad_mat() += (dy.array() * xn.mat().array()).rowwise().sum().matrix();
  });
}

Var roi_align(const Var& features, Span span, int bins) {
  const RowMatrix pooled = roi_align_1d(features.mat(), span, bins);
  auto out = new_node(static_cast<int>(pooled.rows()), bins);
  Eigen::Map<RowMatrix>(out->value.data(), out->rows, out->cols) = pooled;
  return finish(out, {features.ptr()}, [span](Node& self) {
    roi_align_1d_backward(Eigen::Map<const RowMatrix>(self.grad.data(), self.rows, self.cols), span,
                          self.inputs[0]->grad_mat());
  });
}

Var reverse_roi_align(std::span<const Var> reps, std::span<const Span> spans, int feature_length) {
  if (reps.empty() || reps.size() != spans.size()) {
    throw Error(ErrorKind::kShapeMismatch, "reverse_roi_align: one representation per span");
  }
  check_tiling(spans, feature_length);
  const int channels = reps.front().rows();
  auto out = new_node(channels, feature_length);
  Eigen::Map<RowMatrix> y(out->value.data(), channels, feature_length);
  std::vector<NodePtr> inputs;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].rows() != channels) {
      throw Error(ErrorKind::kShapeMismatch, "reverse_roi_align: channel counts differ");
    }
    reverse_roi_align_1d(reps[i].mat(), spans[i], y);
    inputs.push_back(reps[i].ptr());
  }
  std::vector<Span> kept(spans.begin(), spans.end());
  return finish(out, std::move(inputs), [kept = std::move(kept)](Node& self) {
    const Eigen::Map<const RowMatrix> dy(self.grad.data(), self.rows, self.cols);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      Node& in = *self.inputs[i];
      if (in.requires_grad) reverse_roi_align_1d_backward(dy, kept[i], in.grad_mat());
    }
  });
}

Var dot(const Var& a, const Var& b) {
  require_same_shape(a, b, "dot");
  auto out = new_node(1, 1);
  out->value[0] = (a.mat().array() * b.mat().array()).sum();
  return finish(out, {a.ptr(), b.ptr()}, [](Node& self) {
    Node& an = *self.inputs[0];
    Node& bn = *self.inputs[1];
    const double g = self.grad[0];
    if (an.requires_grad) an.grad_mat() += g * bn.mat();
    if (bn.requires_grad) bn.grad_mat() += g * an.mat();
  });
}

Var mae(const Var& prediction, const Var& target) {
  require_same_shape(prediction, target, "mae");
  const double n = static_cast<double>(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    total += std::abs(prediction.value()[i] - target.value()[i]);
  }
  auto out = new_node(1, 1);
  out->value[0] = total / n;
  return finish(out, {prediction.ptr(), target.ptr()}, [n](Node& self) {
    Node& p = *self.inputs[0];
    Node& t = *self.inputs[1];
    const double g = self.grad[0] / n;
    if (p.requires_grad) p.grad_mat();
    if (t.requires_grad) t.grad_mat();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double diff = p.value[i] - t.value[i];
      const double s = diff > 0.0 ? g : (diff < 0.0 ? -g : 0.0);
      if (p.requires_grad) p.grad[i] += s;
      if (t.requires_grad) t.grad[i] -= s;
    }
  });
}

}  // namespace nef::ad
