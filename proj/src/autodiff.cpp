#include "kga/autodiff.hpp"

#include <cmath>
#include <string>

#include "kga/kernels.hpp"

namespace kga::ad {

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) +
                                               " vs " + shape_string(b.shape()));
  }
}

void require_rank(Var x, Index rank, const char* op) {
  if (x.value().rank() != rank) {
    throw Error(ErrorKind::kShapeMismatch, std::string(op) + ": expected rank " +
                                               std::to_string(rank) + ", got " +
                                               shape_string(x.shape()));
  }
}

FieldMap<double> planes_of(Eigen::ArrayXd& buffer, Index rows) {
  return FieldMap<double>(buffer.data(), rows, buffer.size() / rows);
}

ConstFieldMap<double> planes_of(const Eigen::ArrayXd& buffer, Index rows) {
  return ConstFieldMap<double>(buffer.data(), rows, buffer.size() / rows);
}

}  // namespace

std::size_t Graph::id_of(Var v) const {
  if (!v.valid() || &v.graph() != this) {
    throw Error(ErrorKind::kPlacement, "variable does not belong to this graph");
  }
  return v.id();
}

Var Graph::constant(TensorD value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(TensorD value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(TensorD value, std::vector<std::size_t> inputs, Backprop backprop) {
  const std::size_t self = nodes_.size();
  bool needs_grad = false;
  for (std::size_t in : inputs) {
    if (in >= self) {
      throw Error(ErrorKind::kGraphCycle,
                  "node " + std::to_string(self) + " references non-earlier node " + std::to_string(in));
    }
    needs_grad = needs_grad || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), needs_grad ? std::move(backprop) : Backprop{},
                        needs_grad, false});
  return Var(this, self);
}

Eigen::ArrayXd& Graph::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad = Eigen::ArrayXd::Zero(node.value.size());
  return node.grad;
}

Eigen::ArrayXd Graph::grad(Var v) const {
  const Node& node = nodes_[id_of(v)];
  if (node.grad.size() != node.value.size()) return Eigen::ArrayXd::Zero(node.value.size());
  return node.grad;
}

void Graph::zero_grad() {
  for (Node& node : nodes_) node.grad.resize(0);
}

void Graph::backward(Var loss) {
  const std::size_t root = id_of(loss);
  if (nodes_[root].value.size() != 1) {
    throw Error(ErrorKind::kNonScalarBackward,
                "backward on tensor of shape " + shape_string(nodes_[root].value.shape()));
  }
  for (Node& node : nodes_) {
    if (!node.is_leaf) node.grad.resize(0);
  }
  if (!nodes_[root].requires_grad) return;
  grad_buffer(root)[0] += 1.0;
  for (std::size_t id = root + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.is_leaf || !node.requires_grad || node.grad.size() == 0) continue;
    node.backprop(*this, id);
  }
}

Var operator+(Var a, Var b) {
  require_same_shape(a, b, "add");
  Graph& g = a.graph();
  TensorD out(a.shape(), a.value().values() + b.value().values());
  const std::size_t ia = g.id_of(a), ib = g.id_of(b);
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& up = g.grad_at(self);
    if (g.requires_grad(ia)) g.grad_buffer(ia) += up;
    if (g.requires_grad(ib)) g.grad_buffer(ib) += up;
  });
}

Var operator-(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Graph& g = a.graph();
  TensorD out(a.shape(), a.value().values() - b.value().values());
  const std::size_t ia = g.id_of(a), ib = g.id_of(b);
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& up = g.grad_at(self);
    if (g.requires_grad(ia)) g.grad_buffer(ia) += up;
    if (g.requires_grad(ib)) g.grad_buffer(ib) -= up;
  });
}

Var operator*(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Graph& g = a.graph();
  TensorD out(a.shape(), a.value().values() * b.value().values());
  const std::size_t ia = g.id_of(a), ib = g.id_of(b);
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& up = g.grad_at(self);
    if (g.requires_grad(ia)) g.grad_buffer(ia) += up * g.value_at(ib).values();
    if (g.requires_grad(ib)) g.grad_buffer(ib) += up * g.value_at(ia).values();
  });
}

Var scale(Var x, double factor) {
  Graph& g = x.graph();
  TensorD out(x.shape(), x.value().values() * factor);
  const std::size_t ix = g.id_of(x);
  return g.record(std::move(out), {ix}, [ix, factor](Graph& g, std::size_t self) {
    g.grad_buffer(ix) += g.grad_at(self) * factor;
  });
}

Var sum(Var x) {
  Graph& g = x.graph();
  TensorD out(Shape{1}, Eigen::ArrayXd::Constant(1, x.value().values().sum()));
  const std::size_t ix = g.id_of(x);
  return g.record(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    g.grad_buffer(ix) += g.grad_at(self)[0];
  });
}

Var sigmoid(Var x) {
  Graph& g = x.graph();
  TensorD out(x.shape(), kga::sigmoid<double>(x.value().values()));
  const std::size_t ix = g.id_of(x);
  return g.record(std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& s = g.value_at(self).values();
    g.grad_buffer(ix) += g.grad_at(self) * s * (1.0 - s);
  });
}

Var conv2d(Var input, Var kernel, std::optional<Var> bias) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const TensorD& in = input.value();
  const TensorD& ker = kernel.value();
  const Index c_out = ker.dim(0), c_in = ker.dim(1), k = ker.dim(2);
  if (ker.dim(3) != k) {
    throw Error(ErrorKind::kShapeMismatch, "conv2d: non-square kernel " + shape_string(ker.shape()));
  }
  if (in.dim(0) != c_in) {
    throw Error(ErrorKind::kShapeMismatch, "conv2d: input " + shape_string(in.shape()) +
                                               " vs kernel " + shape_string(ker.shape()));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != c_out)) {
    throw Error(ErrorKind::kShapeMismatch, "conv2d: bias " + shape_string(bias->shape()) +
                                               " for " + std::to_string(c_out) + " output channels");
  }
  const Index h = in.dim(1), w = in.dim(2);
  const Vector<double> b = bias ? Vector<double>(bias->value().values().matrix())
                                : Vector<double>::Zero(c_out);
  TensorD out(Shape{c_out, h, w});
  out.planes() = conv2d_same<double>(in.planes(), h, w, ker.planes(), b, k);

  Graph& g = input.graph();
  const std::size_t ii = g.id_of(input), ik = g.id_of(kernel);
  std::vector<std::size_t> inputs{ii, ik};
  std::optional<std::size_t> ib;
  if (bias) {
    ib = g.id_of(*bias);
    inputs.push_back(*ib);
  }
  return g.record(std::move(out), std::move(inputs), [ii, ik, ib, h, w, k, c_out](Graph& g, std::size_t self) {
    const TensorD& in = g.value_at(ii);
    const bool need_kernel = g.requires_grad(ik);
    const bool need_input = g.requires_grad(ii);
    const ConvGrads<double> grads = conv2d_same_backward<double>(
        in.planes(), h, w, g.value_at(ik).planes(), k, planes_of(g.grad_at(self), c_out), need_input, need_kernel);
    if (need_kernel) planes_of(g.grad_buffer(ik), c_out) += grads.kernel;
    if (need_input) planes_of(g.grad_buffer(ii), in.dim(0)) += grads.input;
    if (ib && g.requires_grad(*ib)) g.grad_buffer(*ib) += grads.bias.array();
  });
}

Var channel_matmul(Var weight, Var input) {
  require_rank(weight, 2, "channel_matmul weight");
  require_rank(input, 3, "channel_matmul input");
  const TensorD& wt = weight.value();
  const TensorD& in = input.value();
  if (wt.dim(1) != in.dim(0)) {
    throw Error(ErrorKind::kShapeMismatch, "channel_matmul: weight " + shape_string(wt.shape()) +
                                               " vs input " + shape_string(in.shape()));
  }
  const Index c_out = wt.dim(0), c_in = wt.dim(1);
  TensorD out(Shape{c_out, in.dim(1), in.dim(2)});
  out.planes().noalias() = wt.planes() * in.planes();

  Graph& g = weight.graph();
  const std::size_t iw = g.id_of(weight), ii = g.id_of(input);
  return g.record(std::move(out), {iw, ii}, [iw, ii, c_out, c_in](Graph& g, std::size_t self) {
    const auto up = planes_of(g.grad_at(self), c_out);
    if (g.requires_grad(iw)) {
      planes_of(g.grad_buffer(iw), c_out).noalias() += up * g.value_at(ii).planes().transpose();
    }
    if (g.requires_grad(ii)) {
      planes_of(g.grad_buffer(ii), c_in).noalias() += g.value_at(iw).planes().transpose() * up;
    }
  });
}

Var add_channel_bias(Var input, Var bias) {
  require_rank(bias, 1, "add_channel_bias bias");
  const TensorD& in = input.value();
  const Index channels = in.dim(0);
  if (bias.value().dim(0) != channels) {
    throw Error(ErrorKind::kShapeMismatch, "add_channel_bias: bias " + shape_string(bias.shape()) +
                                               " vs input " + shape_string(in.shape()));
  }
  TensorD out = in;
  out.planes().colwise() += bias.value().values().matrix();

  Graph& g = input.graph();
  const std::size_t ii = g.id_of(input), ib = g.id_of(bias);
  return g.record(std::move(out), {ii, ib}, [ii, ib, channels](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& up = g.grad_at(self);
    if (g.requires_grad(ii)) g.grad_buffer(ii) += up;
    if (g.requires_grad(ib)) g.grad_buffer(ib) += planes_of(up, channels).rowwise().sum().array();
  });
}

Var concat_channels(Var a, Var b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  const TensorD& va = a.value();
  const TensorD& vb = b.value();
  if (va.dim(1) != vb.dim(1) || va.dim(2) != vb.dim(2)) {
    throw Error(ErrorKind::kShapeMismatch, "concat_channels: " + shape_string(va.shape()) + " vs " +
                                               shape_string(vb.shape()));
  }
  const Index na = va.size();
  TensorD out(Shape{va.dim(0) + vb.dim(0), va.dim(1), va.dim(2)});
  out.values().head(na) = va.values();
  out.values().tail(vb.size()) = vb.values();

  Graph& g = a.graph();
  const std::size_t ia = g.id_of(a), ib = g.id_of(b);
  return g.record(std::move(out), {ia, ib}, [ia, ib, na](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& up = g.grad_at(self);
    if (g.requires_grad(ia)) g.grad_buffer(ia) += up.head(na);
    if (g.requires_grad(ib)) g.grad_buffer(ib) += up.tail(up.size() - na);
  });
}

Var softmax_channels(Var logits) {
  require_rank(logits, 3, "softmax_channels");
  const TensorD& in = logits.value();
  if (in.dim(0) != 2) {
    throw Error(ErrorKind::kShapeMismatch,
                "softmax_channels: expected 2 channels, got " + shape_string(in.shape()));
  }
  TensorD out(in.shape());
  out.planes() = softmax2<double>(in.planes());

  Graph& g = logits.graph();
  const std::size_t il = g.id_of(logits);
  return g.record(std::move(out), {il}, [il](Graph& g, std::size_t self) {
    const auto p = planes_of(g.value_at(self).values(), 2).array();
    const auto up = planes_of(g.grad_at(self), 2).array();
    const Eigen::Array<double, 1, Eigen::Dynamic> dot = (p * up).colwise().sum();
    auto down = planes_of(g.grad_buffer(il), 2).array();
    down.row(0) += p.row(0) * (up.row(0) - dot);
    down.row(1) += p.row(1) * (up.row(1) - dot);
  });
}

Var select_channel(Var x, Index c) {
  require_rank(x, 3, "select_channel");
  const TensorD& in = x.value();
  if (c < 0 || c >= in.dim(0)) {
    throw Error(ErrorKind::kShapeMismatch, "select_channel: channel " + std::to_string(c) +
                                               " out of range for " + shape_string(in.shape()));
  }
  const Index plane = in.dim(1) * in.dim(2);
  TensorD out(Shape{in.dim(1), in.dim(2)}, in.values().segment(c * plane, plane));

  Graph& g = x.graph();
  const std::size_t ix = g.id_of(x);
  return g.record(std::move(out), {ix}, [ix, c, plane](Graph& g, std::size_t self) {
    g.grad_buffer(ix).segment(c * plane, plane) += g.grad_at(self);
  });
}

Var bce_loss(Var p, const TensorD& target) {
  if (p.shape() != target.shape()) {
    throw Error(ErrorKind::kShapeMismatch,
                "bce_loss: prediction " + shape_string(p.shape()) + " vs target " + shape_string(target.shape()));
  }
  const Eigen::ArrayXd& prob = p.value().values();
  TensorD out(Shape{1}, Eigen::ArrayXd::Constant(1, bce_mean(prob, target.values())));

  Graph& g = p.graph();
  const std::size_t ip = g.id_of(p);
  return g.record(std::move(out), {ip}, [ip, y = target.values()](Graph& g, std::size_t self) {
    const Eigen::ArrayXd& prob = g.value_at(ip).values();
    const double scale = g.grad_at(self)[0] / static_cast<double>(prob.size());
    const Eigen::ArrayXd pc = prob.cwiseMax(kProbEpsilon).cwiseMin(1.0 - kProbEpsilon);
    const Eigen::ArrayXd inside = ((prob >= kProbEpsilon) && (prob <= 1.0 - kProbEpsilon)).cast<double>();
    g.grad_buffer(ip) += scale * inside * ((1.0 - y) / (1.0 - pc) - y / pc);
  });
}

}  // namespace kga::ad
