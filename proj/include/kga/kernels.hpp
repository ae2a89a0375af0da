#pragma once

// Dense forward/backward kernels over channel-plane fields. Scalar-generic so
// the inference path can run in float; the autodiff graph uses double.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>

#include "kga/tensor.hpp"

namespace kga {

template <typename Scalar>
using FieldRef = Eigen::Ref<const Field<Scalar>>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// BCE probability clamp.
inline constexpr double kProbEpsilon = 1e-7;

/// "Same" padding for an odd or even kernel: floor((k-1)/2) before,
/// ceil((k-1)/2) after. Taps outside the input read zero.
constexpr Index pad_before(Index kernel) { return (kernel - 1) / 2; }

/// Visits every contiguous run of output cells whose tap (u, v) lands inside
/// the input: fn(u, v, out_start, in_start, length), where
/// in_start = out_start + (u - pad)·W + (v - pad).
template <typename Fn>
void for_each_tap_run(Index height, Index width, Index kernel, Fn&& fn) {
  const Index pad = pad_before(kernel);
  for (Index u = 0; u < kernel; ++u) {
    for (Index v = 0; v < kernel; ++v) {
      const Index j_lo = std::max<Index>(0, pad - v);
      const Index j_hi = std::min<Index>(width, width + pad - v);
      if (j_hi <= j_lo) continue;
      const Index i_lo = std::max<Index>(0, pad - u);
      const Index i_hi = std::min<Index>(height, height + pad - u);
      for (Index i = i_lo; i < i_hi; ++i) {
        const Index out_start = i * width + j_lo;
        fn(u, v, out_start, out_start + (u - pad) * width + (v - pad), j_hi - j_lo);
      }
    }
  }
}

/// Unfold a C×(H·W) field into (C·k·k)×(H·W) patches, row (c·k+u)·k+v.
template <typename Scalar>
Field<Scalar> im2col(const FieldRef<Scalar>& in, Index height, Index width, Index kernel) {
  const Index channels = in.rows();
  const Index taps = kernel * kernel;
  Field<Scalar> cols = Field<Scalar>::Zero(channels * taps, height * width);
  for_each_tap_run(height, width, kernel, [&](Index u, Index v, Index out, Index src, Index len) {
    for (Index c = 0; c < channels; ++c) {
      cols.row(c * taps + u * kernel + v).segment(out, len) = in.row(c).segment(src, len);
    }
  });
  return cols;
}

/// Adjoint of im2col: scatter-add patch gradients back onto the input field.
template <typename Scalar>
void col2im_add(const FieldRef<Scalar>& cols, Index height, Index width, Index kernel,
                Eigen::Ref<Field<Scalar>> out) {
  const Index channels = out.rows();
  const Index taps = kernel * kernel;
  for_each_tap_run(height, width, kernel, [&](Index u, Index v, Index dst, Index src, Index len) {
    for (Index c = 0; c < channels; ++c) {
      out.row(c).segment(src, len) += cols.row(c * taps + u * kernel + v).segment(dst, len);
    }
  });
}

/// Kernel regrouped by tap: row (u·k+v)·C_out+o, column c.
template <typename Scalar>
Field<Scalar> taps_by_output(const FieldRef<Scalar>& kernel, Index k) {
  const Index c_out = kernel.rows();
  const Index taps = k * k;
  const Index c_in = kernel.cols() / taps;
  Field<Scalar> out(taps * c_out, c_in);
  for (Index o = 0; o < c_out; ++o) {
    for (Index c = 0; c < c_in; ++c) {
      for (Index t = 0; t < taps; ++t) out(t * c_out + o, c) = kernel(o, c * taps + t);
    }
  }
  return out;
}

/// Same-padded cross-correlation. `kernel` is C_out×(C_in·k·k), i.e. the
/// row-major C_out×C_in×k×k tensor viewed as planes.
///
/// With C_in <= C_out the input is unfolded into patches and multiplied once.
/// Otherwise channels are mixed per tap first (C_out·k·k rows) and the tap
/// responses are shift-added, so the large intermediate is never built.
template <typename Scalar>
Field<Scalar> conv2d_same(const FieldRef<Scalar>& in, Index height, Index width,
                          const FieldRef<Scalar>& kernel, const Vector<Scalar>& bias, Index k) {
  const Index c_out = kernel.rows();
  Field<Scalar> out;
  if (in.rows() <= c_out) {
    out.noalias() = kernel * im2col<Scalar>(in, height, width, k);
  } else {
    const Field<Scalar> per_tap = taps_by_output<Scalar>(kernel, k) * in;
    out = Field<Scalar>::Zero(c_out, height * width);
    for_each_tap_run(height, width, k, [&](Index u, Index v, Index dst, Index src, Index len) {
      const Index base = (u * k + v) * c_out;
      for (Index o = 0; o < c_out; ++o) out.row(o).segment(dst, len) += per_tap.row(base + o).segment(src, len);
    });
  }
  out.colwise() += bias;
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Field<Scalar> input;   // empty unless requested
  Field<Scalar> kernel;  // empty unless requested
  Vector<Scalar> bias;
};

/// Gradients of conv2d_same given the upstream gradient `up` (C_out×H·W).
template <typename Scalar>
ConvGrads<Scalar> conv2d_same_backward(const FieldRef<Scalar>& in, Index height, Index width,
                                       const FieldRef<Scalar>& kernel, Index k, const FieldRef<Scalar>& up,
                                       bool need_input, bool need_kernel) {
  const Index c_out = kernel.rows();
  const Index c_in = in.rows();
  const Index taps = k * k;
  ConvGrads<Scalar> g;
  g.bias = up.rowwise().sum();
  if (c_in <= c_out) {
    if (need_kernel) g.kernel.noalias() = up * im2col<Scalar>(in, height, width, k).transpose();
    if (need_input) {
      const Field<Scalar> dcols = kernel.transpose() * up;
      g.input = Field<Scalar>::Zero(c_in, height * width);
      col2im_add<Scalar>(dcols, height, width, k, g.input);
    }
    return g;
  }
  // Adjoint of the shift-add: gather the upstream gradient per tap.
  Field<Scalar> d_per_tap = Field<Scalar>::Zero(taps * c_out, height * width);
  for_each_tap_run(height, width, k, [&](Index u, Index v, Index dst, Index src, Index len) {
    const Index base = (u * k + v) * c_out;
    for (Index o = 0; o < c_out; ++o) d_per_tap.row(base + o).segment(src, len) += up.row(o).segment(dst, len);
  });
  if (need_kernel) {
    const Field<Scalar> d_taps = d_per_tap * in.transpose();  // (taps·C_out)×C_in
    g.kernel.resize(c_out, c_in * taps);
    for (Index o = 0; o < c_out; ++o) {
      for (Index c = 0; c < c_in; ++c) {
        for (Index t = 0; t < taps; ++t) g.kernel(o, c * taps + t) = d_taps(t * c_out + o, c);
      }
    }
  }
  if (need_input) g.input.noalias() = taps_by_output<Scalar>(kernel, k).transpose() * d_per_tap;
  return g;
}

template <typename Scalar, typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  return (Scalar(1) + (-x).exp()).inverse();
}

/// Two-channel softmax along rows of a 2×N logit field.
template <typename Scalar>
Field<Scalar> softmax2(const FieldRef<Scalar>& logits) {
  const auto a = logits.row(0).array();
  const auto b = logits.row(1).array();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> m = a.max(b);
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> ea = (a - m).exp();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> eb = (b - m).exp();
  const Eigen::Array<Scalar, 1, Eigen::Dynamic> total = ea + eb;
  Field<Scalar> out(2, logits.cols());
  out.row(0) = (ea / total).matrix();
  out.row(1) = (eb / total).matrix();
  return out;
}

/// Mean binary cross entropy with probabilities clamped to [eps, 1-eps].
template <typename DerivedP, typename DerivedY>
double bce_mean(const Eigen::ArrayBase<DerivedP>& p, const Eigen::ArrayBase<DerivedY>& y) {
  const auto pc = p.template cast<double>().cwiseMax(kProbEpsilon).cwiseMin(1.0 - kProbEpsilon);
  const auto yd = y.template cast<double>();
  return -(yd * pc.log() + (1.0 - yd) * (1.0 - pc).log()).mean();
}

}  // namespace kga
