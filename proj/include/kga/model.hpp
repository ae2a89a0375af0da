#pragma once

// Recurrent occupancy predictors.
//
// Both models share one wiring:
//   features = sigmoid(conv6x6([measurement; previous label]))       16 channels
//   hidden'  = GRU(features, hidden), sigmoid gates and candidate     16 channels
//   prob     = softmax(conv6x6(hidden'))[0]                           occupied channel
//   label    = prob >= 0.5, fed back with the next measurement
//
// The Kalman GRU array (KGA) runs one shared 16-unit GRU independently in
// every cell: the gate maps are 16×16 channel mixes. The ConvGRU baseline
// replaces each gate map by a same-padded 3×3 convolution.
//
// Fields are stored as channel planes (16 × H·W); the 16-vector of cell (i, j)
// is column i·W + j.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "kga/autodiff.hpp"
#include "kga/grid.hpp"
#include "kga/kernels.hpp"

namespace kga {

inline constexpr Index kInputChannels = 2;
inline constexpr Index kHiddenChannels = 16;
inline constexpr Index kOutputChannels = 2;
inline constexpr Index kCodecKernel = 6;
inline constexpr Index kConvGruKernel = 3;
inline constexpr double kDefaultThreshold = 0.5;

inline constexpr std::size_t kParamTensorCount = 13;

/// Trainable tensors. Checkpoint and optimizer order: encoder kernel, encoder
/// bias, W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h, decoder kernel, decoder bias.
struct ParamPack {
  struct Gate {
    TensorD input;   // applied to encoder features
    TensorD hidden;  // applied to the (reset-gated) hidden state
    TensorD bias;
  };

  TensorD encoder_kernel;  // 16×2×6×6
  TensorD encoder_bias;    // 16
  Gate update;             // z
  Gate reset;              // r
  Gate candidate;          // h̃
  TensorD decoder_kernel;  // 2×16×6×6
  TensorD decoder_bias;    // 2

  std::array<TensorD*, kParamTensorCount> tensors();
  std::array<const TensorD*, kParamTensorCount> tensors() const;
  Index count() const;

  friend bool operator==(const ParamPack& a, const ParamPack& b);
};

struct KgaParams : ParamPack {};
struct ConvGruParams : ParamPack {};

Index encoder_param_count(const ParamPack& p);
Index recurrent_param_count(const ParamPack& p);
Index decoder_param_count(const ParamPack& p);

/// Scalar-cast copy of a ParamPack laid out for the inference kernels.
template <typename Scalar>
struct NetWeights {
  Field<Scalar> encoder_kernel;  // 16 × (2·36)
  Vector<Scalar> encoder_bias;
  std::array<Field<Scalar>, 3> input;   // z, r, h̃
  std::array<Field<Scalar>, 3> hidden;  // z, r, h̃
  std::array<Vector<Scalar>, 3> bias;
  Field<Scalar> decoder_kernel;  // 2 × (16·36)
  Vector<Scalar> decoder_bias;
  Index gate_kernel = 1;         // 1 = per-cell matrix, k = k×k convolution

  static NetWeights from(const ParamPack& p);
};

template <typename Scalar = double>
struct RecurrentState {
  Index height = 0;
  Index width = 0;
  Field<Scalar> hidden;  // 16 × H·W
  GridFrame prev_label;

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> cell_hidden(Index i, Index j) const { return hidden.col(i * width + j); }
  /// Hidden channel `c` as an H×W image.
  ProbFrame<Scalar> hidden_channel(Index c) const;
};

using KgaState = RecurrentState<double>;

/// Hidden 0.5 everywhere, no previous label.
template <typename Scalar = double>
RecurrentState<Scalar> initial_state(Index height, Index width);

template <typename Scalar>
Field<Scalar> encode(const GridFrame& measurement, const GridFrame& prev_label, const NetWeights<Scalar>& w);

/// Per-cell GRU with shared 16×16 weights. No spatial mixing.
template <typename Scalar>
Field<Scalar> gru_array_step(const FieldRef<Scalar>& features, const FieldRef<Scalar>& hidden,
                             const NetWeights<Scalar>& w);

/// GRU whose gate maps are same-padded k×k convolutions over the H×W plane.
template <typename Scalar>
Field<Scalar> convgru_step(const FieldRef<Scalar>& features, const FieldRef<Scalar>& hidden,
                           const NetWeights<Scalar>& w, Index height, Index width);

/// Both softmax channels, 2 × H·W; row 0 is the occupancy probability.
template <typename Scalar>
Field<Scalar> decode_channels(const FieldRef<Scalar>& hidden, const NetWeights<Scalar>& w, Index height, Index width);

template <typename Scalar>
ProbFrame<Scalar> decode(const FieldRef<Scalar>& hidden, const NetWeights<Scalar>& w, Index height, Index width);

/// 1 iff prob >= level.
template <typename Derived>
GridFrame threshold(const Eigen::MatrixBase<Derived>& prob, double level = kDefaultThreshold) {
  return (prob.array() >= static_cast<typename Derived::Scalar>(level)).template cast<std::uint8_t>().matrix();
}

/// Core traits: how the gate maps act, parameter shapes, checkpoint magic.
struct GruArrayCore {
  using Params = KgaParams;
  static constexpr std::string_view kName = "KGA";
  static constexpr std::string_view kMagic = "KGAW1";
  static constexpr Index kGateKernel = 1;

  template <typename Scalar>
  static Field<Scalar> recurrent_step(const FieldRef<Scalar>& x, const FieldRef<Scalar>& h,
                                      const NetWeights<Scalar>& w, Index, Index) {
    return gru_array_step<Scalar>(x, h, w);
  }
  static ad::Var gate_map(ad::Var weight, ad::Var field) { return ad::channel_matmul(weight, field); }
};

struct ConvGruCore {
  using Params = ConvGruParams;
  static constexpr std::string_view kName = "ConvGRU";
  static constexpr std::string_view kMagic = "CGRW1";
  static constexpr Index kGateKernel = kConvGruKernel;

  template <typename Scalar>
  static Field<Scalar> recurrent_step(const FieldRef<Scalar>& x, const FieldRef<Scalar>& h,
                                      const NetWeights<Scalar>& w, Index height, Index width) {
    return convgru_step<Scalar>(x, h, w, height, width);
  }
  static ad::Var gate_map(ad::Var weight, ad::Var field) { return ad::conv2d(field, weight); }
};

template <typename Scalar>
struct StepOutput {
  ProbFrame<Scalar> prob;
  RecurrentState<Scalar> state;
};

struct Rollout {
  std::vector<ProbFrame<double>> probs;  // probs[t] targets truth frame t+1
  /// hidden[t][c], filled only when requested.
  std::vector<std::vector<ProbFrame<double>>> hidden;
};

/// Leaf variables for every parameter tensor, in checkpoint order.
using ParamVars = std::array<ad::Var, kParamTensorCount>;

struct GraphStep {
  ad::Var hidden;  // 16×H×W
  ad::Var prob;    // H×W
};

template <class Core>
class RecurrentModel {
 public:
  using Params = typename Core::Params;

  explicit RecurrentModel(Params params);

  static Params zero_params();
  /// Weights uniform on ±sqrt(1/fan_in) per tensor, biases zero.
  static Params init_params(std::uint64_t seed);
  static std::string_view name() { return Core::kName; }

  const Params& params() const noexcept { return params_; }
  void set_params(Params params);
  Index count_params() const { return params_.count(); }

  template <typename Scalar = double>
  NetWeights<Scalar> weights() const {
    return NetWeights<Scalar>::from(params_);
  }

  StepOutput<double> step(const GridFrame& measurement, const RecurrentState<double>& state) const {
    return step_with(weights_, measurement, state);
  }

  template <typename Scalar>
  static StepOutput<Scalar> step_with(const NetWeights<Scalar>& w, const GridFrame& measurement,
                                      const RecurrentState<Scalar>& state);

  /// Rejects an empty measurement list.
  Rollout rollout(std::span<const GridFrame> measurements, bool keep_hidden = false) const;

  ParamVars bind(ad::Graph& graph) const;
  /// Differentiable step. `prev_label` enters as a constant.
  static GraphStep step_graph(ad::Graph& graph, const ParamVars& p, const GridFrame& measurement,
                              const GridFrame& prev_label, ad::Var hidden);

 private:
  Params params_;
  NetWeights<double> weights_;
};

using KgaModel = RecurrentModel<GruArrayCore>;
using ConvGruModel = RecurrentModel<ConvGruCore>;

void save_checkpoint(const ParamPack& params, std::string_view magic, const std::filesystem::path& path);
/// Reads into `params`, whose tensor shapes define the expected layout.
void load_checkpoint(ParamPack& params, std::string_view magic, const std::filesystem::path& path);

template <class Core>
void save_checkpoint(const RecurrentModel<Core>& model, const std::filesystem::path& path) {
  save_checkpoint(model.params(), Core::kMagic, path);
}

template <class Core>
RecurrentModel<Core> load_model(const std::filesystem::path& path) {
  auto params = RecurrentModel<Core>::zero_params();
  load_checkpoint(params, Core::kMagic, path);
  return RecurrentModel<Core>(std::move(params));
}

}  // namespace kga
