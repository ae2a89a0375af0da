#include "kga/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace kga {

namespace {

Shape gate_shape(Index gate_kernel) {
  if (gate_kernel == 1) return {kHiddenChannels, kHiddenChannels};
  return {kHiddenChannels, kHiddenChannels, gate_kernel, gate_kernel};
}

ParamPack zero_pack(Index gate_kernel) {
  ParamPack p;
  p.encoder_kernel = TensorD({kHiddenChannels, kInputChannels, kCodecKernel, kCodecKernel});
  p.encoder_bias = TensorD({kHiddenChannels});
  for (ParamPack::Gate* g : {&p.update, &p.reset, &p.candidate}) {
    g->input = TensorD(gate_shape(gate_kernel));
    g->hidden = TensorD(gate_shape(gate_kernel));
    g->bias = TensorD({kHiddenChannels});
  }
  p.decoder_kernel = TensorD({kOutputChannels, kHiddenChannels, kCodecKernel, kCodecKernel});
  p.decoder_bias = TensorD({kOutputChannels});
  return p;
}

/// Fan-in of a weight tensor: every axis but the first.
Index fan_in(const TensorD& t) { return t.size() / t.dim(0); }

template <typename Scalar>
Field<Scalar> stack_frames(const GridFrame& a, const GridFrame& b) {
  Field<Scalar> out(2, a.size());
  out.row(0) = Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>(a.data(), a.size()).cast<Scalar>();
  out.row(1) = Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>(b.data(), b.size()).cast<Scalar>();
  return out;
}

template <typename Scalar>
Field<Scalar> gate_map(const Field<Scalar>& weight, const FieldRef<Scalar>& field, Index gate_kernel, Index height,
                       Index width) {
  if (gate_kernel == 1) return weight * field;
  return conv2d_same<Scalar>(field, height, width, weight, Vector<Scalar>::Zero(weight.rows()), gate_kernel);
}

/// Shared GRU update; only the gate map differs between the two cores.
template <typename Scalar>
Field<Scalar> gru_update(const FieldRef<Scalar>& x, const FieldRef<Scalar>& h, const NetWeights<Scalar>& w,
                         Index height, Index width) {
  auto gate = [&](std::size_t g, const FieldRef<Scalar>& h_in) {
    const Field<Scalar> from_input = gate_map<Scalar>(w.input[g], x, w.gate_kernel, height, width);
    const Field<Scalar> from_hidden = gate_map<Scalar>(w.hidden[g], h_in, w.gate_kernel, height, width);
    Field<Scalar> pre = from_input + from_hidden;
    pre.colwise() += w.bias[g];
    return Field<Scalar>(kga::sigmoid<Scalar>(pre.array()).matrix());
  };
  const Field<Scalar> z = gate(0, h);
  const Field<Scalar> r = gate(1, h);
  const Field<Scalar> gated = (r.array() * h.array()).matrix();
  const Field<Scalar> candidate = gate(2, gated);
  const Field<Scalar> keep = (Scalar(1) - z.array()).matrix();
  const Field<Scalar> kept = (keep.array() * h.array()).matrix();
  const Field<Scalar> fresh = (z.array() * candidate.array()).matrix();
  return kept + fresh;
}

void check_field(const char* what, Index rows, Index cols, Index want_rows, Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + ": got " + std::to_string(rows) + "x" +
                                               std::to_string(cols) + ", expected " + std::to_string(want_rows) +
                                               "x" + std::to_string(want_cols));
  }
}

}  // namespace

std::array<TensorD*, kParamTensorCount> ParamPack::tensors() {
  return {&encoder_kernel, &encoder_bias, &update.input,     &update.hidden,     &update.bias,
          &reset.input,    &reset.hidden, &reset.bias,       &candidate.input,   &candidate.hidden,
          &candidate.bias, &decoder_kernel, &decoder_bias};
}

std::array<const TensorD*, kParamTensorCount> ParamPack::tensors() const {
  auto mut = const_cast<ParamPack*>(this)->tensors();
  std::array<const TensorD*, kParamTensorCount> out{};
  std::copy(mut.begin(), mut.end(), out.begin());
  return out;
}

Index ParamPack::count() const {
  Index n = 0;
  for (const TensorD* t : tensors()) n += t->size();
  return n;
}

bool operator==(const ParamPack& a, const ParamPack& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    if (!(*ta[i] == *tb[i])) return false;
  }
  return true;
}

Index encoder_param_count(const ParamPack& p) { return p.encoder_kernel.size() + p.encoder_bias.size(); }

Index recurrent_param_count(const ParamPack& p) {
  Index n = 0;
  for (const ParamPack::Gate* g : {&p.update, &p.reset, &p.candidate}) {
    n += g->input.size() + g->hidden.size() + g->bias.size();
  }
  return n;
}

Index decoder_param_count(const ParamPack& p) { return p.decoder_kernel.size() + p.decoder_bias.size(); }

template <typename Scalar>
NetWeights<Scalar> NetWeights<Scalar>::from(const ParamPack& p) {
  NetWeights w;
  w.encoder_kernel = p.encoder_kernel.planes().template cast<Scalar>();
  w.encoder_bias = p.encoder_bias.values().matrix().template cast<Scalar>();
  const ParamPack::Gate* gates[3] = {&p.update, &p.reset, &p.candidate};
  for (std::size_t g = 0; g < 3; ++g) {
    w.input[g] = gates[g]->input.planes().template cast<Scalar>();
    w.hidden[g] = gates[g]->hidden.planes().template cast<Scalar>();
    w.bias[g] = gates[g]->bias.values().matrix().template cast<Scalar>();
  }
  w.gate_kernel = p.update.input.rank() == 2 ? 1 : p.update.input.dim(2);
  w.decoder_kernel = p.decoder_kernel.planes().template cast<Scalar>();
  w.decoder_bias = p.decoder_bias.values().matrix().template cast<Scalar>();
  return w;
}

template <typename Scalar>
ProbFrame<Scalar> RecurrentState<Scalar>::hidden_channel(Index c) const {
  return Eigen::Map<const ProbFrame<Scalar>>(hidden.row(c).data(), height, width);
}

template <typename Scalar>
RecurrentState<Scalar> initial_state(Index height, Index width) {
  if (height <= 0 || width <= 0) throw Error(ErrorKind::kInvalidArgument, "initial_state: extents must be positive");
  RecurrentState<Scalar> s;
  s.height = height;
  s.width = width;
  s.hidden = Field<Scalar>::Constant(kHiddenChannels, height * width, Scalar(0.5));
  s.prev_label = GridFrame::Zero(height, width);
  return s;
}

template <typename Scalar>
Field<Scalar> encode(const GridFrame& measurement, const GridFrame& prev_label, const NetWeights<Scalar>& w) {
  if (measurement.rows() != prev_label.rows() || measurement.cols() != prev_label.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "encode: measurement and previous label extents differ");
  }
  const Index h = measurement.rows(), wd = measurement.cols();
  const Field<Scalar> input = stack_frames<Scalar>(measurement, prev_label);
  const Field<Scalar> pre = conv2d_same<Scalar>(input, h, wd, w.encoder_kernel, w.encoder_bias, kCodecKernel);
  return kga::sigmoid<Scalar>(pre.array()).matrix();
}

template <typename Scalar>
Field<Scalar> gru_array_step(const FieldRef<Scalar>& features, const FieldRef<Scalar>& hidden,
                             const NetWeights<Scalar>& w) {
  check_field("gru_array_step features", features.rows(), features.cols(), kHiddenChannels, hidden.cols());
  check_field("gru_array_step hidden", hidden.rows(), hidden.cols(), kHiddenChannels, features.cols());
  if (w.gate_kernel != 1) throw Error(ErrorKind::kShapeMismatch, "gru_array_step: weights are convolutional");
  return gru_update<Scalar>(features, hidden, w, 1, features.cols());
}

template <typename Scalar>
Field<Scalar> convgru_step(const FieldRef<Scalar>& features, const FieldRef<Scalar>& hidden,
                           const NetWeights<Scalar>& w, Index height, Index width) {
  check_field("convgru_step features", features.rows(), features.cols(), kHiddenChannels, height * width);
  check_field("convgru_step hidden", hidden.rows(), hidden.cols(), kHiddenChannels, height * width);
  if (w.gate_kernel < 2) throw Error(ErrorKind::kShapeMismatch, "convgru_step: weights are not convolutional");
  return gru_update<Scalar>(features, hidden, w, height, width);
}

template <typename Scalar>
Field<Scalar> decode_channels(const FieldRef<Scalar>& hidden, const NetWeights<Scalar>& w, Index height,
                              Index width) {
  check_field("decode hidden", hidden.rows(), hidden.cols(), kHiddenChannels, height * width);
  const Field<Scalar> logits = conv2d_same<Scalar>(hidden, height, width, w.decoder_kernel, w.decoder_bias, kCodecKernel);
  return softmax2<Scalar>(logits);
}

template <typename Scalar>
ProbFrame<Scalar> decode(const FieldRef<Scalar>& hidden, const NetWeights<Scalar>& w, Index height, Index width) {
  const Field<Scalar> probs = decode_channels<Scalar>(hidden, w, height, width);
  return Eigen::Map<const ProbFrame<Scalar>>(probs.row(0).data(), height, width);
}

template <class Core>
RecurrentModel<Core>::RecurrentModel(Params params) {
  set_params(std::move(params));
}

template <class Core>
void RecurrentModel<Core>::set_params(Params params) {
  const Params reference = zero_params();
  const auto want = reference.tensors();
  const auto got = params.tensors();
  for (std::size_t i = 0; i < kParamTensorCount; ++i) {
    if (want[i]->shape() != got[i]->shape()) {
      throw Error(ErrorKind::kShapeMismatch, std::string(Core::kName) + " parameter " + std::to_string(i) +
                                                 " has shape " + shape_string(got[i]->shape()) + ", expected " +
                                                 shape_string(want[i]->shape()));
    }
  }
  params_ = std::move(params);
  weights_ = NetWeights<double>::from(params_);
}

template <class Core>
typename RecurrentModel<Core>::Params RecurrentModel<Core>::zero_params() {
  Params p;
  static_cast<ParamPack&>(p) = zero_pack(Core::kGateKernel);
  return p;
}

template <class Core>
typename RecurrentModel<Core>::Params RecurrentModel<Core>::init_params(std::uint64_t seed) {
  Params p = zero_params();
  std::mt19937_64 rng(seed);
  for (TensorD* t : p.tensors()) {
    if (t->rank() == 1) continue;  // biases stay zero
    const double bound = std::sqrt(1.0 / static_cast<double>(fan_in(*t)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index k = 0; k < t->size(); ++k) (*t)[k] = dist(rng);
  }
  return p;
}

template <class Core>
template <typename Scalar>
StepOutput<Scalar> RecurrentModel<Core>::step_with(const NetWeights<Scalar>& w, const GridFrame& measurement,
                                                   const RecurrentState<Scalar>& state) {
  if (measurement.rows() != state.height || measurement.cols() != state.width) {
    throw Error(ErrorKind::kShapeMismatch, "step: measurement extent differs from state");
  }
  const Field<Scalar> features = encode<Scalar>(measurement, state.prev_label, w);
  StepOutput<Scalar> out;
  out.state.height = state.height;
  out.state.width = state.width;
  out.state.hidden = Core::template recurrent_step<Scalar>(features, state.hidden, w, state.height, state.width);
  out.prob = decode<Scalar>(out.state.hidden, w, state.height, state.width);
  out.state.prev_label = threshold(out.prob);
  return out;
}

template <class Core>
Rollout RecurrentModel<Core>::rollout(std::span<const GridFrame> measurements, bool keep_hidden) const {
  if (measurements.empty()) throw Error(ErrorKind::kInvalidArgument, "rollout: no measurements");
  Rollout out;
  out.probs.reserve(measurements.size());
  RecurrentState<double> state = initial_state<double>(measurements.front().rows(), measurements.front().cols());
  for (const GridFrame& m : measurements) {
    StepOutput<double> s = step(m, state);
    out.probs.push_back(std::move(s.prob));
    state = std::move(s.state);
    if (keep_hidden) {
      std::vector<ProbFrame<double>> channels;
      for (Index c = 0; c < kHiddenChannels; ++c) channels.push_back(state.hidden_channel(c));
      out.hidden.push_back(std::move(channels));
    }
  }
  return out;
}

template <class Core>
ParamVars RecurrentModel<Core>::bind(ad::Graph& graph) const {
  ParamVars vars;
  const auto tensors = params_.tensors();
  for (std::size_t i = 0; i < kParamTensorCount; ++i) vars[i] = graph.leaf(*tensors[i]);
  return vars;
}

template <class Core>
GraphStep RecurrentModel<Core>::step_graph(ad::Graph& graph, const ParamVars& p, const GridFrame& measurement,
                                           const GridFrame& prev_label, ad::Var hidden) {
  const Index h = measurement.rows(), w = measurement.cols();
  if (prev_label.rows() != h || prev_label.cols() != w) {
    throw Error(ErrorKind::kShapeMismatch, "step_graph: measurement and previous label extents differ");
  }
  TensorD input({kInputChannels, h, w});
  input.planes() = stack_frames<double>(measurement, prev_label);
  const ad::Var features = ad::sigmoid(ad::conv2d(graph.constant(std::move(input)), p[0], p[1]));

  auto gate = [&](std::size_t base, ad::Var h_in) {
    const ad::Var pre = Core::gate_map(p[base], features) + Core::gate_map(p[base + 1], h_in);
    return ad::sigmoid(ad::add_channel_bias(pre, p[base + 2]));
  };
  const ad::Var z = gate(2, hidden);
  const ad::Var r = gate(5, hidden);
  const ad::Var candidate = gate(8, r * hidden);
  const ad::Var ones = graph.constant(TensorD::constant(hidden.shape(), 1.0));
  const ad::Var next = (ones - z) * hidden + z * candidate;
  const ad::Var prob = ad::select_channel(ad::softmax_channels(ad::conv2d(next, p[11], p[12])), 0);
  return GraphStep{next, prob};
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double value) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const std::string& bytes, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const ParamPack& params, std::string_view magic, const std::filesystem::path& path) {
  std::string bytes(magic);
  put_u32(bytes, static_cast<std::uint32_t>(params.count()));
  for (const TensorD* t : params.tensors()) {
    for (Index k = 0; k < t->size(); ++k) put_f64(bytes, (*t)[k]);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

void load_checkpoint(ParamPack& params, std::string_view magic, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open: " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = magic.size() + 4;
  if (bytes.size() < magic.size() || bytes.compare(0, magic.size(), magic) != 0) {
    throw Error(ErrorKind::kFormat, path.string() + ": bad magic, expected " + std::string(magic), 0);
  }
  if (bytes.size() < header) {
    throw Error(ErrorKind::kFormat, path.string() + ": truncated header", bytes.size());
  }
  const auto count = static_cast<Index>(get_le(bytes, magic.size(), 4));
  if (count != params.count()) {
    throw Error(ErrorKind::kFormat,
                path.string() + ": holds " + std::to_string(count) + " values, expected " +
                    std::to_string(params.count()),
                magic.size());
  }
  const std::size_t expected = header + 8 * static_cast<std::size_t>(count);
  if (bytes.size() < expected) {
    throw Error(ErrorKind::kFormat, path.string() + ": truncated payload", bytes.size());
  }
  if (bytes.size() > expected) {
    throw Error(ErrorKind::kFormat, path.string() + ": trailing bytes", expected);
  }
  std::size_t at = header;
  for (TensorD* t : params.tensors()) {
    for (Index k = 0; k < t->size(); ++k, at += 8) {
      const std::uint64_t bits = get_le(bytes, at, 8);
      std::memcpy(&(*t)[k], &bits, sizeof(bits));
    }
  }
}

#define KGA_INSTANTIATE_SCALAR(S)                                                                           \
  template struct NetWeights<S>;                                                                            \
  template struct RecurrentState<S>;                                                                        \
  template RecurrentState<S> initial_state<S>(Index, Index);                                                \
  template Field<S> encode<S>(const GridFrame&, const GridFrame&, const NetWeights<S>&);                    \
  template Field<S> gru_array_step<S>(const FieldRef<S>&, const FieldRef<S>&, const NetWeights<S>&);        \
  template Field<S> convgru_step<S>(const FieldRef<S>&, const FieldRef<S>&, const NetWeights<S>&, Index,    \
                                    Index);                                                                 \
  template Field<S> decode_channels<S>(const FieldRef<S>&, const NetWeights<S>&, Index, Index);             \
  template ProbFrame<S> decode<S>(const FieldRef<S>&, const NetWeights<S>&, Index, Index);                  \
  template StepOutput<S> KgaModel::step_with<S>(const NetWeights<S>&, const GridFrame&,                     \
                                                const RecurrentState<S>&);                                  \
  template StepOutput<S> ConvGruModel::step_with<S>(const NetWeights<S>&, const GridFrame&,                 \
                                                    const RecurrentState<S>&);

template class RecurrentModel<GruArrayCore>;
template class RecurrentModel<ConvGruCore>;
KGA_INSTANTIATE_SCALAR(double)
KGA_INSTANTIATE_SCALAR(float)

#undef KGA_INSTANTIATE_SCALAR

}  // namespace kga
