#include "kga/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace kga {

namespace {

// Each window graph holds a few hundred MB that is freed and rebuilt per
// window. Keeping it on the heap avoids re-faulting fresh pages every time.
void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

TensorD frame_tensor(const GridFrame& frame) {
  TensorD t({frame.rows(), frame.cols()});
  t.values() = Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>>(frame.data(), frame.size()).cast<double>();
  return t;
}

std::vector<GridFrame> measurements_of(const SequenceRecord& record) {
  std::vector<GridFrame> out;
  out.reserve(record.frames.size());
  for (const FramePair& f : record.frames) out.push_back(f.measurement);
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::kConfig, "train.learning_rate must be > 0");
  if (unroll_length < 2) throw Error(ErrorKind::kConfig, "train.unroll_length must be >= 2");
  if (batch < 1) throw Error(ErrorKind::kConfig, "train.batch must be >= 1");
  if (max_epochs < 1) throw Error(ErrorKind::kConfig, "train.max_epochs must be >= 1");
  if (patience < 0) throw Error(ErrorKind::kConfig, "train.patience must be >= 0");
  if (!(min_delta >= 0.0)) throw Error(ErrorKind::kConfig, "train.min_delta must be >= 0");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorKind::kConfig, "train.validation_fraction must be in (0, 1)");
  }
  if (steps_per_epoch < 0) throw Error(ErrorKind::kConfig, "train.steps_per_epoch must be >= 0");
}

std::string TrainReport::csv(bool with_timing) const {
  std::ostringstream os;
  os << (with_timing ? "epoch,train_bce,val_bce,ms_per_epoch\n" : "epoch,train_bce,val_bce\n");
  for (const EpochStats& e : epochs) {
    os << e.epoch << ',' << format_double(e.train_bce) << ',' << format_double(e.val_bce);
    if (with_timing) os << ',' << format_double(e.ms);
    os << '\n';
  }
  return os.str();
}

template <class Core>
ad::Var sequence_loss(ad::Graph& graph, const ParamVars& params, std::span<const FramePair> window) {
  if (window.size() < 2) throw Error(ErrorKind::kInvalidArgument, "sequence_loss: window shorter than 2 frames");
  const Index h = window.front().measurement.rows(), w = window.front().measurement.cols();
  ad::Var hidden = graph.constant(TensorD::constant({kHiddenChannels, h, w}, 0.5));
  GridFrame prev_label = GridFrame::Zero(h, w);
  ad::Var total;
  for (std::size_t t = 0; t + 1 < window.size(); ++t) {
    const GraphStep s = RecurrentModel<Core>::step_graph(graph, params, window[t].measurement, prev_label, hidden);
    const ad::Var loss = ad::bce_loss(s.prob, frame_tensor(window[t + 1].truth));
    total = total.valid() ? total + loss : loss;
    hidden = s.hidden;
    const TensorD& p = s.prob.value();
    prev_label = threshold(Eigen::Map<const ProbFrame<double>>(p.data(), h, w));
  }
  return ad::scale(total, 1.0 / static_cast<double>(window.size() - 1));
}

template <class Core>
WindowGradient window_gradient(const RecurrentModel<Core>& model, std::span<const FramePair> window) {
  ad::Graph graph;
  const ParamVars vars = model.bind(graph);
  const ad::Var loss = sequence_loss<Core>(graph, vars, window);
  graph.backward(loss);
  WindowGradient out;
  out.loss = loss.value()[0];
  out.grads.reserve(kParamTensorCount);
  for (const ad::Var& v : vars) out.grads.push_back(graph.grad(v));
  return out;
}

template <class Core>
WindowGradient batch_gradient(const RecurrentModel<Core>& model, std::span<const std::span<const FramePair>> windows) {
  if (windows.empty()) throw Error(ErrorKind::kInvalidArgument, "batch_gradient: empty batch");
  WindowGradient total;
  for (const std::span<const FramePair>& w : windows) {
    WindowGradient g = window_gradient<Core>(model, w);
    if (total.grads.empty()) {
      total = std::move(g);
      continue;
    }
    total.loss += g.loss;
    for (std::size_t i = 0; i < total.grads.size(); ++i) total.grads[i] += g.grads[i];
  }
  return total;
}

double evaluate_predictor(std::span<const SequenceRecord> dataset, const Predictor& predictor) {
  double total = 0.0;
  std::size_t count = 0;
  for (const SequenceRecord& record : dataset) {
    if (record.frames.size() < 2) continue;
    const std::vector<ProbFrame<double>> probs = predictor(record);
    if (probs.size() + 1 < record.frames.size()) {
      throw Error(ErrorKind::kInvalidArgument, "predictor returned too few frames");
    }
    for (std::size_t t = 0; t + 1 < record.frames.size(); ++t) {
      total += bce_mean(probs[t].array(), record.frames[t + 1].truth.array());
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::kInvalidArgument, "evaluate: no frame pairs to score");
  return total / static_cast<double>(count);
}

template <class Core>
double evaluate(const RecurrentModel<Core>& model, std::span<const SequenceRecord> dataset) {
  return evaluate_predictor(dataset, [&model](const SequenceRecord& record) {
    return model.rollout(measurements_of(record)).probs;
  });
}

template <class Core>
TrainResult<Core> train(const RecurrentModel<Core>& initial, std::span<const SequenceRecord> dataset,
                        const TrainConfig& config, std::ostream* progress) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorKind::kInvalidArgument, "train: empty dataset");
  keep_freed_memory();
  for (const SequenceRecord& r : dataset) {
    if (r.height != dataset.front().height || r.width != dataset.front().width) {
      throw Error(ErrorKind::kShapeMismatch, "train: records differ in extent");
    }
    if (r.frames.size() < 2) throw Error(ErrorKind::kInvalidArgument, "train: record shorter than 2 frames");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<SequenceRecord> train_set;
  std::vector<SequenceRecord> val_set;
  if (dataset.size() == 1) {
    train_set.push_back(dataset.front());
    val_set.push_back(dataset.front());
  } else {
    auto n_val = static_cast<std::size_t>(std::llround(config.validation_fraction * static_cast<double>(dataset.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, dataset.size() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k < n_val ? val_set : train_set).push_back(dataset[order[k]]);
    }
  }

  std::size_t train_frames = 0;
  for (const SequenceRecord& r : train_set) train_frames += r.frames.size();
  const auto steps = config.steps_per_epoch > 0
                         ? static_cast<std::size_t>(config.steps_per_epoch)
                         : std::max<std::size_t>(1, (train_frames + static_cast<std::size_t>(config.unroll_length * config.batch) - 1) /
                                                        static_cast<std::size_t>(config.unroll_length * config.batch));

  RecurrentModel<Core> model = initial;
  typename Core::Params params = initial.params();
  const auto tensors = params.tensors();
  RmsPropState opt = RmsPropState::for_params(std::vector<const TensorD*>(tensors.begin(), tensors.end()));

  TrainResult<Core> result{params, {}};
  result.report.train_sequences = train_set.size();
  result.report.validation_sequences = val_set.size();
  double best_val = std::numeric_limits<double>::infinity();
  double reference_val = std::numeric_limits<double>::infinity();
  Index waited = 0;

  std::uniform_int_distribution<std::size_t> pick_record(0, train_set.size() - 1);
  for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t windows = 0;
    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<std::span<const FramePair>> windows_in_batch;
      for (Index b = 0; b < config.batch; ++b) {
        const SequenceRecord& rec = train_set[pick_record(rng)];
        const std::size_t len = std::min<std::size_t>(rec.frames.size(), static_cast<std::size_t>(config.unroll_length));
        std::uniform_int_distribution<std::size_t> pick_offset(0, rec.frames.size() - len);
        windows_in_batch.push_back(std::span(rec.frames).subspan(pick_offset(rng), len));
      }
      const WindowGradient batch = batch_gradient<Core>(model, windows_in_batch);
      if (!std::isfinite(batch.loss)) {
        throw Error(ErrorKind::kNonFinite, "training diverged in epoch " + std::to_string(epoch) +
                                               "; last good epoch " + std::to_string(epoch - 1));
      }
      loss_sum += batch.loss;
      windows += windows_in_batch.size();
      const std::vector<Eigen::ArrayXd>& grads = batch.grads;
      try {
        rmsprop_step(params.tensors(), grads, opt, config.learning_rate);
      } catch (const Error& e) {
        throw Error(e.kind(), std::string("training diverged in epoch ") + std::to_string(epoch) +
                                  "; last good epoch " + std::to_string(epoch - 1) + ": " + e.what());
      }
      model.set_params(params);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_bce = loss_sum / static_cast<double>(windows);
    stats.val_bce = evaluate(model, val_set);
    stats.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(stats.val_bce)) {
      throw Error(ErrorKind::kNonFinite, "validation diverged in epoch " + std::to_string(epoch) +
                                             "; last good epoch " + std::to_string(epoch - 1));
    }
    result.report.epochs.push_back(stats);
    if (progress) {
      *progress << Core::kName << " epoch " << epoch << " train_bce " << stats.train_bce << " val_bce "
                << stats.val_bce << " (" << static_cast<long long>(stats.ms) << " ms)" << std::endl;
    }

    if (stats.val_bce < best_val) {
      best_val = stats.val_bce;
      result.params = params;
      result.report.best_epoch = epoch;
    }
    if (stats.val_bce < reference_val - config.min_delta) {
      reference_val = stats.val_bce;
      waited = 0;
    } else {
      ++waited;
    }
    result.report.stopping_epoch = epoch;
    if (waited >= config.patience) break;
  }
  return result;
}

#define KGA_INSTANTIATE_TRAINING(Core)                                                                          \
  template ad::Var sequence_loss<Core>(ad::Graph&, const ParamVars&, std::span<const FramePair>);              \
  template WindowGradient window_gradient<Core>(const RecurrentModel<Core>&, std::span<const FramePair>);      \
  template WindowGradient batch_gradient<Core>(const RecurrentModel<Core>&,                                    \
                                               std::span<const std::span<const FramePair>>);                   \
  template TrainResult<Core> train<Core>(const RecurrentModel<Core>&, std::span<const SequenceRecord>,         \
                                         const TrainConfig&, std::ostream*);                                   \
  template double evaluate<Core>(const RecurrentModel<Core>&, std::span<const SequenceRecord>);

KGA_INSTANTIATE_TRAINING(GruArrayCore)
KGA_INSTANTIATE_TRAINING(ConvGruCore)

#undef KGA_INSTANTIATE_TRAINING

}  // namespace kga
