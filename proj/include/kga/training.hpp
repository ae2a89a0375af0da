#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kga/dataset_io.hpp"
#include "kga/model.hpp"
#include "kga/rmsprop.hpp"

namespace kga {

struct TrainConfig {
  double learning_rate = 0.003;
  Index unroll_length = 20;
  Index batch = 4;
  Index max_epochs = 200;
  Index patience = 10;
  double min_delta = 1e-4;
  double validation_fraction = 0.2;
  /// Optimizer steps per epoch; 0 derives ceil(train frames / (unroll_length · batch)).
  Index steps_per_epoch = 0;
  std::uint64_t seed = 3;

  void validate() const;
};

struct EpochStats {
  Index epoch = 0;  // 1-based
  double train_bce = 0.0;
  double val_bce = 0.0;
  double ms = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  Index best_epoch = 0;
  Index stopping_epoch = 0;
  std::size_t train_sequences = 0;
  std::size_t validation_sequences = 0;

  /// `epoch,train_bce,val_bce,ms_per_epoch`. Without timing the last column
  /// is omitted, which makes the table a pure function of data, config and seed.
  std::string csv(bool with_timing = true) const;
};

template <class Core>
struct TrainResult {
  typename Core::Params params;
  TrainReport report;
};

/// Mean over t = 0..T-2 of BCE(prob_t, truth_{t+1}) for a rollout from the
/// initial state over the window's measurements. Labels fed back between
/// steps are constants.
template <class Core>
ad::Var sequence_loss(ad::Graph& graph, const ParamVars& params, std::span<const FramePair> window);

struct WindowGradient {
  double loss = 0.0;
  std::vector<Eigen::ArrayXd> grads;  // checkpoint order
};

template <class Core>
WindowGradient window_gradient(const RecurrentModel<Core>& model, std::span<const FramePair> window);

/// Sum of window losses and of window gradients, accumulated in batch order.
template <class Core>
WindowGradient batch_gradient(const RecurrentModel<Core>& model, std::span<const std::span<const FramePair>> windows);

/// Train from `initial`'s parameters; returns the minimum-validation checkpoint.
template <class Core>
TrainResult<Core> train(const RecurrentModel<Core>& initial, std::span<const SequenceRecord> dataset,
                        const TrainConfig& config, std::ostream* progress = nullptr);

/// Per-record predictor: probs[t] is the prediction for truth frame t+1.
using Predictor = std::function<std::vector<ProbFrame<double>>(const SequenceRecord&)>;

/// Mean over every (record, t < T-1) of BCE(probs[t], truth[t+1]).
double evaluate_predictor(std::span<const SequenceRecord> dataset, const Predictor& predictor);

template <class Core>
double evaluate(const RecurrentModel<Core>& model, std::span<const SequenceRecord> dataset);

}  // namespace kga
