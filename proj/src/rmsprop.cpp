#include "kga/rmsprop.hpp"

#include <string>

namespace kga {

RmsPropState RmsPropState::for_params(std::span<const TensorD* const> params) {
  RmsPropState state;
  state.mean_square.reserve(params.size());
  for (const TensorD* p : params) state.mean_square.push_back(Eigen::ArrayXd::Zero(p->size()));
  return state;
}

void rmsprop_step(std::span<TensorD* const> params, std::span<const Eigen::ArrayXd> grads,
                  RmsPropState& state, double learning_rate) {
  if (!(learning_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "rmsprop: learning rate must be positive");
  }
  if (params.size() != grads.size() || params.size() != state.mean_square.size()) {
    throw Error(ErrorKind::kShapeMismatch, "rmsprop: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size() || state.mean_square[i].size() != params[i]->size()) {
      throw Error(ErrorKind::kShapeMismatch, "rmsprop: size mismatch at parameter " + std::to_string(i));
    }
    if (!grads[i].allFinite()) {
      throw Error(ErrorKind::kNonFinite, "rmsprop: non-finite gradient at parameter " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::ArrayXd& s = state.mean_square[i];
    s = state.decay * s + (1.0 - state.decay) * grads[i].square();
    params[i]->values() -= learning_rate * grads[i] / (s.sqrt() + state.epsilon);
  }
}

}  // namespace kga
