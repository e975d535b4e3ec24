#include "catseq/nn/optim.hpp"

#include <cmath>

#include "catseq/error.hpp"

namespace catseq::nn {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config) {
  if (!param.same_shape(grad)) {
    fail(ErrorKind::kInvalidArgument, "adam: gradient shape " + shape_string(grad.shape()) +
                                          " does not match parameter " +
                                          shape_string(param.shape()));
  }
  if (!state.m.same_shape(param)) {
    state.m = Tensor(param.shape(), 0.0);
    state.v = Tensor(param.shape(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

Adam::Adam(std::vector<Var> params, AdamConfig config)
    : params_(std::move(params)), state_(params_.size()), config_(config) {}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(params_[i].value(), params_[i].grad(), state_[i], config_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p.zero_grad();
  }
}

}  // namespace catseq::nn
