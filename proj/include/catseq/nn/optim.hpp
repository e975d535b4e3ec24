#pragma once

#include <cstddef>
#include <vector>

#include "catseq/nn/autograd.hpp"

namespace catseq::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  std::size_t t = 0;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& config);

class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config = {});

  void step();
  void zero_grad();
  const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<Var> params_;
  std::vector<AdamState> state_;
  AdamConfig config_;
};

}  // namespace catseq::nn
