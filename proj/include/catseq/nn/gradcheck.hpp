#pragma once

#include <functional>
#include <vector>

#include "catseq/nn/autograd.hpp"

namespace catseq::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences. The relative error of each entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult check_gradients(const std::function<Var(const std::vector<Var>&)>& fn,
                                const std::vector<Tensor>& inputs, double eps = 1e-5,
                                double floor = 1e-6);

}  // namespace catseq::nn
