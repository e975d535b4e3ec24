#include "catseq/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "catseq/error.hpp"

namespace catseq::nn {

namespace {

double evaluate(const std::function<Var(const std::vector<Var>&)>& fn,
                const std::vector<Tensor>& inputs) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(Var::constant(t));
  const Var out = fn(vars);
  if (out.value().size() != 1) {
    fail(ErrorKind::kInvalidArgument, "gradient check needs a scalar function");
  }
  return out.value()[0];
}

}  // namespace

GradCheckResult check_gradients(const std::function<Var(const std::vector<Var>&)>& fn,
                                const std::vector<Tensor>& inputs, double eps, double floor) {
  std::vector<Var> params;
  params.reserve(inputs.size());
  for (const auto& t : inputs) params.push_back(Var::parameter(t));
  Var out = fn(params);
  out.backward();

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor& analytic = params[a].grad();
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double x = inputs[a][i];
      probe[a][i] = x + eps;
      const double up = evaluate(fn, probe);
      probe[a][i] = x - eps;
      const double down = evaluate(fn, probe);
      probe[a][i] = x;
      const double numeric = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace catseq::nn
