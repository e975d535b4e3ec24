#include <doctest.h>

#include <cmath>
#include <random>

#include "catseq/error.hpp"
#include "catseq/nn/optim.hpp"
#include "catseq/nn/params.hpp"
#include "op_cases.hpp"
#include "test_util.hpp"

using namespace catseq;
using namespace catseq::nn;

TEST_CASE("every op passes a central finite-difference check") {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    for (const auto& c : testing::random_op_cases(rng)) {
      CAPTURE(c.name);
      const auto result = check_gradients(c.fn, c.inputs);
      CHECK(result.checked > 0);
      CHECK(result.max_relative_error < 1e-4);
    }
  }
}

TEST_CASE("gradients accumulate across shared uses of one node") {
  Var x = Var::parameter(Tensor({2}, std::vector<double>{1.5, -2.0}));
  Var y = add(mul(x, x), x);
  sum(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-3.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("first Adam step moves each weight by about the learning rate") {
  Tensor p({3}, std::vector<double>{1.0, 2.0, 3.0});
  const Tensor g({3}, std::vector<double>{0.5, -4.0, 0.0});
  AdamState state;
  AdamConfig config;
  config.lr = 0.01;
  adam_step(p, g, state, config);
  // m_hat = g and v_hat = g^2 after bias correction.
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
  CHECK(p[2] == 3.0);
  CHECK(state.t == 1);
  adam_step(p, g, state, config);
  const double m = 0.9 * 0.1 * 0.5 + 0.1 * 0.5;
  const double v = 0.999 * 0.001 * 0.25 + 0.001 * 0.25;
  const double step = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8) - step).epsilon(1e-12));
}

TEST_CASE("masked keys receive exactly zero attention weight") {
  std::mt19937_64 rng(2);
  const Tensor q = testing::random_tensor(rng, {4, 4});
  const Tensor k = testing::random_tensor(rng, {4, 4});
  const auto causal = AttentionMask::causal(4);
  for (std::size_t h = 0; h < 2; ++h) {
    const Tensor w = attention_weights(q, k, 2, h, &causal);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        total += w.at(i, j);
        if (j > i) CHECK(w.at(i, j) == 0.0);
      }
      CHECK(total == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("softmax rows are stable for large logits") {
  const Tensor logits({1, 3}, std::vector<double>{1000.0, 1000.0, -1000.0});
  const Tensor p = softmax_rows(logits);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == 0.0);
}

TEST_CASE("initializers respect their ranges") {
  std::mt19937_64 rng(4);
  const Tensor t = uniform_fan_in({50, 40}, 16, rng);
  double lo = 1.0, hi = -1.0;
  for (double v : t.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= -0.25);
  CHECK(hi <= 0.25);
  CHECK(hi - lo > 0.45);
  const Tensor n = normal_init({100, 100}, 0.02, rng);
  double ss = 0.0;
  for (double v : n.values()) ss += v * v;
  CHECK(std::sqrt(ss / 10000.0) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("tensor files round trip and parameter loads check shapes") {
  std::mt19937_64 rng(5);
  const auto dir = testing::scratch_dir("tensor_io");
  ParamStore store;
  store.add("w", testing::random_tensor(rng, {3, 2}));
  store.add("b", testing::random_tensor(rng, {2}));
  nlohmann::json header;
  header["kind"] = "test";
  save_params(dir / "p", store, header);

  ParamStore same;
  same.add("w", Tensor({3, 2}));
  same.add("b", Tensor({2}));
  const auto h = load_params(dir / "p", same);
  CHECK(h["kind"] == "test");
  for (std::size_t i = 0; i < 6; ++i) CHECK(same.get("w").value()[i] == store.get("w").value()[i]);

  ParamStore wrong;
  wrong.add("w", Tensor({2, 3}));
  wrong.add("b", Tensor({2}));
  try {
    load_params(dir / "p", wrong);
    FAIL("expected schema error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSchema);
  }
  CHECK_THROWS_AS(load_tensors(dir / "missing"), Error);
}

TEST_CASE("shape errors are reported") {
  const Var a = Var::constant(Tensor({2, 3}));
  const Var b = Var::constant(Tensor({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), Error);
}
