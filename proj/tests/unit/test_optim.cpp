#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "llab/optim.hpp"
#include "llab/tensor.hpp"

using namespace llab;

TEST_CASE("lr schedules") {
  auto c = LrSchedule::constant(3e-4);
  for (std::size_t s : {0u, 1u, 17u, 5000u}) REQUIRE(lr_at(c, s) == 3e-4);

  auto cy = LrSchedule::cyclic(1e-4, 1e-3, 100);
  REQUIRE(lr_at(cy, 0) == Catch::Approx(1e-4));
  REQUIRE(lr_at(cy, 50) == Catch::Approx(1e-3));
  // periodicity and bounds
  for (std::size_t s = 0; s < 300; ++s) {
    REQUIRE(lr_at(cy, s) == Catch::Approx(lr_at(cy, s + 100)));
    REQUIRE(lr_at(cy, s) >= 1e-4);
    REQUIRE(lr_at(cy, s) <= 1e-3);
  }
  REQUIRE_THROWS_AS(LrSchedule::cyclic(0.0, 1e-3, 100), ConfigError);
}

TEST_CASE("adam zero gradient is identity on parameters") {
  auto p = Tensor::param({3}, {1.0, -2.0, 0.5});
  std::vector<Tensor> params{p};
  auto st = OptimizerState::init(params);
  p.zero_grad();
  adam_step(params, st, 3e-4);
  REQUIRE(p.values() == std::vector<double>{1.0, -2.0, 0.5});
  REQUIRE(st.t == 1);
}

TEST_CASE("adam first step from zero state moves by ~lr") {
  // Hand-executed recurrence: m=0.1, v=1e-3, mhat=1, vhat=1,
  // delta = -lr * 1 / (1 + 1e-8).
  auto p = Tensor::param({1}, {0.0});
  std::vector<Tensor> params{p};
  auto st = OptimizerState::init(params);
  // inject gradient g = 1 via a simple graph
  auto loss = sum(p);
  backward(loss);
  REQUIRE(p.grad()[0] == 1.0);
  adam_step(params, st, 3e-4);
  const double expected = -3e-4 / (1.0 + 1e-8);
  REQUIRE(p.values()[0] == Catch::Approx(expected).margin(1e-12));
  REQUIRE(st.t == 1);
}

TEST_CASE("adam descends theta^2 from 1 to below 0.1 in 200 steps") {
  auto p = Tensor::param({1}, {1.0});
  std::vector<Tensor> params{p};
  auto st = OptimizerState::init(params);
  for (int i = 0; i < 200; ++i) {
    auto loss = mul(p, p);
    backward(sum(loss));
    adam_step(params, st, 0.02);
  }
  REQUIRE(std::abs(p.values()[0]) < 0.1);
}

TEST_CASE("adam rejects frozen parameters and non-finite gradients") {
  auto frozen = Tensor::from({1}, {1.0}, /*requires_grad=*/false);
  std::vector<Tensor> params{frozen};
  auto st = OptimizerState::init(params);
  REQUIRE_THROWS(adam_step(params, st, 1e-3));

  auto p = Tensor::param({1}, {1.0});
  std::vector<Tensor> params2{p};
  auto st2 = OptimizerState::init(params2);
  // poke a NaN into the grad buffer
  auto loss = sum(p);
  backward(loss);
  const_cast<std::vector<double>&>(p.grad())[0] = std::nan("");
  REQUIRE_THROWS_AS(adam_step(params2, st2, 1e-3), NumericError);
}
