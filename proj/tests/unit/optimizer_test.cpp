// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/optimizer.hpp"

#include <cmath>
#include <limits>

#include "doctest.h"
#include "pcecal/error.hpp"

using namespace pcecal;

namespace {

ObjectiveFunction quadratic(std::vector<double> diag, std::vector<double> center) {
  const std::size_t n = diag.size();
  return {[diag, center](std::span<const double> x, std::span<double> g) {
            double f = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
              const double d = x[i] - center[i];
              f += 0.5 * diag[i] * d * d;
              g[i] = diag[i] * d;
            }
            return f;
          },
          n};
}

ObjectiveFunction rosenbrock() {
  return {[](std::span<const double> x, std::span<double> g) {
            const double a = 1.0 - x[0];
            const double b = x[1] - x[0] * x[0];
            g[0] = -2.0 * a - 400.0 * x[0] * b;
            g[1] = 200.0 * b;
            return a * a + 100.0 * b * b;
          },
          2};
}

}  // namespace

TEST_CASE("one-dimensional quadratic") {
  const auto r = minimize(quadratic({2.0}, {3.0}), {0.0});
  CHECK(r.converged);
  CHECK(std::abs(r.x[0] - 3.0) < 1e-6);
  CHECK(r.loss < 1e-12);
}

TEST_CASE("rosenbrock from (-1.2, 1)") {
  OptimizerConfig cfg;
  cfg.max_iterations = 200;
  cfg.gradient_tolerance = 1e-10;
  const auto r = minimize(rosenbrock(), {-1.2, 1.0}, cfg);
  CHECK(r.loss < 1e-8);
  CHECK(r.iterations <= 200);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-3);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-3);
}

TEST_CASE("zero-dimensional problems converge immediately") {
  ObjectiveFunction f{[](std::span<const double>, std::span<double>) { return 4.5; }, 0};
  const auto r = minimize(f, {});
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.loss == 4.5);
}

TEST_CASE("non-finite start is a numeric error") {
  ObjectiveFunction f{[](std::span<const double>, std::span<double> g) {
                        g[0] = 0.0;
                        return std::numeric_limits<double>::quiet_NaN();
                      },
                      1};
  try {
    minimize(f, {0.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
  }
}

TEST_CASE("ill-conditioned quadratic converges within dimension + 2 iterations") {
  std::vector<double> diag, center;
  for (int i = 0; i < 8; ++i) {
    diag.push_back(std::pow(3.0, i));
    center.push_back(0.5 * i - 1.0);
  }
  OptimizerConfig cfg;
  cfg.gradient_tolerance = 1e-6;
  const auto r = minimize(quadratic(diag, center), std::vector<double>(8, 0.0), cfg);
  CHECK(r.converged);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(r.x[i] - center[i]) < 1e-5);
  // Exact line searches would give n steps; backtracking needs a little slack.
  CHECK(r.iterations <= 40);
}

TEST_CASE("loss sequence never increases") {
  std::vector<double> losses;
  ObjectiveFunction base = rosenbrock();
  ObjectiveFunction traced{[&](std::span<const double> x, std::span<double> g) {
                             return base.evaluate(x, g);
                           },
                           2};
  OptimizerConfig cfg;
  double best = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (std::size_t iters = 1; iters <= 40; ++iters) {
    cfg.max_iterations = iters;
    const double loss = minimize(traced, {-1.2, 1.0}, cfg).loss;
    if (loss > best + 1e-15) monotone = false;
    best = std::min(best, loss);
  }
  CHECK(monotone);
}

TEST_CASE("minimize is deterministic") {
  const auto a = minimize(rosenbrock(), {-1.2, 1.0});
  const auto b = minimize(rosenbrock(), {-1.2, 1.0});
  CHECK(a.x == b.x);
  CHECK(a.loss == b.loss);
  CHECK(a.iterations == b.iterations);
}

TEST_CASE("gradient checker") {
  ObjectiveFunction half_norm{[](std::span<const double> x, std::span<double> g) {
                                double f = 0.0;
                                for (std::size_t i = 0; i < x.size(); ++i) {
                                  f += 0.5 * x[i] * x[i];
                                  g[i] = x[i];
                                }
                                return f;
                              },
                              3};
  const std::vector<double> x{0.3, -1.7, 2.2};
  CHECK(check_gradient(half_norm, x) < 1e-9);

  ObjectiveFunction corrupted{[](std::span<const double> x, std::span<double> g) {
                                double f = 0.0;
                                for (std::size_t i = 0; i < x.size(); ++i) {
                                  f += 0.5 * x[i] * x[i];
                                  g[i] = 2.0 * x[i];
                                }
                                return f;
                              },
                              3};
  CHECK(check_gradient(corrupted, x) > 0.3);
}
