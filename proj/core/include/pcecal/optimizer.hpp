// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

// Limited-memory BFGS with a backtracking Armijo line search, plus a
// central-difference gradient checker for hand-derived gradients.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace pcecal {

/// Writes the gradient into `grad` (same length as x) and returns the loss.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct ObjectiveFunction {
  Objective evaluate;
  std::size_t dimension = 0;
};

struct OptimizerConfig {
  std::size_t history_size = 10;
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-7;  // infinity norm
  double armijo = 1e-4;
  double shrink = 0.5;
  std::size_t max_backtracks = 40;
};

struct MinimizeResult {
  std::vector<double> x;
  double loss = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Throws kNumeric if the loss or gradient at x0 is not finite. A failed line
/// search is not an error: the best iterate so far comes back with
/// converged = false.
MinimizeResult minimize(const ObjectiveFunction& f, std::vector<double> x0,
                        const OptimizerConfig& cfg = {});

/// Largest per-coordinate relative error |g_fd - g| / (|g_fd| + |g| + 1e-12)
/// between the analytic gradient and central differences with the given step.
double check_gradient(const ObjectiveFunction& f, std::span<const double> x, double step = 1e-5);

}  // namespace pcecal
