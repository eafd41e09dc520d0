// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>

#include "pcecal/error.hpp"

namespace pcecal {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

// Two-loop recursion: returns -H * g.
std::vector<double> search_direction(const std::deque<CurvaturePair>& history,
                                     std::span<const double> grad) {
  std::vector<double> q(grad.begin(), grad.end());
  std::vector<double> alpha(history.size());
  for (std::size_t k = history.size(); k-- > 0;) {
    alpha[k] = history[k].rho * dot(history[k].s, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * history[k].y[i];
  }
  double gamma = 1.0;
  if (!history.empty()) {
    const auto& last = history.back();
    gamma = dot(last.s, last.y) / dot(last.y, last.y);
  } else {
    // First step: unit-length move along the steepest descent direction.
    const double gn = inf_norm(grad);
    if (gn > 0) gamma = 1.0 / gn;
  }
  for (double& v : q) v *= gamma;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const double beta = history[k].rho * dot(history[k].y, q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * history[k].s[i];
  }
  for (double& v : q) v = -v;
  return q;
}

}  // namespace

MinimizeResult minimize(const ObjectiveFunction& f, std::vector<double> x0,
                        const OptimizerConfig& cfg) {
  const std::size_t n = f.dimension;
  if (x0.size() != n) {
    throw Error(ErrorKind::kDimension, "minimize: x0 has " + std::to_string(x0.size()) +
                                           " entries, objective expects " + std::to_string(n));
  }
  MinimizeResult best{std::move(x0), 0.0, 0, false};
  if (n == 0) {
    best.loss = f.evaluate(best.x, {});
    best.converged = true;
    return best;
  }

  std::vector<double> grad(n);
  best.loss = f.evaluate(best.x, grad);
  if (!std::isfinite(best.loss) || !all_finite(grad)) {
    throw Error(ErrorKind::kNumeric, "minimize: non-finite loss or gradient at the start point");
  }

  std::deque<CurvaturePair> history;
  std::vector<double> trial(n);
  std::vector<double> trial_grad(n);
  std::vector<double> candidate(n);
  std::vector<double> candidate_grad(n);

  for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
    if (inf_norm(grad) <= cfg.gradient_tolerance) {
      best.converged = true;
      return best;
    }
    std::vector<double> dir = search_direction(history, grad);
    double slope = dot(grad, dir);
    if (!(slope < 0.0)) {
      // Stale curvature information; restart from steepest descent.
      history.clear();
      dir = search_direction(history, grad);
      slope = dot(grad, dir);
    }

    // Backtracking Armijo search. When the first trial is accepted we also try
    // the minimizer of the quadratic through (0, f0, slope) and (step, f_step);
    // on quadratic objectives this makes the step exact.
    double step = 1.0;
    double trial_loss = 0.0;
    bool accepted = false;
    for (std::size_t bt = 0; bt <= cfg.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = best.x[i] + step * dir[i];
      trial_loss = f.evaluate(trial, trial_grad);
      if (std::isfinite(trial_loss) && all_finite(trial_grad) &&
          trial_loss <= best.loss + cfg.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= cfg.shrink;
    }
    if (!accepted) {
      best.iterations = iter;
      return best;
    }
    const double curvature = trial_loss - best.loss - slope * step;
    if (curvature > 0.0) {
      const double interp = -slope * step * step / (2.0 * curvature);
      if (interp > 0.0 && std::abs(interp - step) > 1e-12 * step) {
        for (std::size_t i = 0; i < n; ++i) candidate[i] = best.x[i] + interp * dir[i];
        const double candidate_loss = f.evaluate(candidate, candidate_grad);
        if (std::isfinite(candidate_loss) && all_finite(candidate_grad) &&
            candidate_loss < trial_loss &&
            candidate_loss <= best.loss + cfg.armijo * interp * slope) {
          trial.swap(candidate);
          trial_grad.swap(candidate_grad);
          trial_loss = candidate_loss;
          step = interp;
        }
      }
    }

    CurvaturePair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = trial[i] - best.x[i];
      pair.y[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(pair.s, pair.y);
    if (sy > 1e-12 * dot(pair.y, pair.y) && sy > 0.0) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (history.size() > cfg.history_size) history.pop_front();
    }

    best.x.swap(trial);
    grad.swap(trial_grad);
    best.loss = trial_loss;
    best.iterations = iter + 1;
  }
  best.converged = inf_norm(grad) <= cfg.gradient_tolerance;
  return best;
}

double check_gradient(const ObjectiveFunction& f, std::span<const double> x, double step) {
  const std::size_t n = f.dimension;
  std::vector<double> grad(n);
  std::vector<double> scratch(n);
  std::vector<double> point(x.begin(), x.end());
  f.evaluate(point, grad);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = point[i];
    point[i] = orig + step;
    const double up = f.evaluate(point, scratch);
    point[i] = orig - step;
    const double down = f.evaluate(point, scratch);
    point[i] = orig;
    const double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(fd - grad[i]) / (std::abs(fd) + std::abs(grad[i]) + 1e-12));
  }
  return worst;
}

}  // namespace pcecal
