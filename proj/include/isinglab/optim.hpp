// Limited-memory BFGS with backtracking (Armijo) line search. Deterministic
// full-batch minimiser used by pseudo-likelihood maximisation.
#pragma once

#include "isinglab/core.hpp"

#include <cmath>
#include <deque>
#include <vector>

namespace isinglab {

struct LbfgsOptions {
  int max_iterations = 2000;
  double grad_tol = 1e-6;  // on the max-norm of the gradient
  int memory = 10;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// fg(x, grad) returns f(x) and writes ∇f(x) into grad.
template <typename FG>
LbfgsResult minimize_lbfgs(FG&& fg, Vector x, const LbfgsOptions& opt = {}) {
  const Eigen::Index n = x.size();
  Vector g(n), g_new(n), x_new(n), dir(n);
  double f = fg(x, g);
  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;

  LbfgsResult res;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) break;

    // two-loop recursion
    dir = -g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
      dir -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      double beta = rho_hist[k] * y_hist[k].dot(dir);
      dir += (alpha[k] - beta) * s_hist[k];
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g;
      slope = -g.squaredNorm();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-12)) : 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      f_new = fg(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Vector s = x_new - x;
    Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    f = f_new;
  }
  res.x = std::move(x);
  res.value = f;
  res.grad_norm = g.lpNorm<Eigen::Infinity>();
  res.iterations = it;
  res.converged = res.grad_norm <= opt.grad_tol;
  return res;
}

}  // namespace isinglab
