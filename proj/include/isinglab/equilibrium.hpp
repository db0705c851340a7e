// Inverse Ising from independent snapshots: naive mean-field, TAP,
// pseudo-likelihood maximisation and exact-enumeration Boltzmann machine.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/model.hpp"
#include "isinglab/optim.hpp"
#include "isinglab/result.hpp"
#include "isinglab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace isinglab {

// J* = -(c⁻¹) off the diagonal, θ*_i = atanh(m_i) - Σ_j J*_ij m_j.
inline InferenceResult infer_nmf(const MomentSet& mom) {
  double cond = 0.0;
  require_invertible(mom.c0, "nMF", cond);
  require_unsaturated(mom.m, "nMF");
  InferenceResult res;
  res.method = "nMF";
  res.J = -mom.c0.inverse();
  res.J.diagonal().setZero();
  res.J = (0.5 * (res.J + res.J.transpose())).eval();
  res.theta = mom.m.array().atanh().matrix() - res.J * mom.m;
  res.diagnostics["condition_number"] = cond;
  return res;
}

// Root of 2 m_i m_j J² + J + (c⁻¹)_ij = 0 on the branch that tends to the
// nMF value -(c⁻¹)_ij as m_i m_j -> 0. Returns false for a negative
// discriminant.
inline bool tap_root(double mi_mj, double cinv, double& root) {
  const double a = 2.0 * mi_mj;
  if (a == 0.0) {
    root = -cinv;
    return true;
  }
  const double disc = 1.0 - 4.0 * a * cinv;
  if (disc < 0.0) return false;
  root = -2.0 * cinv / (1.0 + std::sqrt(disc));
  return true;
}

inline InferenceResult infer_tap(const MomentSet& mom) {
  double cond = 0.0;
  require_invertible(mom.c0, "TAP", cond);
  require_unsaturated(mom.m, "TAP");
  const int L = mom.L;
  const Matrix cinv = mom.c0.inverse();
  InferenceResult res;
  res.method = "TAP";
  res.J = Matrix::Zero(L, L);
  nlohmann::json unsolved = nlohmann::json::array();
  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      const double c = 0.5 * (cinv(i, j) + cinv(j, i));
      double root = 0.0;
      if (!tap_root(mom.m(i) * mom.m(j), c, root)) {
        root = -c;
        unsolved.push_back({i, j});
      }
      res.J(i, j) = res.J(j, i) = root;
    }
  }
  const Vector one_minus_m2 = (1.0 - mom.m.array().square()).matrix();
  const Vector onsager = res.J.array().square().matrix() * one_minus_m2;
  res.theta = mom.m.array().atanh().matrix() - res.J * mom.m +
              mom.m.cwiseProduct(onsager);
  res.diagnostics["condition_number"] = cond;
  res.diagnostics["unsolved_entries"] = unsolved;
  return res;
}

// Per-spin pseudo-likelihood. Parameter vector w for spin i holds θ_i at
// index i and J_ij at index j != i, so H_i = w · x with x_i = 1, x_j = s_j.
// Objective (maximised): (1/W) Σ_n w_n [s_i H_i - log 2cosh H_i] - λ |w|².
class PseudoLikelihood {
 public:
  PseudoLikelihood(const SampleTable& table, int spin, double lambda)
      : spin_(spin), lambda_(lambda), weights_(table.rows()), X_(table.rows(), table.L),
        target_(table.rows()) {
    const double W = table.total_weight();
    for (std::size_t r = 0; r < table.rows(); ++r) {
      const Spin* s = table.row(r);
      for (int j = 0; j < table.L; ++j) X_(r, j) = s[j];
      target_(r) = s[spin];
      X_(r, spin) = 1.0;
      weights_(r) = table.weight(r) / W;
    }
  }

  double value_and_gradient(const Vector& w, Vector& grad) const {
    const Vector h = X_ * w;
    Vector coef(h.size());
    double value = 0.0;
    for (Eigen::Index r = 0; r < h.size(); ++r) {
      const double a = std::abs(h(r));
      const double log2cosh = a + std::log1p(std::exp(-2.0 * a));
      value += weights_(r) * (target_(r) * h(r) - log2cosh);
      coef(r) = weights_(r) * (target_(r) - std::tanh(h(r)));
    }
    grad.noalias() = X_.transpose() * coef;
    grad -= 2.0 * lambda_ * w;
    value -= lambda_ * w.squaredNorm();
    return value;
  }

  double value(const Vector& w) const {
    Vector g(w.size());
    return value_and_gradient(w, g);
  }

  int spin() const { return spin_; }

 private:
  int spin_;
  double lambda_;
  Vector weights_;
  Matrix X_;
  Vector target_;
};

struct PlmOptions {
  double lambda = -1.0;  // negative selects the default 0.01 / N
  double grad_tol = 1e-6;
  int max_iterations = 5000;
};

inline InferenceResult infer_plm(const SampleTable& table, PlmOptions opt = {}) {
  require(table.L >= 2, "PLM: need at least two spins");
  require(table.rows() >= 1, "PLM: empty sample table");
  if (opt.lambda < 0.0) opt.lambda = 0.01 / table.total_weight();
  const int L = table.L;
  Matrix rows = Matrix::Zero(L, L);
  Vector theta(L);
  int max_iters = 0;
  double worst_grad = 0.0;
  nlohmann::json unconverged = nlohmann::json::array();
  for (int i = 0; i < L; ++i) {
    PseudoLikelihood pl(table, i, opt.lambda);
    auto neg = [&](const Vector& w, Vector& g) {
      double v = pl.value_and_gradient(w, g);
      g = -g;
      return -v;
    };
    LbfgsOptions lo;
    lo.grad_tol = opt.grad_tol;
    lo.max_iterations = opt.max_iterations;
    LbfgsResult r = minimize_lbfgs(neg, Vector::Zero(L), lo);
    max_iters = std::max(max_iters, r.iterations);
    worst_grad = std::max(worst_grad, r.grad_norm);
    if (!r.converged) unconverged.push_back(i);
    theta(i) = r.x(i);
    rows.row(i) = r.x.transpose();
    rows(i, i) = 0.0;
  }
  InferenceResult res;
  res.method = "PLM";
  res.theta = theta;
  res.J = 0.5 * (rows + rows.transpose());
  res.hyperparams["lambda"] = opt.lambda;
  res.hyperparams["grad_tol"] = opt.grad_tol;
  res.diagnostics["max_iterations_used"] = max_iters;
  res.diagnostics["final_gradient_norm"] = worst_grad;
  res.diagnostics["unconverged_spins"] = unconverged;
  res.diagnostics["converged"] = unconverged.empty();
  return res;
}

struct BmOptions {
  double eta = 0.5;
  int max_sweeps = 200000;
  double tol = 1e-6;
  double pseudocount = 0.0;
  int divergence_window = 100;
};

// Boltzmann machine: δθ_i = η(⟨s_i⟩_data - ⟨s_i⟩_model),
// δJ_ij = η(⟨s_i s_j⟩_data - ⟨s_i s_j⟩_model), model averages by exact
// enumeration.
inline InferenceResult infer_bm_moments(const Vector& data_m, const Matrix& data_second,
                                        BmOptions opt = {}, const CouplingModel* start = nullptr) {
  const int L = static_cast<int>(data_m.size());
  if (L > kExactMaxL)
    throw CapacityError("BM: exact enumeration limited to L <= " + std::to_string(kExactMaxL));
  require(opt.eta > 0.0, "BM: eta must be positive");
  CouplingModel model = start ? *start : CouplingModel(L);
  double mismatch = INFINITY, best = INFINITY;
  int stalled = 0, sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    ExactMoments em = exact_gibbs_moments(model);
    Vector dm = data_m - em.m;
    Matrix ds = data_second - em.second;
    ds.diagonal().setZero();
    mismatch = std::max(dm.lpNorm<Eigen::Infinity>(), ds.lpNorm<Eigen::Infinity>());
    if (mismatch <= opt.tol) break;
    if (!std::isfinite(mismatch)) throw NumericalError("BM: diverged; use a smaller eta");
    // moments are bounded, so an overshooting step shows up as a mismatch
    // that keeps failing to improve rather than one that grows without bound
    if (mismatch < best) {
      best = mismatch;
      stalled = 0;
    } else if (++stalled >= opt.divergence_window) {
      throw NumericalError("BM: moment mismatch above its best for " + std::to_string(stalled) +
                           " consecutive sweeps; use a smaller eta");
    }
    model.theta += opt.eta * dm;
    model.J += opt.eta * 0.5 * (ds + ds.transpose());
  }
  InferenceResult res;
  res.method = "BM";
  res.theta = model.theta;
  res.J = model.J;
  res.hyperparams = {{"eta", opt.eta}, {"tol", opt.tol}, {"max_sweeps", opt.max_sweeps},
                     {"pseudocount", opt.pseudocount}};
  res.diagnostics = {{"sweeps", sweep}, {"final_mismatch", mismatch},
                     {"converged", mismatch <= opt.tol}};
  return res;
}

inline InferenceResult infer_bm(const SampleTable& table, BmOptions opt = {}) {
  if (table.L > kExactMaxL)
    throw CapacityError("BM: exact enumeration limited to L <= " + std::to_string(kExactMaxL));
  MomentSet mom = sample_moments(table, opt.pseudocount);
  return infer_bm_moments(mom.m, mom.second(), opt);
}

// Weighted table holding every configuration with its Gibbs probability.
inline SampleTable exact_sample_table(const CouplingModel& model) {
  GibbsDistribution dist = gibbs_distribution(model);
  SampleTable table(model.L);
  for (std::uint32_t x = 0; x < dist.prob.size(); ++x)
    table.add_row(config_of(x, model.L), dist.prob[x]);
  return table;
}

}  // namespace isinglab
