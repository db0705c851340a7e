// Inference of asynchronous kinetic Ising models from trajectories:
// dynamic mean-field (asyn-nMF), dynamic TAP (iterative and cubic), and the
// two maximum-likelihood learning rules SHO (per-event gradient of the
// discretised path likelihood) and AVE (its time-averaged form).
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/result.hpp"
#include "isinglab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace isinglab {

// A_ii = 1 - m_i², D = C(0) + γ⁻¹ dC/dτ(0), V = D C(0)⁻¹.
struct KineticMatrices {
  Vector a;  // diagonal of A
  Matrix D;
  Matrix V;
  Vector one_minus_m2;
  double condition_number = 0.0;
};

inline KineticMatrices kinetic_matrices(const MomentSet& mom, const std::string& who) {
  require(mom.has_derivative(), who + ": moments carry no dC/dτ(0); use trajectory moments");
  KineticMatrices k;
  require_invertible(mom.c0, who, k.condition_number);
  require_unsaturated(mom.m, who);
  k.one_minus_m2 = (1.0 - mom.m.array().square()).matrix();
  k.a = k.one_minus_m2;
  k.D = mom.c0 + mom.dC0 / mom.gamma;
  k.V = k.D * mom.c0.inverse();
  return k;
}

inline Vector kinetic_fields(const Vector& m, const Matrix& J) {
  return m.array().atanh().matrix() - J * m;
}

// J* = A⁻¹ D C⁻¹ with self-couplings retained. With symmetrize, J is
// replaced by (J + Jᵀ)/2 with zero diagonal before fields are computed.
inline InferenceResult infer_asyn_nmf(const MomentSet& mom, bool symmetrize = false) {
  KineticMatrices k = kinetic_matrices(mom, "asyn-nMF");
  InferenceResult res;
  res.method = "asyn-nMF";
  res.J = k.a.cwiseInverse().asDiagonal() * k.V;
  if (symmetrize) {
    res.J = (0.5 * (res.J + res.J.transpose())).eval();
    res.J.diagonal().setZero();
  }
  res.theta = kinetic_fields(mom.m, res.J);
  res.hyperparams["symmetrize"] = symmetrize;
  res.diagnostics["condition_number"] = k.condition_number;
  return res;
}

enum class TapMode { Iterative, Cubic };

inline TapMode tap_mode_from_string(const std::string& s) {
  if (s == "iterative") return TapMode::Iterative;
  if (s == "cubic") return TapMode::Cubic;
  throw ParameterError("unknown asyn-TAP mode '" + s + "'");
}

inline constexpr double kCubicMax = 4.0 / 27.0;  // max of F(1-F)² on [0, 1]

// Smallest non-negative root of F(1-F)² = b for 0 <= b <= 4/27; the root
// lies in [0, 1/3] where the left side is increasing.
inline double cubic_tap_root(double b) {
  if (!(b >= 0.0 && b <= kCubicMax)) throw DomainError("cubic_tap_root: b outside [0, 4/27]");
  auto g = [b](double f) { return f * (1.0 - f) * (1.0 - f) - b; };
  double lo = 0.0, hi = 1.0 / 3.0;
  for (int it = 0; it < 200 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) < 0.0) lo = mid; else hi = mid;
  }
  double f = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const double d = (1.0 - f) * (1.0 - 3.0 * f);
    if (d <= 0.0) break;
    const double next = f - g(f) / d;
    if (next < 0.0 || next > 1.0 / 3.0) break;
    if (std::abs(g(next)) >= std::abs(g(f))) break;
    f = next;
  }
  return f;
}

struct AsynTapOptions {
  TapMode mode = TapMode::Cubic;
  int max_iterations = 1000;
  double tol = 1e-12;
};

// J = A(J)⁻¹ V with A_ii = (1-m_i²)[1 - F_i], F_i = (1-m_i²) Σ_j J_ij²(1-m_j²).
// Equivalent to J_ij = J^nMF_ij / (1 - F_i) where F_i solves the per-row
// cubic F(1-F)² = Σ_j V_ij²(1-m_j²) / (1-m_i²).
inline InferenceResult infer_asyn_tap(const MomentSet& mom, const AsynTapOptions& opt = {}) {
  KineticMatrices k = kinetic_matrices(mom, "asyn-TAP");
  const int L = mom.L;
  const Matrix J_nmf = k.a.cwiseInverse().asDiagonal() * k.V;
  InferenceResult res;
  res.method = "asyn-TAP";
  res.hyperparams = {{"mode", opt.mode == TapMode::Cubic ? "cubic" : "iterative"},
                     {"max_iterations", opt.max_iterations}, {"tol", opt.tol}};
  Vector F = Vector::Zero(L);
  nlohmann::json flagged = nlohmann::json::array();
  if (opt.mode == TapMode::Cubic) {
    res.J = J_nmf;
    for (int i = 0; i < L; ++i) {
      const double b =
          (k.V.row(i).array().square().matrix() * k.one_minus_m2)(0) / k.one_minus_m2(i);
      if (b > kCubicMax) {
        flagged.push_back(i);
        continue;
      }
      F(i) = cubic_tap_root(b);
      res.J.row(i) /= (1.0 - F(i));
    }
    res.diagnostics["nmf_fallback_rows"] = flagged;
  } else {
    Matrix J = J_nmf;
    double change = INFINITY;
    int it = 0;
    bool broken = false;
    for (; it < opt.max_iterations; ++it) {
      F = k.one_minus_m2.cwiseProduct(J.array().square().matrix() * k.one_minus_m2);
      if ((F.array() >= 1.0).any()) {
        broken = true;
        break;
      }
      Matrix next = (k.one_minus_m2.cwiseProduct((1.0 - F.array()).matrix()))
                        .cwiseInverse().asDiagonal() * k.V;
      change = (next - J).lpNorm<Eigen::Infinity>();
      J = std::move(next);
      if (change <= opt.tol) break;
    }
    res.J = J;
    res.diagnostics["iterations"] = it;
    res.diagnostics["final_change"] = change;
    res.diagnostics["converged"] = !broken && change <= opt.tol;
  }
  const Vector onsager = (res.J.array().square().matrix() * k.one_minus_m2 -
                          res.J.diagonal().array().square().matrix().cwiseProduct(k.one_minus_m2));
  res.theta = kinetic_fields(mom.m, res.J) + mom.m.cwiseProduct(onsager);
  res.diagnostics["F"] = std::vector<double>(F.data(), F.data() + L);
  res.diagnostics["condition_number"] = k.condition_number;
  return res;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood learning rules. Parameters are packed as an L×(L+1)
// matrix P = [θ | J] acting on x(t) = (1, s(t)), so H(t) = P x(t).

inline Matrix pack_params(const Vector& theta, const Matrix& J) {
  Matrix P(J.rows(), J.cols() + 1);
  P.col(0) = theta;
  P.rightCols(J.cols()) = J;
  return P;
}

namespace detail {

inline constexpr std::size_t kChunk = 8192;

// Loads segments [first, first+rows) into X with a leading column of ones.
inline void load_chunk(const Spin* configs, int L, std::size_t first, std::size_t rows,
                       Matrix& X) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Spin* s = configs + (first + r) * L;
    X(r, 0) = 1.0;
    for (int j = 0; j < L; ++j) X(r, j + 1) = s[j];
  }
}

// (1/T) Σ_k w_k x_k x_kᵀ over segments.
inline Matrix second_moment(const Spin* configs, const double* w, std::size_t n, int L,
                            double total) {
  Matrix M = Matrix::Zero(L + 1, L + 1);
  Matrix X(kChunk, L + 1);
  for (std::size_t first = 0; first < n; first += kChunk) {
    const std::size_t rows = std::min(kChunk, n - first);
    load_chunk(configs, L, first, rows, X);
    auto Xb = X.topRows(rows);
    Eigen::Map<const Vector> wb(w + first, static_cast<Eigen::Index>(rows));
    M.noalias() += Xb.transpose() * wb.asDiagonal() * Xb;
  }
  return M / total;
}

// tanh through the vectorised exp: sign(h)(1-e)/(1+e) with e = exp(-2|h|).
inline Eigen::ArrayXXd tanh_of(const Eigen::Ref<const Matrix>& h) {
  const Eigen::ArrayXXd e = (-2.0 * h.array().abs()).exp();
  return (1.0 - e) / (1.0 + e) * h.array().sign();
}

inline double log2cosh(double h) {
  const double a = std::abs(h);
  return a + std::log1p(std::exp(-2.0 * a));
}

}  // namespace detail

// Discretised path log-likelihood
//   L = Σ_{i,t} log[(1-γδt) δ(s_i(t+δt), s_i(t)) + γδt e^{s_i(t+δt)H_i(t)} / (2cosh H_i(t))]
// and its exact gradient with respect to P. For a no-flip record the term is
// log(1 - δt ω_i) and its H-derivative (γδt/2) s_i q_i / (1 - δt ω_i),
// q_i = 1 - tanh²H_i; for a flip record it is log(γδt) + s' H - log 2cosh H
// with derivative s' - tanh H. The leading-order no-flip derivative
// (γδt/2) q_i s_i is recovered as δt -> 0.
struct ShoObjective {
  double value = 0.0;
  Matrix gradient;  // L × (L+1), unnormalised
};

inline ShoObjective sho_objective(const FlipDecomposition& fd, const Matrix& P,
                                  bool with_value = true) {
  const int L = fd.L;
  require(P.rows() == L && P.cols() == L + 1, "sho_objective: parameter shape mismatch");
  const double gamma = fd.gamma;
  const double dt = fd.dt;
  const double gdt = gamma * dt;
  const double log_gdt = std::log(gdt);
  ShoObjective out;
  out.gradient = Matrix::Zero(L, L + 1);

  const std::size_t n = fd.segments();
  Matrix X(detail::kChunk, L + 1);
  Matrix H(detail::kChunk, L);
  Matrix W(detail::kChunk, L);
  std::size_t flip = 0;
  double value = 0.0;
  for (std::size_t first = 0; first < n; first += detail::kChunk) {
    const std::size_t rows = std::min(detail::kChunk, n - first);
    detail::load_chunk(fd.configs.data(), L, first, rows, X);
    auto Xb = X.topRows(rows);
    auto Hb = H.topRows(rows);
    Hb.noalias() = Xb * P.transpose();
    Eigen::ArrayXXd T = detail::tanh_of(Hb);
    const auto S = Xb.rightCols(L).array();
    Eigen::Map<const Eigen::ArrayXd> cells(fd.cells.data() + first, static_cast<Eigen::Index>(rows));
    Eigen::ArrayXXd stay = 1.0 - (0.5 * gdt) * (1.0 - S * T);
    W.topRows(rows) = (((0.5 * gdt) * S * (1.0 - T.square()) / stay).colwise() * cells).matrix();
    if (with_value) value += (stay.log().colwise() * cells).sum();
    while (flip < fd.flip_count() && fd.flip_segment[flip] < first + rows) {
      const std::size_t r = fd.flip_segment[flip] - first;
      const int i = fd.flip_spin[flip];
      const double h = Hb(r, i);
      const double s = S(r, i);
      const double th = T(r, i);
      const double st = stay(r, i);
      const double after = -s;
      W(r, i) += (after - th) - 0.5 * gdt * s * (1.0 - th * th) / st;
      if (with_value) value += log_gdt + after * h - detail::log2cosh(h) - std::log(st);
      ++flip;
    }
    out.gradient.noalias() += W.topRows(rows).transpose() * Xb;
  }
  out.value = value;
  return out;
}

struct LearningOptions {
  double eta = 1.0;
  int max_epochs = 500;
  double tol = 1e-7;  // max-norm of the per-unit-time gradient / residual
  bool precondition = true;
  bool symmetrize = false;  // symmetrise with zero diagonal after every epoch
  int divergence_window = 100;
  int anderson = 5;  // mixing depth, 0 for plain preconditioned ascent
};

namespace detail {

// Gradient-ascent driver shared by SHO and AVE. step(P) returns the ascent
// direction per unit time (gradient for SHO, moment residual for AVE).
// With preconditioning the plain update is P += η G M⁻¹ / scale, where M is
// the time-averaged second moment of x = (1, s) and scale approximates the
// curvature per unit of M. Anderson mixing over the last `anderson` updates
// accelerates this fixed-point iteration; its history is dropped whenever
// the gradient norm rises.
inline void project_symmetric(Matrix& P, int L) {
  Matrix J = P.rightCols(L);
  J = 0.5 * (J + J.transpose()).eval();
  J.diagonal().setZero();
  P.rightCols(L) = J;
}

template <typename Step>
InferenceResult run_learning(const std::string& method, int L, const Matrix& M, double scale,
                             const LearningOptions& opt, Step&& step) {
  require(opt.eta > 0.0, method + ": eta must be positive");
  require(opt.anderson >= 0, method + ": anderson depth must be >= 0");
  Matrix precond = Matrix::Identity(L + 1, L + 1) / scale;
  if (opt.precondition) {
    Eigen::LDLT<Matrix> ldlt(M);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive())
      precond = ldlt.solve(Matrix::Identity(L + 1, L + 1)) / scale;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(L) * (L + 1);
  Matrix P = Matrix::Zero(L, L + 1);
  Vector x_prev, f_prev;
  std::vector<Vector> dX, dF;
  double norm = INFINITY, previous = INFINITY;
  int growing = 0, epoch = 0;
  for (; epoch < opt.max_epochs; ++epoch) {
    Matrix G = step(P);
    Matrix D = opt.eta * G * precond;
    if (opt.symmetrize) {
      project_symmetric(G, L);
      project_symmetric(D, L);
    }
    norm = G.lpNorm<Eigen::Infinity>();
    if (!std::isfinite(norm)) throw NumericalError(method + ": diverged; use a smaller eta");
    if (norm <= opt.tol) break;
    growing = (norm > previous) ? growing + 1 : 0;
    if (growing >= opt.divergence_window)
      throw NumericalError(method + ": gradient norm grew for " + std::to_string(growing) +
                           " consecutive epochs; use a smaller eta");
    if (growing > 0) {
      dX.clear();
      dF.clear();
    }
    previous = norm;

    Vector x = Eigen::Map<const Vector>(P.data(), n);
    Vector f = Eigen::Map<const Vector>(D.data(), n);
    if (opt.anderson > 0 && x_prev.size() == n && growing == 0) {
      dX.push_back(x - x_prev);
      dF.push_back(f - f_prev);
      if (static_cast<int>(dX.size()) > opt.anderson) {
        dX.erase(dX.begin());
        dF.erase(dF.begin());
      }
    }
    x_prev = x;
    f_prev = f;
    Vector next = x + f;
    if (!dF.empty()) {
      Matrix Fm(n, static_cast<Eigen::Index>(dF.size()));
      Matrix Xm(n, static_cast<Eigen::Index>(dX.size()));
      for (std::size_t c = 0; c < dF.size(); ++c) {
        Fm.col(c) = dF[c];
        Xm.col(c) = dX[c];
      }
      const Vector w = Fm.colPivHouseholderQr().solve(f);
      if (w.allFinite()) next -= (Xm + Fm) * w;
    }
    P = Eigen::Map<const Matrix>(next.data(), L, L + 1);
    if (opt.symmetrize) project_symmetric(P, L);
  }
  InferenceResult res;
  res.method = method;
  res.theta = P.col(0);
  res.J = P.rightCols(L);
  res.hyperparams = {{"eta", opt.eta}, {"max_epochs", opt.max_epochs}, {"tol", opt.tol},
                     {"precondition", opt.precondition}, {"symmetrize", opt.symmetrize},
                     {"anderson", opt.anderson}};
  res.diagnostics = {{"epochs", epoch}, {"final_gradient_norm", norm},
                     {"converged", norm <= opt.tol}};
  return res;
}

}  // namespace detail

// Spin-history-only learning: gradient ascent on the discretised path
// likelihood, normalised per unit of observed time so η does not depend on δt.
inline InferenceResult infer_sho(const FlipDecomposition& fd, const LearningOptions& opt = {}) {
  require(fd.n_cells > 0, "SHO: empty decomposition");
  const int L = fd.L;
  const double T = fd.duration();
  Matrix M = detail::second_moment(fd.configs.data(), fd.cells.data(), fd.segments(), L,
                                   static_cast<double>(fd.n_cells));
  auto step = [&](const Matrix& P) {
    return Matrix(sho_objective(fd, P, false).gradient / T);
  };
  InferenceResult res = detail::run_learning("SHO", L, M, 0.5 * fd.gamma, opt, step);
  res.hyperparams["dt"] = fd.dt;
  res.hyperparams["gamma"] = fd.gamma;
  res.diagnostics["dt_refinements"] = fd.refinements;
  res.diagnostics["flip_records"] = fd.flip_count();
  return res;
}

// ⟨tanh(H_i) x_j⟩ time-averaged exactly over the piecewise-constant path.
inline Matrix path_tanh_average(const PathSegments& path, const Matrix& P) {
  const int L = path.L;
  Matrix out = Matrix::Zero(L, L + 1);
  Matrix X(detail::kChunk, L + 1);
  Matrix H(detail::kChunk, L);
  const std::size_t n = path.size();
  for (std::size_t first = 0; first < n; first += detail::kChunk) {
    const std::size_t rows = std::min(detail::kChunk, n - first);
    detail::load_chunk(path.configs.data(), L, first, rows, X);
    auto Xb = X.topRows(rows);
    auto Hb = H.topRows(rows);
    Hb.noalias() = Xb * P.transpose();
    Eigen::Map<const Eigen::ArrayXd> d(path.durations.data() + first, static_cast<Eigen::Index>(rows));
    Hb = (detail::tanh_of(Hb).colwise() * d).matrix();
    out.noalias() += Hb.transpose() * Xb;
  }
  return out / path.span();
}

// Stationary targets of AVE: ⟨tanh H_i⟩ = m_i and
// ⟨tanh(H_i) s_j⟩ = ⟨s_i s_j⟩ + γ⁻¹ dC_ij/dτ(0).
inline Matrix ave_targets(const MomentSet& mom) {
  require(mom.has_derivative(), "AVE: moments carry no dC/dτ(0)");
  Matrix T(mom.L, mom.L + 1);
  T.col(0) = mom.m;
  T.rightCols(mom.L) = mom.second() + mom.dC0 / mom.gamma;
  return T;
}

// AVE learning: δP ∝ targets - ⟨tanh(H) x⟩ over the given path, which must
// be the window the moments were computed over.
inline InferenceResult infer_ave(const MomentSet& mom, const PathSegments& path,
                                 const LearningOptions& opt = {}) {
  require(mom.L == path.L, "AVE: moments and path disagree on L");
  require(path.size() > 0 && path.span() > 0.0, "AVE: empty path");
  const int L = mom.L;
  const Matrix targets = ave_targets(mom);
  Matrix M = detail::second_moment(path.configs.data(), path.durations.data(), path.size(), L,
                                   path.span());
  auto step = [&](const Matrix& P) { return Matrix(targets - path_tanh_average(path, P)); };
  InferenceResult res = detail::run_learning("AVE", L, M, 1.0, opt, step);
  res.hyperparams["gamma"] = mom.gamma;
  return res;
}

inline InferenceResult infer_ave(const MomentSet& mom, const SpinTrajectory& traj,
                                 double burn_in, const LearningOptions& opt = {}) {
  require(mom.L == traj.L, "AVE: moments and trajectory disagree on L");
  InferenceResult res = infer_ave(mom, path_segments(traj, burn_in, traj.t_end), opt);
  res.hyperparams["burn_in"] = burn_in;
  return res;
}

}  // namespace isinglab
