// Sufficient statistics: equilibrium moments from snapshot tables, and
// stationary means, equal-time and lagged correlations and their τ=0
// derivative from event-list trajectories. Trajectory averages are exact
// integrals over the piecewise-constant spin paths.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace isinglab {

enum class DerivativeMethod {
  Event,      // instantaneous jump estimator from the flip events
  TwoPoint,   // (C(τ1) - C(0)) / τ1
  LinearFit,  // least-squares slope over the lag grid
};

inline std::string to_string(DerivativeMethod m) {
  switch (m) {
    case DerivativeMethod::Event: return "event";
    case DerivativeMethod::TwoPoint: return "two-point";
    case DerivativeMethod::LinearFit: return "linear-fit";
  }
  return "?";
}

inline DerivativeMethod derivative_method_from_string(const std::string& s) {
  if (s == "event") return DerivativeMethod::Event;
  if (s == "two-point") return DerivativeMethod::TwoPoint;
  if (s == "linear-fit") return DerivativeMethod::LinearFit;
  throw ParameterError("unknown derivative method '" + s + "'");
}

struct MomentSet {
  int L = 0;
  Vector m;
  Matrix c0;
  std::vector<double> lags;
  std::vector<Matrix> C_lags;
  Matrix dC0;  // empty when no time information is available
  double gamma = 1.0;
  double weight = 0.0;  // number of samples, or observed duration for trajectories
  std::string source = "samples";
  std::string derivative_method;

  bool has_derivative() const { return dC0.rows() == L && L > 0; }
  Matrix second() const { return c0 + m * m.transpose(); }
};

// Means and connected correlations over rows. A pseudocount λ mixes the
// moments with those of the uniform distribution: m -> (1-λ)m,
// ⟨s_i s_j⟩ -> (1-λ)⟨s_i s_j⟩ for i != j, ⟨s_i²⟩ = 1.
inline MomentSet sample_moments(const SampleTable& table, double pseudocount = 0.0) {
  require(table.L >= 1, "sample_moments: empty table");
  require(table.rows() >= 2, "sample_moments: need at least 2 samples");
  require(pseudocount >= 0.0 && pseudocount <= 1.0, "sample_moments: pseudocount must be in [0, 1]");
  const int L = table.L;
  const std::size_t N = table.rows();
  const double W = table.total_weight();
  require(W > 0.0, "sample_moments: zero total weight");

  Vector mean = Vector::Zero(L);
  Matrix second = Matrix::Zero(L, L);
  constexpr std::size_t kBlock = 4096;
  Matrix X(kBlock, L);
  Vector w(kBlock);
  for (std::size_t start = 0; start < N; start += kBlock) {
    const std::size_t rows = std::min(kBlock, N - start);
    for (std::size_t r = 0; r < rows; ++r) {
      const Spin* s = table.row(start + r);
      for (int i = 0; i < L; ++i) X(r, i) = s[i];
      w(r) = table.weight(start + r);
    }
    auto Xb = X.topRows(rows);
    auto wb = w.head(rows);
    mean.noalias() += Xb.transpose() * wb;
    second.noalias() += Xb.transpose() * wb.asDiagonal() * Xb;
  }
  mean /= W;
  second /= W;

  const double keep = 1.0 - pseudocount;
  mean *= keep;
  second *= keep;
  second.diagonal().setOnes();

  MomentSet out;
  out.L = L;
  out.m = mean;
  out.c0 = second - mean * mean.transpose();
  out.c0 = (0.5 * (out.c0 + out.c0.transpose())).eval();
  out.lags = {0.0};
  out.C_lags = {out.c0};
  out.weight = W;
  out.source = "samples";
  return out;
}

// Slope at τ=0 from a lag grid starting at 0.
inline Matrix estimate_dC0(const std::vector<double>& lags, const std::vector<Matrix>& C_lags,
                           DerivativeMethod method) {
  require(lags.size() == C_lags.size(), "estimate_dC0: lag grid and correlation list differ in size");
  require(lags.size() >= 2, "estimate_dC0: need at least two lag points");
  require(lags[0] == 0.0, "estimate_dC0: first lag must be 0");
  for (std::size_t k = 1; k < lags.size(); ++k)
    require(lags[k] > lags[k - 1], "estimate_dC0: lags must increase");
  for (const auto& C : C_lags)
    require(C.rows() == C_lags[0].rows() && C.cols() == C_lags[0].cols(),
            "estimate_dC0: correlation matrices differ in shape");

  if (method == DerivativeMethod::TwoPoint) return (C_lags[1] - C_lags[0]) / lags[1];
  if (method != DerivativeMethod::LinearFit)
    throw ParameterError("estimate_dC0: method needs the trajectory (use trajectory_moments)");

  const std::size_t n = lags.size();
  double tbar = 0.0;
  for (double t : lags) tbar += t;
  tbar /= static_cast<double>(n);
  double sxx = 0.0;
  for (double t : lags) sxx += (t - tbar) * (t - tbar);
  Matrix cbar = Matrix::Zero(C_lags[0].rows(), C_lags[0].cols());
  for (const auto& C : C_lags) cbar += C;
  cbar /= static_cast<double>(n);
  Matrix slope = Matrix::Zero(cbar.rows(), cbar.cols());
  for (std::size_t k = 0; k < n; ++k) slope += (lags[k] - tbar) * (C_lags[k] - cbar);
  return slope / sxx;
}

// The lag grid used by linear-fit derivative estimation: four points
// evenly spaced over [0, span].
inline std::vector<double> four_point_lags(double span) {
  return {0.0, span / 3.0, 2.0 * span / 3.0, span};
}

namespace detail {

struct LaggedIntegrals {
  Matrix cross;  // ∫ s_i(t+τ) s_j(t) dt
  Vector mean_ahead;  // ∫ s_i(t+τ) dt
  Vector mean_now;    // ∫ s_j(t) dt
  double span = 0.0;
};

// Exact integrals over t in [t0, t1] of products of the two step functions
// s(t+τ) and s(t). Each flip of the shifted path closes an interval over
// which that spin was constant; the integral of the unshifted path over that
// interval comes from running cumulative integrals, so the cost is O(L) per
// event.
inline LaggedIntegrals lagged_integrals(const SpinTrajectory& traj, double t0, double t1,
                                        double tau) {
  const int L = traj.L;
  const auto& ev = traj.events;
  LaggedIntegrals out;
  out.span = t1 - t0;
  out.cross = Matrix::Zero(L, L);
  out.mean_ahead = Vector::Zero(L);
  out.mean_now = Vector::Zero(L);

  SpinVector now = traj.initial;
  std::size_t eb = 0;
  while (eb < ev.size() && ev[eb].t <= t0) {
    now[ev[eb].spin] = static_cast<Spin>(-now[ev[eb].spin]);
    ++eb;
  }
  SpinVector ahead = now;
  std::size_t ea = eb;
  while (ea < ev.size() && ev[ea].t <= t0 + tau) {
    ahead[ev[ea].spin] = static_cast<Spin>(-ahead[ev[ea].spin]);
    ++ea;
  }

  std::vector<double> cum_now(L, 0.0), last_now(L, t0);
  std::vector<double> cum_ahead(L, 0.0), last_ahead(L, t0);
  Matrix anchor = Matrix::Zero(L, L);  // anchor(k, j): ∫_{t0}^{last_ahead[k]} s_j(t) dt
  std::vector<double> integral_now(L);

  auto integrate_now_until = [&](double u) {
    for (int j = 0; j < L; ++j) integral_now[j] = cum_now[j] + now[j] * (u - last_now[j]);
  };
  auto close_ahead = [&](int k, double u) {
    integrate_now_until(u);
    const double sk = ahead[k];
    for (int j = 0; j < L; ++j) {
      out.cross(k, j) += sk * (integral_now[j] - anchor(k, j));
      anchor(k, j) = integral_now[j];
    }
    cum_ahead[k] += sk * (u - last_ahead[k]);
    last_ahead[k] = u;
  };

  while (true) {
    const double tb = (eb < ev.size() && ev[eb].t <= t1) ? ev[eb].t : INFINITY;
    const double ta = (ea < ev.size() && ev[ea].t - tau <= t1) ? ev[ea].t - tau : INFINITY;
    if (tb == INFINITY && ta == INFINITY) break;
    if (ta <= tb) {
      const int k = ev[ea].spin;
      close_ahead(k, ta);
      ahead[k] = static_cast<Spin>(-ahead[k]);
      ++ea;
    } else {
      const int j = ev[eb].spin;
      cum_now[j] += now[j] * (tb - last_now[j]);
      last_now[j] = tb;
      now[j] = static_cast<Spin>(-now[j]);
      ++eb;
    }
  }
  for (int k = 0; k < L; ++k) close_ahead(k, t1);
  integrate_now_until(t1);
  for (int j = 0; j < L; ++j) {
    out.mean_now(j) = integral_now[j];
    out.mean_ahead(j) = cum_ahead[j];
  }
  return out;
}

}  // namespace detail

// Jump estimator of dC_ij/dτ at τ=0+: (1/T) Σ over flips of spin i of
// (s_i after - s_i before) s_j(t-). Unbiased for the right derivative of the
// stationary lagged correlation.
inline Matrix event_derivative(const SpinTrajectory& traj, double t0, double t1) {
  const int L = traj.L;
  Matrix d = Matrix::Zero(L, L);
  SpinVector s = traj.initial;
  for (const auto& e : traj.events) {
    if (e.t > t1) break;
    if (e.t > t0) {
      const double jump = -2.0 * s[e.spin];
      for (int j = 0; j < L; ++j) d(e.spin, j) += jump * s[j];
    }
    s[e.spin] = static_cast<Spin>(-s[e.spin]);
  }
  return d / (t1 - t0);
}

inline MomentSet trajectory_moments(const SpinTrajectory& traj, std::vector<double> lags,
                                    double burn_in,
                                    DerivativeMethod method = DerivativeMethod::Event) {
  traj.validate();
  if (lags.empty()) lags = {0.0};
  require(lags.front() == 0.0, "trajectory_moments: lags must start with 0");
  for (std::size_t k = 1; k < lags.size(); ++k)
    require(lags[k] > lags[k - 1], "trajectory_moments: lags must increase");
  require(burn_in >= 0.0, "trajectory_moments: burn_in must be >= 0");
  const double max_lag = lags.back();
  if (!(traj.t_end - burn_in > max_lag))
    throw ParameterError("trajectory_moments: trajectory shorter than burn_in + max lag");

  const int L = traj.L;
  MomentSet out;
  out.L = L;
  out.gamma = traj.gamma;
  out.source = "trajectory";
  out.lags = lags;
  out.weight = traj.t_end - burn_in;
  for (double tau : lags) {
    const double t1 = traj.t_end - tau;
    auto I = detail::lagged_integrals(traj, burn_in, t1, tau);
    const double T = I.span;
    Vector ahead = I.mean_ahead / T;
    Vector now = I.mean_now / T;
    Matrix C = I.cross / T - ahead * now.transpose();
    if (tau == 0.0) {
      out.m = now;
      C = (0.5 * (C + C.transpose())).eval();
      out.c0 = C;
    }
    out.C_lags.push_back(std::move(C));
  }
  out.derivative_method = to_string(method);
  if (method == DerivativeMethod::Event) {
    out.dC0 = event_derivative(traj, burn_in, traj.t_end);
  } else {
    out.dC0 = estimate_dC0(out.lags, out.C_lags, method);
  }
  return out;
}

// Batch-means standard errors of the stationary means and equal-time
// connected correlations of a trajectory.
struct MomentErrors {
  Vector m;
  Matrix c0;
};

inline MomentErrors trajectory_moment_errors(const SpinTrajectory& traj, double burn_in,
                                             int n_batches = 20) {
  require(n_batches >= 2, "trajectory_moment_errors: need at least 2 batches");
  const int L = traj.L;
  const double width = (traj.t_end - burn_in) / n_batches;
  std::vector<Vector> ms;
  std::vector<Matrix> cs;
  for (int b = 0; b < n_batches; ++b) {
    const double t0 = burn_in + b * width;
    auto I = detail::lagged_integrals(traj, t0, t0 + width, 0.0);
    Vector m = I.mean_now / width;
    Matrix c = I.cross / width - m * m.transpose();
    ms.push_back(m);
    cs.push_back(c);
  }
  Vector mbar = Vector::Zero(L);
  Matrix cbar = Matrix::Zero(L, L);
  for (int b = 0; b < n_batches; ++b) {
    mbar += ms[b];
    cbar += cs[b];
  }
  mbar /= n_batches;
  cbar /= n_batches;
  MomentErrors err{Vector::Zero(L), Matrix::Zero(L, L)};
  for (int b = 0; b < n_batches; ++b) {
    err.m += (ms[b] - mbar).cwiseAbs2();
    err.c0 += (cs[b] - cbar).cwiseAbs2();
  }
  const double scale = 1.0 / (static_cast<double>(n_batches) * (n_batches - 1));
  err.m = (err.m * scale).cwiseSqrt();
  err.c0 = (err.c0 * scale).cwiseSqrt();
  return err;
}

// Discretised view of a trajectory on a regular grid of step dt starting at
// t0. Runs of consecutive cells that start in the same configuration are
// stored once: segment k starts in configs[k] and lasts cells[k] cells; the
// spins listed for segment k flip during its last cell. A flip of spin i in
// a cell is recorded against the configuration at the start of that cell.
struct FlipDecomposition {
  int L = 0;
  double gamma = 1.0;
  double dt = 0.0;
  double t0 = 0.0;
  std::int64_t n_cells = 0;
  int refinements = 0;
  std::vector<Spin> configs;
  std::vector<double> cells;
  std::vector<std::uint32_t> flip_segment;
  std::vector<int> flip_spin;

  std::size_t segments() const { return cells.size(); }
  std::size_t flip_count() const { return flip_spin.size(); }
  const Spin* config(std::size_t k) const { return configs.data() + k * L; }
  double duration() const { return static_cast<double>(n_cells) * dt; }
  std::int64_t no_flip_count() const {
    return n_cells * L - static_cast<std::int64_t>(flip_count());
  }
};

namespace detail {

// True when some spin flips twice within one grid cell.
inline bool has_double_flip(const SpinTrajectory& traj, double dt, double t0) {
  std::vector<std::int64_t> stamp(traj.L, -1);
  for (const auto& ev : traj.events) {
    if (ev.t <= t0) continue;
    const auto cell = static_cast<std::int64_t>(std::floor((ev.t - t0) / dt));
    if (stamp[ev.spin] == cell) return true;
    stamp[ev.spin] = cell;
  }
  return false;
}

inline bool try_flip_decompose(const SpinTrajectory& traj, double dt, double t0,
                               FlipDecomposition& out) {
  const int L = traj.L;
  out = FlipDecomposition{};
  out.L = L;
  out.gamma = traj.gamma;
  out.dt = dt;
  out.t0 = t0;
  out.n_cells = static_cast<std::int64_t>(std::floor((traj.t_end - t0) / dt));

  SpinVector s = traj.initial;
  std::size_t e = 0;
  while (e < traj.events.size() && traj.events[e].t <= t0) {
    s[traj.events[e].spin] = static_cast<Spin>(-s[traj.events[e].spin]);
    ++e;
  }
  std::vector<std::int64_t> stamp(L, -1);
  std::int64_t seg_start = 0;
  while (e < traj.events.size()) {
    const std::int64_t cell =
        static_cast<std::int64_t>(std::floor((traj.events[e].t - t0) / dt));
    if (cell >= out.n_cells) break;
    const auto seg = static_cast<std::uint32_t>(out.cells.size());
    out.configs.insert(out.configs.end(), s.begin(), s.end());
    out.cells.push_back(static_cast<double>(cell - seg_start + 1));
    while (e < traj.events.size()) {
      const auto& ev = traj.events[e];
      if (static_cast<std::int64_t>(std::floor((ev.t - t0) / dt)) != cell) break;
      if (stamp[ev.spin] == cell) return false;
      stamp[ev.spin] = cell;
      out.flip_segment.push_back(seg);
      out.flip_spin.push_back(ev.spin);
      s[ev.spin] = static_cast<Spin>(-s[ev.spin]);
      ++e;
    }
    seg_start = cell + 1;
  }
  if (seg_start < out.n_cells) {
    out.configs.insert(out.configs.end(), s.begin(), s.end());
    out.cells.push_back(static_cast<double>(out.n_cells - seg_start));
  }
  return true;
}

}  // namespace detail

// Halves dt until no spin flips twice within one cell, so every raw event
// maps to exactly one flip record.
inline FlipDecomposition flip_decompose(const SpinTrajectory& traj, double dt,
                                        double burn_in = 0.0, int max_refinements = 40) {
  traj.validate();
  require(dt > 0.0, "flip_decompose: dt must be positive");
  require(traj.gamma * dt <= 0.1 + 1e-12, "flip_decompose: gamma*dt must be <= 0.1");
  require(burn_in >= 0.0 && burn_in + dt <= traj.t_end, "flip_decompose: burn_in too large");
  FlipDecomposition out;
  for (int r = 0; r <= max_refinements; ++r) {
    if (!detail::has_double_flip(traj, dt, burn_in) &&
        detail::try_flip_decompose(traj, dt, burn_in, out)) {
      out.refinements = r;
      return out;
    }
    dt *= 0.5;
  }
  throw NumericalError("flip_decompose: dt too coarse after " +
                       std::to_string(max_refinements) + " refinements");
}

// Calls f(t, i, s_i(t), s_i(t+dt), s(t)) for every grid record. Linear in
// n_cells * L; intended for small trajectories.
template <typename F>
void for_each_record(const FlipDecomposition& fd, F&& f) {
  std::size_t next_flip = 0;
  std::int64_t cell = 0;
  std::vector<char> flips(fd.L);
  for (std::size_t k = 0; k < fd.segments(); ++k) {
    const Spin* cfg = fd.config(k);
    SpinVector s(cfg, cfg + fd.L);
    std::fill(flips.begin(), flips.end(), 0);
    while (next_flip < fd.flip_count() && fd.flip_segment[next_flip] == k)
      flips[fd.flip_spin[next_flip++]] = 1;
    const auto n = static_cast<std::int64_t>(fd.cells[k]);
    for (std::int64_t c = 0; c < n; ++c, ++cell) {
      const double t = fd.t0 + static_cast<double>(cell) * fd.dt;
      const bool last = (c == n - 1);
      for (int i = 0; i < fd.L; ++i) {
        const Spin after = (last && flips[i]) ? static_cast<Spin>(-s[i]) : s[i];
        f(t, i, s[i], after, s);
      }
    }
  }
}

}  // namespace isinglab
