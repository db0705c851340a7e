// Asynchronous Glauber dynamics: single-spin flip rates, three Monte Carlo
// schemes (Gillespie, per-spin Bernoulli, random pick with heat bath), exact
// master-equation integration for small systems, and snapshot sampling.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace isinglab {

// ω_i(s) = (γ/2)[1 - s_i tanh(H_i)], H_i = θ_i + Σ_j J_ij s_j
inline double glauber_rate(double gamma, Spin s_i, double field) {
  return 0.5 * gamma * (1.0 - s_i * std::tanh(field));
}

inline double effective_field(const CouplingModel& model, const SpinVector& s, int i) {
  double h = model.theta(i);
  for (int j = 0; j < model.L; ++j) h += model.J(i, j) * s[j];
  return h;
}

inline double rate(const CouplingModel& model, const SpinVector& config, int i,
                   double gamma = 1.0) {
  require(i >= 0 && i < model.L, "rate: spin index out of range");
  require(static_cast<int>(config.size()) == model.L, "rate: configuration length mismatch");
  return glauber_rate(gamma, config[i], effective_field(model, config, i));
}

// Spin configuration with cached fields and rates. flip(k) updates the fields
// using column k of J only.
class GlauberState {
 public:
  GlauberState(const CouplingModel& model, double gamma, SpinVector s)
      : model_(&model), gamma_(gamma), s_(std::move(s)),
        h_(model.L), w_(model.L) {
    require(static_cast<int>(s_.size()) == model.L, "initial configuration has wrong length");
    recompute();
  }

  void recompute() {
    const int L = model_->L;
    for (int i = 0; i < L; ++i) h_(i) = effective_field(*model_, s_, i);
    refresh_rates();
  }

  void flip(int k) {
    const double delta = -2.0 * s_[k];
    s_[k] = static_cast<Spin>(-s_[k]);
    h_.noalias() += delta * model_->J.col(k);
    refresh_rates();
  }

  double rate(int i) const { return w_(i); }
  double total() const { return total_; }
  double field(int i) const { return h_(i); }
  const Vector& fields() const { return h_; }
  const SpinVector& spins() const { return s_; }

  // Index chosen with probability ω_i / ω_TOT given u uniform in [0, 1).
  int pick(double u) const {
    double target = u * total_;
    double acc = 0.0;
    const int L = model_->L;
    for (int i = 0; i < L; ++i) {
      acc += w_(i);
      if (target < acc) return i;
    }
    for (int i = L - 1; i >= 0; --i)
      if (w_(i) > 0.0) return i;
    return L - 1;
  }

 private:
  void refresh_rates() {
    total_ = 0.0;
    for (int i = 0; i < model_->L; ++i) {
      w_(i) = glauber_rate(gamma_, s_[i], h_(i));
      total_ += w_(i);
    }
  }

  const CouplingModel* model_;
  double gamma_;
  SpinVector s_;
  Vector h_;
  Vector w_;
  double total_ = 0.0;
};

inline SpinTrajectory simulate_gillespie(const CouplingModel& model, double gamma,
                                         double t_end, SpinVector initial,
                                         std::uint64_t seed) {
  model.validate();
  require(t_end > 0.0, "simulate_gillespie: t_end must be positive");
  require(gamma > 0.0, "simulate_gillespie: gamma must be positive");
  SpinTrajectory traj;
  traj.L = model.L;
  traj.gamma = gamma;
  traj.t_end = t_end;
  traj.initial = initial;
  traj.scheme = "gillespie";
  traj.seed = seed;

  Rng rng = make_rng(seed);
  GlauberState state(model, gamma, std::move(initial));
  traj.events.reserve(static_cast<std::size_t>(std::min(1e8, 0.6 * gamma * model.L * t_end)));
  double t = 0.0;
  while (true) {
    const double total = state.total();
    if (!(total > 0.0)) break;
    const double prev = t;
    t += exponential(rng, total);
    // a waiting time below one ulp of t would repeat a timestamp
    if (t <= prev) t = std::nextafter(prev, INFINITY);
    if (t > t_end) break;
    int k = state.pick(uniform01(rng));
    state.flip(k);
    traj.events.push_back({t, k});
  }
  return traj;
}

enum class DiscreteScheme { PerSpinBernoulli, RandomPick };

inline std::string to_string(DiscreteScheme s) {
  return s == DiscreteScheme::PerSpinBernoulli ? "per-spin-bernoulli" : "random-pick";
}

inline DiscreteScheme discrete_scheme_from_string(const std::string& s) {
  if (s == "per-spin-bernoulli") return DiscreteScheme::PerSpinBernoulli;
  if (s == "random-pick") return DiscreteScheme::RandomPick;
  throw ParameterError("unknown discrete scheme '" + s + "'");
}

// Discrete-time schemes on a grid of step dt.
//
// per-spin-bernoulli: every step, each spin i (in index order, against the
//   current configuration) flips with probability ω_i dt; requires γ dt <= 0.1.
//   The flip of spin i in step k is stamped at k dt + (i+1) dt / L so event
//   times stay strictly increasing.
// random-pick: every step one spin is picked uniformly and, with probability
//   γ L dt, resampled from the heat bath P(+1) = 1/(1+exp(-2H)); requires
//   γ L dt <= 1. With dt = 1/(γL) every step is an update.
inline SpinTrajectory simulate_discrete(const CouplingModel& model, double gamma, double dt,
                                        std::int64_t n_steps, SpinVector initial,
                                        std::uint64_t seed, DiscreteScheme scheme) {
  model.validate();
  require(gamma > 0.0 && dt > 0.0, "simulate_discrete: gamma and dt must be positive");
  require(n_steps > 0, "simulate_discrete: n_steps must be positive");
  const int L = model.L;
  if (scheme == DiscreteScheme::PerSpinBernoulli) {
    if (gamma * dt > 0.1)
      throw ParameterError("simulate_discrete: gamma*dt = " + fmt17(gamma * dt) +
                           " exceeds 0.1 for per-spin-bernoulli");
    if (gamma * dt > 0.01)
      std::clog << "isinglab: warning: gamma*dt = " << gamma * dt
                << " > 0.01; per-spin-bernoulli discretisation bias may be visible\n";
  } else {
    if (gamma * dt * L > 1.0)
      throw ParameterError("simulate_discrete: random-pick needs gamma*L*dt <= 1");
  }

  SpinTrajectory traj;
  traj.L = L;
  traj.gamma = gamma;
  traj.t_end = static_cast<double>(n_steps) * dt;
  traj.initial = initial;
  traj.scheme = to_string(scheme);
  traj.seed = seed;

  Rng rng = make_rng(seed);
  GlauberState state(model, gamma, std::move(initial));
  if (scheme == DiscreteScheme::PerSpinBernoulli) {
    for (std::int64_t k = 0; k < n_steps; ++k) {
      const double t0 = static_cast<double>(k) * dt;
      for (int i = 0; i < L; ++i) {
        if (uniform01(rng) < state.rate(i) * dt) {
          state.flip(i);
          traj.events.push_back({t0 + dt * (i + 1) / L, i});
        }
      }
    }
  } else {
    const double p_update = gamma * dt * L;
    for (std::int64_t k = 0; k < n_steps; ++k) {
      int i = static_cast<int>(uniform01(rng) * L);
      if (i >= L) i = L - 1;
      double u_update = uniform01(rng);
      double u_value = uniform01(rng);
      if (u_update >= p_update) continue;
      const double p_up = 1.0 / (1.0 + std::exp(-2.0 * state.field(i)));
      const Spin next = (u_value < p_up) ? Spin{1} : Spin{-1};
      if (next != state.spins()[i]) {
        state.flip(i);
        traj.events.push_back({static_cast<double>(k + 1) * dt, i});
      }
    }
  }
  return traj;
}

// Probability vector over the 2^L configurations (bit i set <=> s_i = +1).
struct DistributionState {
  int L = 0;
  std::vector<double> prob;
  double time = 0.0;
};

inline constexpr int kMasterEquationMaxL = 12;

namespace detail {

class MasterEquation {
 public:
  MasterEquation(const CouplingModel& model, double gamma)
      : L_(model.L), n_(1u << model.L), rates_(static_cast<std::size_t>(n_) * model.L) {
    for (std::uint32_t x = 0; x < n_; ++x) {
      SpinVector s = config_of(x, L_);
      for (int i = 0; i < L_; ++i) rates_[x * L_ + i] = rate(model, s, i, gamma);
    }
  }

  // dp/dt(x) = Σ_i ω_i(x^i) p(x^i) - Σ_i ω_i(x) p(x), x^i = x with spin i flipped
  void derivative(const std::vector<double>& p, std::vector<double>& dp) const {
    for (std::uint32_t x = 0; x < n_; ++x) {
      double gain = 0.0, loss = 0.0;
      for (int i = 0; i < L_; ++i) {
        const std::uint32_t y = x ^ (1u << i);
        gain += rates_[y * L_ + i] * p[y];
        loss += rates_[x * L_ + i];
      }
      dp[x] = gain - loss * p[x];
    }
  }

  double max_total_rate() const {
    double m = 0.0;
    for (std::uint32_t x = 0; x < n_; ++x) {
      double t = 0.0;
      for (int i = 0; i < L_; ++i) t += rates_[x * L_ + i];
      m = std::max(m, t);
    }
    return m;
  }

  std::uint32_t size() const { return n_; }

 private:
  int L_;
  std::uint32_t n_;
  std::vector<double> rates_;
};

}  // namespace detail

// Dormand-Prince 5(4) with local error control (tolerance 1e-10 absolute per
// component, well inside the 1e-9 budget) and renormalisation after every
// accepted step.
inline DistributionState integrate_master_equation(const CouplingModel& model, double gamma,
                                                   double t_end,
                                                   const std::vector<double>& initial,
                                                   double tolerance = 1e-10) {
  model.validate();
  if (model.L > kMasterEquationMaxL)
    throw CapacityError("master equation limited to L <= " +
                        std::to_string(kMasterEquationMaxL));
  require(t_end >= 0.0, "integrate_master_equation: t_end must be >= 0");
  require(gamma > 0.0, "integrate_master_equation: gamma must be positive");
  const std::size_t n = std::size_t{1} << model.L;
  require(initial.size() == n, "integrate_master_equation: initial distribution has wrong size");
  double mass = 0.0;
  for (double p : initial) {
    require(p >= 0.0, "integrate_master_equation: negative probability");
    mass += p;
  }
  require(std::abs(mass - 1.0) < 1e-9, "integrate_master_equation: initial distribution not normalised");

  detail::MasterEquation eq(model, gamma);
  std::vector<double> p = initial;
  for (auto& v : p) v /= mass;

  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  std::array<std::vector<double>, 7> k;
  for (auto& v : k) v.assign(n, 0.0);
  std::vector<double> tmp(n), next(n);

  double t = 0.0;
  double h = std::min(t_end, 0.1 / std::max(eq.max_total_rate(), 1e-12));
  eq.derivative(p, k[0]);
  while (t < t_end) {
    h = std::min(h, t_end - t);
    auto stage = [&](std::vector<double>& out, std::initializer_list<std::pair<int, double>> terms) {
      for (std::size_t x = 0; x < n; ++x) {
        double acc = p[x];
        for (const auto& [idx, coef] : terms) acc += h * coef * k[idx][x];
        out[x] = acc;
      }
    };
    stage(tmp, {{0, a21}});
    eq.derivative(tmp, k[1]);
    stage(tmp, {{0, a31}, {1, a32}});
    eq.derivative(tmp, k[2]);
    stage(tmp, {{0, a41}, {1, a42}, {2, a43}});
    eq.derivative(tmp, k[3]);
    stage(tmp, {{0, a51}, {1, a52}, {2, a53}, {3, a54}});
    eq.derivative(tmp, k[4]);
    stage(tmp, {{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}});
    eq.derivative(tmp, k[5]);
    stage(next, {{0, b1}, {2, b3}, {3, b4}, {4, b5}, {5, b6}});
    eq.derivative(next, k[6]);
    double err = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      double e = h * (e1 * k[0][x] + e3 * k[2][x] + e4 * k[3][x] + e5 * k[4][x] +
                      e6 * k[5][x] + e7 * k[6][x]);
      err = std::max(err, std::abs(e));
    }
    if (err <= tolerance) {
      t += h;
      double total = 0.0;
      for (auto& v : next) {
        if (v < 0.0) v = 0.0;
        total += v;
      }
      for (std::size_t x = 0; x < n; ++x) p[x] = next[x] / total;
      eq.derivative(p, k[0]);
    }
    const double factor = err > 0.0 ? 0.9 * std::pow(tolerance / err, 0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < 1e-14 * std::max(1.0, t_end))
      throw NumericalError("integrate_master_equation: step size underflow");
  }
  return {model.L, std::move(p), t_end};
}

inline std::vector<double> point_mass(const SpinVector& s) {
  std::vector<double> p(std::size_t{1} << s.size(), 0.0);
  p[index_of(s)] = 1.0;
  return p;
}

// Configurations read at times burn_in + k*interval, k = 0..n_samples-1.
inline SampleTable sample_snapshots(const SpinTrajectory& traj, double burn_in,
                                    double interval, std::size_t n_samples) {
  require(interval > 0.0, "sample_snapshots: interval must be positive");
  require(n_samples >= 1, "sample_snapshots: n_samples must be positive");
  require(burn_in >= 0.0, "sample_snapshots: burn_in must be >= 0");
  if (burn_in + static_cast<double>(n_samples) * interval > traj.t_end)
    throw ParameterError("sample_snapshots: trajectory too short for requested samples");
  SampleTable table(traj.L);
  table.data.reserve(n_samples * traj.L);
  SpinVector s = traj.initial;
  std::size_t e = 0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = burn_in + static_cast<double>(k) * interval;
    while (e < traj.events.size() && traj.events[e].t <= t) {
      s[traj.events[e].spin] = static_cast<Spin>(-s[traj.events[e].spin]);
      ++e;
    }
    table.add_row(s);
  }
  return table;
}

}  // namespace isinglab
