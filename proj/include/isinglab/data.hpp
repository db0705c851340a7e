// Data containers shared across modules: independent-snapshot tables,
// event-list trajectories, and piecewise-constant path views of a trajectory.
#pragma once

#include "isinglab/core.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace isinglab {

// N rows × L columns of ±1 states, optionally weighted (weights empty means
// every row has weight one). Weighted rows let an exact distribution be fed
// to sample-based estimators as an "infinite" sample.
struct SampleTable {
  int L = 0;
  std::vector<Spin> data;  // row-major
  std::vector<double> weights;

  SampleTable() = default;
  explicit SampleTable(int n_spins) : L(n_spins) {}

  std::size_t rows() const { return L == 0 ? 0 : data.size() / static_cast<std::size_t>(L); }
  Spin at(std::size_t row, int i) const { return data[row * L + i]; }
  const Spin* row(std::size_t r) const { return data.data() + r * L; }
  double weight(std::size_t r) const { return weights.empty() ? 1.0 : weights[r]; }
  bool weighted() const { return !weights.empty(); }

  void add_row(const SpinVector& s) {
    require(static_cast<int>(s.size()) == L, "SampleTable: row length mismatch");
    require(!weighted(), "SampleTable: mixing weighted and unweighted rows");
    data.insert(data.end(), s.begin(), s.end());
  }

  void add_row(const SpinVector& s, double w) {
    require(static_cast<int>(s.size()) == L, "SampleTable: row length mismatch");
    require(w >= 0.0, "SampleTable: negative weight");
    if (!weighted() && rows() > 0) weights.assign(rows(), 1.0);
    data.insert(data.end(), s.begin(), s.end());
    weights.push_back(w);
  }

  double total_weight() const {
    if (!weighted()) return static_cast<double>(rows());
    double w = 0.0;
    for (double v : weights) w += v;
    return w;
  }

  SpinVector row_vector(std::size_t r) const { return SpinVector(row(r), row(r) + L); }
};

struct FlipEvent {
  double t = 0.0;
  int spin = 0;
};

struct SpinTrajectory {
  int L = 0;
  double gamma = 1.0;
  double t_end = 0.0;
  SpinVector initial;
  std::vector<FlipEvent> events;
  std::string scheme = "gillespie";
  std::uint64_t seed = 0;

  void validate() const {
    require(L >= 1, "trajectory: L must be positive");
    require(static_cast<int>(initial.size()) == L, "trajectory: initial has wrong length");
    require(gamma > 0.0, "trajectory: gamma must be positive");
    double prev = 0.0;
    for (const auto& e : events) {
      require(e.spin >= 0 && e.spin < L, "trajectory: spin index out of range");
      require(e.t > prev || (prev == 0.0 && e.t > 0.0), "trajectory: event times must increase strictly");
      require(e.t <= t_end, "trajectory: event after t_end");
      prev = e.t;
    }
  }

  // Configuration at time t (events at exactly t are applied).
  SpinVector config_at(double t) const {
    SpinVector s = initial;
    for (const auto& e : events) {
      if (e.t > t) break;
      s[e.spin] = static_cast<Spin>(-s[e.spin]);
    }
    return s;
  }
};

// Piecewise-constant view of a trajectory restricted to [t_from, t_to]:
// segment k holds configuration configs[k*L .. k*L+L) for duration
// durations[k].
struct PathSegments {
  int L = 0;
  double t_from = 0.0;
  double t_to = 0.0;
  std::vector<Spin> configs;
  std::vector<double> durations;

  std::size_t size() const { return durations.size(); }
  const Spin* config(std::size_t k) const { return configs.data() + k * L; }
  double span() const { return t_to - t_from; }
};

inline PathSegments path_segments(const SpinTrajectory& traj, double t_from, double t_to) {
  require(t_from >= 0.0 && t_to <= traj.t_end && t_to > t_from,
          "path_segments: window outside trajectory");
  PathSegments out;
  out.L = traj.L;
  out.t_from = t_from;
  out.t_to = t_to;
  SpinVector s = traj.initial;
  std::size_t e = 0;
  while (e < traj.events.size() && traj.events[e].t <= t_from) {
    s[traj.events[e].spin] = static_cast<Spin>(-s[traj.events[e].spin]);
    ++e;
  }
  out.configs.reserve((traj.events.size() - e + 1) * traj.L);
  double t = t_from;
  while (true) {
    double next = (e < traj.events.size()) ? std::min(traj.events[e].t, t_to) : t_to;
    if (next > t) {
      out.configs.insert(out.configs.end(), s.begin(), s.end());
      out.durations.push_back(next - t);
      t = next;
    }
    if (e >= traj.events.size() || traj.events[e].t >= t_to) break;
    s[traj.events[e].spin] = static_cast<Spin>(-s[traj.events[e].spin]);
    ++e;
  }
  return out;
}

}  // namespace isinglab
