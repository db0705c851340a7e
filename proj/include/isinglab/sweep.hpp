// Simulate-infer-score pipeline on SK models and the replicated parameter
// sweeps built on it.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/dynamics.hpp"
#include "isinglab/equilibrium.hpp"
#include "isinglab/kinetic.hpp"
#include "isinglab/metrics.hpp"
#include "isinglab/model.hpp"
#include "isinglab/parallel.hpp"
#include "isinglab/stats.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace isinglab {

inline const std::vector<std::string>& pipeline_methods() {
  static const std::vector<std::string> m = {"nmf", "tap", "asyn-nmf", "asyn-tap", "sho", "ave"};
  return m;
}

struct PipelineConfig {
  int L = 20;
  double g = 0.3;
  double k = 1.0;
  double theta = 0.0;     // uniform external field
  double updates = 1e6;   // update events after burn-in: γ L (t_end - burn_in)
  double gamma = 1.0;
  double burn_in = 100.0; // in units of 1/γ
  double sho_dt = 0.01;   // in units of 1/γ
  std::vector<std::string> methods = {"asyn-nmf", "sho"};
  std::uint64_t model_seed = 1;
  std::uint64_t sim_seed = 2;
  LearningOptions learning;

  double t_end() const { return (burn_in + updates / L) / gamma; }
};

struct PipelineResult {
  CouplingModel model;
  std::map<std::string, InferenceResult> results;
  std::map<std::string, std::string> errors;
  std::map<std::string, double> mse;
  std::size_t flips = 0;
};

inline InferenceResult run_method(const std::string& method, const MomentSet& mom,
                                  const SpinTrajectory& traj, double burn_in,
                                  const PipelineConfig& cfg) {
  if (method == "nmf") return infer_nmf(mom);
  if (method == "tap") return infer_tap(mom);
  if (method == "asyn-nmf") return infer_asyn_nmf(mom);
  if (method == "asyn-tap") return infer_asyn_tap(mom);
  if (method == "sho")
    return infer_sho(flip_decompose(traj, cfg.sho_dt / cfg.gamma, burn_in), cfg.learning);
  if (method == "ave") return infer_ave(mom, traj, burn_in, cfg.learning);
  throw ParameterError("unknown pipeline method '" + method + "'");
}

inline PipelineResult run_pipeline(const PipelineConfig& cfg) {
  require(cfg.updates > 0.0, "pipeline: updates must be positive");
  require(cfg.gamma > 0.0, "pipeline: gamma must be positive");
  PipelineResult out;
  out.model = generate_sk({cfg.L, cfg.g, cfg.k, cfg.model_seed});
  out.model.theta.setConstant(cfg.theta);
  Rng init_rng = make_rng(cfg.sim_seed, 0x696e6974);
  SpinTrajectory traj = simulate_gillespie(out.model, cfg.gamma, cfg.t_end(),
                                           random_spins(cfg.L, init_rng), cfg.sim_seed);
  out.flips = traj.events.size();
  const double burn_in = cfg.burn_in / cfg.gamma;
  MomentSet mom = trajectory_moments(traj, {0.0}, burn_in, DerivativeMethod::Event);
  for (const auto& m : cfg.methods) {
    try {
      InferenceResult r = run_method(m, mom, traj, burn_in, cfg);
      out.mse[m] = mse(out.model.J, r.J);
      out.results[m] = std::move(r);
    } catch (const Error& e) {
      out.errors[m] = e.what();
    }
  }
  return out;
}

enum class SweepAxis { DataLength, Size, Field, G };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "data-length") return SweepAxis::DataLength;
  if (s == "size") return SweepAxis::Size;
  if (s == "field") return SweepAxis::Field;
  if (s == "g") return SweepAxis::G;
  throw ParameterError("unknown sweep axis '" + s + "' (data-length, size, field, g)");
}

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::DataLength: return "data-length";
    case SweepAxis::Size: return "size";
    case SweepAxis::Field: return "field";
    case SweepAxis::G: return "g";
  }
  return "";
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::DataLength;
  std::vector<double> values;
  int replicas = 1;
  std::uint64_t seed = 1;
  double updates_per_spin = 5e5;  // size axis: updates = updates_per_spin * L
  PipelineConfig base;
};

struct SweepRow {
  double value = 0.0;
  std::string method;
  double mse_mean = NAN;
  double mse_stderr = NAN;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<double> mse;  // per replica, NaN on failure
};

// Replica r draws its model from mix_seed(seed, r), shared by every axis
// value, and its trajectory from mix_seed(mix_seed(seed, r), cell + 1).
inline PipelineConfig sweep_cell_config(const SweepSpec& spec, std::size_t cell, int replica) {
  PipelineConfig c = spec.base;
  const double v = spec.values[cell];
  switch (spec.axis) {
    case SweepAxis::DataLength: c.updates = v; break;
    case SweepAxis::Size:
      c.L = static_cast<int>(std::lround(v));
      c.updates = spec.updates_per_spin * c.L;
      break;
    case SweepAxis::Field: c.theta = v; break;
    case SweepAxis::G: c.g = v; break;
  }
  c.model_seed = mix_seed(spec.seed, static_cast<std::uint64_t>(replica));
  c.sim_seed = mix_seed(c.model_seed, cell + 1);
  return c;
}

inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, unsigned workers = worker_count()) {
  require(!spec.values.empty(), "sweep: no axis values");
  require(spec.replicas >= 1, "sweep: replicas must be >= 1");
  require(!spec.base.methods.empty(), "sweep: no methods");
  const std::size_t n_cells = spec.values.size();
  const std::size_t n_jobs = n_cells * spec.replicas;
  std::vector<PipelineResult> runs(n_jobs);
  std::vector<std::string> failures(n_jobs);
  parallel_for(
      n_jobs,
      [&](std::size_t job) {
        const std::size_t cell = job / spec.replicas;
        const int rep = static_cast<int>(job % spec.replicas);
        try {
          runs[job] = run_pipeline(sweep_cell_config(spec, cell, rep));
        } catch (const std::exception& e) {
          failures[job] = e.what();
        }
      },
      workers);

  std::vector<SweepRow> rows;
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    for (const auto& method : spec.base.methods) {
      SweepRow row;
      row.value = spec.values[cell];
      row.method = method;
      double s = 0.0, ss = 0.0;
      for (int rep = 0; rep < spec.replicas; ++rep) {
        const auto& run = runs[cell * spec.replicas + rep];
        auto it = run.mse.find(method);
        if (it == run.mse.end()) {
          row.mse.push_back(NAN);
          ++row.n_failed;
          continue;
        }
        row.mse.push_back(it->second);
        s += it->second;
        ss += it->second * it->second;
        ++row.n_ok;
      }
      if (row.n_ok > 0) {
        row.mse_mean = s / row.n_ok;
        row.mse_stderr = row.n_ok > 1
                             ? std::sqrt(std::max(0.0, (ss - row.n_ok * row.mse_mean * row.mse_mean) /
                                                           (row.n_ok - 1)) / row.n_ok)
                             : 0.0;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRow>& rows) {
  os << "axis,value,method,mse_mean,mse_stderr,n_ok,n_failed\n";
  for (const auto& r : rows)
    os << to_string(axis) << ',' << fmt17(r.value) << ',' << r.method << ',' << fmt17(r.mse_mean)
       << ',' << fmt17(r.mse_stderr) << ',' << r.n_ok << ',' << r.n_failed << '\n';
}

// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "log_log_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    require(x[k] > 0.0 && y[k] > 0.0, "log_log_slope: values must be positive");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace isinglab
