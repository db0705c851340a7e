// isinglab command-line front end.
//
// Exit codes: 0 success, 2 parameter/capacity/domain error, 3 numerical
// failure (a <out>.diagnostics.json file is still written).

#include "isinglab/isinglab.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace isinglab;
using nlohmann::json;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParameterError("cannot write '" + path + "'");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParameterError("cannot open '" + path + "'");
  return is;
}

SpinTrajectory load_trajectory(const std::string& path) {
  auto is = open_in(path);
  return read_trajectory(is);
}

SampleTable load_samples(const std::string& path) {
  auto is = open_in(path);
  return read_samples(is);
}

SpinGrid load_grid(const std::string& path) {
  auto is = open_in(path);
  return read_grid(is);
}

// The subcommand chain and every option value (explicit or default), plus an
// argument vector that reproduces the run.
json build_manifest(const std::vector<CLI::App*>& chain) {
  json options = json::object();
  json argv = json::array();
  json path = json::array();
  for (CLI::App* app : chain) {
    if (app->get_parent()) {
      path.push_back(app->get_name());
      argv.push_back(app->get_name());
    }
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help") continue;
      const bool flag = opt->get_expected_min() == 0;
      std::vector<std::string> vals = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
      std::string joined;
      if (opt->count() > 0) {
        for (std::size_t k = 0; k < vals.size(); ++k) joined += (k ? "," : "") + vals[k];
      } else {
        joined = opt->get_default_str();
      }
      if (flag) {
        const bool on = opt->count() > 0 && joined != "false" && joined != "0";
        options[name] = on;
        if (on) argv.push_back("--" + name);
        continue;
      }
      options[name] = joined;
      if (!joined.empty()) {
        argv.push_back("--" + name);
        argv.push_back(joined);
      }
    }
  }
  return {{"format", "isinglab-manifest"}, {"version", kVersion}, {"command", path},
          {"options", options}, {"argv", argv}};
}

struct Context {
  std::vector<CLI::App*> chain;
  std::string out;

  void manifest() const {
    if (out.empty()) return;
    write_json_file(out + ".manifest.json", build_manifest(chain));
  }
};

// ---------------------------------------------------------------- gen
struct GenArgs {
  int L = 20;
  double g = 0.3;
  double k = 0.0;
  double theta = 0.0;
  double theta_spread = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_gen(const GenArgs& a) {
  CouplingModel m = generate_sk({a.L, a.g, a.k, a.seed});
  require(a.theta_spread >= 0.0, "gen: theta-spread must be >= 0");
  Rng rng = make_rng(a.seed, 0x7468);
  for (int i = 0; i < m.L; ++i)
    m.theta(i) = a.theta + a.theta_spread * (2.0 * uniform01(rng) - 1.0);
  m.meta["theta"] = a.theta;
  m.meta["theta_spread"] = a.theta_spread;
  write_json_file(a.out, model_to_json(m));
}

// ---------------------------------------------------------------- simulate
struct SimulateArgs {
  std::string model;
  double gamma = 1.0;
  double t_end = 0.0;
  double updates = 0.0;
  std::string scheme = "gillespie";
  double dt = 0.0;
  std::string initial;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a) {
  CouplingModel m = model_from_json(read_json_file(a.model));
  require((a.t_end > 0.0) != (a.updates > 0.0), "simulate: give exactly one of --t-end, --updates");
  require(a.gamma > 0.0, "simulate: gamma must be positive");
  const double t_end = a.t_end > 0.0 ? a.t_end : a.updates / (a.gamma * m.L);
  SpinVector init;
  if (a.initial.empty()) {
    Rng rng = make_rng(a.seed, 0x696e6974);
    init = random_spins(m.L, rng);
  } else {
    init = spins_from_string(a.initial);
    require(static_cast<int>(init.size()) == m.L, "simulate: initial configuration length != L");
  }
  SpinTrajectory traj;
  if (a.scheme == "gillespie") {
    traj = simulate_gillespie(m, a.gamma, t_end, init, a.seed);
  } else {
    require(a.dt > 0.0, "simulate: discrete schemes need --dt");
    const auto steps = static_cast<std::int64_t>(std::llround(t_end / a.dt));
    traj = simulate_discrete(m, a.gamma, a.dt, steps, init, a.seed, discrete_scheme_from_string(a.scheme));
  }
  auto os = open_out(a.out);
  write_trajectory(os, traj);
  std::cout << "events " << traj.events.size() << " t_end " << fmt17(traj.t_end) << "\n";
}

// ---------------------------------------------------------------- sample
struct SampleArgs {
  std::string trajectory;
  std::string model;
  double burn_in = 0.0;
  double interval = 1.0;
  std::size_t n = 1000;
  std::string out;
};

void cmd_sample(const SampleArgs& a) {
  require(a.trajectory.empty() != a.model.empty(), "sample: give exactly one of --trajectory, --model");
  SampleTable t;
  json meta;
  if (!a.trajectory.empty()) {
    t = sample_snapshots(load_trajectory(a.trajectory), a.burn_in, a.interval, a.n);
    meta = {{"source", "trajectory"}, {"burn_in", a.burn_in}, {"interval", a.interval}};
  } else {
    t = exact_sample_table(model_from_json(read_json_file(a.model)));
    meta = {{"source", "exact"}};
  }
  auto os = open_out(a.out);
  write_samples(os, t, meta);
}

// ---------------------------------------------------------------- moments
struct MomentsArgs {
  std::string samples, trajectory, grid;
  std::vector<double> lags;
  double burn_in = 0.0;
  std::string derivative = "event";
  double pseudocount = 0.0;
  double gamma = 1.0;
  std::string out;
};

MomentSet compute_moments(const MomentsArgs& a) {
  const int given = !a.samples.empty() + !a.trajectory.empty() + !a.grid.empty();
  require(given == 1, "moments: give exactly one of --samples, --trajectory, --grid");
  if (!a.samples.empty()) return sample_moments(load_samples(a.samples), a.pseudocount);
  if (!a.grid.empty()) return grid_moments(load_grid(a.grid), a.gamma, a.pseudocount);
  SpinTrajectory traj = load_trajectory(a.trajectory);
  const DerivativeMethod dm = derivative_method_from_string(a.derivative);
  std::vector<double> lags = a.lags;
  if (lags.empty()) lags = dm == DerivativeMethod::Event ? std::vector<double>{0.0}
                                                         : four_point_lags(0.6 / traj.gamma);
  return trajectory_moments(traj, lags, a.burn_in, dm);
}

void cmd_moments(const MomentsArgs& a) { write_json_file(a.out, moments_to_json(compute_moments(a))); }

// ---------------------------------------------------------------- infer
struct InferArgs {
  std::string method;
  std::string moments, samples, trajectory, grid;
  double burn_in = 0.0;
  double pseudocount = 0.0;
  double gamma = 1.0;
  double dt = 0.01;
  double eta = -1.0;
  int max_epochs = 500;
  double tol = -1.0;
  int anderson = 5;
  double lambda = -1.0;
  std::string mode = "cubic";
  bool symmetrize = false;
  std::string out;
};

InferenceResult cmd_infer_impl(const InferArgs& a) {
  const std::string& m = a.method;
  const int given = !a.moments.empty() + !a.samples.empty() + !a.trajectory.empty() + !a.grid.empty();
  require(given == 1, "infer: give exactly one of --moments, --samples, --trajectory, --grid");

  LearningOptions lo;
  if (a.eta > 0.0) lo.eta = a.eta;
  lo.max_epochs = a.max_epochs;
  if (a.tol > 0.0) lo.tol = a.tol;
  lo.anderson = a.anderson;
  lo.symmetrize = a.symmetrize;

  auto moments = [&]() -> MomentSet {
    if (!a.moments.empty()) return moments_from_json(read_json_file(a.moments));
    if (!a.samples.empty()) return sample_moments(load_samples(a.samples), a.pseudocount);
    if (!a.grid.empty()) return grid_moments(load_grid(a.grid), a.gamma, a.pseudocount);
    return trajectory_moments(load_trajectory(a.trajectory), {0.0}, a.burn_in);
  };

  if (m == "nmf") return infer_nmf(moments());
  if (m == "tap") return infer_tap(moments());
  if (m == "asyn-nmf") return infer_asyn_nmf(moments(), a.symmetrize);
  if (m == "asyn-tap") {
    AsynTapOptions o;
    o.mode = tap_mode_from_string(a.mode);
    o.max_iterations = a.max_epochs;
    if (a.tol > 0.0) o.tol = a.tol;
    return infer_asyn_tap(moments(), o);
  }
  if (m == "plm" || m == "bm") {
    SampleTable t;
    if (!a.samples.empty()) t = load_samples(a.samples);
    else if (!a.grid.empty()) t = load_grid(a.grid).table();
    else throw ParameterError("infer: " + m + " needs --samples or --grid");
    if (m == "plm") {
      PlmOptions o;
      o.lambda = a.lambda;
      if (a.tol > 0.0) o.grad_tol = a.tol;
      return infer_plm(t, o);
    }
    BmOptions o;
    if (a.eta > 0.0) o.eta = a.eta;
    if (a.tol > 0.0) o.tol = a.tol;
    o.pseudocount = a.pseudocount;
    return infer_bm(t, o);
  }
  if (m == "sho") {
    if (!a.trajectory.empty()) {
      InferenceResult r = infer_sho(flip_decompose(load_trajectory(a.trajectory), a.dt, a.burn_in), lo);
      r.hyperparams["burn_in"] = a.burn_in;
      return r;
    }
    if (!a.grid.empty()) return infer_sho(grid_flip_decomposition(load_grid(a.grid), a.gamma), lo);
    throw ParameterError("infer: sho needs --trajectory or --grid");
  }
  if (m == "ave") {
    if (!a.trajectory.empty()) {
      SpinTrajectory traj = load_trajectory(a.trajectory);
      return infer_ave(trajectory_moments(traj, {0.0}, a.burn_in), traj, a.burn_in, lo);
    }
    if (!a.grid.empty()) {
      SpinGrid g = load_grid(a.grid);
      return infer_ave(grid_moments(g, a.gamma), grid_path_segments(g), lo);
    }
    throw ParameterError("infer: ave needs --trajectory or --grid");
  }
  throw ParameterError("infer: unknown method '" + m + "'");
}

void cmd_infer(const InferArgs& a) {
  InferenceResult r = cmd_infer_impl(a);
  write_json_file(a.out, result_to_json(r));
  std::cout << r.method << " " << r.diagnostics.dump() << "\n";
}

// ---------------------------------------------------------------- eval
struct EvalArgs {
  std::string truth, estimate;
  bool symmetrize = false;
  std::vector<std::size_t> ks;
  std::string q_denominator = "abs";
  std::string scatter;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  auto [theta_t, J_t] = couplings_from_json(read_json_file(a.truth));
  auto [theta_e, J_e] = couplings_from_json(read_json_file(a.estimate));
  require(J_t.rows() == J_e.rows(), "eval: truth and estimate differ in size");
  EvalOptions o;
  o.ks = a.ks;
  o.symmetrize = a.symmetrize;
  if (a.q_denominator == "abs") o.q_denominator = QDenominator::AbsMax;
  else if (a.q_denominator == "signed") o.q_denominator = QDenominator::SignedMax;
  else throw ParameterError("eval: --q-denominator must be abs or signed");
  EvalReport rep = evaluate(J_t, J_e, o, &theta_t, &theta_e);
  json j = rep.to_json();
  write_json_file(a.out, j);
  if (!a.scatter.empty()) {
    auto os = open_out(a.scatter);
    write_scatter_csv(os, J_t, o.symmetrize ? symmetrized(J_e) : J_e);
  }
  std::cout << j.dump() << "\n";
}

// ---------------------------------------------------------------- sweep
struct SweepArgs {
  std::string axis = "data-length";
  std::vector<double> values;
  int replicas = 1;
  std::vector<std::string> methods = {"asyn-nmf", "sho"};
  int L = 20;
  double g = 0.3;
  double k = 1.0;
  double theta = 0.0;
  double updates = 1e6;
  double updates_per_spin = 5e5;
  double burn_in = 100.0;
  double sho_dt = 0.01;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_sweep(const SweepArgs& a) {
  SweepSpec s;
  s.axis = sweep_axis_from_string(a.axis);
  s.values = a.values;
  s.replicas = a.replicas;
  s.seed = a.seed;
  s.updates_per_spin = a.updates_per_spin;
  s.base.L = a.L;
  s.base.g = a.g;
  s.base.k = a.k;
  s.base.theta = a.theta;
  s.base.updates = a.updates;
  s.base.burn_in = a.burn_in;
  s.base.sho_dt = a.sho_dt;
  s.base.methods = a.methods;
  for (const auto& m : a.methods)
    require(std::find(pipeline_methods().begin(), pipeline_methods().end(), m) != pipeline_methods().end(),
            "sweep: unknown method '" + m + "'");
  auto rows = run_sweep(s);
  auto os = open_out(a.out);
  write_sweep_csv(os, s.axis, rows);
}

// ---------------------------------------------------------------- popgen
struct EvolveArgs {
  std::string preset;
  int L = 25;
  int N = 500;
  double mu = 0.05;
  double r = 0.5;
  double rho = 0.5;
  int T = 2500;
  int record_every = 5;
  double sigma = 0.004;
  double additive_sd = 0.0;
  std::uint64_t fitness_seed = 1;
  std::string fitness;
  std::uint64_t seed = 1;
  std::string fitness_out;
  std::string out;
};

EvolutionParams evolution_args(const EvolveArgs& a, const std::vector<CLI::App*>& chain) {
  EvolutionParams e;
  if (a.preset == "trajectory") e = trajectory_preset();
  else if (a.preset == "recovery") e = recovery_preset();
  else if (!a.preset.empty()) throw ParameterError("popgen: unknown preset '" + a.preset + "'");
  // explicit flags override the preset
  CLI::App* app = chain.back();
  auto given = [&](const char* name) { return app->count(name) > 0 || a.preset.empty(); };
  if (given("--L")) e.L = a.L;
  if (given("--N")) e.N_pop = a.N;
  if (given("--mu")) e.mu = a.mu;
  if (given("--r")) e.r = a.r;
  if (given("--rho")) e.rho = a.rho;
  if (given("--T")) e.T = a.T;
  if (given("--record-every")) e.record_every = a.record_every;
  e.seed = a.seed;
  return e;
}

void cmd_evolve(const EvolveArgs& a, const std::vector<CLI::App*>& chain) {
  EvolutionParams e = evolution_args(a, chain);
  FitnessParams f = a.fitness.empty() ? generate_fitness(e.L, a.sigma, a.fitness_seed, a.additive_sd)
                                      : fitness_from_json(read_json_file(a.fitness));
  auto snaps = evolve(f, e);
  auto os = open_out(a.out);
  write_snapshots(os, snaps, e);
  if (!a.fitness_out.empty()) write_json_file(a.fitness_out, fitness_to_json(f));
}

struct PopInferArgs {
  std::string snapshots;
  std::string method = "nmf";
  std::string averaging = "singletime";
  double pseudocount = -1.0;
  double burn_in_fraction = 0.2;
  std::string fitness;
  std::string out;
};

void cmd_popgen_infer(const PopInferArgs& a) {
  auto is = open_in(a.snapshots);
  EvolutionParams e;
  auto snaps = read_snapshots(is, e);
  KnsOptions o;
  o.method = dca_method_from_string(a.method);
  o.averaging = averaging_from_string(a.averaging);
  o.pseudocount = a.pseudocount;
  o.burn_in_fraction = a.burn_in_fraction;
  InferenceResult r = infer_fitness_kns(snaps, e, o);
  if (!a.fitness.empty()) {
    FitnessParams f = fitness_from_json(read_json_file(a.fitness));
    r.diagnostics["relative_rmse"] = relative_rmse(f.fmat, r.J);
    r.diagnostics["pearson"] = pearson(f.fmat, r.J);
  }
  write_json_file(a.out, result_to_json(r));
  std::cout << r.diagnostics.dump() << "\n";
}

struct PhaseArgs {
  std::string axis = "mu";
  std::vector<double> axis_values;
  std::vector<double> r_values;
  EvolveArgs base;
  std::string method = "nmf";
  double pseudocount = -1.0;
  double burn_in_fraction = 0.2;
  std::string out;
};

void cmd_phase(const PhaseArgs& a, const std::vector<CLI::App*>& chain) {
  PhaseDiagramSpec s;
  s.axis = phase_axis_from_string(a.axis);
  s.axis1 = a.axis_values;
  s.r = a.r_values;
  s.base = evolution_args(a.base, chain);
  s.sigma = a.base.sigma;
  s.additive_sd = a.base.additive_sd;
  s.fitness_seed = a.base.fitness_seed;
  s.kns.method = dca_method_from_string(a.method);
  s.kns.pseudocount = a.pseudocount;
  s.kns.burn_in_fraction = a.burn_in_fraction;
  auto cells = phase_diagram(s);
  auto os = open_out(a.out);
  os << "axis1,axis2,score_singletime,score_alltime,error\n";
  for (const auto& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    os << fmt17(c.axis1) << ',' << fmt17(c.r) << ',' << fmt17(c.score_singletime) << ','
       << fmt17(c.score_alltime) << ',' << err << '\n';
  }
}

// ---------------------------------------------------------------- binarize
struct SpikesArgs {
  std::string input;
  double gamma = 100.0;
  double dt = 0.0005;
  int units = 0;
  double length = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

void cmd_spikes(const SpikesArgs& a) {
  auto is = open_in(a.input);
  SpikeTrain st = parse_spike_csv(is, a.units, a.length);
  SpinGrid g = binarize_spikes(st, a.gamma, a.dt, a.seed);
  auto os = open_out(a.out);
  write_grid(os, g);
}

struct VolumesArgs {
  std::string input;
  double window = 50.0;
  double chi = 0.5;
  double shift = 1.0;
  int instruments = 0;
  double length = 0.0;
  std::vector<double> segments;  // flat list start,end,start,end,...
  std::string out;
};

void cmd_volumes(const VolumesArgs& a) {
  auto is = open_in(a.input);
  VolumeSeries vs = parse_volume_csv(is, a.instruments, a.length);
  VolumeOptions o;
  o.window = a.window;
  o.chi = a.chi;
  o.shift = a.shift;
  require(a.segments.size() % 2 == 0, "binarize volumes: --segments needs start,end pairs");
  for (std::size_t k = 0; k < a.segments.size(); k += 2) o.segments.push_back({a.segments[k], a.segments[k + 1]});
  SpinGrid g = binarize_volumes(vs, o);
  if (g.truncated) std::cerr << "warning: trailing partial window dropped\n";
  auto os = open_out(a.out);
  write_grid(os, g);
}

void add_evolve_options(CLI::App* c, EvolveArgs& a) {
  c->add_option("--preset", a.preset, "trajectory (N=200, mu=0.01, r=0.1) or recovery (N=500)");
  c->add_option("--L", a.L, "loci");
  c->add_option("--N", a.N, "population size");
  c->add_option("--mu", a.mu, "mutation probability per locus and generation");
  c->add_option("--r", a.r, "outcrossing probability");
  c->add_option("--rho", a.rho, "crossover rate per adjacent pair");
  c->add_option("--T", a.T, "generations");
  c->add_option("--record-every", a.record_every, "snapshot interval in generations");
  c->add_option("--sigma", a.sigma, "std-dev of random pairwise fitness");
  c->add_option("--additive-sd", a.additive_sd, "std-dev of random additive fitness");
  c->add_option("--fitness-seed", a.fitness_seed, "seed for the random fitness landscape");
  c->add_option("--seed", a.seed, "evolution seed");
}

int run(std::vector<std::string> args);

int run_replay(const std::string& path) {
  json m = read_json_file(path);
  std::vector<std::string> args;
  for (const auto& v : m.at("argv")) args.push_back(v.get<std::string>());
  return run(args);
}

int run(std::vector<std::string> args) {
  CLI::App app{"isinglab: kinetic and equilibrium inverse Ising toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Context ctx;
  std::function<void()> action;

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "generate an SK coupling model");
  c_gen->add_option("--L", gen.L, "number of spins");
  c_gen->add_option("--g", gen.g, "coupling strength");
  c_gen->add_option("--k", gen.k, "asymmetry degree");
  c_gen->add_option("--theta", gen.theta, "uniform external field");
  c_gen->add_option("--theta-spread", gen.theta_spread, "fields drawn uniformly in theta +- spread");
  c_gen->add_option("--seed", gen.seed, "seed");
  c_gen->add_option("--out", gen.out, "model JSON")->required();
  c_gen->callback([&] { ctx = {{&app, c_gen}, gen.out}; action = [&] { cmd_gen(gen); }; });

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate Glauber dynamics");
  c_sim->add_option("--model", sim.model, "model JSON")->required();
  c_sim->add_option("--gamma", sim.gamma, "rate constant");
  c_sim->add_option("--t-end", sim.t_end, "trajectory length");
  c_sim->add_option("--updates", sim.updates, "length in update events (gamma L t_end)");
  c_sim->add_option("--scheme", sim.scheme, "gillespie | per-spin-bernoulli | random-pick");
  c_sim->add_option("--dt", sim.dt, "step for discrete schemes");
  c_sim->add_option("--initial", sim.initial, "initial configuration as +/- string");
  c_sim->add_option("--seed", sim.seed, "seed");
  c_sim->add_option("--out", sim.out, "trajectory file")->required();
  c_sim->callback([&] { ctx = {{&app, c_sim}, sim.out}; action = [&] { cmd_simulate(sim); }; });

  SampleArgs smp;
  auto* c_smp = app.add_subcommand("sample", "snapshots from a trajectory, or the exact Gibbs table");
  c_smp->add_option("--trajectory", smp.trajectory, "trajectory file");
  c_smp->add_option("--model", smp.model, "model JSON (exact weighted table, L <= 16)");
  c_smp->add_option("--burn-in", smp.burn_in, "first snapshot time");
  c_smp->add_option("--interval", smp.interval, "time between snapshots");
  c_smp->add_option("--n", smp.n, "number of snapshots");
  c_smp->add_option("--out", smp.out, "samples file")->required();
  c_smp->callback([&] { ctx = {{&app, c_smp}, smp.out}; action = [&] { cmd_sample(smp); }; });

  MomentsArgs mom;
  auto* c_mom = app.add_subcommand("moments", "means, correlations and dC/dtau(0)");
  c_mom->add_option("--samples", mom.samples, "samples file");
  c_mom->add_option("--trajectory", mom.trajectory, "trajectory file");
  c_mom->add_option("--grid", mom.grid, "binary grid file");
  c_mom->add_option("--lags", mom.lags, "lag grid starting at 0")->delimiter(',');
  c_mom->add_option("--burn-in", mom.burn_in, "discarded initial time");
  c_mom->add_option("--derivative", mom.derivative, "event | two-point | linear-fit");
  c_mom->add_option("--pseudocount", mom.pseudocount, "pseudocount in [0, 1]");
  c_mom->add_option("--gamma", mom.gamma, "rate constant for grid data");
  c_mom->add_option("--out", mom.out, "moments JSON")->required();
  c_mom->callback([&] { ctx = {{&app, c_mom}, mom.out}; action = [&] { cmd_moments(mom); }; });

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "infer fields and couplings");
  c_inf->add_option("--method", inf.method, "nmf|tap|plm|bm|asyn-nmf|asyn-tap|sho|ave")
      ->required()
      ->check(CLI::IsMember({"nmf", "tap", "plm", "bm", "asyn-nmf", "asyn-tap", "sho", "ave"}));
  c_inf->add_option("--moments", inf.moments, "moments JSON");
  c_inf->add_option("--samples", inf.samples, "samples file");
  c_inf->add_option("--trajectory", inf.trajectory, "trajectory file");
  c_inf->add_option("--grid", inf.grid, "binary grid file");
  c_inf->add_option("--burn-in", inf.burn_in, "discarded initial time of a trajectory");
  c_inf->add_option("--pseudocount", inf.pseudocount, "pseudocount for sample moments");
  c_inf->add_option("--gamma", inf.gamma, "rate constant for grid data");
  c_inf->add_option("--dt", inf.dt, "SHO grid step");
  c_inf->add_option("--eta", inf.eta, "learning rate (SHO, AVE, BM)");
  c_inf->add_option("--max-epochs", inf.max_epochs, "epoch / iteration cap");
  c_inf->add_option("--tol", inf.tol, "convergence tolerance");
  c_inf->add_option("--anderson", inf.anderson, "Anderson mixing depth for SHO/AVE");
  c_inf->add_option("--lambda", inf.lambda, "PLM L2 penalty (default 0.01/N)");
  c_inf->add_option("--mode", inf.mode, "asyn-TAP mode: iterative | cubic");
  c_inf->add_flag("--symmetrize", inf.symmetrize, "symmetrise J with zero diagonal");
  c_inf->add_option("--out", inf.out, "result JSON")->required();
  c_inf->callback([&] { ctx = {{&app, c_inf}, inf.out}; action = [&] { cmd_infer(inf); }; });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "score an estimate against a reference");
  c_ev->add_option("--truth", ev.truth, "model or result JSON")->required();
  c_ev->add_option("--estimate", ev.estimate, "model or result JSON")->required();
  c_ev->add_flag("--symmetrize", ev.symmetrize, "symmetrise the estimate first");
  c_ev->add_option("--k", ev.ks, "top-k values for TPR")->delimiter(',');
  c_ev->add_option("--q-denominator", ev.q_denominator, "abs | signed");
  c_ev->add_option("--scatter", ev.scatter, "scatter CSV output");
  c_ev->add_option("--out", ev.out, "report JSON")->required();
  c_ev->callback([&] { ctx = {{&app, c_ev}, ev.out}; action = [&] { cmd_eval(ev); }; });

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "replicated MSE sweeps");
  c_sw->add_option("--axis", sw.axis, "data-length | size | field | g");
  c_sw->add_option("--values", sw.values, "axis values")->delimiter(',')->required();
  c_sw->add_option("--replicas", sw.replicas, "replicas per value");
  c_sw->add_option("--methods", sw.methods, "nmf,tap,asyn-nmf,asyn-tap,sho,ave")->delimiter(',');
  c_sw->add_option("--L", sw.L, "number of spins");
  c_sw->add_option("--g", sw.g, "coupling strength");
  c_sw->add_option("--k", sw.k, "asymmetry degree");
  c_sw->add_option("--theta", sw.theta, "uniform field");
  c_sw->add_option("--updates", sw.updates, "update events after burn-in");
  c_sw->add_option("--updates-per-spin", sw.updates_per_spin, "size axis: updates = this * L");
  c_sw->add_option("--burn-in", sw.burn_in, "burn-in in units of 1/gamma");
  c_sw->add_option("--sho-dt", sw.sho_dt, "SHO grid step in units of 1/gamma");
  c_sw->add_option("--seed", sw.seed, "base seed");
  c_sw->add_option("--out", sw.out, "CSV output")->required();
  c_sw->callback([&] { ctx = {{&app, c_sw}, sw.out}; action = [&] { cmd_sweep(sw); }; });

  auto* c_pop = app.add_subcommand("popgen", "population genetics");
  c_pop->require_subcommand(1);
  EvolveArgs evo;
  auto* c_evo = c_pop->add_subcommand("evolve", "simulate an evolving population");
  add_evolve_options(c_evo, evo);
  c_evo->add_option("--fitness", evo.fitness, "fitness JSON instead of a random landscape");
  c_evo->add_option("--fitness-out", evo.fitness_out, "write the fitness landscape");
  c_evo->add_option("--out", evo.out, "snapshot file")->required();
  c_evo->callback([&] {
    ctx = {{&app, c_pop, c_evo}, evo.out};
    action = [&] { cmd_evolve(evo, ctx.chain); };
  });

  PopInferArgs pin;
  auto* c_pin = c_pop->add_subcommand("infer", "epistatic fitness from snapshots");
  c_pin->add_option("--snapshots", pin.snapshots, "snapshot file")->required();
  c_pin->add_option("--method", pin.method, "nmf | plm");
  c_pin->add_option("--averaging", pin.averaging, "singletime | alltime");
  c_pin->add_option("--pseudocount", pin.pseudocount, "pseudocount (default 1/N)");
  c_pin->add_option("--burn-in-fraction", pin.burn_in_fraction, "fraction of generations skipped");
  c_pin->add_option("--fitness", pin.fitness, "true fitness JSON for scoring");
  c_pin->add_option("--out", pin.out, "result JSON")->required();
  c_pin->callback([&] {
    ctx = {{&app, c_pop, c_pin}, pin.out};
    action = [&] { cmd_popgen_infer(pin); };
  });

  PhaseArgs ph;
  auto* c_ph = c_pop->add_subcommand("phase-diagram", "relative RMSE over (mu|sigma) x r");
  add_evolve_options(c_ph, ph.base);
  c_ph->add_option("--axis", ph.axis, "mu | sigma");
  c_ph->add_option("--axis-values", ph.axis_values, "first-axis grid")->delimiter(',')->required();
  c_ph->add_option("--r-values", ph.r_values, "recombination grid")->delimiter(',')->required();
  c_ph->add_option("--method", ph.method, "nmf | plm");
  c_ph->add_option("--pseudocount", ph.pseudocount, "pseudocount (default 1/N)");
  c_ph->add_option("--burn-in-fraction", ph.burn_in_fraction, "fraction of generations skipped");
  c_ph->add_option("--out", ph.out, "CSV output")->required();
  c_ph->callback([&] {
    ctx = {{&app, c_pop, c_ph}, ph.out};
    action = [&] { cmd_phase(ph, ctx.chain); };
  });

  auto* c_bin = app.add_subcommand("binarize", "convert recordings to +-1 grids");
  c_bin->require_subcommand(1);
  SpikesArgs sp;
  auto* c_sp = c_bin->add_subcommand("spikes", "spike trains with exponential memory");
  c_sp->add_option("--input", sp.input, "CSV unit_id,time_s")->required();
  c_sp->add_option("--gamma", sp.gamma, "inverse mean memory (1/s)");
  c_sp->add_option("--dt", sp.dt, "grid step (s)");
  c_sp->add_option("--units", sp.units, "unit count (default max id + 1)");
  c_sp->add_option("--length", sp.length, "recording length (default last spike)");
  c_sp->add_option("--seed", sp.seed, "seed for memory draws");
  c_sp->add_option("--out", sp.out, "grid file")->required();
  c_sp->callback([&] { ctx = {{&app, c_bin, c_sp}, sp.out}; action = [&] { cmd_spikes(sp); }; });

  VolumesArgs vo;
  auto* c_vo = c_bin->add_subcommand("volumes", "windowed volume thresholding");
  c_vo->add_option("--input", vo.input, "CSV instrument_id,time_s,volume")->required();
  c_vo->add_option("--window", vo.window, "window length (s)");
  c_vo->add_option("--chi", vo.chi, "threshold factor");
  c_vo->add_option("--shift", vo.shift, "window shift (s)");
  c_vo->add_option("--instruments", vo.instruments, "instrument count");
  c_vo->add_option("--length", vo.length, "series length (default last trade)");
  c_vo->add_option("--segments", vo.segments, "start,end pairs")->delimiter(',');
  c_vo->add_option("--out", vo.out, "grid file")->required();
  c_vo->callback([&] { ctx = {{&app, c_bin, c_vo}, vo.out}; action = [&] { cmd_volumes(vo); }; });

  std::string replay;
  auto* c_rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  c_rep->add_option("manifest", replay, "manifest JSON")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (c_rep->parsed()) {
    try {
      return run_replay(replay);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }

  try {
    if (!action) throw ParameterError("no command given");
    action();
    ctx.manifest();
    return 0;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    if (!ctx.out.empty()) {
      json d = {{"error", e.what()}, {"kind", "numerical"}};
      if (e.condition_number() != 0.0)
        d["condition_number"] = std::isfinite(e.condition_number()) ? json(e.condition_number())
                                                                    : json("inf");
      try {
        write_json_file(ctx.out + ".diagnostics.json", d);
        ctx.manifest();
      } catch (const Error&) {
      }
    }
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}
