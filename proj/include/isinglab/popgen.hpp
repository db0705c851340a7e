// Haploid Wright-Fisher population with mutation, recombination and
// additive + pairwise fitness, and recovery of epistatic fitness from genome
// snapshots through the quasi-linkage-equilibrium relation f* = J* r c.
#pragma once

#include "isinglab/core.hpp"
#include "isinglab/data.hpp"
#include "isinglab/equilibrium.hpp"
#include "isinglab/metrics.hpp"
#include "isinglab/parallel.hpp"
#include "isinglab/result.hpp"
#include "isinglab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace isinglab {

// F(s) = F0 + Σ_i f_i s_i + Σ_{i<j} f_ij s_i s_j
struct FitnessParams {
  double F0 = 0.0;
  Vector f;
  Matrix fmat;
  double sigma = 0.0;

  int L() const { return static_cast<int>(f.size()); }

  void validate() const {
    require(f.size() == fmat.rows() && fmat.rows() == fmat.cols(),
            "FitnessParams: f and fmat sizes disagree");
    require(fmat.size() == 0 || (fmat - fmat.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "FitnessParams: fmat must be symmetric");
    require(fmat.diagonal().isZero(0.0), "FitnessParams: fmat must have zero diagonal");
  }

  double operator()(const Spin* s) const {
    const int L = this->L();
    double F = F0;
    for (int i = 0; i < L; ++i) {
      F += f(i) * s[i];
      double pair = 0.0;
      for (int j = i + 1; j < L; ++j) pair += fmat(i, j) * s[j];
      F += s[i] * pair;
    }
    return F;
  }
};

// f_ij ~ N(0, σ²) for i<j, f_i ~ N(0, additive_sd²).
inline FitnessParams generate_fitness(int L, double sigma, std::uint64_t seed,
                                      double additive_sd = 0.0) {
  require(L >= 2, "generate_fitness: need L >= 2");
  require(sigma >= 0.0 && additive_sd >= 0.0, "generate_fitness: negative standard deviation");
  Rng rng = make_rng(seed, 0x66697400);
  Gaussian gauss;
  FitnessParams p;
  p.sigma = sigma;
  p.fmat = Matrix::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) p.fmat(i, j) = p.fmat(j, i) = sigma * gauss(rng);
  p.f = Vector::Zero(L);
  for (int i = 0; i < L; ++i) p.f(i) = additive_sd * gauss(rng);
  return p;
}

struct EvolutionParams {
  int L = 25;
  int N_pop = 500;
  double mu = 0.05;
  double r = 0.5;
  double rho = 0.5;
  int T = 2500;
  int record_every = 5;
  std::uint64_t seed = 1;

  void validate() const {
    require(L >= 1, "EvolutionParams: L must be >= 1");
    require(N_pop >= 2, "EvolutionParams: N_pop must be >= 2");
    require(mu >= 0.0 && mu <= 1.0, "EvolutionParams: mu must lie in [0, 1]");
    require(r >= 0.0 && r <= 1.0, "EvolutionParams: r must lie in [0, 1]");
    require(rho >= 0.0 && rho <= 0.5, "EvolutionParams: rho must lie in [0, 0.5]");
    require(T >= 0, "EvolutionParams: T must be >= 0");
    require(record_every >= 1, "EvolutionParams: record_every must be >= 1");
  }
};

// Two presets: N = 200 for allele-frequency trajectories, N = 500 for
// fitness recovery.
inline EvolutionParams trajectory_preset() {
  EvolutionParams p;
  p.N_pop = 200;
  p.mu = 0.01;
  p.r = 0.1;
  return p;
}

inline EvolutionParams recovery_preset() { return EvolutionParams{}; }

struct PopulationSnapshot {
  int generation = 0;
  SampleTable genomes;

  SampleTable table() const { return genomes; }
};

// Crossover pattern: ξ_1 fair coin, ξ_{l+1} = ξ_l with probability 1-ρ.
inline void crossover_pattern(int L, double rho, Rng& rng, std::vector<char>& xi) {
  xi.resize(L);
  xi[0] = static_cast<char>(rng() >> 63);
  for (int l = 1; l < L; ++l) xi[l] = (uniform01(rng) < rho) ? !xi[l - 1] : xi[l - 1];
}

// Discrete generations. Each offspring is, with probability r, a recombinant
// of two fitness-weighted parents, otherwise a copy of one; every locus then
// flips with probability μ. Reproduction weight is e^{F(s)}. Snapshots are
// taken after generations record_every, 2 record_every, ... <= T, plus
// generation 0 when record_initial is set.
inline std::vector<PopulationSnapshot> evolve(const FitnessParams& fit, const EvolutionParams& evo,
                                              std::optional<SampleTable> initial = std::nullopt,
                                              bool record_initial = false) {
  evo.validate();
  fit.validate();
  require(fit.L() == evo.L, "evolve: fitness and evolution parameters disagree on L");
  const int L = evo.L;
  const int N = evo.N_pop;
  Rng rng = make_rng(evo.seed, 0x706f70);

  std::vector<Spin> pop(static_cast<std::size_t>(N) * L);
  if (initial) {
    require(initial->L == L && static_cast<int>(initial->rows()) == N,
            "evolve: initial population must be N_pop x L");
    std::copy(initial->data.begin(), initial->data.end(), pop.begin());
  } else {
    for (auto& v : pop) v = random_spin(rng);
  }
  std::vector<Spin> next(pop.size());
  std::vector<double> cumulative(N);
  std::vector<char> xi;

  std::vector<PopulationSnapshot> out;
  auto record = [&](int g) {
    PopulationSnapshot snap;
    snap.generation = g;
    snap.genomes.L = L;
    snap.genomes.data = pop;
    out.push_back(std::move(snap));
  };
  if (record_initial) record(0);

  std::vector<double> F(N);
  for (int g = 1; g <= evo.T; ++g) {
    double Fmax = -INFINITY;
    for (int n = 0; n < N; ++n) {
      F[n] = fit(pop.data() + static_cast<std::size_t>(n) * L);
      Fmax = std::max(Fmax, F[n]);
    }
    double acc = 0.0;
    for (int n = 0; n < N; ++n) {
      acc += std::exp(F[n] - Fmax);
      cumulative[n] = acc;
    }
    auto pick = [&]() {
      const double u = uniform01(rng) * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(), N - 1));
    };
    for (int n = 0; n < N; ++n) {
      Spin* child = next.data() + static_cast<std::size_t>(n) * L;
      if (evo.r > 0.0 && uniform01(rng) < evo.r) {
        const Spin* a = pop.data() + static_cast<std::size_t>(pick()) * L;
        const Spin* b = pop.data() + static_cast<std::size_t>(pick()) * L;
        crossover_pattern(L, evo.rho, rng, xi);
        for (int l = 0; l < L; ++l) child[l] = xi[l] ? a[l] : b[l];
      } else {
        const Spin* a = pop.data() + static_cast<std::size_t>(pick()) * L;
        std::copy(a, a + L, child);
      }
      if (evo.mu > 0.0)
        for (int l = 0; l < L; ++l)
          if (uniform01(rng) < evo.mu) child[l] = static_cast<Spin>(-child[l]);
    }
    pop.swap(next);
    if (g % evo.record_every == 0) record(g);
  }
  return out;
}

// Per-locus frequency of the +1 allele.
inline Vector allele_frequencies(const PopulationSnapshot& snap) {
  const int L = snap.genomes.L;
  Vector p = Vector::Zero(L);
  const std::size_t N = snap.genomes.rows();
  for (std::size_t n = 0; n < N; ++n)
    for (int l = 0; l < L; ++l) p(l) += snap.genomes.at(n, l) > 0;
  return p / static_cast<double>(N);
}

// c_ij = (1 - (1-2ρ)^{|i-j|}) / 2
inline Matrix crossover_cij(double rho, int L) {
  require(rho >= 0.0 && rho <= 0.5, "crossover_cij: rho must lie in [0, 0.5]");
  require(L >= 1, "crossover_cij: L must be >= 1");
  Matrix c = Matrix::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (i != j) c(i, j) = 0.5 * (1.0 - std::pow(1.0 - 2.0 * rho, std::abs(i - j)));
  return c;
}

struct CijEstimate {
  Matrix mean;
  Matrix standard_error;
};

// Fraction of sampled patterns with ξ_i != ξ_j.
inline CijEstimate crossover_cij_monte_carlo(double rho, int L, std::size_t n_patterns,
                                             std::uint64_t seed) {
  require(n_patterns >= 2, "crossover_cij_monte_carlo: need >= 2 patterns");
  Rng rng = make_rng(seed, 0x636966);
  std::vector<char> xi;
  Matrix count = Matrix::Zero(L, L);
  for (std::size_t n = 0; n < n_patterns; ++n) {
    crossover_pattern(L, rho, rng, xi);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) count(i, j) += (xi[i] != xi[j]);
  }
  CijEstimate est;
  est.mean = Matrix::Zero(L, L);
  est.standard_error = Matrix::Zero(L, L);
  const double n = static_cast<double>(n_patterns);
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) {
      const double p = count(i, j) / n;
      est.mean(i, j) = est.mean(j, i) = p;
      est.standard_error(i, j) = est.standard_error(j, i) = std::sqrt(p * (1.0 - p) / (n - 1.0));
    }
  return est;
}

enum class DcaMethod { NMF, PLM };
enum class Averaging { Singletime, Alltime };

inline DcaMethod dca_method_from_string(const std::string& s) {
  if (s == "nmf" || s == "nMF") return DcaMethod::NMF;
  if (s == "plm" || s == "PLM") return DcaMethod::PLM;
  throw ParameterError("unknown DCA method '" + s + "' (expected nmf or plm)");
}

inline Averaging averaging_from_string(const std::string& s) {
  if (s == "singletime") return Averaging::Singletime;
  if (s == "alltime") return Averaging::Alltime;
  throw ParameterError("unknown averaging '" + s + "' (expected singletime or alltime)");
}

inline std::string to_string(DcaMethod m) { return m == DcaMethod::NMF ? "nmf" : "plm"; }
inline std::string to_string(Averaging a) {
  return a == Averaging::Singletime ? "singletime" : "alltime";
}

struct KnsOptions {
  DcaMethod method = DcaMethod::NMF;
  Averaging averaging = Averaging::Singletime;
  double pseudocount = -1.0;        // negative selects 1/N_pop
  double burn_in_fraction = 0.2;    // of the last recorded generation
  double plm_lambda = -1.0;         // negative selects the PLM default
};

namespace detail {

inline InferenceResult dca(const SampleTable& table, const KnsOptions& opt, double pc) {
  if (opt.method == DcaMethod::NMF) return infer_nmf(sample_moments(table, pc));
  PlmOptions po;
  po.lambda = opt.plm_lambda;
  return infer_plm(table, po);
}

}  // namespace detail

// f*_ij = J̄*_ij r c_ij. J̄* is the mean of per-snapshot estimates
// (singletime) or a single estimate from all post-burn-in genomes pooled
// (alltime). theta holds the corresponding mean inferred fields.
inline InferenceResult infer_fitness_kns(const std::vector<PopulationSnapshot>& snapshots,
                                         const EvolutionParams& evo, const KnsOptions& opt = {}) {
  require(!snapshots.empty(), "KNS: no snapshots");
  require(opt.burn_in_fraction >= 0.0 && opt.burn_in_fraction < 1.0,
          "KNS: burn_in_fraction must lie in [0, 1)");
  const int L = snapshots.front().genomes.L;
  const double pc = opt.pseudocount < 0.0 ? 1.0 / evo.N_pop : opt.pseudocount;
  const int last = snapshots.back().generation;
  const double burn_in = opt.burn_in_fraction * last;

  std::vector<const PopulationSnapshot*> used;
  for (const auto& s : snapshots)
    if (s.generation >= burn_in) used.push_back(&s);
  require(!used.empty(), "KNS: no snapshots past the burn-in");

  Matrix Jbar = Matrix::Zero(L, L);
  Vector hbar = Vector::Zero(L);
  nlohmann::json skipped = nlohmann::json::array();
  int n_ok = 0;
  if (opt.averaging == Averaging::Singletime) {
    for (const PopulationSnapshot* s : used) {
      try {
        InferenceResult r = detail::dca(s->genomes, opt, pc);
        Jbar += r.J;
        hbar += r.theta;
        ++n_ok;
      } catch (const NumericalError&) {
        skipped.push_back(s->generation);
      }
    }
    if (n_ok == 0) throw NumericalError("KNS: every snapshot was singular; raise the pseudocount");
    Jbar /= n_ok;
    hbar /= n_ok;
  } else {
    SampleTable pooled(L);
    for (const PopulationSnapshot* s : used)
      pooled.data.insert(pooled.data.end(), s->genomes.data.begin(), s->genomes.data.end());
    InferenceResult r = detail::dca(pooled, opt, pc);
    Jbar = r.J;
    hbar = r.theta;
    n_ok = static_cast<int>(used.size());
  }
  Jbar = (0.5 * (Jbar + Jbar.transpose())).eval();
  Jbar.diagonal().setZero();

  InferenceResult res;
  res.method = "KNS";
  res.J = (evo.r * crossover_cij(evo.rho, L)).cwiseProduct(Jbar);
  res.theta = hbar;
  res.hyperparams = {{"dca_method", to_string(opt.method)},
                     {"averaging", to_string(opt.averaging)},
                     {"pseudocount", pc},
                     {"burn_in_generation", burn_in},
                     {"r", evo.r},
                     {"rho", evo.rho}};
  res.diagnostics = {{"snapshots_used", n_ok}, {"skipped_generations", skipped}};
  return res;
}

enum class PhaseAxis { Mu, Sigma };

inline PhaseAxis phase_axis_from_string(const std::string& s) {
  if (s == "mu") return PhaseAxis::Mu;
  if (s == "sigma") return PhaseAxis::Sigma;
  throw ParameterError("unknown phase-diagram axis '" + s + "' (expected mu or sigma)");
}

struct PhaseCell {
  double axis1 = 0.0;
  double r = 0.0;
  double score_singletime = NAN;
  double score_alltime = NAN;
  std::string error;
};

struct PhaseDiagramSpec {
  PhaseAxis axis = PhaseAxis::Mu;
  std::vector<double> axis1;
  std::vector<double> r;
  EvolutionParams base;
  double sigma = 0.004;
  double additive_sd = 0.0;
  std::uint64_t fitness_seed = 1;
  KnsOptions kns;
};

// Cell k = a * |r| + b. Fitness comes from fitness_seed (rescaled by the cell
// σ on the sigma axis); the evolution seed is mix_seed(base.seed, k). Scores
// are relative RMSE of f* against the true f_ij.
inline std::vector<PhaseCell> phase_diagram(const PhaseDiagramSpec& spec,
                                            unsigned workers = worker_count()) {
  require(!spec.axis1.empty() && !spec.r.empty(), "phase_diagram: grids must be nonempty");
  const std::size_t nr = spec.r.size();
  std::vector<PhaseCell> cells(spec.axis1.size() * nr);
  parallel_for(
      cells.size(),
      [&](std::size_t k) {
        PhaseCell& cell = cells[k];
        cell.axis1 = spec.axis1[k / nr];
        cell.r = spec.r[k % nr];
        try {
          EvolutionParams evo = spec.base;
          evo.r = cell.r;
          evo.seed = mix_seed(spec.base.seed, k);
          double sigma = spec.sigma;
          if (spec.axis == PhaseAxis::Mu) evo.mu = cell.axis1;
          else sigma = cell.axis1;
          FitnessParams fit = generate_fitness(evo.L, sigma, spec.fitness_seed, spec.additive_sd);
          auto snaps = evolve(fit, evo);
          KnsOptions o = spec.kns;
          o.averaging = Averaging::Singletime;
          cell.score_singletime = relative_rmse(fit.fmat, infer_fitness_kns(snaps, evo, o).J);
          o.averaging = Averaging::Alltime;
          cell.score_alltime = relative_rmse(fit.fmat, infer_fitness_kns(snaps, evo, o).J);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      },
      workers);
  return cells;
}

}  // namespace isinglab
