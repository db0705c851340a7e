// Population genetics, fitness inference, and data binarization.

#include "isinglab/isinglab.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace isinglab;

namespace {

EvolutionParams small_evolution(int L, int N, double mu, double r, int T, std::uint64_t seed) {
  EvolutionParams e;
  e.L = L;
  e.N_pop = N;
  e.mu = mu;
  e.r = r;
  e.T = T;
  e.seed = seed;
  return e;
}

SampleTable monomorphic(int L, int N) {
  SampleTable t(L);
  SpinVector s(L);
  for (int i = 0; i < L; ++i) s[i] = (i % 3 == 0) ? 1 : -1;
  for (int n = 0; n < N; ++n) t.add_row(s);
  return t;
}

VolumeSeries one_instrument(double length, std::vector<Trade> trades) {
  VolumeSeries v;
  v.n_instruments = 1;
  v.length = length;
  v.trades = {std::move(trades)};
  return v;
}

}  // namespace

// ------------------------------------------------------------------ crossover

TEST(Crossover, ClosedFormEndpoints) {
  Matrix half = crossover_cij(0.5, 6);
  Matrix none = crossover_cij(0.0, 6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      EXPECT_DOUBLE_EQ(half(i, j), i == j ? 0.0 : 0.5);
      EXPECT_EQ(none(i, j), 0.0);
    }
  EXPECT_NEAR(crossover_cij(0.1, 6)(1, 4), 0.244, 1e-12);
  EXPECT_THROW(crossover_cij(0.6, 4), ParameterError);
}

TEST(Crossover, MonteCarloAgreesWithinThreeSigma) {
  for (double rho : {0.05, 0.1, 0.2, 0.5}) {
    const std::size_t n = rho == 0.1 ? 1000000 : 200000;
    CijEstimate est = crossover_cij_monte_carlo(rho, 8, n, 41);
    Matrix exact = crossover_cij(rho, 8);
    for (int i = 0; i < 8; ++i)
      for (int j = i + 1; j < 8; ++j)
        EXPECT_LE(std::abs(est.mean(i, j) - exact(i, j)), 3.0 * est.standard_error(i, j) + 1e-12)
            << "rho=" << rho << " (" << i << "," << j << ")";
  }
}

// ------------------------------------------------------------------ evolve

TEST(Evolve, NoVariationSourcesLeavePopulationUnchanged) {
  FitnessParams fit = generate_fitness(7, 0.0, 1);
  EvolutionParams evo = small_evolution(7, 60, 0.0, 0.0, 200, 2);
  SampleTable start = monomorphic(7, 60);
  auto snaps = evolve(fit, evo, start);
  ASSERT_EQ(snaps.size(), 40u);
  for (const auto& s : snaps) EXPECT_EQ(s.genomes.data, start.data);
}

TEST(Evolve, ReproducibleAndWellFormed) {
  FitnessParams fit = generate_fitness(10, 0.01, 3);
  EvolutionParams evo = small_evolution(10, 80, 0.05, 0.5, 100, 4);
  auto a = evolve(fit, evo);
  auto b = evolve(fit, evo);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].generation, static_cast<int>(5 * (k + 1)));
    EXPECT_EQ(a[k].genomes.data, b[k].genomes.data);
    EXPECT_EQ(a[k].genomes.rows(), 80u);
    for (Spin s : a[k].genomes.data) EXPECT_TRUE(s == 1 || s == -1);
  }
  evo.seed = 5;
  EXPECT_NE(evolve(fit, evo).back().genomes.data, a.back().genomes.data);
}

TEST(Evolve, NeutralFrequenciesCentreOnHalf) {
  FitnessParams fit = generate_fitness(8, 0.0, 6);
  EvolutionParams evo = small_evolution(8, 200, 0.05, 0.5, 3000, 7);
  auto snaps = evolve(fit, evo);
  const int n = static_cast<int>(snaps.size());
  for (int l = 0; l < 8; ++l) {
    double sum = 0.0, sq = 0.0;
    for (const auto& s : snaps) {
      const double p = allele_frequencies(s)(l);
      sum += p;
      sq += p * p;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sq / n - mean * mean, 0.0));
    // mutation decorrelates frequencies over ~1/(2μ) = 10 generations, two
    // snapshots; allow for five times that
    const double se = sd / std::sqrt(n / 10.0);
    EXPECT_LT(std::abs(mean - 0.5), 3.0 * se) << "locus " << l;
  }
}

TEST(Evolve, StrongAdditiveSelectionFixesFavouredAllele) {
  FitnessParams fit = generate_fitness(6, 0.0, 8);
  fit.f(2) = 1.0;
  EvolutionParams evo = small_evolution(6, 200, 0.001, 0.5, 100, 9);
  auto snaps = evolve(fit, evo);
  EXPECT_GT(allele_frequencies(snaps.back())(2), 0.95);
}

TEST(Evolve, SnapshotFileRoundTrip) {
  FitnessParams fit = generate_fitness(5, 0.01, 10);
  EvolutionParams evo = small_evolution(5, 20, 0.05, 0.5, 30, 11);
  auto snaps = evolve(fit, evo);
  std::stringstream ss;
  write_snapshots(ss, snaps, evo);
  EvolutionParams back;
  auto read = read_snapshots(ss, back);
  ASSERT_EQ(read.size(), snaps.size());
  EXPECT_EQ(back.N_pop, 20);
  EXPECT_EQ(back.seed, 11u);
  for (std::size_t k = 0; k < read.size(); ++k) {
    EXPECT_EQ(read[k].generation, snaps[k].generation);
    EXPECT_EQ(read[k].genomes.data, snaps[k].genomes.data);
  }
}

// ------------------------------------------------------------------ KNS

TEST(Kns, NoEpistasisGivesSmallFitness) {
  FitnessParams fit = generate_fitness(10, 0.0, 12);
  EvolutionParams evo = small_evolution(10, 500, 0.05, 0.5, 600, 13);
  auto snaps = evolve(fit, evo);
  InferenceResult r = infer_fitness_kns(snaps, evo);
  // the finite-population noise floor of nMF couplings is ~1/sqrt(N); the
  // fitness scale r c_ij = 1/4 shrinks it further
  EXPECT_LT(r.J.lpNorm<Eigen::Infinity>(), 0.25 * 4.0 / std::sqrt(500.0));
}

TEST(Kns, ScalingIdentityAndShape) {
  FitnessParams fit = generate_fitness(8, 0.01, 14);
  EvolutionParams evo = small_evolution(8, 300, 0.05, 0.3, 200, 15);
  auto snaps = evolve(fit, evo);
  for (Averaging av : {Averaging::Singletime, Averaging::Alltime}) {
    KnsOptions o;
    o.averaging = av;
    InferenceResult r = infer_fitness_kns(snaps, evo, o);
    EXPECT_EQ((r.J - r.J.transpose()).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_TRUE(r.J.diagonal().isZero(0.0));

    // reference J̄ computed directly
    const double pc = 1.0 / evo.N_pop;
    const double burn = 0.2 * snaps.back().generation;
    Matrix Jbar = Matrix::Zero(8, 8);
    if (av == Averaging::Singletime) {
      int n = 0;
      for (const auto& s : snaps)
        if (s.generation >= burn) {
          Jbar += infer_nmf(sample_moments(s.genomes, pc)).J;
          ++n;
        }
      Jbar /= n;
    } else {
      SampleTable pooled(8);
      for (const auto& s : snaps)
        if (s.generation >= burn)
          pooled.data.insert(pooled.data.end(), s.genomes.data.begin(), s.genomes.data.end());
      Jbar = infer_nmf(sample_moments(pooled, pc)).J;
    }
    Jbar.diagonal().setZero();
    EXPECT_LT((r.J - 0.5 * evo.r * Jbar).lpNorm<Eigen::Infinity>(), 1e-14) << to_string(av);
  }
}

TEST(Kns, PlmVariantRuns) {
  FitnessParams fit = generate_fitness(6, 0.01, 16);
  EvolutionParams evo = small_evolution(6, 200, 0.05, 0.5, 60, 17);
  auto snaps = evolve(fit, evo);
  KnsOptions o;
  o.method = DcaMethod::PLM;
  InferenceResult r = infer_fitness_kns(snaps, evo, o);
  EXPECT_TRUE(r.J.allFinite());
  EXPECT_EQ(r.hyperparams["dca_method"], "plm");
}

TEST(PhaseDiagram, SingleCellMatchesDirectCall) {
  PhaseDiagramSpec spec;
  spec.axis = PhaseAxis::Mu;
  spec.axis1 = {0.04};
  spec.r = {0.4};
  spec.base = small_evolution(8, 200, 0.0, 0.0, 200, 18);
  spec.sigma = 0.01;
  spec.fitness_seed = 19;
  auto cells = phase_diagram(spec, 1);
  ASSERT_EQ(cells.size(), 1u);
  ASSERT_TRUE(cells[0].error.empty()) << cells[0].error;

  EvolutionParams evo = spec.base;
  evo.mu = 0.04;
  evo.r = 0.4;
  evo.seed = mix_seed(spec.base.seed, 0);
  FitnessParams fit = generate_fitness(8, 0.01, 19);
  auto snaps = evolve(fit, evo);
  KnsOptions o;
  EXPECT_EQ(cells[0].score_singletime, relative_rmse(fit.fmat, infer_fitness_kns(snaps, evo, o).J));
  o.averaging = Averaging::Alltime;
  EXPECT_EQ(cells[0].score_alltime, relative_rmse(fit.fmat, infer_fitness_kns(snaps, evo, o).J));
}

TEST(PhaseDiagram, BadCellIsRecordedAndOthersRun) {
  PhaseDiagramSpec spec;
  spec.axis1 = {0.05, 2.0};  // μ = 2 is invalid
  spec.r = {0.5};
  spec.base = small_evolution(6, 100, 0.0, 0.0, 40, 20);
  auto cells = phase_diagram(spec, 2);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_TRUE(cells[0].error.empty());
  EXPECT_TRUE(std::isfinite(cells[0].score_singletime));
  EXPECT_FALSE(cells[1].error.empty());
  EXPECT_TRUE(std::isnan(cells[1].score_singletime));
}

// ------------------------------------------------------------------ spikes

TEST(Spikes, NoSpikesGiveAllDown) {
  SpikeTrain st;
  st.n_units = 3;
  st.length = 0.5;
  st.times.assign(3, {});
  SpinGrid g = binarize_spikes(st, 100.0, 0.0005, 1);
  EXPECT_EQ(g.n_cells, 1000u);
  for (Spin s : g.data) EXPECT_EQ(s, -1);
}

TEST(Spikes, SingleSpikeCoversItsMemoryWindow) {
  SpikeTrain st;
  st.n_units = 1;
  st.length = 2.0;
  st.times = {{1.0}};
  SpinGrid g = binarize_spikes(st, 0.0005, {{0.010}});
  ASSERT_EQ(g.n_cells, 4000u);
  for (std::size_t k = 0; k < g.n_cells; ++k)
    EXPECT_EQ(g.at(k, 0), (k >= 2000 && k < 2020) ? 1 : -1) << "cell " << k;
}

TEST(Spikes, NextSpikeCutsMemoryShort) {
  SpikeTrain st;
  st.n_units = 1;
  st.length = 1.0;
  st.times = {{0.1, 0.105}};
  SpinGrid g = binarize_spikes(st, 0.001, {{0.5, 0.002}});
  int up = 0;
  for (Spin s : g.data) up += s > 0;
  EXPECT_EQ(up, 7);  // [0.100, 0.105) then [0.105, 0.107)
}

TEST(Spikes, SeededMemoriesAreDeterministic) {
  SpikeTrain st;
  st.n_units = 2;
  st.length = 10.0;
  st.times = {{0.5, 2.0, 7.5}, {1.0, 1.2}};
  SpinGrid a = binarize_spikes(st, 100.0, 0.0005, 3);
  SpinGrid b = binarize_spikes(st, 100.0, 0.0005, 3);
  SpinGrid c = binarize_spikes(st, 100.0, 0.0005, 4);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  auto X = draw_spike_memories(st, 100.0, 3);
  EXPECT_EQ(binarize_spikes(st, 0.0005, X).data, a.data);
}

TEST(Spikes, ShortMemoryOccupancyApproachesSpikeCount) {
  // with γ large each spike holds for at most one cell
  SpikeTrain st;
  st.n_units = 1;
  st.length = 100.0;
  st.times.resize(1);
  for (int k = 0; k < 500; ++k) st.times[0].push_back(0.1 + 0.19 * k + 0.0003);
  SpinGrid g = binarize_spikes(st, 1e6, 0.001, 5);
  double up = 0.0;
  for (Spin s : g.data) up += s > 0;
  EXPECT_NEAR(up / g.n_cells, 500 * 0.001 / 100.0, 1e-12);
}

TEST(Spikes, CsvParsing) {
  std::istringstream in("unit_id,time_s\n1,0.5\n0, 0.25\n1,0.1\n");
  SpikeTrain st = parse_spike_csv(in);
  EXPECT_EQ(st.n_units, 2);
  EXPECT_DOUBLE_EQ(st.length, 0.5);
  EXPECT_EQ(st.times[1], (std::vector<double>{0.1, 0.5}));
  std::istringstream bad("0,0.1\nx,y\n");
  EXPECT_THROW(parse_spike_csv(bad), ParameterError);
}

// ------------------------------------------------------------------ volumes

TEST(Volumes, ConstantFlowAtAverageIsAllUp) {
  std::vector<Trade> tr;
  for (int k = 0; k < 100; ++k) tr.push_back({k + 0.5, 3.0});
  VolumeOptions o;
  o.window = 10.0;
  o.chi = 1.0;
  SpinGrid g = binarize_volumes(one_instrument(100.0, tr), o);
  EXPECT_EQ(g.n_cells, 91u);
  EXPECT_FALSE(g.truncated);
  for (Spin s : g.data) EXPECT_EQ(s, 1);
}

TEST(Volumes, ZeroVolumeIsAllDown) {
  VolumeOptions o;
  o.window = 5.0;
  SpinGrid g = binarize_volumes(one_instrument(50.0, {{3.0, 0.0}, {20.0, 0.0}}), o);
  for (Spin s : g.data) EXPECT_EQ(s, -1);
}

TEST(Volumes, BurstMarksExactlyTheWindowsContainingIt) {
  // one trade of volume B over length 2Δt gives V_av Δt = B/2, so the burst
  // is 2 V_av Δt
  VolumeOptions o;
  o.window = 10.0;
  o.chi = 0.5;
  SpinGrid g = binarize_volumes(one_instrument(20.0, {{12.5, 4.0}}), o);
  ASSERT_EQ(g.n_cells, 11u);
  for (std::size_t c = 0; c < g.n_cells; ++c) {
    const double t = g.t0 + c * g.dt;
    const bool contains = t <= 12.5 && 12.5 < t + o.window;
    EXPECT_EQ(g.at(c, 0), contains ? 1 : -1) << "window at " << t;
  }
}

TEST(Volumes, MonotoneInChi) {
  Rng rng = make_rng(21, 0);
  std::vector<Trade> tr;
  double t = 0.0;
  while ((t += exponential(rng, 2.0)) < 300.0) tr.push_back({t, 10.0 * uniform01(rng)});
  VolumeSeries v = one_instrument(300.0, tr);
  VolumeOptions o;
  o.window = 4.0;
  SpinGrid prev;
  for (double chi : {0.25, 0.5, 1.0, 1.5, 3.0}) {
    o.chi = chi;
    SpinGrid g = binarize_volumes(v, o);
    for (std::size_t k = 0; k < prev.data.size(); ++k) {
      if (prev.data[k] > 0) continue;
      EXPECT_LT(g.data[k], 0) << "chi=" << chi;
    }
    prev = g;
  }
}

TEST(Volumes, WindowLongerThanSeriesIsTruncated) {
  VolumeOptions o;
  o.window = 30.0;
  SpinGrid g = binarize_volumes(one_instrument(20.0, {{1.0, 1.0}}), o);
  EXPECT_EQ(g.n_cells, 0u);
  EXPECT_TRUE(g.truncated);
  o.window = 0.5;
  EXPECT_THROW(binarize_volumes(one_instrument(20.0, {{1.0, 1.0}}), o), ParameterError);
}

TEST(Volumes, CsvParsing) {
  std::istringstream in("instrument_id,time_s,volume\n0,1.5,10\n1,0.5,2\n0,0.5,4\n");
  VolumeSeries v = parse_volume_csv(in);
  EXPECT_EQ(v.n_instruments, 2);
  ASSERT_EQ(v.trades[0].size(), 2u);
  EXPECT_DOUBLE_EQ(v.trades[0][0].t, 0.5);
  EXPECT_DOUBLE_EQ(v.average_rate()[0], 14.0 / 1.5);
}

// ------------------------------------------------------------------ grids

TEST(Grid, FileRoundTrip) {
  SpinGrid g;
  g.L = 11;
  g.dt = 0.25;
  g.t0 = 3.0;
  g.n_cells = 7;
  g.truncated = true;
  Rng rng = make_rng(22, 0);
  for (std::size_t k = 0; k < g.n_cells * g.L; ++k) g.data.push_back(uniform01(rng) < 0.5 ? 1 : -1);
  std::stringstream ss;
  write_grid(ss, g);
  SpinGrid back = read_grid(ss);
  EXPECT_EQ(back.L, 11);
  EXPECT_EQ(back.n_cells, 7u);
  EXPECT_DOUBLE_EQ(back.dt, 0.25);
  EXPECT_DOUBLE_EQ(back.t0, 3.0);
  EXPECT_TRUE(back.truncated);
  EXPECT_EQ(back.data, g.data);
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_grid(cut), ParameterError);
}

TEST(Grid, JumpDerivativeCountsTransitions) {
  SpinGrid g;
  g.L = 2;
  g.dt = 0.5;
  g.n_cells = 3;
  g.data = {-1, 1, 1, 1, 1, -1};
  MomentSet mom = grid_moments(g, 1.0);
  // cell 0 -> 1: spin 0 goes up with s = (-1, 1); cell 1 -> 2: spin 1 goes down with s = (1, 1)
  EXPECT_DOUBLE_EQ(mom.dC0(0, 0), 2.0 * -1 / 1.0);
  EXPECT_DOUBLE_EQ(mom.dC0(0, 1), 2.0 * 1 / 1.0);
  EXPECT_DOUBLE_EQ(mom.dC0(1, 0), -2.0 * 1 / 1.0);
  EXPECT_DOUBLE_EQ(mom.dC0(1, 1), -2.0 * 1 / 1.0);
  FlipDecomposition fd = grid_flip_decomposition(g, 1.0);
  EXPECT_EQ(fd.flip_spin, (std::vector<int>{0, 1}));
}
