// Acceptance suite. Run all criteria, or one with --criterion N.
// Prints one PASS/FAIL line per criterion; exit status is nonzero on any FAIL.

#include "isinglab/isinglab.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace isinglab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... T>
std::string cat(const T&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

CouplingModel random_small_model(int L, double g, std::uint64_t seed, double theta_range) {
  CouplingModel m = generate_sk({L, g, 0.0, seed});
  Rng rng = make_rng(seed, 1);
  for (int i = 0; i < L; ++i) m.theta(i) = theta_range * (2.0 * uniform01(rng) - 1.0);
  return m;
}

SpinTrajectory long_run(const CouplingModel& m, double t_end, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0x696e6974);
  return simulate_gillespie(m, 1.0, t_end, random_spins(m.L, rng), seed);
}

// 1. Gillespie stationary moments against exact enumeration and the master equation.
Outcome criterion1() {
  const int L = 5;
  int worst_model = -1;
  double worst_z = 0.0, me_gap = 0.0;
  for (int k = 0; k < 5; ++k) {
    CouplingModel m = random_small_model(L, 0.3, 1000 + k, 0.3);
    ExactMoments ex = exact_gibbs_moments(m);
    std::vector<double> uniform(std::size_t{1} << L, 1.0 / (1u << L));
    DistributionState st = integrate_master_equation(m, 1.0, 60.0, uniform);
    ExactMoments me = moments_of_distribution(L, st.prob);
    me_gap = std::max({me_gap, (me.m - ex.m).lpNorm<Eigen::Infinity>(),
                       (me.c - ex.c).lpNorm<Eigen::Infinity>()});

    const double burn_in = 20.0;
    SpinTrajectory traj = long_run(m, 1e5, 2000 + k);
    MomentSet mom = trajectory_moments(traj, {0.0}, burn_in);
    MomentErrors se = trajectory_moment_errors(traj, burn_in, 50);
    for (const ExactMoments* ref : {&ex, &me}) {
      for (int i = 0; i < L; ++i) {
        double z = std::abs(mom.m(i) - ref->m(i)) / se.m(i);
        if (z > worst_z) worst_z = z, worst_model = k;
        for (int j = i; j < L; ++j) {
          z = std::abs(mom.c0(i, j) - ref->c(i, j)) / se.c0(i, j);
          if (z > worst_z) worst_z = z, worst_model = k;
        }
      }
    }
  }
  return {worst_z <= 3.0 && me_gap < 1e-8,
          cat("max |z| = ", fmt("%.3f", worst_z), " (model ", worst_model,
              "), master-equation vs exact max gap = ", fmt("%.2e", me_gap))};
}

struct Fig1Data {
  CouplingModel model;
  MomentSet mom;
};

Fig1Data fig1_data(double k) {
  Fig1Data d;
  d.model = generate_sk({20, 0.3, k, 11});
  const double burn_in = 100.0;
  SpinTrajectory traj = long_run(d.model, burn_in + 1e7 / 20.0, 12);
  d.mom = trajectory_moments(traj, {0.0}, burn_in);
  return d;
}

// 2. Symmetric SK: equilibrium nMF and symmetrised asyn-nMF.
Outcome criterion2() {
  Fig1Data d = fig1_data(0.0);
  InferenceResult eq = infer_nmf(d.mom);
  InferenceResult as = infer_asyn_nmf(d.mom, true);
  const double p_eq = pearson(d.model.J, eq.J);
  const double p_as = pearson(d.model.J, as.J);
  const double p_x = pearson(eq.J, as.J);
  return {p_eq > 0.95 && p_as > 0.95 && p_x > 0.98,
          cat("pearson nMF = ", fmt("%.4f", p_eq), ", asyn-nMF(sym) = ", fmt("%.4f", p_as),
              ", nMF vs asyn-nMF = ", fmt("%.4f", p_x))};
}

// 3. Fully asymmetric SK: asyn-nMF recovers J, equilibrium nMF misses the antisymmetric part.
Outcome criterion3() {
  Fig1Data d = fig1_data(1.0);
  InferenceResult eq = infer_nmf(d.mom);
  InferenceResult as = infer_asyn_nmf(d.mom);
  const double p_as = pearson(d.model.J, as.J);
  const double p_anti = pearson(split_symmetry(d.model).second, eq.J);
  return {p_as > 0.9 && std::abs(p_anti) < 0.15,
          cat("pearson asyn-nMF = ", fmt("%.4f", p_as), ", nMF vs antisymmetric part = ",
              fmt("%.2e", p_anti), ", nMF vs J = ", fmt("%.4f", pearson(d.model.J, eq.J)))};
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
  std::string s;
  for (const auto& r : rows)
    s += cat(" [", r.method, " @ ", fmt("%g", r.value), ": ", fmt("%.3e", r.mse_mean),
             r.n_failed ? cat(" failed ", r.n_failed) : std::string(), "]");
  return s;
}

std::vector<double> mse_of(const std::vector<SweepRow>& rows, const std::string& method) {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.method == method) v.push_back(r.mse_mean);
  return v;
}

double spread(const std::vector<double>& v) {
  return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
}

bool all_ok(const std::vector<SweepRow>& rows) {
  for (const auto& r : rows)
    if (r.n_failed > 0 || !std::isfinite(r.mse_mean)) return false;
  return true;
}

// 4. MSE against data length.
Outcome criterion4() {
  SweepSpec s;
  s.axis = SweepAxis::DataLength;
  s.values = {1e5, 1e6, 1e7};
  s.replicas = 3;
  s.seed = 4;
  s.base.methods = {"asyn-nmf", "sho"};
  auto rows = run_sweep(s);
  const double slope_nmf = log_log_slope(s.values, mse_of(rows, "asyn-nmf"));
  const double slope_sho = log_log_slope(s.values, mse_of(rows, "sho"));
  const bool ok = all_ok(rows) && std::abs(slope_nmf + 1.0) <= 0.3 && std::abs(slope_sho + 1.0) <= 0.3;
  return {ok, cat("slope asyn-nMF = ", fmt("%.3f", slope_nmf), ", SHO = ", fmt("%.3f", slope_sho),
                  sweep_table(rows))};
}

// 5. MSE against external field.
Outcome criterion5() {
  SweepSpec s;
  s.axis = SweepAxis::Field;
  s.values = {0.0, 0.25, 0.5};
  s.replicas = 1;
  s.seed = 5;
  s.base.updates = 1e7;
  s.base.methods = {"asyn-nmf", "asyn-tap", "sho", "ave"};
  auto rows = run_sweep(s);
  const auto nmf = mse_of(rows, "asyn-nmf"), tap = mse_of(rows, "asyn-tap");
  const double r_sho = spread(mse_of(rows, "sho")), r_ave = spread(mse_of(rows, "ave"));
  const double g_nmf = nmf[2] / nmf[0], g_tap = tap[2] / tap[0];
  const bool ok = all_ok(rows) && r_sho < 2.0 && r_ave < 2.0 && g_nmf > 2.0 && g_tap > 2.0;
  return {ok, cat("max/min SHO = ", fmt("%.3f", r_sho), ", AVE = ", fmt("%.3f", r_ave),
                  "; MSE(0.5)/MSE(0) asyn-nMF = ", fmt("%.3f", g_nmf), ", asyn-TAP = ",
                  fmt("%.3f", g_tap), sweep_table(rows))};
}

// 6. MSE against coupling strength.
Outcome criterion6() {
  SweepSpec s;
  s.axis = SweepAxis::G;
  s.values = {0.1, 0.3, 0.5};
  s.replicas = 1;
  s.seed = 6;
  s.base.updates = 1e7;
  s.base.methods = {"asyn-nmf", "asyn-tap", "sho", "ave"};
  auto rows = run_sweep(s);
  const double ratio = mse_of(rows, "asyn-nmf")[2] / mse_of(rows, "sho")[2];
  std::vector<double> at_low;
  for (const auto& m : s.base.methods) at_low.push_back(mse_of(rows, m)[0]);
  const double low_spread = spread(at_low);
  const bool ok = all_ok(rows) && ratio > 3.0 && low_spread < 2.0;
  return {ok, cat("g=0.5 asyn-nMF/SHO = ", fmt("%.3f", ratio), "; g=0.1 max/min over methods = ",
                  fmt("%.3f", low_spread), sweep_table(rows))};
}

// 7. Analytic gradients against central finite differences.
Outcome criterion7() {
  CouplingModel m = generate_sk({4, 0.6, 1.0, 71});
  m.theta << 0.2, -0.1, 0.3, 0.0;
  Rng rng0 = make_rng(72, 0);
  SpinTrajectory traj = simulate_gillespie(m, 1.0, 1500.0, random_spins(4, rng0), 73);
  // cut at the 1000th event
  traj.events.resize(1000);
  traj.t_end = traj.events.back().t + 0.05;
  FlipDecomposition fd = flip_decompose(traj, 0.01);
  Rng rng = make_rng(74, 0);
  Matrix P(4, 5);
  for (Eigen::Index k = 0; k < P.size(); ++k) P.data()[k] = 0.4 * (uniform01(rng) - 0.5);
  const Matrix G = sho_objective(fd, P).gradient;
  Matrix FD(4, 5);
  const double h = 1e-5;
  for (Eigen::Index k = 0; k < P.size(); ++k) {
    Matrix a = P, b = P;
    a.data()[k] += h;
    b.data()[k] -= h;
    FD.data()[k] = (sho_objective(fd, a).value - sho_objective(fd, b).value) / (2 * h);
  }
  const double err_sho = (G - FD).norm() / G.norm();

  SampleTable table(5);
  Rng rs = make_rng(75, 0);
  for (int r = 0; r < 100; ++r) table.add_row(random_spins(5, rs));
  double err_plm = 0.0;
  for (int i = 0; i < 5; ++i) {
    PseudoLikelihood pl(table, i, 0.01);
    Vector w(5);
    for (int k = 0; k < 5; ++k) w(k) = uniform01(rs) - 0.5;
    Vector g(5), fdv(5);
    pl.value_and_gradient(w, g);
    for (int k = 0; k < 5; ++k) {
      Vector a = w, b = w;
      a(k) += h;
      b(k) -= h;
      fdv(k) = (pl.value(a) - pl.value(b)) / (2 * h);
    }
    err_plm = std::max(err_plm, (g - fdv).norm() / g.norm());
  }
  return {err_sho < 1e-5 && err_plm < 1e-5,
          cat("relative error SHO = ", fmt("%.2e", err_sho), " (", fd.flip_count(),
              " flips), PLM = ", fmt("%.2e", err_plm))};
}

// 8. Consistency on exact moments.
Outcome criterion8() {
  CouplingModel m = random_small_model(5, 0.3, 81, 0.3);
  SampleTable exact = exact_sample_table(m);
  BmOptions bo;
  bo.tol = 1e-9;
  InferenceResult bm = infer_bm(exact, bo);
  PlmOptions po;
  po.lambda = 0.0;
  po.grad_tol = 1e-10;
  InferenceResult plm = infer_plm(exact, po);
  InferenceResult nmf = infer_nmf(sample_moments(exact));
  auto err = [&](const InferenceResult& r) {
    return std::max((r.J - m.J).lpNorm<Eigen::Infinity>(),
                    (r.theta - m.theta).lpNorm<Eigen::Infinity>());
  };
  const double e_bm = err(bm), e_plm = err(plm), e_nmf = err(nmf);
  return {e_bm <= 1e-3 && e_plm <= 1e-3 && e_nmf > 1e-3,
          cat("max-norm error BM = ", fmt("%.2e", e_bm), ", PLM = ", fmt("%.2e", e_plm),
              ", nMF = ", fmt("%.2e", e_nmf))};
}

// 9. asyn-TAP cubic and iterative modes.
Outcome criterion9() {
  CouplingModel m = generate_sk({10, 0.2, 1.0, 91});
  SpinTrajectory traj = long_run(m, 100.0 + 1e6 / 10.0, 92);
  MomentSet mom = trajectory_moments(traj, {0.0}, 100.0);
  AsynTapOptions cubic, iter;
  cubic.mode = TapMode::Cubic;
  iter.mode = TapMode::Iterative;
  InferenceResult a = infer_asyn_tap(mom, cubic);
  InferenceResult b = infer_asyn_tap(mom, iter);
  const double gap = (a.J - b.J).lpNorm<Eigen::Infinity>();

  KineticMatrices k = kinetic_matrices(mom, "check");
  const auto F = a.diagnostics.at("F").get<std::vector<double>>();
  double residual = 0.0;
  for (int i = 0; i < mom.L; ++i) {
    double bi = 0.0;
    for (int j = 0; j < mom.L; ++j) bi += k.V(i, j) * k.V(i, j) * (1.0 - mom.m(j) * mom.m(j));
    bi /= 1.0 - mom.m(i) * mom.m(i);
    residual = std::max(residual, std::abs(F[i] * (1 - F[i]) * (1 - F[i]) - bi));
  }
  const bool fallback = !a.diagnostics.at("nmf_fallback_rows").empty();
  return {gap <= 1e-6 && residual < 1e-12 && !fallback && b.diagnostics.at("converged").get<bool>(),
          cat("max |J_cubic - J_iter| = ", fmt("%.2e", gap), ", cubic residual = ",
              fmt("%.2e", residual), ", iterations = ", b.diagnostics.at("iterations").get<int>())};
}

struct KnsRun {
  double pearson_single = 0.0, rmse_single = 0.0, rmse_all = 0.0;
};

KnsRun kns_run(double r) {
  EvolutionParams e = recovery_preset();
  e.r = r;
  e.seed = 101;
  FitnessParams f = generate_fitness(e.L, 0.004, 102);
  auto snaps = evolve(f, e);
  KnsOptions single, all;
  all.averaging = Averaging::Alltime;
  InferenceResult s = infer_fitness_kns(snaps, e, single);
  InferenceResult a = infer_fitness_kns(snaps, e, all);
  return {pearson(f.fmat, s.J), relative_rmse(f.fmat, s.J), relative_rmse(f.fmat, a.J)};
}

// 10. KNS fitness recovery works at r=0.5 and fails at r=0.1.
Outcome criterion10() {
  KnsRun hi = kns_run(0.5), lo = kns_run(0.1);
  const double ratio = lo.rmse_single / hi.rmse_single;
  return {hi.pearson_single > 0.6 && lo.pearson_single < 0.3 && ratio > 2.0,
          cat("pearson r=0.5: ", fmt("%.3f", hi.pearson_single), ", r=0.1: ",
              fmt("%.3f", lo.pearson_single), "; relative RMSE r=0.5: ", fmt("%.3f", hi.rmse_single),
              ", r=0.1: ", fmt("%.3f", lo.rmse_single), ", ratio ", fmt("%.3f", ratio))};
}

// 11. Crossover c_ij closed form against Monte Carlo.
Outcome criterion11() {
  const int L = 8;
  double worst = 0.0;
  for (double rho : {0.05, 0.2, 0.5}) {
    Matrix c = crossover_cij(rho, L);
    CijEstimate mc = crossover_cij_monte_carlo(rho, L, 1000000, 111);
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j)
        worst = std::max(worst, std::abs(mc.mean(i, j) - c(i, j)) / mc.standard_error(i, j));
  }
  return {worst <= 3.0, cat("max |z| = ", fmt("%.3f", worst))};
}

// 12. Similarity endpoints and null level.
Outcome criterion12() {
  Rng rng = make_rng(121, 0);
  Gaussian gauss;
  auto gaussian_matrix = [&](int L) {
    Matrix A(L, L);
    for (Eigen::Index k = 0; k < A.size(); ++k) A.data()[k] = gauss(rng);
    return A;
  };
  Matrix J = gaussian_matrix(20);
  const double q_same = similarity_q(J, J), q_neg = similarity_q(J, -J);
  int below = 0;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const double q = similarity_q(gaussian_matrix(100), gaussian_matrix(100));
    below += std::abs(q) < 0.02;
    worst = std::max(worst, std::abs(q));
  }
  return {q_same == 1.0 && q_neg == -1.0 && below >= 95,
          cat("Q(J,J) = ", fmt("%.17g", q_same), ", Q(J,-J) = ", fmt("%.17g", q_neg), ", null |Q|<0.02 in ",
              below, "/100 trials (max ", fmt("%.4f", worst), ")")};
}

// 13. Singletime and alltime averaging agree at r=0.5.
Outcome criterion13() {
  KnsRun hi = kns_run(0.5);
  const double diff = std::abs(hi.rmse_single - hi.rmse_all) / std::min(hi.rmse_single, hi.rmse_all);
  return {diff < 0.5, cat("relative RMSE singletime = ", fmt("%.3f", hi.rmse_single), ", alltime = ",
                          fmt("%.3f", hi.rmse_all), ", relative difference ", fmt("%.3f", diff))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {
      criterion1, criterion2, criterion3, criterion4,  criterion5,  criterion6, criterion7,
      criterion8, criterion9, criterion10, criterion11, criterion12, criterion13};
  std::vector<int> which;
  for (int a = 1; a < argc; ++a) {
    if (std::strcmp(argv[a], "--criterion") == 0 && a + 1 < argc) {
      which.push_back(std::atoi(argv[++a]));
    } else {
      std::fprintf(stderr, "usage: %s [--criterion N]...\n", argv[0]);
      return 2;
    }
  }
  if (which.empty())
    for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) which.push_back(n);

  int failed = 0;
  for (int n : which) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "no criterion %d\n", n);
      return 2;
    }
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d: %s  %s  (%.1f s)\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
