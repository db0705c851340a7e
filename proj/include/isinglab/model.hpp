// Coupling/field parameter sets, Sherrington-Kirkpatrick ensembles with
// tunable asymmetry, and exact small-system Gibbs computations.
//
// Sign convention: P(s) ∝ exp(Σ_i θ_i s_i + Σ_{i<j} J_ij s_i s_j), the
// stationary measure of Glauber dynamics with effective field
// H_i = θ_i + Σ_j J_ij s_j when J is symmetric.
#pragma once

#include "isinglab/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

namespace isinglab {

struct CouplingModel {
  int L = 0;
  Vector theta;
  Matrix J;
  bool self_allowed = false;
  nlohmann::json meta = nlohmann::json::object();

  CouplingModel() = default;
  explicit CouplingModel(int n)
      : L(n), theta(Vector::Zero(n)), J(Matrix::Zero(n, n)) {}

  void validate() const {
    require(L >= 1, "model: L must be positive");
    require(theta.size() == L, "model: theta has wrong length");
    require(J.rows() == L && J.cols() == L, "model: J has wrong shape");
    require(all_finite(theta) && all_finite(J), "model: non-finite entries");
    if (!self_allowed)
      for (int i = 0; i < L; ++i)
        require(J(i, i) == 0.0, "model: nonzero diagonal without self_allowed");
  }

  bool is_symmetric(double tol = 0.0) const {
    return (J - J.transpose()).cwiseAbs().maxCoeff() <= tol;
  }
};

struct SKParams {
  int L = 20;
  double g = 0.3;
  double k = 0.0;
  std::uint64_t seed = 1;
};

// J = J^s + k J^as with independent Gaussian symmetric and antisymmetric
// parts of variance g²/(L(1+k²)) each, so every off-diagonal entry of J has
// variance g²/L regardless of k.
inline CouplingModel generate_sk(const SKParams& p) {
  if (!(p.g > 0.0)) throw ParameterError("generate_sk: g must be positive");
  if (p.L < 2) throw ParameterError("generate_sk: L must be at least 2");
  if (!(p.k >= 0.0)) throw ParameterError("generate_sk: k must be >= 0");

  const int L = p.L;
  const double sd = p.g / std::sqrt(L * (1.0 + p.k * p.k));
  Rng rng = make_rng(p.seed);
  Gaussian gauss;
  CouplingModel model(L);
  for (int i = 0; i < L; ++i) {
    for (int j = i + 1; j < L; ++j) {
      double sym = sd * gauss(rng);
      double anti = sd * gauss(rng);
      model.J(i, j) = sym + p.k * anti;
      model.J(j, i) = sym - p.k * anti;
    }
  }
  model.meta = {{"generator", "sk"}, {"g", p.g}, {"k", p.k}, {"seed", p.seed}};
  return model;
}

inline std::pair<Matrix, Matrix> split_symmetry(const Matrix& J) {
  Matrix sym = 0.5 * (J + J.transpose());
  Matrix anti = 0.5 * (J - J.transpose());
  return {std::move(sym), std::move(anti)};
}

inline std::pair<Matrix, Matrix> split_symmetry(const CouplingModel& model) {
  return split_symmetry(model.J);
}

inline constexpr int kExactMaxL = 16;

// Full enumeration of the Gibbs measure. Configuration index x encodes
// s_i = +1 iff bit i of x is set.
struct GibbsDistribution {
  int L = 0;
  std::vector<double> prob;
  double logZ = 0.0;
};

inline Spin spin_of(std::uint32_t x, int i) { return ((x >> i) & 1u) ? 1 : -1; }

inline SpinVector config_of(std::uint32_t x, int L) {
  SpinVector s(L);
  for (int i = 0; i < L; ++i) s[i] = spin_of(x, i);
  return s;
}

inline std::uint32_t index_of(const SpinVector& s) {
  std::uint32_t x = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] > 0) x |= (1u << i);
  return x;
}

inline void check_enumerable(const CouplingModel& model, int max_L) {
  model.validate();
  if (model.L > max_L)
    throw CapacityError("exact enumeration limited to L <= " +
                        std::to_string(max_L) + ", got " + std::to_string(model.L));
  if (!model.is_symmetric(1e-12 * (1.0 + model.J.cwiseAbs().maxCoeff())))
    throw DomainError("Gibbs measure requires symmetric couplings");
}

inline GibbsDistribution gibbs_distribution(const CouplingModel& model,
                                            int max_L = kExactMaxL) {
  check_enumerable(model, max_L);
  const int L = model.L;
  const std::uint32_t n = 1u << L;
  GibbsDistribution out;
  out.L = L;
  out.prob.resize(n);
  std::vector<double> log_weight(n);
  double max_lw = -INFINITY;
  for (std::uint32_t x = 0; x < n; ++x) {
    double e = 0.0;
    for (int i = 0; i < L; ++i) {
      const double si = spin_of(x, i);
      e += model.theta(i) * si;
      for (int j = i + 1; j < L; ++j) e += model.J(i, j) * si * spin_of(x, j);
    }
    log_weight[x] = e;
    max_lw = std::max(max_lw, e);
  }
  double z = 0.0;
  for (std::uint32_t x = 0; x < n; ++x) {
    out.prob[x] = std::exp(log_weight[x] - max_lw);
    z += out.prob[x];
  }
  for (auto& p : out.prob) p /= z;
  out.logZ = max_lw + std::log(z);
  return out;
}

struct ExactMoments {
  Vector m;       // ⟨s_i⟩
  Matrix c;       // ⟨s_i s_j⟩ - ⟨s_i⟩⟨s_j⟩
  Matrix second;  // ⟨s_i s_j⟩
  double logZ = 0.0;
};

inline ExactMoments moments_of_distribution(int L, const std::vector<double>& prob) {
  ExactMoments out;
  out.m = Vector::Zero(L);
  out.second = Matrix::Zero(L, L);
  Vector s(L);
  for (std::uint32_t x = 0; x < prob.size(); ++x) {
    const double p = prob[x];
    if (p == 0.0) continue;
    for (int i = 0; i < L; ++i) s(i) = spin_of(x, i);
    out.m += p * s;
    out.second.noalias() += p * s * s.transpose();
  }
  out.c = out.second - out.m * out.m.transpose();
  return out;
}

inline ExactMoments exact_gibbs_moments(const CouplingModel& model,
                                        int max_L = kExactMaxL) {
  GibbsDistribution dist = gibbs_distribution(model, max_L);
  ExactMoments out = moments_of_distribution(model.L, dist.prob);
  out.logZ = dist.logZ;
  return out;
}

}  // namespace isinglab
