// Reconstruction quality of inferred couplings against a reference.
#pragma once

#include "isinglab/core.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <vector>

namespace isinglab {

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols())
    throw ParameterError(std::string(who) + ": matrices must be square and of equal shape");
}

template <typename F>
void for_off_diagonal(const Matrix& a, F&& f) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      if (i != j) f(i, j);
}

}  // namespace detail

// Σ_{i≠j} (J*_ij - J_ij)² / (L(L-1)).
inline double mse(const Matrix& J_true, const Matrix& J_star) {
  detail::require_same_shape(J_true, J_star, "mse");
  const Eigen::Index L = J_true.rows();
  require(L >= 2, "mse: need L >= 2");
  double sum = 0.0;
  detail::for_off_diagonal(J_true, [&](Eigen::Index i, Eigen::Index j) {
    const double d = J_star(i, j) - J_true(i, j);
    sum += d * d;
  });
  return sum / static_cast<double>(L * (L - 1));
}

// Denominator term of Q: (max(|a|, |b|))² by default. The signed reading
// (max(a, b))² gives the same ±1 endpoints but is unbounded when both
// entries are negative.
enum class QDenominator { AbsMax, SignedMax };

// Q = Σ J_ij J'_ij / Σ max(J_ij, J'_ij)², off-diagonal entries.
inline double similarity_q(const Matrix& A, const Matrix& B,
                           QDenominator denom = QDenominator::AbsMax) {
  detail::require_same_shape(A, B, "similarity_q");
  double num = 0.0, den = 0.0;
  detail::for_off_diagonal(A, [&](Eigen::Index i, Eigen::Index j) {
    const double a = A(i, j), b = B(i, j);
    num += a * b;
    const double m = denom == QDenominator::AbsMax ? std::max(std::abs(a), std::abs(b))
                                                   : std::max(a, b);
    den += m * m;
  });
  if (den == 0.0) throw DomainError("similarity_q: undefined for all-zero matrices");
  return num / den;
}

// Pairs (i<j) ranked by max(|J_ij|, |J_ji|), descending; ties keep
// row-major pair order.
inline std::vector<std::pair<int, int>> ranked_pairs(const Matrix& J) {
  const int L = static_cast<int>(J.rows());
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> score;
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j) {
      pairs.emplace_back(i, j);
      score.push_back(std::max(std::abs(J(i, j)), std::abs(J(j, i))));
    }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::pair<int, int>> out;
  out.reserve(order.size());
  for (std::size_t k : order) out.push_back(pairs[k]);
  return out;
}

// Fraction of the k strongest inferred pairs that are among the k strongest
// true pairs.
inline double tpr_k(const Matrix& J_true, const Matrix& J_star, std::size_t k) {
  detail::require_same_shape(J_true, J_star, "tpr_k");
  const std::size_t L = static_cast<std::size_t>(J_true.rows());
  const std::size_t total = L * (L - 1) / 2;
  if (k < 1 || k > total)
    throw ParameterError("tpr_k: k must lie in [1, " + std::to_string(total) + "]");
  auto rt = ranked_pairs(J_true);
  auto rs = ranked_pairs(J_star);
  std::vector<char> in_true(L * L, 0);
  for (std::size_t n = 0; n < k; ++n) in_true[rt[n].first * L + rt[n].second] = 1;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < k; ++n) hits += in_true[rs[n].first * L + rs[n].second];
  return static_cast<double>(hits) / static_cast<double>(k);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "pearson: need two equal-length series");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = x[k] - mx, dy = y[k] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("pearson: constant series");
  return sxy / std::sqrt(sxx * syy);
}

inline std::vector<double> off_diagonal(const Matrix& A) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(A.size()));
  detail::for_off_diagonal(A, [&](Eigen::Index i, Eigen::Index j) { v.push_back(A(i, j)); });
  return v;
}

// Pearson correlation over off-diagonal entries.
inline double pearson(const Matrix& A, const Matrix& B) {
  detail::require_same_shape(A, B, "pearson");
  return pearson(off_diagonal(A), off_diagonal(B));
}

// sqrt(Σ_{i≠j} (est - truth)² / Σ_{i≠j} truth²).
inline double relative_rmse(const Matrix& truth, const Matrix& est) {
  detail::require_same_shape(truth, est, "relative_rmse");
  double num = 0.0, den = 0.0;
  detail::for_off_diagonal(truth, [&](Eigen::Index i, Eigen::Index j) {
    const double d = est(i, j) - truth(i, j);
    num += d * d;
    den += truth(i, j) * truth(i, j);
  });
  if (den == 0.0) throw DomainError("relative_rmse: reference is all zero");
  return std::sqrt(num / den);
}

inline Matrix symmetrized(const Matrix& J) {
  Matrix S = 0.5 * (J + J.transpose());
  S.diagonal().setZero();
  return S;
}

struct EvalOptions {
  std::vector<std::size_t> ks;  // empty selects {L, 2L, L(L-1)/4}
  bool symmetrize = false;      // symmetrise the estimate before comparing
  QDenominator q_denominator = QDenominator::AbsMax;
};

struct EvalReport {
  double mse = 0.0;
  double q_similarity = 0.0;
  std::map<std::size_t, double> tpr;
  double pearson = 0.0;
  double theta_mse = NAN;
  double residual_mean = 0.0;
  double residual_sd = 0.0;
  double residual_max_abs = 0.0;
  bool symmetrized = false;

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : tpr) t[std::to_string(k)] = v;
    nlohmann::json j = {{"mse", mse},
                        {"q_similarity", q_similarity},
                        {"tpr_k", t},
                        {"pearson", pearson},
                        {"residual", {{"mean", residual_mean},
                                      {"sd", residual_sd},
                                      {"max_abs", residual_max_abs}}},
                        {"flags", {{"diagonal_excluded", true},
                                   {"symmetrized_before_compare", symmetrized}}}};
    j["theta_mse"] = std::isnan(theta_mse) ? nlohmann::json(nullptr) : nlohmann::json(theta_mse);
    return j;
  }
};

inline EvalReport evaluate(const Matrix& J_true, const Matrix& J_est,
                           const EvalOptions& opt = {}, const Vector* theta_true = nullptr,
                           const Vector* theta_est = nullptr) {
  detail::require_same_shape(J_true, J_est, "evaluate");
  const Matrix est = opt.symmetrize ? symmetrized(J_est) : J_est;
  EvalReport r;
  r.symmetrized = opt.symmetrize;
  r.mse = mse(J_true, est);
  r.q_similarity = similarity_q(J_true, est, opt.q_denominator);
  r.pearson = pearson(J_true, est);
  const std::size_t L = static_cast<std::size_t>(J_true.rows());
  const std::size_t total = L * (L - 1) / 2;
  std::vector<std::size_t> ks = opt.ks;
  if (ks.empty()) ks = {std::min(L, total), std::min(2 * L, total), std::max<std::size_t>(1, total / 2)};
  for (std::size_t k : ks) r.tpr[k] = tpr_k(J_true, est, k);
  std::vector<double> res;
  detail::for_off_diagonal(J_true, [&](Eigen::Index i, Eigen::Index j) {
    res.push_back(est(i, j) - J_true(i, j));
  });
  double s = 0.0, ss = 0.0;
  for (double v : res) {
    s += v;
    r.residual_max_abs = std::max(r.residual_max_abs, std::abs(v));
  }
  r.residual_mean = s / static_cast<double>(res.size());
  for (double v : res) ss += (v - r.residual_mean) * (v - r.residual_mean);
  r.residual_sd = std::sqrt(ss / static_cast<double>(res.size()));
  if (theta_true && theta_est) {
    require(theta_true->size() == theta_est->size(), "evaluate: field length mismatch");
    r.theta_mse = (*theta_true - *theta_est).squaredNorm() / static_cast<double>(theta_true->size());
  }
  return r;
}

// i,j,true,inferred rows over off-diagonal entries.
inline void write_scatter_csv(std::ostream& os, const Matrix& J_true, const Matrix& J_est) {
  detail::require_same_shape(J_true, J_est, "write_scatter_csv");
  os << "i,j,true,inferred\n";
  for (Eigen::Index i = 0; i < J_true.rows(); ++i)
    for (Eigen::Index j = 0; j < J_true.cols(); ++j)
      if (i != j) os << i << ',' << j << ',' << fmt17(J_true(i, j)) << ',' << fmt17(J_est(i, j)) << '\n';
}

}  // namespace isinglab
