#pragma once

#include "isinglab/core.hpp"

#include <json.hpp>

#include <string>

namespace isinglab {

// Inferred fields/couplings (or epistatic fitness for method "KNS") with the
// hyperparameters used and per-run diagnostics.
struct InferenceResult {
  Vector theta;
  Matrix J;
  std::string method;
  nlohmann::json hyperparams = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();

  int L() const { return static_cast<int>(J.rows()); }
};

// Condition number of a symmetric matrix; +inf when it is not positive
// definite.
inline double symmetric_condition_number(const Matrix& c) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return INFINITY;
  return hi / lo;
}

inline constexpr double kMaxConditionNumber = 1e12;

inline void require_invertible(const Matrix& c, const std::string& who, double& cond) {
  cond = symmetric_condition_number(c);
  if (!(cond <= kMaxConditionNumber))
    throw NumericalError(who + ": correlation matrix is singular (condition number " +
                             fmt17(cond) + "); add a pseudocount",
                         cond);
}

inline void require_unsaturated(const Vector& m, const std::string& who) {
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!(std::abs(m(i)) < 1.0))
      throw NumericalError(who + ": |m_" + std::to_string(i) +
                           "| = 1, field diverges; add a pseudocount");
}

}  // namespace isinglab
