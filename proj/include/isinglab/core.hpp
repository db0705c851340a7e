// Shared vocabulary types for isinglab: dense matrices, spin containers,
// the error hierarchy and seeding helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace isinglab {

inline constexpr const char* kVersion = "1.0.0";

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Spin = std::int8_t;  // always -1 or +1
using SpinVector = std::vector<Spin>;
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps ParameterError/CapacityError/DomainError to
// exit code 2 and NumericalError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double condition_number = 0.0)
      : Error(what), condition_number_(condition_number) {}
  double condition_number() const { return condition_number_; }

 private:
  double condition_number_;
};

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ParameterError(message);
}

// splitmix64 finalizer; used to derive independent stream seeds from a base
// seed and an index (replicas, sweep cells, phase-diagram cells).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index = 0) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

// Uniform double in [0, 1) with 53 random bits. Written out instead of using
// std::uniform_real_distribution so streams are identical across standard
// library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double exponential(Rng& rng, double rate) {
  double u = uniform01(rng);
  return -std::log1p(-u) / rate;
}

inline Spin random_spin(Rng& rng) { return (rng() >> 63) ? Spin{1} : Spin{-1}; }

inline SpinVector random_spins(std::size_t n, Rng& rng) {
  SpinVector s(n);
  for (auto& v : s) v = random_spin(rng);
  return s;
}

// Gaussian via Box-Muller on uniform01, for the same portability reason.
class Gaussian {
 public:
  double operator()(Rng& rng) {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01(rng);
    } while (u1 <= 0.0);
    double u2 = uniform01(rng);
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// "+-+-" <-> {+1,-1,+1,-1}
inline std::string spins_to_string(const SpinVector& s) {
  std::string out(s.size(), '-');
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] > 0) out[i] = '+';
  return out;
}

inline SpinVector spins_from_string(std::string_view text) {
  SpinVector s;
  s.reserve(text.size());
  for (char c : text) {
    if (c == '+' || c == '1')
      s.push_back(1);
    else if (c == '-' || c == '0')
      s.push_back(-1);
    else if (c == '\r' || c == ' ')
      continue;
    else
      throw ParameterError(std::string("invalid spin character '") + c + "'");
  }
  return s;
}

// Locale-independent 17-significant-digit formatting for CSV/text outputs.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace isinglab
