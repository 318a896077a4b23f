#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lsd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SingularMatrixError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientDataError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DegenerateStatisticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Independent stream derived from a master seed; used for per-chain /
// per-task RNGs so tasks can run in any order.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Vec gaussian_vector(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline Mat gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline double sample_mean(const Vec& v) { return v.mean(); }

// Sample standard deviation, n-1 denominator.
inline double sample_std(const Vec& v) {
  const Eigen::Index n = v.size();
  if (n < 2) throw InsufficientDataError("sample_std needs n >= 2");
  const double mu = v.mean();
  return std::sqrt((v.array() - mu).square().sum() / double(n - 1));
}

inline void check_finite(const Mat& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError(what + " contains non-finite values");
}

}  // namespace lsd
