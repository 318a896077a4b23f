#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "lsd/common.hpp"
#include "lsd/procedures.hpp"
#include "lsd/stats.hpp"

namespace lsd {

// Seeded permutation then contiguous slicing; disjoint and exhaustive.
inline SplitData split(const Mat& X, const std::array<double, 3>& ratios,
                       std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0 || ratios[1] <= 0 || ratios[2] <= 0 || std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split: ratios must be positive and sum to 1");
  const Eigen::Index n = X.rows();
  const Eigen::Index n1 = Eigen::Index(std::llround(double(n) * ratios[0]));
  const Eigen::Index n2 = Eigen::Index(std::llround(double(n) * ratios[1]));
  const Eigen::Index n3 = n - n1 - n2;
  if (n1 < 1 || n2 < 1 || n3 < 1) throw ConfigError("split: empty slice");
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  SplitData out;
  out.train.resize(n1, X.cols());
  out.val.resize(n2, X.cols());
  out.test.resize(n3, X.cols());
  for (Eigen::Index i = 0; i < n1; ++i) out.train.row(i) = X.row(perm[i]);
  for (Eigen::Index i = 0; i < n2; ++i) out.val.row(i) = X.row(perm[n1 + i]);
  for (Eigen::Index i = 0; i < n3; ++i) out.test.row(i) = X.row(perm[n1 + n2 + i]);
  return out;
}

// ---------------------------------------------------------------------------
// Image preprocessing: uniform dequantization + logit transform.

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Pixels in [0, 255] -> add U(0,1), scale by 1/256, clamp to
// [alpha, 1 - alpha], then logit.  Finite for every input.
inline Mat logit_dequantize(const Mat& pixels, std::uint64_t seed, double alpha = 1e-6) {
  if ((pixels.array() < 0.0).any() || (pixels.array() > 255.0).any())
    throw ConfigError("logit_dequantize: pixel values must lie in [0, 255]");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat out(pixels.rows(), pixels.cols());
  for (Eigen::Index i = 0; i < pixels.rows(); ++i)
    for (Eigen::Index j = 0; j < pixels.cols(); ++j) {
      double v = (pixels(i, j) + unif(rng)) / 256.0;
      v = std::min(1.0 - alpha, std::max(alpha, v));
      out(i, j) = logit(v);
    }
  return out;
}

inline Mat logit_inverse(const Mat& Z) {
  return Z.unaryExpr([](double z) { return sigmoid(z); });
}

// ---------------------------------------------------------------------------
// IDX (MNIST-style) container, big-endian.

struct IdxData {
  std::vector<Eigen::Index> shape;
  std::vector<std::uint8_t> data;

  // Flattens images to rows of an n x (prod of trailing dims) matrix.
  Mat as_matrix() const {
    if (shape.empty()) throw FormatError("idx: empty shape");
    Eigen::Index n = shape[0], d = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) d *= shape[i];
    Mat out(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) out(i, j) = double(data[std::size_t(i * d + j)]);
    return out;
  }
};

inline IdxData load_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("idx: cannot open " + path);
  auto read_u8 = [&](long offset) -> int {
    int c = f.get();
    if (c == EOF) throw FormatError("idx: truncated file at byte " + std::to_string(offset));
    return c;
  };
  long off = 0;
  if (read_u8(off++) != 0 || read_u8(off++) != 0)
    throw FormatError("idx: bad magic at byte 0");
  const int dtype = read_u8(off++);
  if (dtype != 0x08) throw FormatError("idx: unsupported data type at byte 2");
  const int ndim = read_u8(off++);
  if (ndim < 1 || ndim > 4) throw FormatError("idx: bad dimension count at byte 3");
  IdxData out;
  std::size_t total = 1;
  for (int k = 0; k < ndim; ++k) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v = (v << 8) | std::uint32_t(read_u8(off++));
    out.shape.push_back(Eigen::Index(v));
    total *= v;
  }
  out.data.resize(total);
  f.read(reinterpret_cast<char*>(out.data.data()), std::streamsize(total));
  if (std::size_t(f.gcount()) != total)
    throw FormatError("idx: truncated payload at byte " +
                      std::to_string(off + f.gcount()));
  return out;
}

inline void write_idx(const std::string& path, const IdxData& d) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("idx: cannot write " + path);
  f.put(0);
  f.put(0);
  f.put(char(0x08));
  f.put(char(d.shape.size()));
  for (auto s : d.shape)
    for (int b = 3; b >= 0; --b) f.put(char((std::uint64_t(s) >> (8 * b)) & 0xff));
  f.write(reinterpret_cast<const char*>(d.data.data()), std::streamsize(d.data.size()));
}

// ---------------------------------------------------------------------------
// Toy 2-d datasets.

inline Mat toy2d_data(const std::string& name, Eigen::Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat X(n, 2);
  if (name == "two_moons") {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = M_PI * unif(rng);
      double x, y;
      if (i % 2 == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      X(i, 0) = x + 0.1 * gauss(rng);
      X(i, 1) = y + 0.1 * gauss(rng);
    }
  } else if (name == "rings") {
    const double radii[] = {1.0, 2.0, 3.0};
    std::uniform_int_distribution<int> ring(0, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = radii[ring(rng)] + 0.1 * (2.0 * unif(rng) - 1.0);
      const double t = 2.0 * M_PI * unif(rng);
      X(i, 0) = r * std::cos(t);
      X(i, 1) = r * std::sin(t);
    }
  } else if (name == "checkerboard") {
    Eigen::Index i = 0;
    while (i < n) {
      const double x = 8.0 * unif(rng) - 4.0;
      const double y = 8.0 * unif(rng) - 4.0;
      const long cell = long(std::floor(x)) + long(std::floor(y));
      if ((cell % 2 + 2) % 2 == 0) {
        X(i, 0) = x;
        X(i, 1) = y;
        ++i;
      }
    }
  } else if (name == "spirals") {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double t = 3.0 * M_PI * std::sqrt(unif(rng));
      const double sgn = (i % 2 == 0) ? 1.0 : -1.0;
      X(i, 0) = sgn * t * std::cos(t) / (3.0 * M_PI) * 3.0 + 0.05 * gauss(rng);
      X(i, 1) = sgn * t * std::sin(t) / (3.0 * M_PI) * 3.0 + 0.05 * gauss(rng);
    }
  } else {
    throw ConfigError("toy2d_data: unknown dataset " + name);
  }
  return X;
}

// ---------------------------------------------------------------------------
// Calibration report: empirical quantiles of H0 statistics vs N(0, 1).

struct QqReport {
  Vec empirical;    // sorted statistics
  Vec theoretical;  // standard-normal quantiles at (i - 0.5)/n
  double ks_distance = 0.0;
  double ks_p_value = 0.0;
  bool degenerate = false;
};

inline QqReport calibration_report(const std::vector<double>& stats) {
  if (stats.size() < 50)
    throw InsufficientDataError("calibration_report: need >= 50 statistics");
  QqReport r;
  const Eigen::Index n = Eigen::Index(stats.size());
  std::vector<double> sorted = stats;
  std::sort(sorted.begin(), sorted.end());
  r.empirical = Eigen::Map<const Vec>(sorted.data(), n);
  r.theoretical.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    r.theoretical(i) = normal_quantile((double(i) + 0.5) / double(n));
  r.degenerate = (sorted.front() == sorted.back());
  KsResult ks = ks_test_normal(sorted);
  r.ks_distance = ks.distance;
  r.ks_p_value = ks.p_value;
  return r;
}

}  // namespace lsd
