#pragma once

#include <algorithm>
#include <vector>

#include "lsd/common.hpp"
#include "lsd/discrepancy.hpp"
#include "lsd/models.hpp"

namespace lsd {

struct RbfKernel {
  double log_bandwidth = 0.0;
  double bandwidth() const { return std::exp(log_bandwidth); }
};

// Median pairwise Euclidean distance over a subsample of <= 1000 rows.
// Returns 0 when the subsample is degenerate (identical rows).
inline double median_bandwidth(const Mat& X) {
  const Eigen::Index n = std::min<Eigen::Index>(X.rows(), 1000);
  if (n < 2) throw InsufficientDataError("median_bandwidth: need n >= 2");
  std::vector<double> d;
  d.reserve(std::size_t(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d.push_back((X.row(i) - X.row(j)).norm());
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

namespace detail {

// Four-term Stein kernel for the RBF kernel k(x,x') = exp(-||x-x'||^2/(2h^2)):
//   u = k [ s^T s' + (s - s')^T r / h^2 + d/h^2 - ||r||^2 / h^4 ],  r = x - x'.
// Also returns du/dlog(h) for bandwidth learning.
inline void ksd_pair(const Vec& r, const Vec& si, const Vec& sj, double h,
                     double* u, double* dlogh) {
  const double d = double(r.size());
  const double h2 = h * h;
  const double rr = r.squaredNorm();
  const double k = std::exp(-rr / (2.0 * h2));
  const double sdots = si.dot(sj);
  const double sr = (si - sj).dot(r);
  const double A = sdots + sr / h2 + d / h2 - rr / (h2 * h2);
  *u = k * A;
  if (dlogh) {
    *dlogh = k * ((rr / h2) * A - 2.0 * sr / h2 - 2.0 * d / h2 + 4.0 * rr / (h2 * h2));
  }
}

}  // namespace detail

// U-statistic over unordered pairs i < j (the kernel is symmetric, so this
// equals the average over ordered pairs i != j).  The reported std is the
// sample std of the per-pair terms.
inline DiscrepancyEstimate ksd_quadratic(const ScoreModel& model, const Mat& X,
                                         const RbfKernel& kernel,
                                         double* bandwidth_grad = nullptr) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw InsufficientDataError("ksd_quadratic: need n >= 2");
  Mat S = model.score(X);
  const double h = kernel.bandwidth();
  const Eigen::Index m = n * (n - 1) / 2;
  Vec terms(m);
  double gsum = 0.0;
  Eigen::Index t = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double u, g;
      detail::ksd_pair(X.row(i) - X.row(j), S.row(i), S.row(j), h, &u,
                       bandwidth_grad ? &g : nullptr);
      terms(t++) = u;
      if (bandwidth_grad) gsum += g;
    }
  }
  if (bandwidth_grad) *bandwidth_grad = gsum / double(m);
  return {sample_mean(terms), m >= 2 ? sample_std(terms) : 0.0, m};
}

// Linear-time variant: averages u over floor(n/2) disjoint pairs.
inline DiscrepancyEstimate ksd_linear(const ScoreModel& model, const Mat& X,
                                      const RbfKernel& kernel,
                                      double* bandwidth_grad = nullptr) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw InsufficientDataError("ksd_linear: need n >= 2");
  Mat S = model.score(X);
  const double h = kernel.bandwidth();
  const Eigen::Index m = n / 2;
  Vec terms(m);
  double gsum = 0.0;
  for (Eigen::Index p = 0; p < m; ++p) {
    const Eigen::Index i = 2 * p, j = 2 * p + 1;
    double u, g;
    detail::ksd_pair(X.row(i) - X.row(j), S.row(i), S.row(j), h, &u,
                     bandwidth_grad ? &g : nullptr);
    terms(p) = u;
    if (bandwidth_grad) gsum += g;
  }
  if (bandwidth_grad) *bandwidth_grad = gsum / double(m);
  return {sample_mean(terms), m >= 2 ? sample_std(terms) : 0.0, m};
}

}  // namespace lsd
