#pragma once

#include <Eigen/LU>
#include <functional>

#include "lsd/common.hpp"
#include "lsd/mlp.hpp"
#include "lsd/models.hpp"

namespace lsd {

enum class TraceKind { exact_trace, hutchinson };

// Per-example Stein statistics s_i = score(x_i)^T f(x_i) + tr(df/dx_i).
struct SteinTerms {
  Vec values;
  TraceKind kind = TraceKind::exact_trace;
};

struct DiscrepancyEstimate {
  double mean = 0.0;
  double std = 0.0;
  Eigen::Index n = 0;
};

inline SteinTerms stein_terms_exact(const MlpNet& critic, const ScoreModel& model,
                                    const Mat& X) {
  if (critic.d_in() != critic.d_out())
    throw ShapeError("stein_terms: critic must be square");
  if (X.cols() != critic.d_in()) throw ShapeError("stein_terms: dim mismatch");
  check_finite(X, "stein_terms X");
  ForwardCache fc;
  Mat F = mlp_forward_batch(critic, X, &fc);
  Mat G = model.score(X);
  Vec dots = (G.array() * F.array()).rowwise().sum();
  Vec tr = mlp_trace_batch(critic, fc);
  return {dots + tr, TraceKind::exact_trace};
}

// Trace replaced by eps^T (df/dx) eps with one fresh standard-normal probe
// per row; deterministic given the seed.
inline SteinTerms stein_terms_hutchinson(const MlpNet& critic, const ScoreModel& model,
                                         const Mat& X, std::uint64_t seed) {
  if (critic.d_in() != critic.d_out())
    throw ShapeError("stein_terms: critic must be square");
  if (X.cols() != critic.d_in()) throw ShapeError("stein_terms: dim mismatch");
  Rng rng = make_rng(seed);
  Mat Eps = gaussian_matrix(rng, X.rows(), X.cols());
  ForwardCache fc;
  Mat F = mlp_forward_batch(critic, X, &fc);
  Mat G = model.score(X);
  Vec dots = (G.array() * F.array()).rowwise().sum();
  Vec probes = mlp_hutchinson_batch(critic, fc, Eps);
  return {dots + probes, TraceKind::hutchinson};
}

inline double regularizer(const MlpNet& critic, const Mat& X, double lambda) {
  if (lambda < 0.0) throw ConfigError("regularizer: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  Mat F = mlp_forward_batch(critic, X);
  return lambda * F.rowwise().squaredNorm().mean();
}

inline DiscrepancyEstimate lsd_estimate(const SteinTerms& terms) {
  if (terms.values.size() < 2)
    throw InsufficientDataError("lsd_estimate: need n >= 2");
  return {sample_mean(terms.values), sample_std(terms.values), terms.values.size()};
}

// Test-power objective mean/std of the per-example statistics.
inline double power_objective(const SteinTerms& terms) {
  const double sd = sample_std(terms.values);
  if (sd <= 1e-300) throw DegenerateStatisticError("power_objective: zero std");
  return sample_mean(terms.values) / sd;
}

// ---------------------------------------------------------------------------
// Closed-form Gaussian oracle.
//
// Over the L2-regularized critic class the supremum of LSD - R_lambda is
//   value = (1 / 4 lambda) E_p ||dlogq - dlogp||^2,
// attained by f*(x) = (dlogq(x) - dlogp(x)) / (2 lambda).  The raw LSD of
// f* (no regularizer subtracted) is twice that; both are exposed since
// reported curves plot the raw LSD.

struct GaussianOracle {
  double value = 0.0;
  double lsd_at_optimum = 0.0;
  GaussianModel p;
  GaussianModel q;
  double lambda = 0.5;

  // Rows of X -> rows of f*(x).
  Mat optimal_critic(const Mat& X) const {
    return (q.score(X) - p.score(X)) / (2.0 * lambda);
  }
};

inline GaussianOracle gaussian_sd_oracle(const GaussianModel& p, const GaussianModel& q,
                                         double lambda) {
  if (lambda <= 0.0) throw ConfigError("gaussian_sd_oracle: lambda must be > 0");
  if (p.dim() != q.dim()) throw ShapeError("gaussian_sd_oracle: dim mismatch");
  // Per coordinate the score difference is a_i x_i + c_i with
  //   a_i = 1/vp_i - 1/vq_i,  c_i = mu_q_i/vq_i - mu_p_i/vp_i,
  // so E_p (a x + c)^2 = a^2 (vp + mu_p^2) + 2 a c mu_p + c^2.
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.dim(); ++i) {
    const double vp = p.var(i), vq = q.var(i);
    const double a = 1.0 / vp - 1.0 / vq;
    const double c = q.mean(i) / vq - p.mean(i) / vp;
    sum += a * a * (vp + p.mean(i) * p.mean(i)) + 2.0 * a * c * p.mean(i) + c * c;
  }
  const double value = sum / (4.0 * lambda);
  return {value, 2.0 * value, p, q, lambda};
}

// ---------------------------------------------------------------------------
// Sliced score matching for the ICA model.
//
// The Laplace latent density is smoothed with |z| ~ sqrt(z^2 + kappa^2) so
// the score derivative exists everywhere; the second-derivative terms this
// introduces are exactly the ones that destabilize score matching as the
// mixing matrix's conditioning degrades.

struct SlicedSmResult {
  double value = 0.0;
  Vec param_grad;  // d/dW (row-major flattening)
};

inline SlicedSmResult sliced_sm_objective(const IcaModel& model, const Mat& X,
                                          std::uint64_t seed, double kappa = 1e-2) {
  const Eigen::Index D = model.dim();
  if (X.cols() != D) throw ShapeError("sliced_sm: dim mismatch");
  auto lu = model.factorize();
  Eigen::PartialPivLU<Mat> luT(model.W.transpose());

  Rng rng = make_rng(seed);
  Mat Eps = gaussian_matrix(rng, X.rows(), D);

  const double k2 = kappa * kappa;
  double value = 0.0;
  Mat grad = Mat::Zero(D, D);
  const double inv_n = 1.0 / double(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Vec z = lu.solve(X.row(i).transpose());
    const Vec eta = lu.solve(Eps.row(i).transpose());
    Vec phi(D), phi1(D), phi2(D);
    for (Eigen::Index j = 0; j < D; ++j) {
      const double s = std::sqrt(z(j) * z(j) + k2);
      phi(j) = z(j) / s;
      phi1(j) = k2 / (s * s * s);
      phi2(j) = -3.0 * k2 * z(j) / (s * s * s * s * s);
    }
    const Vec m = luT.solve(phi);  // = -score(x)
    const Vec am = lu.solve(m);
    const double term1 = 0.5 * m.squaredNorm();
    const double term2 = -(phi1.array() * eta.array().square()).sum();
    const double Ji = term1 + term2;
    if (!std::isfinite(Ji))
      throw NumericError("sliced_sm: non-finite value at row " + std::to_string(i));
    value += inv_n * Ji;
    grad.noalias() += inv_n * (-m * am.transpose() -
                               luT.solve((phi1.array() * am.array()).matrix()) *
                                   z.transpose());
    grad.noalias() += inv_n * (luT.solve((phi2.array() * eta.array().square()).matrix()) *
                                   z.transpose() +
                               2.0 * luT.solve((phi1.array() * eta.array()).matrix()) *
                                   eta.transpose());
  }
  Vec flat(D * D);
  for (Eigen::Index r = 0; r < D; ++r)
    for (Eigen::Index c = 0; c < D; ++c) flat(r * D + c) = grad(r, c);
  return {value, flat};
}

}  // namespace lsd
