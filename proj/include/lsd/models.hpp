#pragma once

#include <Eigen/LU>
#include <cmath>

#include "lsd/common.hpp"
#include "lsd/mlp.hpp"

namespace lsd {

// An unnormalized density exposed through its input score d/dx log q(x).
// Exact log-densities are optional and exist for oracle checks and the
// maximum-likelihood baselines.
struct ScoreModel {
  virtual ~ScoreModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Mat score(const Mat& X) const = 0;  // rows are per-example scores
  virtual bool has_logdensity() const { return false; }
  virtual Vec logdensity(const Mat& X) const {
    (void)X;
    throw ConfigError("model has no tractable log-density");
  }

  Vec score_one(const Vec& x) const { return score(x.transpose()).row(0); }
};

// ---------------------------------------------------------------------------
// Diagonal Gaussian.

struct GaussianModel : ScoreModel {
  Vec mean;
  Vec var;  // positive diagonal

  GaussianModel(Vec mu, Vec v) : mean(std::move(mu)), var(std::move(v)) {
    if (mean.size() != var.size()) throw ShapeError("gaussian: size mismatch");
    if ((var.array() <= 0.0).any()) throw ConfigError("gaussian: variance must be > 0");
  }
  GaussianModel(Vec mu, double v) : mean(std::move(mu)), var(Vec::Constant(mean.size(), v)) {
    if (v <= 0.0) throw ConfigError("gaussian: variance must be > 0");
  }

  Eigen::Index dim() const override { return mean.size(); }

  Mat score(const Mat& X) const override {
    if (X.cols() != dim()) throw ShapeError("gaussian_score: dim mismatch");
    return -((X.rowwise() - mean.transpose()).array().rowwise() /
             var.transpose().array());
  }

  bool has_logdensity() const override { return true; }

  Vec logdensity(const Mat& X) const override {
    if (X.cols() != dim()) throw ShapeError("gaussian_logdensity: dim mismatch");
    const double c = -0.5 * (var.array().log().sum() + dim() * std::log(2.0 * M_PI));
    Mat D = (X.rowwise() - mean.transpose());
    Vec quad = (D.array().square().rowwise() / var.transpose().array()).rowwise().sum();
    return (-0.5 * quad.array() + c).matrix();
  }
};

// ---------------------------------------------------------------------------
// Gaussian-Bernoulli RBM with hidden units in {-1, +1}:
//   p(x, h) ~ exp(x^T B h + b^T x + c^T h - ||x||^2 / 2)
// which marginalizes to the closed-form score b - x + B tanh(B^T x + c).

struct GbrbmModel : ScoreModel {
  Mat B;  // d_x x d_h
  Vec b;  // d_x
  Vec c;  // d_h

  GbrbmModel(Mat B_, Vec b_, Vec c_) : B(std::move(B_)), b(std::move(b_)), c(std::move(c_)) {
    if (B.rows() != b.size() || B.cols() != c.size())
      throw ShapeError("gbrbm: shape mismatch");
    check_finite(B, "gbrbm B");
  }

  Eigen::Index dim() const override { return b.size(); }
  Eigen::Index hidden_dim() const { return c.size(); }

  Mat score(const Mat& X) const override {
    if (X.cols() != dim()) throw ShapeError("gbrbm_score: dim mismatch");
    Mat H = ((X * B).rowwise() + c.transpose()).array().tanh();
    return (H * B.transpose()).rowwise() + b.transpose() - X;
  }

  // Exact marginal over h: a 2^d_h Gaussian mixture with unit covariance,
  // component means B h + b and log-weights c^T h + ||B h + b||^2 / 2.
  // Tractable for small hidden dimension only; serves as the oracle.
  bool has_logdensity() const override { return hidden_dim() <= 20; }

  void mixture(Mat* means, Vec* log_weights) const {
    const Eigen::Index dh = hidden_dim();
    if (dh > 20) throw ConfigError("gbrbm mixture: hidden dim too large");
    const Eigen::Index m = Eigen::Index(1) << dh;
    means->resize(m, dim());
    log_weights->resize(m);
    Vec h(dh);
    for (Eigen::Index s = 0; s < m; ++s) {
      for (Eigen::Index j = 0; j < dh; ++j) h(j) = (s >> j) & 1 ? 1.0 : -1.0;
      Vec mu = B * h + b;
      means->row(s) = mu.transpose();
      (*log_weights)(s) = c.dot(h) + 0.5 * mu.squaredNorm();
    }
    const double lmax = log_weights->maxCoeff();
    const double lse = lmax + std::log((log_weights->array() - lmax).exp().sum());
    log_weights->array() -= lse;  // normalized mixture weights
  }

  Vec logdensity(const Mat& X) const override {
    Mat means;
    Vec lw;
    mixture(&means, &lw);
    const double c0 = -0.5 * dim() * std::log(2.0 * M_PI);
    Vec out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      Vec comp = lw.array() + c0 -
                 0.5 * (means.rowwise() - X.row(i)).rowwise().squaredNorm().array();
      const double m = comp.maxCoeff();
      out(i) = m + std::log((comp.array() - m).exp().sum());
    }
    return out;
  }
};

// Adds N(0, sigma^2) noise to every entry of B; b and c are untouched.
inline GbrbmModel perturb_rbm(const GbrbmModel& m, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("perturb_rbm: sigma must be >= 0");
  GbrbmModel out = m;
  if (sigma > 0.0) {
    Rng rng = make_rng(seed);
    out.B += sigma * gaussian_matrix(rng, m.B.rows(), m.B.cols());
  }
  return out;
}

// Experiment convention: B entries uniform on {+1, -1}, b and c standard normal.
inline GbrbmModel random_gbrbm(Eigen::Index d_x, Eigen::Index d_h, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::bernoulli_distribution coin(0.5);
  Mat B(d_x, d_h);
  for (Eigen::Index i = 0; i < d_x; ++i)
    for (Eigen::Index j = 0; j < d_h; ++j) B(i, j) = coin(rng) ? 1.0 : -1.0;
  Vec b = gaussian_vector(rng, d_x);
  Vec c = gaussian_vector(rng, d_h);
  return GbrbmModel(std::move(B), std::move(b), std::move(c));
}

// ---------------------------------------------------------------------------
// Linear ICA with Laplace(0, 1) latents: x = W z.

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

struct IcaModel : ScoreModel {
  Mat W;  // D x D, non-singular

  explicit IcaModel(Mat W_) : W(std::move(W_)) {
    if (W.rows() != W.cols()) throw ShapeError("ica: W must be square");
    factorize();  // throws if singular
  }

  Eigen::Index dim() const override { return W.rows(); }

  Eigen::PartialPivLU<Mat> factorize() const {
    Eigen::PartialPivLU<Mat> lu(W);
    const Vec diag = lu.matrixLU().diagonal().cwiseAbs();
    if (diag.minCoeff() <= 1e-12 * std::max(1.0, diag.maxCoeff()))
      throw SingularMatrixError("ica: W singular to working precision");
    return lu;
  }

  // z rows for x rows: z = W^{-1} x.
  Mat latents(const Mat& X) const {
    if (X.cols() != dim()) throw ShapeError("ica: dim mismatch");
    auto lu = factorize();
    return lu.solve(X.transpose()).transpose();
  }

  Mat score(const Mat& X) const override {
    auto lu = factorize();
    Mat Z = lu.solve(X.transpose()).transpose();
    Mat S = Z.unaryExpr([](double z) { return sign0(z); });
    // score = -W^{-T} sign(z)
    Eigen::PartialPivLU<Mat> luT(W.transpose());
    return -luT.solve(S.transpose()).transpose();
  }

  bool has_logdensity() const override { return true; }

  double log_abs_det() const {
    auto lu = factorize();
    return lu.matrixLU().diagonal().cwiseAbs().array().log().sum();
  }

  Vec logdensity(const Mat& X) const override {
    Mat Z = latents(X);
    const double ld = log_abs_det();
    return (-Z.array().abs().rowwise().sum() - dim() * std::log(2.0) - ld).matrix();
  }
};

// Gaussian matrices resampled until the condition number is below D.
inline Mat random_ica_matrix(Eigen::Index D, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Mat W = gaussian_matrix(rng, D, D);
    Eigen::JacobiSVD<Mat> svd(W);
    const double cond = svd.singularValues()(0) / svd.singularValues()(D - 1);
    if (cond < double(D)) return W;
  }
  throw ConfigError("random_ica_matrix: condition bound unreachable");
}

// ---------------------------------------------------------------------------
// Deep EBM with Gaussian envelope: q(x) ~ exp(-E(x)) N(x; mu, sigma^2).

struct DeepEbmModel : ScoreModel {
  MlpNet energy;  // d -> 1
  Vec envelope_mean;
  Vec envelope_logvar;

  DeepEbmModel(MlpNet e, Vec mu, Vec logvar)
      : energy(std::move(e)), envelope_mean(std::move(mu)), envelope_logvar(std::move(logvar)) {
    if (energy.d_out() != 1) throw ShapeError("deep_ebm: energy must map to a scalar");
    if (envelope_mean.size() != energy.d_in() || envelope_logvar.size() != energy.d_in())
      throw ShapeError("deep_ebm: envelope size mismatch");
  }

  Eigen::Index dim() const override { return energy.d_in(); }

  Mat score(const Mat& X) const override {
    if (X.cols() != dim()) throw ShapeError("ebm_score: dim mismatch");
    Mat dE = energy_input_grad_batch(energy, X);
    Vec inv_var = (-envelope_logvar.array()).exp();
    Mat env = (X.rowwise() - envelope_mean.transpose()).array().rowwise() *
              inv_var.transpose().array();
    return -dE - env;
  }

  // Total energy of the unnormalized density (up to additive constants):
  // E(x) + (x - mu)^2 / (2 sigma^2).  SGLD descends its gradient, -score.
  Vec total_energy(const Mat& X) const {
    Vec e = mlp_forward_batch(energy, X).col(0);
    Vec inv_var = (-envelope_logvar.array()).exp();
    Vec quad = ((X.rowwise() - envelope_mean.transpose()).array().square().rowwise() *
                inv_var.transpose().array())
                   .rowwise()
                   .sum();
    return e + 0.5 * quad;
  }
};

}  // namespace lsd
