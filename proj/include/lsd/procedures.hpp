#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "lsd/adam.hpp"
#include "lsd/common.hpp"
#include "lsd/discrepancy.hpp"
#include "lsd/mlp.hpp"
#include "lsd/models.hpp"
#include "lsd/stats.hpp"

namespace lsd {

struct SplitData {
  Mat train, val, test;
};

struct TrainConfig {
  double lambda = 0.5;
  int critic_steps = 5;   // C in the alternating loop
  int total_iters = 1000; // T
  int batch_size = 128;
  double critic_lr = 1e-3;
  double model_lr = 1e-3;
  double model_lr_decay = 1.0;  // model lr multiplier over the back half of training
  std::uint64_t seed = 0;
  bool rademacher_probes = false;
  int val_every = 100;
  double dropout = 0.0;       // GoF critic regularization
  double weight_decay = 0.0;  // GoF critic regularization
  double adam_beta1 = 0.5;    // adversarial-loop defaults
  double adam_beta2 = 0.9;
  std::vector<Eigen::Index> critic_hidden = {300, 300};
  Activation activation = Activation::swish;

  void validate(Eigen::Index train_rows) const {
    if (critic_steps < 1) throw ConfigError("TrainConfig: critic_steps >= 1");
    if (total_iters < 0) throw ConfigError("TrainConfig: total_iters >= 0");
    if (batch_size < 1 || batch_size > train_rows)
      throw ConfigError("TrainConfig: batch_size must be in [1, train size]");
    if (lambda < 0.0) throw ConfigError("TrainConfig: lambda >= 0");
    if (model_lr_decay <= 0.0) throw ConfigError("TrainConfig: model_lr_decay > 0");
    if (val_every < 1) throw ConfigError("TrainConfig: val_every >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("TrainConfig: dropout in [0,1)");
  }

  AdamConfig critic_adam() const {
    return {critic_lr, adam_beta1, adam_beta2, 1e-8, weight_decay};
  }
  AdamConfig model_adam() const { return {model_lr, adam_beta1, adam_beta2, 1e-8, 0.0}; }
};

namespace detail {

inline Mat probe_matrix(Rng& rng, Eigen::Index n, Eigen::Index d, bool rademacher) {
  if (!rademacher) return gaussian_matrix(rng, n, d);
  std::bernoulli_distribution coin(0.5);
  Mat m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = coin(rng) ? 1.0 : -1.0;
  return m;
}

inline std::vector<Eigen::Index> sample_rows(Rng& rng, Eigen::Index n, Eigen::Index k) {
  std::vector<Eigen::Index> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

inline Mat take_rows(const Mat& X, const std::vector<Eigen::Index>& idx) {
  Mat out(Eigen::Index(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(Eigen::Index(i)) = X.row(idx[i]);
  return out;
}

inline Masks dropout_masks(Rng& rng, const MlpNet& net, Eigen::Index n, double rate) {
  Masks masks;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index k = 0; k + 1 < net.depth(); ++k) {
    Mat m(n, net.layer_dims[k + 1]);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = keep(rng) ? scale : 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

// Gradient of sum_i w_i (s_i - lambda ||f_i||^2) for the critic, where
// s_i = g_i^T f(x_i) + eps_i^T (df/dx_i) eps_i.  Also reports the terms.
inline Vec critic_lsde_grad(const MlpNet& critic, const Mat& X, const Mat& G,
                            const Mat& Eps, double lambda, const Vec& weights,
                            const Masks* masks, Vec* s_terms = nullptr,
                            Vec* reg_terms = nullptr) {
  ForwardCache fc;
  Mat F = mlp_forward_batch(critic, X, &fc, masks);
  TangentCache tc;
  mlp_tangent_batch(critic, fc, Eps, &tc, masks);
  if (s_terms)
    *s_terms = (G.array() * F.array()).rowwise().sum() +
               (tc.T.back().array() * Eps.array()).rowwise().sum();
  if (reg_terms) *reg_terms = lambda * F.rowwise().squaredNorm();
  Mat Abar = (G - 2.0 * lambda * F).array().colwise() * weights.array();
  Mat Tbar = Eps.array().colwise() * weights.array();
  return mlp_mixed_reverse(critic, fc, &tc, Abar, Tbar, masks);
}

}  // namespace detail

inline MlpNet make_critic(Eigen::Index d, const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<Eigen::Index> dims;
  dims.push_back(d);
  for (auto h : cfg.critic_hidden) dims.push_back(h);
  dims.push_back(d);
  return mlp_init(dims, cfg.activation, seed);
}

struct ValRecord {
  int iter = 0;
  double mu = 0.0;
  double sigma = 0.0;
  double selection() const { return mu - sigma; }
};

struct CriticFit {
  MlpNet critic;
  std::vector<ValRecord> history;
};

// Critic fitting: mini-batch ascent on LSDE - R_lambda, with
// variance-aware (mu - sigma) checkpoint selection on exact-trace
// validation LSD.
inline CriticFit fit_critic_lsd(const ScoreModel& model, const SplitData& data,
                                const TrainConfig& cfg) {
  cfg.validate(data.train.rows());
  const Eigen::Index d = model.dim();
  MlpNet critic = make_critic(d, cfg, derive_seed(cfg.seed, 1));
  Rng rng = make_rng(derive_seed(cfg.seed, 2));
  AdamState opt(cfg.critic_adam());
  opt.cfg.weight_decay = 0.0;  // the L2 output regularizer is the constraint here

  std::vector<ValRecord> history;
  Vec best_params = mlp_params(critic);
  double best_sel = -std::numeric_limits<double>::infinity();

  auto validate = [&](int iter) {
    DiscrepancyEstimate est = lsd_estimate(stein_terms_exact(critic, model, data.val));
    history.push_back({iter, est.mean, est.std});
    if (history.back().selection() > best_sel) {
      best_sel = history.back().selection();
      best_params = mlp_params(critic);
    }
  };

  validate(0);
  Vec params = mlp_params(critic);
  const Vec weights = Vec::Constant(cfg.batch_size, 1.0 / double(cfg.batch_size));
  for (int t = 1; t <= cfg.total_iters; ++t) {
    auto idx = detail::sample_rows(rng, data.train.rows(), cfg.batch_size);
    Mat Xb = detail::take_rows(data.train, idx);
    Mat G = model.score(Xb);
    Mat Eps = detail::probe_matrix(rng, Xb.rows(), d, cfg.rademacher_probes);
    Vec s, r;
    Vec grad = detail::critic_lsde_grad(critic, Xb, G, Eps, cfg.lambda, weights, nullptr, &s, &r);
    const double obj = s.mean() - r.mean();
    if (!std::isfinite(obj))
      throw NumericError("fit_critic_lsd: non-finite objective at iteration " + std::to_string(t));
    params = adam_step(opt, params, grad, /*maximize=*/true);
    mlp_set_params(critic, params);
    if (t % cfg.val_every == 0) validate(t);
  }
  mlp_set_params(critic, best_params);
  return {std::move(critic), std::move(history)};
}

// GoF critic: full-batch ascent on the test-power objective
// mean/std of Hutchinson Stein terms, dropout + weight decay as configured,
// best validation power checkpoint returned.
inline CriticFit fit_critic_power(const ScoreModel& model, const SplitData& data,
                                  const TrainConfig& cfg) {
  cfg.validate(data.train.rows());
  const Eigen::Index d = model.dim();
  const Eigen::Index n = data.train.rows();
  MlpNet critic = make_critic(d, cfg, derive_seed(cfg.seed, 11));
  Rng rng = make_rng(derive_seed(cfg.seed, 12));
  AdamState opt(cfg.critic_adam());

  Mat G = model.score(data.train);
  std::vector<ValRecord> history;
  Vec best_params = mlp_params(critic);
  double best_power = -std::numeric_limits<double>::infinity();

  auto validate = [&](int iter) {
    SteinTerms terms = stein_terms_exact(critic, model, data.val);
    const double sd = sample_std(terms.values);
    const double power = sd > 1e-300 ? sample_mean(terms.values) / sd : 0.0;
    history.push_back({iter, power, 0.0});
    if (power > best_power) {
      best_power = power;
      best_params = mlp_params(critic);
    }
  };

  Vec params = mlp_params(critic);
  for (int t = 1; t <= cfg.total_iters; ++t) {
    Mat Eps = detail::probe_matrix(rng, n, d, cfg.rademacher_probes);
    Masks masks;
    const Masks* mptr = nullptr;
    if (cfg.dropout > 0.0) {
      masks = detail::dropout_masks(rng, critic, n, cfg.dropout);
      mptr = &masks;
    }
    // First pass: the per-example statistics.
    Vec s, dummy;
    {
      ForwardCache fc;
      Mat F = mlp_forward_batch(critic, data.train, &fc, mptr);
      TangentCache tc;
      mlp_tangent_batch(critic, fc, Eps, &tc, mptr);
      s = (G.array() * F.array()).rowwise().sum() +
          (tc.T.back().array() * Eps.array()).rowwise().sum();
      const double mu = s.mean();
      const double sd = sample_std(s);
      if (sd <= 1e-300)
        throw DegenerateStatisticError("fit_critic_power: statistic std underflow at iteration " +
                                       std::to_string(t));
      if (!std::isfinite(mu))
        throw NumericError("fit_critic_power: non-finite objective at iteration " +
                           std::to_string(t));
      // dP/ds_i for P = mu/sd.
      Vec w = (Vec::Constant(n, 1.0 / (double(n) * sd)).array() -
               mu * (s.array() - mu) / (double(n - 1) * sd * sd * sd))
                  .matrix();
      Mat Abar = G.array().colwise() * w.array();
      Mat Tbar = Eps.array().colwise() * w.array();
      Vec grad = mlp_mixed_reverse(critic, fc, &tc, Abar, Tbar, mptr);
      params = adam_step(opt, params, grad, /*maximize=*/true);
      mlp_set_params(critic, params);
    }
    if (t % cfg.val_every == 0) validate(t);
  }
  if (history.empty()) validate(cfg.total_iters);
  mlp_set_params(critic, best_params);
  return {std::move(critic), std::move(history)};
}

struct GofResult {
  double t = 0.0;
  double threshold = 0.0;
  double alpha = 0.05;
  bool reject = false;
  Eigen::Index n_test = 0;
};

// One-sample location test on the exact-trace Stein terms:
//   t = sqrt(n) mean/std, reject iff t > Phi^{-1}(1 - alpha).
inline GofResult gof_test(const ScoreModel& model, const MlpNet& critic,
                          const Mat& X_test, double alpha) {
  if (X_test.rows() < 30)
    throw InsufficientDataError("gof_test: need n >= 30 for the normal approximation");
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("gof_test: alpha in (0,1)");
  SteinTerms terms = stein_terms_exact(critic, model, X_test);
  const double sd = sample_std(terms.values);
  if (sd <= 1e-300) throw DegenerateStatisticError("gof_test: zero statistic std");
  const double t = std::sqrt(double(X_test.rows())) * sample_mean(terms.values) / sd;
  const double threshold = normal_quantile(1.0 - alpha);
  return {t, threshold, alpha, t > threshold, X_test.rows()};
}

struct ModelScore {
  int model_id = 0;
  DiscrepancyEstimate estimate;
};

// Model comparison: fit one critic per model, evaluate exact-trace LSD on test,
// rank ascending (lower discrepancy = better fit), ties broken by id.
inline std::vector<ModelScore> compare_models(
    const std::vector<const ScoreModel*>& models, const SplitData& data,
    const TrainConfig& cfg) {
  if (models.size() < 2) throw ConfigError("compare_models: need >= 2 models");
  std::vector<ModelScore> scores;
  for (std::size_t i = 0; i < models.size(); ++i) {
    TrainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, 100 + i);
    try {
      CriticFit fit = fit_critic_lsd(*models[i], data, c);
      DiscrepancyEstimate est =
          lsd_estimate(stein_terms_exact(fit.critic, *models[i], data.test));
      scores.push_back({int(i), est});
    } catch (const std::exception& e) {
      throw NumericError("compare_models: model " + std::to_string(i) + ": " + e.what());
    }
  }
  std::stable_sort(scores.begin(), scores.end(), [](const ModelScore& a, const ModelScore& b) {
    if (a.estimate.mean != b.estimate.mean) return a.estimate.mean < b.estimate.mean;
    return a.model_id < b.model_id;
  });
  return scores;
}

// ---------------------------------------------------------------------------
// Trainable models for the adversarial loop.  The model-side step needs only the
// parameter gradient of mean_i <f(x_i), score(x_i)> with the critic output
// treated as a constant coefficient vector.

struct TrainableModel {
  virtual ~TrainableModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual const ScoreModel& as_score_model() const = 0;
  virtual Vec params() const = 0;
  virtual void set_params(const Vec& p) = 0;
  virtual Vec pair_grad(const Mat& X, const Mat& F) const = 0;
};

struct TrainableGaussianMean : TrainableModel {
  GaussianModel model;

  explicit TrainableGaussianMean(GaussianModel m) : model(std::move(m)) {}
  Eigen::Index dim() const override { return model.dim(); }
  const ScoreModel& as_score_model() const override { return model; }
  Vec params() const override { return model.mean; }
  void set_params(const Vec& p) override { model.mean = p; }
  Vec pair_grad(const Mat& X, const Mat& F) const override {
    (void)X;
    // d/dmu <f, -(x - mu)/v> = f / v
    return (F.array().rowwise() / model.var.transpose().array()).colwise().mean();
  }
};

struct TrainableIca : TrainableModel {
  IcaModel model;
  // Smoothing scale for sign(z) in the training score: phi(z) = z / sqrt(z^2
  // + kappa^2).  The exact score drops a boundary term exactly where the
  // Laplace density peaks, which biases adversarial training; a smoothed
  // score keeps the full gradient.  0 recovers the exact sign.
  double kappa = 0.0;

  explicit TrainableIca(IcaModel m, double kappa_ = 0.0)
      : model(std::move(m)), kappa(kappa_), smoothed_(this) {
    if (kappa < 0.0) throw ConfigError("TrainableIca: kappa >= 0");
  }
  TrainableIca(const TrainableIca&) = delete;
  TrainableIca& operator=(const TrainableIca&) = delete;

  Eigen::Index dim() const override { return model.dim(); }
  const ScoreModel& as_score_model() const override {
    if (kappa > 0.0) return smoothed_;
    return model;
  }
  Vec params() const override {
    const Eigen::Index D = model.dim();
    Vec p(D * D);
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index c = 0; c < D; ++c) p(r * D + c) = model.W(r, c);
    return p;
  }
  void set_params(const Vec& p) override {
    const Eigen::Index D = model.dim();
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index c = 0; c < D; ++c) model.W(r, c) = p(r * D + c);
    model.factorize();  // surface singularity immediately
  }
  Vec pair_grad(const Mat& X, const Mat& F) const override {
    // With A = W^{-1}, z = A x and score = -A^T phi(z):
    //   d/dW <f, score> = (A^T phi)(A f)^T + (A^T (phi' o A f)) z^T
    // where the second term carries the z-dependence of phi and vanishes for
    // the exact sign (phi' = 0 a.e.).
    const Eigen::Index D = model.dim();
    Mat A = model.factorize().inverse();
    Mat Z = X * A.transpose();
    Mat AF = F * A.transpose();
    Mat G;
    if (kappa > 0.0) {
      Mat S = (Z.array().square() + kappa * kappa).sqrt();
      Mat Phi = (Z.array() / S.array()).matrix();
      Mat Phip = (kappa * kappa / S.array().cube()).matrix();
      G = (Phi * A).transpose() * AF;
      G.noalias() += ((Phip.array() * AF.array()).matrix() * A).transpose() * Z;
    } else {
      Mat Phi = Z.unaryExpr([](double z) { return sign0(z); });
      G = (Phi * A).transpose() * AF;
    }
    G /= double(X.rows());
    Vec flat(D * D);
    for (Eigen::Index r = 0; r < D; ++r)
      for (Eigen::Index c = 0; c < D; ++c) flat(r * D + c) = G(r, c);
    return flat;
  }

 private:
  struct SmoothedScore : ScoreModel {
    const TrainableIca* owner;
    explicit SmoothedScore(const TrainableIca* o) : owner(o) {}
    Eigen::Index dim() const override { return owner->model.dim(); }
    Mat score(const Mat& X) const override {
      const double k = owner->kappa;
      Mat Z = owner->model.latents(X);
      Mat Phi = (Z.array() / (Z.array().square() + k * k).sqrt()).matrix();
      Mat A = owner->model.factorize().inverse();
      return -Phi * A;  // rows are -W^{-T} phi(z_i)
    }
  };

  SmoothedScore smoothed_;
};

struct TrainableDeepEbm : TrainableModel {
  DeepEbmModel model;

  explicit TrainableDeepEbm(DeepEbmModel m) : model(std::move(m)) {}
  Eigen::Index dim() const override { return model.dim(); }
  const ScoreModel& as_score_model() const override { return model; }
  Vec params() const override {
    Vec net = mlp_params(model.energy);
    Vec p(net.size() + 2 * model.dim());
    p << net, model.envelope_mean, model.envelope_logvar;
    return p;
  }
  void set_params(const Vec& p) override {
    const Eigen::Index np = mlp_n_params(model.energy);
    mlp_set_params(model.energy, p.head(np));
    model.envelope_mean = p.segment(np, model.dim());
    model.envelope_logvar = p.tail(model.dim());
  }
  Vec pair_grad(const Mat& X, const Mat& F) const override {
    const Eigen::Index n = X.rows();
    const Vec weights = Vec::Constant(n, 1.0 / double(n));
    // <f, score> = -<f, dE/dx> - <f, (x - mu)/sigma^2>
    Vec net_grad = -energy_pair_grad_batch(model.energy, X, F, weights);
    Vec inv_var = (-model.envelope_logvar.array()).exp();
    Vec mu_grad = (F.array().rowwise() * inv_var.transpose().array()).colwise().mean();
    Mat centered = X.rowwise() - model.envelope_mean.transpose();
    Vec lv_grad = ((F.array() * centered.array()).rowwise() * inv_var.transpose().array())
                      .colwise()
                      .mean();
    Vec out(net_grad.size() + 2 * model.dim());
    out << net_grad, mu_grad, lv_grad;
    return out;
  }
};

struct TrainHistoryRow {
  int iter = 0;
  double critic_obj = 0.0;  // LSDE - R on the last critic batch
  double model_obj = 0.0;   // mean <f, score> on the model batch
};

struct LsdTrainResult {
  MlpNet critic;
  std::vector<TrainHistoryRow> history;
};

// Adversarial training: C critic ascent steps per model descent step.
inline LsdTrainResult train_lsd(TrainableModel& model, const Mat& X, const TrainConfig& cfg) {
  cfg.validate(X.rows());
  if (cfg.total_iters < 1) throw ConfigError("train_lsd: total_iters >= 1");
  const Eigen::Index d = model.dim();
  MlpNet critic = make_critic(d, cfg, derive_seed(cfg.seed, 21));
  Rng rng = make_rng(derive_seed(cfg.seed, 22));
  AdamState critic_opt(cfg.critic_adam());
  AdamState model_opt(cfg.model_adam());

  Vec critic_params = mlp_params(critic);
  Vec model_params = model.params();
  const Vec weights = Vec::Constant(cfg.batch_size, 1.0 / double(cfg.batch_size));
  std::vector<TrainHistoryRow> history;
  history.reserve(cfg.total_iters);

  for (int t = 1; t <= cfg.total_iters; ++t) {
    if (2 * t > cfg.total_iters) model_opt.cfg.lr = cfg.model_lr * cfg.model_lr_decay;
    double critic_obj = 0.0;
    for (int c = 0; c < cfg.critic_steps; ++c) {
      auto idx = detail::sample_rows(rng, X.rows(), cfg.batch_size);
      Mat Xb = detail::take_rows(X, idx);
      Mat G = model.as_score_model().score(Xb);
      Mat Eps = detail::probe_matrix(rng, Xb.rows(), d, cfg.rademacher_probes);
      Vec s, r;
      Vec grad = detail::critic_lsde_grad(critic, Xb, G, Eps, cfg.lambda, weights, nullptr, &s, &r);
      critic_obj = s.mean() - r.mean();
      if (!std::isfinite(critic_obj))
        throw NumericError("train_lsd: non-finite critic objective at iteration " +
                           std::to_string(t));
      critic_params = adam_step(critic_opt, critic_params, grad, /*maximize=*/true);
      mlp_set_params(critic, critic_params);
    }
    auto idx = detail::sample_rows(rng, X.rows(), cfg.batch_size);
    Mat Xb = detail::take_rows(X, idx);
    Mat F = mlp_forward_batch(critic, Xb);
    Mat G = model.as_score_model().score(Xb);
    const double model_obj = (G.array() * F.array()).rowwise().sum().mean();
    if (!std::isfinite(model_obj))
      throw NumericError("train_lsd: non-finite model objective at iteration " +
                         std::to_string(t));
    Vec grad = model.pair_grad(Xb, F);
    model_params = adam_step(model_opt, model_params, grad, /*maximize=*/false);
    model.set_params(model_params);
    history.push_back({t, critic_obj, model_obj});
  }
  return {std::move(critic), std::move(history)};
}

// ---------------------------------------------------------------------------
// ICA baselines.

inline Vec ica_ml_grad(const IcaModel& model, const Mat& X) {
  // d/dW mean log p = W^{-T} (mean_i sign(z_i) z_i^T - I)
  const Eigen::Index D = model.dim();
  auto lu = model.factorize();
  Mat Z = lu.solve(X.transpose()).transpose();
  Mat S = Z.unaryExpr([](double z) { return sign0(z); });
  Mat inner = (S.transpose() * Z) / double(X.rows()) - Mat::Identity(D, D);
  Eigen::PartialPivLU<Mat> luT(model.W.transpose());
  Mat G = luT.solve(inner);
  Vec flat(D * D);
  for (Eigen::Index r = 0; r < D; ++r)
    for (Eigen::Index c = 0; c < D; ++c) flat(r * D + c) = G(r, c);
  return flat;
}

// Brute-force maximum likelihood: Adam ascent on the exact mean log-density.
inline IcaModel train_ica_ml(const Mat& X, const TrainConfig& cfg) {
  cfg.validate(X.rows());
  const Eigen::Index D = X.cols();
  TrainableIca trainable{IcaModel(Mat::Identity(D, D))};
  Rng rng = make_rng(derive_seed(cfg.seed, 31));
  AdamConfig ac = {cfg.model_lr, 0.9, 0.999, 1e-8, 0.0};  // non-adversarial defaults
  AdamState opt(ac);
  Vec params = trainable.params();
  for (int t = 1; t <= cfg.total_iters; ++t) {
    auto idx = detail::sample_rows(rng, X.rows(), cfg.batch_size);
    Mat Xb = detail::take_rows(X, idx);
    Vec grad = ica_ml_grad(trainable.model, Xb);
    params = adam_step(opt, params, grad, /*maximize=*/true);
    trainable.set_params(params);
  }
  return trainable.model;
}

// Sliced score matching baseline.  Divergence (non-finite loss or a
// singular W) propagates as an error carrying the iteration index.
// The smoothing scale trades probe variance against bias; 0.3 keeps the
// stochastic gradients tame while staying close to the Laplace score.
inline IcaModel train_ica_sm(const Mat& X, const TrainConfig& cfg, double kappa = 0.3) {
  cfg.validate(X.rows());
  const Eigen::Index D = X.cols();
  TrainableIca trainable{IcaModel(Mat::Identity(D, D))};
  Rng rng = make_rng(derive_seed(cfg.seed, 41));
  AdamConfig ac = {cfg.model_lr, 0.9, 0.999, 1e-8, 0.0};
  AdamState opt(ac);
  Vec params = trainable.params();
  for (int t = 1; t <= cfg.total_iters; ++t) {
    auto idx = detail::sample_rows(rng, X.rows(), cfg.batch_size);
    Mat Xb = detail::take_rows(X, idx);
    SlicedSmResult res;
    try {
      res = sliced_sm_objective(trainable.model, Xb, derive_seed(cfg.seed, 42 + t), kappa);
    } catch (const std::exception& e) {
      throw NumericError("train_ica_sm: iteration " + std::to_string(t) + ": " + e.what());
    }
    if (!std::isfinite(res.value))
      throw NumericError("train_ica_sm: non-finite loss at iteration " + std::to_string(t));
    params = adam_step(opt, params, res.param_grad, /*maximize=*/false);
    try {
      trainable.set_params(params);
    } catch (const SingularMatrixError& e) {
      throw NumericError("train_ica_sm: iteration " + std::to_string(t) + ": " + e.what());
    }
  }
  return trainable.model;
}

}  // namespace lsd
