#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsd/data.hpp"
#include "lsd/discrepancy.hpp"
#include "lsd/kernels.hpp"
#include "lsd/models.hpp"
#include "lsd/procedures.hpp"
#include "lsd/samplers.hpp"
#include "lsd/serialize.hpp"

namespace lsd {

enum class ExperimentKind {
  gauss_oracle,
  rbm_gof,
  rbm_eval,
  ica_bench,
  toy2d_train,
  ebm_image_train,
  calibration,
};

inline const char* experiment_kind_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::gauss_oracle: return "gauss_oracle";
    case ExperimentKind::rbm_gof: return "rbm_gof";
    case ExperimentKind::rbm_eval: return "rbm_eval";
    case ExperimentKind::ica_bench: return "ica_bench";
    case ExperimentKind::toy2d_train: return "toy2d_train";
    case ExperimentKind::ebm_image_train: return "ebm_image_train";
    case ExperimentKind::calibration: return "calibration";
  }
  throw ConfigError("unknown experiment kind");
}

inline ExperimentKind experiment_kind_from_name(const std::string& s) {
  for (ExperimentKind k :
       {ExperimentKind::gauss_oracle, ExperimentKind::rbm_gof, ExperimentKind::rbm_eval,
        ExperimentKind::ica_bench, ExperimentKind::toy2d_train,
        ExperimentKind::ebm_image_train, ExperimentKind::calibration})
    if (s == experiment_kind_name(k)) return k;
  throw ConfigError("unknown experiment kind: " + s);
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::gauss_oracle;
  Eigen::Index dim = 50;         // data dimension (d_x for RBMs)
  Eigen::Index hidden_dim = 40;  // RBM hidden units
  double mean_shift = 0.5;       // gauss_oracle q mean
  double alpha = 0.05;           // GoF level
  Eigen::Index n_data = 1000;
  std::vector<double> grid = {0.0, 0.01, 0.02, 0.04, 0.06};
  std::vector<std::uint64_t> seeds = {0};
  std::vector<Eigen::Index> ica_dims = {10, 20};
  double ica_kappa = 0.3;  // score smoothing for LSD ICA training
  std::vector<Eigen::Index> ebm_hidden = {100, 100};
  std::string dataset = "two_moons";  // toy2d name or IDX file name
  std::string out_dir = "out";
  TrainConfig train;
  TrainConfig eval_critic;  // fresh critic fits used for evaluation only

  ExperimentConfig() {
    eval_critic.lambda = 0.5;
    eval_critic.total_iters = 400;
    eval_critic.critic_hidden = {100, 100};
    eval_critic.val_every = 50;
  }

  void validate() const {
    if (seeds.empty()) throw ConfigError("ExperimentConfig: seed list empty");
    for (double g : grid)
      if (g < 0.0) throw ConfigError("ExperimentConfig: grid values must be >= 0");
    if (dim < 1 || n_data < 2) throw ConfigError("ExperimentConfig: bad sizes");
    if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("ExperimentConfig: alpha in (0,1)");
  }
};

// --------------------------------------------------------------------------
// JSON (de)serialization.  Every field has a default, so partial configs are
// valid; round-trips are exact.

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lambda", c.lambda},
                     {"critic_steps", c.critic_steps},
                     {"total_iters", c.total_iters},
                     {"batch_size", c.batch_size},
                     {"critic_lr", c.critic_lr},
                     {"model_lr", c.model_lr},
                     {"model_lr_decay", c.model_lr_decay},
                     {"seed", c.seed},
                     {"rademacher_probes", c.rademacher_probes},
                     {"val_every", c.val_every},
                     {"dropout", c.dropout},
                     {"weight_decay", c.weight_decay},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"critic_hidden", c.critic_hidden},
                     {"activation", activation_name(c.activation)}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.critic_steps = j.value("critic_steps", c.critic_steps);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.critic_lr = j.value("critic_lr", c.critic_lr);
  c.model_lr = j.value("model_lr", c.model_lr);
  c.model_lr_decay = j.value("model_lr_decay", c.model_lr_decay);
  c.seed = j.value("seed", c.seed);
  c.rademacher_probes = j.value("rademacher_probes", c.rademacher_probes);
  c.val_every = j.value("val_every", c.val_every);
  c.dropout = j.value("dropout", c.dropout);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  if (j.contains("critic_hidden"))
    c.critic_hidden = j.at("critic_hidden").get<std::vector<Eigen::Index>>();
  if (j.contains("activation"))
    c.activation = activation_from_name(j.at("activation").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"kind", experiment_kind_name(c.kind)},
                     {"dim", c.dim},
                     {"hidden_dim", c.hidden_dim},
                     {"mean_shift", c.mean_shift},
                     {"alpha", c.alpha},
                     {"n_data", c.n_data},
                     {"grid", c.grid},
                     {"seeds", c.seeds},
                     {"ica_dims", c.ica_dims},
                     {"ica_kappa", c.ica_kappa},
                     {"ebm_hidden", c.ebm_hidden},
                     {"dataset", c.dataset},
                     {"out_dir", c.out_dir},
                     {"train", c.train},
                     {"eval_critic", c.eval_critic}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("kind")) c.kind = experiment_kind_from_name(j.at("kind"));
  c.dim = j.value("dim", c.dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.mean_shift = j.value("mean_shift", c.mean_shift);
  c.alpha = j.value("alpha", c.alpha);
  c.n_data = j.value("n_data", c.n_data);
  if (j.contains("grid")) c.grid = j.at("grid").get<std::vector<double>>();
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("ica_dims"))
    c.ica_dims = j.at("ica_dims").get<std::vector<Eigen::Index>>();
  c.ica_kappa = j.value("ica_kappa", c.ica_kappa);
  if (j.contains("ebm_hidden"))
    c.ebm_hidden = j.at("ebm_hidden").get<std::vector<Eigen::Index>>();
  c.dataset = j.value("dataset", c.dataset);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("eval_critic")) j.at("eval_critic").get_to(c.eval_critic);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  ExperimentConfig cfg;
  j.get_to(cfg);
  return cfg;
}

// --------------------------------------------------------------------------
// Deterministic text output: stable float formatting and an artifact hash.

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a(bytes));
  return buf;
}

// Row-oriented CSV with a fixed header; cells are either preformatted
// strings or doubles via fmt_double.
struct CsvWriter {
  std::string path;
  std::string body;

  explicit CsvWriter(std::string p, const std::string& header) : path(std::move(p)) {
    body = header + "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) body += ",";
      body += cells[i];
    }
    body += "\n";
  }
  void write() const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f << body;
  }
};

inline std::string cosine_free_cell(double v) { return fmt_double(v); }

inline double cosine_similarity(const Mat& A, const Mat& B) {
  const double num = (A.array() * B.array()).sum();
  const double den = A.norm() * B.norm();
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

struct RunArtifacts {
  int status = 0;
  std::vector<std::string> files;  // paths relative to out_dir
};

// --------------------------------------------------------------------------
// Shared per-seed RBM setup: a fixed ground-truth RBM, Gibbs data from it,
// and the (possibly perturbed) null model under test.

namespace detail {

struct RbmRun {
  GbrbmModel truth;
  GbrbmModel model;
  SplitData data;
};

inline RbmRun rbm_run(const ExperimentConfig& cfg, double sigma, std::uint64_t seed) {
  GbrbmModel truth = random_gbrbm(cfg.dim, cfg.hidden_dim, derive_seed(seed, 1));
  Mat X = gbrbm_gibbs(truth, cfg.n_data, 2000, 10, derive_seed(seed, 2));
  GbrbmModel model = perturb_rbm(truth, sigma, derive_seed(seed, 3));
  SplitData data = split(X, {0.8, 0.1, 0.1}, derive_seed(seed, 4));
  return {std::move(truth), std::move(model), std::move(data)};
}

inline TrainConfig with_seed(TrainConfig t, std::uint64_t seed) {
  t.seed = seed;
  return t;
}

}  // namespace detail

// --------------------------------------------------------------------------
// Experiment bodies.  Each returns the artifact list written under
// cfg.out_dir; run_experiment wraps them with manifest emission.

namespace detail {

inline std::vector<std::string> run_gauss_oracle(const ExperimentConfig& cfg,
                                                 const std::string& dir) {
  const Eigen::Index d = cfg.dim;
  GaussianModel p(Vec::Zero(d), 1.0);
  GaussianModel q(Vec::Constant(d, cfg.mean_shift), 1.0);
  GaussianOracle oracle = gaussian_sd_oracle(p, q, cfg.train.lambda);

  const std::uint64_t seed = cfg.seeds.front();
  Rng rng = make_rng(derive_seed(seed, 1));
  Mat X = gaussian_matrix(rng, cfg.n_data, d);
  SplitData data = split(X, {0.8, 0.1, 0.1}, derive_seed(seed, 2));

  CriticFit fit = fit_critic_lsd(q, data, with_seed(cfg.train, seed));
  auto est = lsd_estimate(stein_terms_exact(fit.critic, q, data.test));
  Mat F = mlp_forward_batch(fit.critic, data.test);
  const double cos = cosine_similarity(F, oracle.optimal_critic(data.test));

  CsvWriter metrics(dir + "/metrics.csv", "iter,val_mu,val_sigma,val_selection");
  for (const auto& r : fit.history)
    metrics.row({std::to_string(r.iter), fmt_double(r.mu), fmt_double(r.sigma),
                 fmt_double(r.selection())});
  metrics.write();

  CsvWriter summary(dir + "/summary.csv",
                    "oracle_value,lsd_at_optimum,test_lsd,test_se,ratio,critic_cosine");
  summary.row({fmt_double(oracle.value), fmt_double(oracle.lsd_at_optimum),
               fmt_double(est.mean), fmt_double(est.std / std::sqrt(double(est.n))),
               fmt_double(est.mean / oracle.lsd_at_optimum), fmt_double(cos)});
  summary.write();

  save_net(dir + "/critic.lsdc", fit.critic);
  return {"metrics.csv", "summary.csv", "critic.lsdc"};
}

inline std::vector<std::string> run_rbm_gof(const ExperimentConfig& cfg,
                                            const std::string& dir) {
  CsvWriter metrics(dir + "/metrics.csv", "sigma,seed,t,reject");
  CsvWriter summary(dir + "/summary.csv", "sigma,n_runs,n_failed,rejection_rate");
  for (double sigma : cfg.grid) {
    int rejects = 0, ok = 0, failed = 0;
    for (std::uint64_t seed : cfg.seeds) {
      try {
        RbmRun run = rbm_run(cfg, sigma, seed);
        CriticFit fit =
            fit_critic_power(run.model, run.data, with_seed(cfg.train, seed));
        GofResult gof = gof_test(run.model, fit.critic, run.data.test, cfg.alpha);
        metrics.row({fmt_double(sigma), std::to_string(seed), fmt_double(gof.t),
                     gof.reject ? "1" : "0"});
        rejects += gof.reject ? 1 : 0;
        ++ok;
      } catch (const std::exception&) {
        metrics.row({fmt_double(sigma), std::to_string(seed), "nan", "nan"});
        ++failed;
      }
    }
    summary.row({fmt_double(sigma), std::to_string(ok), std::to_string(failed),
                 fmt_double(ok > 0 ? double(rejects) / double(ok)
                                   : std::numeric_limits<double>::quiet_NaN())});
  }
  metrics.write();
  summary.write();
  return {"metrics.csv", "summary.csv"};
}

inline std::vector<std::string> run_calibration(const ExperimentConfig& cfg,
                                                const std::string& dir) {
  std::vector<double> stats;
  CsvWriter metrics(dir + "/metrics.csv", "seed,t");
  for (std::uint64_t seed : cfg.seeds) {
    try {
      RbmRun run = rbm_run(cfg, 0.0, seed);
      CriticFit fit = fit_critic_power(run.model, run.data, with_seed(cfg.train, seed));
      GofResult gof = gof_test(run.model, fit.critic, run.data.test, cfg.alpha);
      stats.push_back(gof.t);
      metrics.row({std::to_string(seed), fmt_double(gof.t)});
    } catch (const std::exception&) {
      metrics.row({std::to_string(seed), "nan"});
    }
  }
  metrics.write();

  QqReport report = calibration_report(stats);
  CsvWriter qq(dir + "/qq.csv", "theoretical,empirical");
  for (Eigen::Index i = 0; i < report.empirical.size(); ++i)
    qq.row({fmt_double(report.theoretical(i)), fmt_double(report.empirical(i))});
  qq.write();

  CsvWriter summary(dir + "/summary.csv", "n,ks_distance,ks_p_value,degenerate");
  summary.row({std::to_string(stats.size()), fmt_double(report.ks_distance),
               fmt_double(report.ks_p_value), report.degenerate ? "1" : "0"});
  summary.write();
  return {"metrics.csv", "qq.csv", "summary.csv"};
}

inline std::vector<std::string> run_rbm_eval(const ExperimentConfig& cfg,
                                             const std::string& dir) {
  CsvWriter metrics(dir + "/metrics.csv",
                    "sigma,seed,lsd_mean,lsd_se,ksd_mean,ksd_se,lksd_mean,lksd_se");
  CsvWriter summary(
      dir + "/summary.csv",
      "sigma,n_runs,lsd_mean,lsd_se_mean,ksd_mean,ksd_se_mean,lksd_mean,lksd_se_mean");
  for (double sigma : cfg.grid) {
    std::vector<double> lsd_m, lsd_s, ksd_m, ksd_s, lksd_m, lksd_s;
    for (std::uint64_t seed : cfg.seeds) {
      try {
        RbmRun run = rbm_run(cfg, sigma, seed);
        CriticFit fit = fit_critic_lsd(run.model, run.data, with_seed(cfg.train, seed));
        auto est = lsd_estimate(stein_terms_exact(fit.critic, run.model, run.data.test));
        RbfKernel kernel{std::log(median_bandwidth(run.data.train))};
        auto ksd = ksd_quadratic(run.model, run.data.test, kernel);
        auto lksd = ksd_linear(run.model, run.data.test, kernel);
        const double lse = est.std / std::sqrt(double(est.n));
        // Error bars are sigma / sqrt(n_test) across the board; for the
        // kernel estimators sigma is the per-pair term std.
        const double n_test = double(run.data.test.rows());
        const double kse = ksd.std / std::sqrt(n_test);
        const double lkse = lksd.std / std::sqrt(n_test);
        metrics.row({fmt_double(sigma), std::to_string(seed), fmt_double(est.mean),
                     fmt_double(lse), fmt_double(ksd.mean), fmt_double(kse),
                     fmt_double(lksd.mean), fmt_double(lkse)});
        lsd_m.push_back(est.mean);
        lsd_s.push_back(lse);
        ksd_m.push_back(ksd.mean);
        ksd_s.push_back(kse);
        lksd_m.push_back(lksd.mean);
        lksd_s.push_back(lkse);
      } catch (const std::exception&) {
        metrics.row({fmt_double(sigma), std::to_string(seed), "nan", "nan", "nan",
                     "nan", "nan", "nan"});
      }
    }
    auto avg = [](const std::vector<double>& v) {
      if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
      double s = 0.0;
      for (double x : v) s += x;
      return s / double(v.size());
    };
    summary.row({fmt_double(sigma), std::to_string(lsd_m.size()), fmt_double(avg(lsd_m)),
                 fmt_double(avg(lsd_s)), fmt_double(avg(ksd_m)), fmt_double(avg(ksd_s)),
                 fmt_double(avg(lksd_m)), fmt_double(avg(lksd_s))});
  }
  metrics.write();
  summary.write();
  return {"metrics.csv", "summary.csv"};
}

inline std::vector<std::string> run_ica_bench(const ExperimentConfig& cfg,
                                              const std::string& dir) {
  CsvWriter metrics(dir + "/metrics.csv", "D,seed,method,test_loglik");
  CsvWriter summary(dir + "/summary.csv", "D,method,n_ok,n_failed,mean_test_loglik");
  for (Eigen::Index D : cfg.ica_dims) {
    std::map<std::string, std::vector<double>> ok;
    std::map<std::string, int> failed;
    for (std::uint64_t seed : cfg.seeds) {
      IcaModel truth{random_ica_matrix(D, derive_seed(seed, 1))};
      Mat X = ica_sample(truth, cfg.n_data, derive_seed(seed, 2));
      SplitData data = split(X, {0.8, 0.1, 0.1}, derive_seed(seed, 3));
      auto record = [&](const std::string& method, auto&& trainer) {
        try {
          IcaModel m = trainer();
          const double ll = m.logdensity(data.test).mean();
          metrics.row({std::to_string(D), std::to_string(seed), method, fmt_double(ll)});
          ok[method].push_back(ll);
        } catch (const std::exception&) {
          metrics.row({std::to_string(D), std::to_string(seed), method, "nan"});
          failed[method] += 1;
        }
      };
      record("truth", [&] { return truth; });
      record("lsd", [&] {
        // Train in whitened coordinates: Cov(x) = 2 W W^T for unit-scale
        // Laplace latents, so after whitening the mixing matrix starts near
        // I / sqrt(2) and only a rotation is left to learn.
        Mat C = (data.train.transpose() * data.train) / double(data.train.rows());
        Eigen::SelfAdjointEigenSolver<Mat> es(C);
        if (es.eigenvalues().minCoeff() <= 0.0)
          throw NumericError("ica_bench: degenerate data covariance");
        TrainableIca trainable{IcaModel(Mat::Identity(D, D) / std::sqrt(2.0)),
                               cfg.ica_kappa};
        train_lsd(trainable, data.train * es.operatorInverseSqrt(),
                  with_seed(cfg.train, seed));
        // Map back to the original coordinates: x = C^{1/2} x_white.
        return IcaModel(es.operatorSqrt() * trainable.model.W);
      });
      record("ml", [&] { return train_ica_ml(data.train, with_seed(cfg.train, seed)); });
      record("sm", [&] { return train_ica_sm(data.train, with_seed(cfg.train, seed)); });
    }
    for (const std::string& method : {"truth", "lsd", "ml", "sm"}) {
      const auto& v = ok[method];
      double mean = std::numeric_limits<double>::quiet_NaN();
      if (!v.empty()) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= double(v.size());
      }
      summary.row({std::to_string(D), method, std::to_string(v.size()),
                   std::to_string(failed[method]), fmt_double(mean)});
    }
  }
  metrics.write();
  summary.write();
  return {"metrics.csv", "summary.csv"};
}

inline DeepEbmModel init_ebm(const Mat& X, const std::vector<Eigen::Index>& hidden,
                             std::uint64_t seed) {
  std::vector<Eigen::Index> dims;
  dims.push_back(X.cols());
  for (auto h : hidden) dims.push_back(h);
  dims.push_back(1);
  MlpNet energy = mlp_init(dims, Activation::swish, seed);
  Vec mu = X.colwise().mean();
  Vec logvar(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    Vec col = X.col(j);
    logvar(j) = std::log(std::max(1e-6, sample_std(col) * sample_std(col)));
  }
  return DeepEbmModel(std::move(energy), std::move(mu), std::move(logvar));
}

// Held-out LSD of a model: fit a fresh critic on the eval split, report
// test LSD.  Used to score EBMs before/after training.
inline DiscrepancyEstimate holdout_lsd(const ScoreModel& model, const Mat& X_eval,
                                       const TrainConfig& eval_cfg, std::uint64_t seed) {
  SplitData data = split(X_eval, {0.8, 0.1, 0.1}, derive_seed(seed, 5));
  CriticFit fit = fit_critic_lsd(model, data, with_seed(eval_cfg, derive_seed(seed, 6)));
  return lsd_estimate(stein_terms_exact(fit.critic, model, data.test));
}

inline std::vector<std::string> run_toy2d_train(const ExperimentConfig& cfg,
                                                const std::string& dir) {
  CsvWriter metrics(dir + "/metrics.csv", "seed,iter,critic_obj,model_obj");
  CsvWriter summary(dir + "/summary.csv",
                    "seed,initial_lsd,initial_se,final_lsd,final_se,ratio");
  std::vector<std::string> files = {"metrics.csv", "summary.csv"};
  for (std::uint64_t seed : cfg.seeds) {
    Mat X = toy2d_data(cfg.dataset, cfg.n_data, derive_seed(seed, 1));
    Mat X_eval = toy2d_data(cfg.dataset, cfg.n_data, derive_seed(seed, 2));
    TrainableDeepEbm model{init_ebm(X, cfg.ebm_hidden, derive_seed(seed, 3))};

    auto initial = holdout_lsd(model.model, X_eval, cfg.eval_critic, seed);
    auto result = train_lsd(model, X, with_seed(cfg.train, seed));
    for (const auto& r : result.history)
      metrics.row({std::to_string(seed), std::to_string(r.iter),
                   fmt_double(r.critic_obj), fmt_double(r.model_obj)});
    auto final_est = holdout_lsd(model.model, X_eval, cfg.eval_critic, seed + 1);

    summary.row({std::to_string(seed), fmt_double(initial.mean),
                 fmt_double(initial.std / std::sqrt(double(initial.n))),
                 fmt_double(final_est.mean),
                 fmt_double(final_est.std / std::sqrt(double(final_est.n))),
                 fmt_double(final_est.mean / initial.mean)});

    const std::string model_file = "model_seed" + std::to_string(seed) + ".lsdc";
    save_model(dir + "/" + model_file, model.model);
    files.push_back(model_file);
  }
  metrics.write();
  summary.write();
  return files;
}

inline std::string data_dir_from_env() {
  const char* env = std::getenv("LSD_DATA_DIR");
  return env ? env : ".";
}

inline std::vector<std::string> run_ebm_image_train(const ExperimentConfig& cfg,
                                                    const std::string& dir) {
  const std::uint64_t seed = cfg.seeds.front();
  IdxData idx = load_idx(data_dir_from_env() + "/" + cfg.dataset);
  Mat pixels = idx.as_matrix();
  Mat Z = logit_dequantize(pixels, derive_seed(seed, 1));
  const Eigen::Index n = std::min<Eigen::Index>(cfg.n_data, Z.rows());
  Mat X = Z.topRows(n);

  TrainableDeepEbm model{init_ebm(X, cfg.ebm_hidden, derive_seed(seed, 2))};
  auto result = train_lsd(model, X, with_seed(cfg.train, seed));
  CsvWriter metrics(dir + "/metrics.csv", "iter,critic_obj,model_obj");
  for (const auto& r : result.history)
    metrics.row({std::to_string(r.iter), fmt_double(r.critic_obj),
                 fmt_double(r.model_obj)});
  metrics.write();

  SgldConfig sgld;  // defaults: eps 1.0, sigma 0.01, 1000 steps, uniform box
  SgldBatch batch = sgld_sample(model.model, sgld, 16, derive_seed(seed, 3));
  save_matrix(dir + "/samples.lsdx", batch.samples);
  save_model(dir + "/model.lsdc", model.model);
  nlohmann::json sidecar{{"step_size", batch.config.step_size},
                         {"noise_scale", batch.config.noise_scale},
                         {"steps", batch.config.steps},
                         {"init", sgld_init_name(batch.config.init)},
                         {"seed", batch.seed},
                         {"model_hash", file_hash(dir + "/model.lsdc")},
                         {"finite", batch.samples.allFinite()}};
  std::ofstream(dir + "/samples.json") << sidecar.dump(2) << "\n";

  CsvWriter summary(dir + "/summary.csv", "iters,final_critic_obj,samples_finite");
  summary.row({std::to_string(result.history.size()),
               fmt_double(result.history.empty() ? 0.0 : result.history.back().critic_obj),
               batch.samples.allFinite() ? "1" : "0"});
  summary.write();

  return {"metrics.csv", "summary.csv", "samples.lsdx", "samples.json", "model.lsdc"};
}

}  // namespace detail

inline RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const std::string dir = cfg.out_dir;

  std::vector<std::string> files;
  switch (cfg.kind) {
    case ExperimentKind::gauss_oracle: files = detail::run_gauss_oracle(cfg, dir); break;
    case ExperimentKind::rbm_gof: files = detail::run_rbm_gof(cfg, dir); break;
    case ExperimentKind::rbm_eval: files = detail::run_rbm_eval(cfg, dir); break;
    case ExperimentKind::ica_bench: files = detail::run_ica_bench(cfg, dir); break;
    case ExperimentKind::toy2d_train: files = detail::run_toy2d_train(cfg, dir); break;
    case ExperimentKind::ebm_image_train:
      files = detail::run_ebm_image_train(cfg, dir);
      break;
    case ExperimentKind::calibration: files = detail::run_calibration(cfg, dir); break;
  }

  nlohmann::json manifest;
  manifest["config"] = cfg;
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& f : files) artifacts[f] = detail::file_hash(dir + "/" + f);
  manifest["artifacts"] = artifacts;
  std::ofstream(dir + "/manifest.json") << manifest.dump(2) << "\n";

  RunArtifacts out;
  out.files = files;
  out.files.push_back("manifest.json");
  return out;
}

}  // namespace lsd
