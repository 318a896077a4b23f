#pragma once

#include <functional>

#include "lsd/common.hpp"
#include "lsd/models.hpp"

namespace lsd {

// Block Gibbs for the Gaussian-Bernoulli RBM:
//   h_j | x  in {-1, +1} with P(h_j = +1 | x) = sigmoid(2 ((B^T x)_j + c_j))
//   x | h ~ N(B h + b, I)
// Discards burn_in states, keeps every thin-th afterwards.
inline Mat gbrbm_gibbs(const GbrbmModel& m, Eigen::Index n, Eigen::Index burn_in,
                       Eigen::Index thin, std::uint64_t seed) {
  if (n < 1 || thin < 1 || burn_in < 0) throw ConfigError("gbrbm_gibbs: bad counts");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec x = m.b + gaussian_vector(rng, m.dim());
  Vec h(m.hidden_dim());
  Mat out(n, m.dim());
  Eigen::Index kept = 0;
  for (Eigen::Index step = 0; kept < n; ++step) {
    Vec a = m.B.transpose() * x + m.c;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      const double p1 = 1.0 / (1.0 + std::exp(-2.0 * a(j)));
      h(j) = unif(rng) < p1 ? 1.0 : -1.0;
    }
    x = m.B * h + m.b + gaussian_vector(rng, m.dim());
    if (step >= burn_in && (step - burn_in) % thin == 0) out.row(kept++) = x.transpose();
  }
  return out;
}

// Exact i.i.d. sampling through the hidden-state mixture; tractable for
// small d_h and used to cross-check the Gibbs chain.
inline Mat gbrbm_exact_sample(const GbrbmModel& m, Eigen::Index n, std::uint64_t seed) {
  Mat means;
  Vec lw;
  m.mixture(&means, &lw);
  Vec w = lw.array().exp();
  Rng rng = make_rng(seed);
  std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
  Mat out(n, m.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    out.row(i) = means.row(pick(rng)) + gaussian_vector(rng, m.dim()).transpose();
  return out;
}

inline double laplace_inverse_cdf(double u) {
  // Laplace(0, 1): one uniform draw per coordinate.
  return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
}

inline Mat ica_sample(const IcaModel& m, Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("ica_sample: n >= 1");
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
  Mat Z(n, m.dim());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m.dim(); ++j) Z(i, j) = laplace_inverse_cdf(unif(rng));
  return Z * m.W.transpose();
}

enum class SgldInit { uniform_box, gaussian, data };

inline const char* sgld_init_name(SgldInit i) {
  switch (i) {
    case SgldInit::uniform_box: return "uniform_box";
    case SgldInit::gaussian: return "gaussian";
    case SgldInit::data: return "data";
  }
  return "?";
}

struct SgldConfig {
  double step_size = 1.0;    // epsilon, scales the energy gradient
  double noise_scale = 0.01; // sigma of the per-step Gaussian noise
  Eigen::Index steps = 1000;
  SgldInit init = SgldInit::uniform_box;

  void validate() const {
    if (step_size < 0.0 || noise_scale <= 0.0 || steps < 1)
      throw ConfigError("SgldConfig: need step_size >= 0, noise_scale > 0, steps >= 1");
  }
};

// Tempered SGLD output; an approximate sampler whose distribution depends
// on every field below, so the batch always carries them.
struct SgldBatch {
  Mat samples;
  SgldConfig config;
  std::uint64_t seed = 0;
};

// x_{t+1} = x_t - eps * dE/dx(x_t) + N(0, sigma^2 I), run for `steps`.
inline SgldBatch sgld_sample(const std::function<Mat(const Mat&)>& energy_grad,
                             const SgldConfig& cfg, Eigen::Index n, Eigen::Index d,
                             std::uint64_t seed, const Mat* init_data = nullptr) {
  cfg.validate();
  Rng rng = make_rng(seed);
  Mat X(n, d);
  switch (cfg.init) {
    case SgldInit::uniform_box: {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = unif(rng);
      break;
    }
    case SgldInit::gaussian:
      X = gaussian_matrix(rng, n, d);
      break;
    case SgldInit::data: {
      if (!init_data || init_data->rows() == 0)
        throw ConfigError("sgld_sample: data init requires init_data");
      std::uniform_int_distribution<Eigen::Index> pick(0, init_data->rows() - 1);
      for (Eigen::Index i = 0; i < n; ++i) X.row(i) = init_data->row(pick(rng));
      break;
    }
  }
  for (Eigen::Index t = 0; t < cfg.steps; ++t) {
    Mat noise = cfg.noise_scale * gaussian_matrix(rng, n, d);
    if (cfg.step_size > 0.0) X -= cfg.step_size * energy_grad(X);
    X += noise;
    if (!X.allFinite())
      throw NumericError("sgld_sample: non-finite state at step " + std::to_string(t));
  }
  return {std::move(X), cfg, seed};
}

inline SgldBatch sgld_sample(const DeepEbmModel& model, const SgldConfig& cfg,
                             Eigen::Index n, std::uint64_t seed,
                             const Mat* init_data = nullptr) {
  auto grad = [&model](const Mat& X) { return Mat(-model.score(X)); };
  return sgld_sample(grad, cfg, n, model.dim(), seed, init_data);
}

}  // namespace lsd
