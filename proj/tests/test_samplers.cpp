#include <catch2/catch_amalgamated.hpp>

#include "lsd/samplers.hpp"
#include "lsd/stats.hpp"

using namespace lsd;

TEST_CASE("gbrbm_gibbs") {
  SECTION("B = 0 collapses to i.i.d. N(b, I)") {
    Rng rng = make_rng(1);
    Vec b = gaussian_vector(rng, 3);
    GbrbmModel m(Mat::Zero(3, 2), b, Vec::Zero(2));
    Mat S = gbrbm_gibbs(m, 10000, 0, 1, 7);
    Vec mu = S.colwise().mean();
    REQUIRE((mu - b).cwiseAbs().maxCoeff() < 4.0 / std::sqrt(10000.0));
  }

  SECTION("determinism") {
    GbrbmModel m = random_gbrbm(4, 3, 11);
    Mat a = gbrbm_gibbs(m, 50, 100, 5, 13);
    Mat b = gbrbm_gibbs(m, 50, 100, 5, 13);
    REQUIRE(a == b);
    Mat c = gbrbm_gibbs(m, 50, 100, 5, 14);
    REQUIRE(a != c);
  }

  SECTION("small RBM matches the enumeration oracle over a coarse binning") {
    GbrbmModel m = random_gbrbm(2, 4, 17);
    Mat means;
    Vec lw;
    m.mixture(&means, &lw);
    Vec w = lw.array().exp();

    // 2-d grid of rectangles; per-cell probability is a weighted sum of
    // products of coordinate-wise normal CDF differences.
    const int nb = 4;
    // Edges at per-coordinate quartiles of an exact mixture sample so every
    // marginal bin carries real mass; cell probabilities stay analytic.
    Mat ref = gbrbm_exact_sample(m, 4000, 18);
    Mat edge2(2, nb + 1);
    for (int c = 0; c < 2; ++c) {
      std::vector<double> col(ref.col(c).data(), ref.col(c).data() + ref.rows());
      std::sort(col.begin(), col.end());
      edge2(c, 0) = -1e10;
      edge2(c, nb) = 1e10;
      for (int k = 1; k < nb; ++k) edge2(c, k) = col[col.size() * k / nb];
    }
    Mat prob = Mat::Zero(nb, nb);
    for (Eigen::Index s = 0; s < means.rows(); ++s)
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < nb; ++j) {
          const double px = normal_cdf(edge2(0, i + 1) - means(s, 0)) -
                            normal_cdf(edge2(0, i) - means(s, 0));
          const double py = normal_cdf(edge2(1, j + 1) - means(s, 1)) -
                            normal_cdf(edge2(1, j) - means(s, 1));
          prob(i, j) += w(s) * px * py;
        }

    const Eigen::Index n = 20000;
    Mat S = gbrbm_gibbs(m, n, 2000, 10, 19);
    Mat counts = Mat::Zero(nb, nb);
    auto bin = [&](int c, double v) {
      for (int k = 0; k < nb; ++k)
        if (v <= edge2(c, k + 1)) return k;
      return nb - 1;
    };
    for (Eigen::Index r = 0; r < n; ++r)
      counts(bin(0, S(r, 0)), bin(1, S(r, 1))) += 1.0;

    double chi2 = 0.0;
    int dof = 0;
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        const double e = double(n) * prob(i, j);
        if (e < 5.0) continue;  // merge tiny cells out of the statistic
        chi2 += (counts(i, j) - e) * (counts(i, j) - e) / e;
        ++dof;
      }
    REQUIRE(dof >= 5);
    // Gibbs retains some autocorrelation even after thinning, so test at a
    // loose quantile rather than 0.95.
    REQUIRE(chi2 < 2.0 * chi2_quantile(double(dof - 1), 0.999));
  }

  GbrbmModel m = random_gbrbm(2, 2, 23);
  REQUIRE_THROWS_AS(gbrbm_gibbs(m, 0, 0, 1, 0), ConfigError);
}

TEST_CASE("gbrbm exact sampler agrees with Gibbs moments") {
  GbrbmModel m = random_gbrbm(3, 3, 29);
  Mat ex = gbrbm_exact_sample(m, 20000, 31);
  Mat gs = gbrbm_gibbs(m, 20000, 2000, 10, 37);
  Vec mu_ex = ex.colwise().mean();
  Vec mu_gs = gs.colwise().mean();
  REQUIRE((mu_ex - mu_gs).cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("ica_sample") {
  SECTION("Laplace marginals: kurtosis near 6") {
    IcaModel eye{Mat::Identity(2, 2)};
    Mat S = ica_sample(eye, 1000000, 41);
    for (int j = 0; j < 2; ++j) {
      Vec col = S.col(j);
      const double mu = col.mean();
      const double m2 = (col.array() - mu).square().mean();
      const double m4 = (col.array() - mu).pow(4).mean();
      REQUIRE(std::abs(m4 / (m2 * m2) - 6.0) / 6.0 < 0.10);
    }
  }

  SECTION("mean log-likelihood matches the analytic expectation") {
    // E[log p] per coordinate = -E|z| - log 2 = -1 - log 2 for W = I.
    IcaModel eye{Mat::Identity(3, 3)};
    Mat S = ica_sample(eye, 100000, 43);
    Vec ll = eye.logdensity(S);
    const double expect = 3.0 * (-1.0 - std::log(2.0));
    const double se = sample_std(ll) / std::sqrt(double(ll.size()));
    REQUIRE(std::abs(ll.mean() - expect) < 2.0 * se);
  }

  SECTION("mixing and determinism") {
    IcaModel m{random_ica_matrix(3, 47)};
    Mat a = ica_sample(m, 100, 53);
    REQUIRE(a == ica_sample(m, 100, 53));
    // x = W z exactly: latents of samples are Laplace draws with mean ~ 0
    Mat Z = m.latents(a);
    REQUIRE(Z.cwiseAbs().maxCoeff() < 20.0);
    REQUIRE_THROWS_AS(ica_sample(m, 0, 1), ConfigError);
  }
}

TEST_CASE("sgld_sample") {
  SECTION("quadratic energy reaches its stationary covariance") {
    // E = ||x||^2/2, grad = x; with sigma^2 = 2 eps the chain is standard
    // (discretized) Langevin with stationary variance 1/(1 - eps/2).
    const double eps = 0.005;
    SgldConfig cfg{eps, std::sqrt(2.0 * eps), 2000, SgldInit::gaussian};
    auto grad = [](const Mat& X) { return X; };
    SgldBatch batch = sgld_sample(grad, cfg, 4000, 2, 59);
    Mat C = (batch.samples.transpose() * batch.samples) / double(batch.samples.rows());
    REQUIRE(std::abs(C(0, 0) - 1.0) < 0.10);
    REQUIRE(std::abs(C(1, 1) - 1.0) < 0.10);
    REQUIRE(std::abs(C(0, 1)) < 0.10);
  }

  SECTION("zero step size, one step: init plus noise only") {
    SgldConfig cfg{0.0, 0.5, 1, SgldInit::gaussian};
    auto grad = [](const Mat& X) -> Mat {
      return Mat::Constant(X.rows(), X.cols(), 1e12);  // must never matter
    };
    SgldBatch b = sgld_sample(grad, cfg, 100, 3, 61);
    REQUIRE(b.samples.allFinite());
    REQUIRE(b.samples.cwiseAbs().maxCoeff() < 10.0);
  }

  SECTION("metadata completeness and sigma sensitivity") {
    MlpNet zero = mlp_init({2, 4, 1}, Activation::swish, 0);
    for (auto& W : zero.W) W.setZero();
    DeepEbmModel model(zero, Vec::Zero(2), Vec::Zero(2));
    SgldConfig a{1.0, 0.01, 50, SgldInit::uniform_box};
    SgldConfig b{1.0, 0.1, 50, SgldInit::uniform_box};
    SgldBatch ba = sgld_sample(model, a, 20, 67);
    SgldBatch bb = sgld_sample(model, b, 20, 67);
    REQUIRE(ba.samples != bb.samples);
    REQUIRE(ba.config.noise_scale == 0.01);
    REQUIRE(bb.config.noise_scale == 0.1);
    REQUIRE(ba.seed == 67);
    REQUIRE(std::string(sgld_init_name(ba.config.init)) == "uniform_box");
  }

  SECTION("divergence raises with the step index") {
    SgldConfig cfg{10.0, 0.01, 500, SgldInit::gaussian};
    auto grad = [](const Mat& X) -> Mat { return -10.0 * X; };  // explosive
    REQUIRE_THROWS_AS(sgld_sample(grad, cfg, 10, 2, 71), NumericError);
  }

  SECTION("data init requires data") {
    SgldConfig cfg{1.0, 0.01, 1, SgldInit::data};
    auto grad = [](const Mat& X) { return X; };
    REQUIRE_THROWS_AS(sgld_sample(grad, cfg, 10, 2, 73), ConfigError);
    Mat pool = Mat::Random(5, 2);
    SgldBatch b = sgld_sample(grad, cfg, 10, 2, 73, &pool);
    REQUIRE(b.samples.rows() == 10);
  }

  SgldConfig bad{1.0, -0.1, 10, SgldInit::gaussian};
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}
