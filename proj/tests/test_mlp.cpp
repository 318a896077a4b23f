#include <catch2/catch_amalgamated.hpp>

#include "lsd/mlp.hpp"
#include "lsd/serialize.hpp"

using namespace lsd;

namespace {

// Independent layer-by-layer evaluation, kept free of the library's
// batched machinery.
Vec naive_forward(const MlpNet& net, const Vec& x) {
  Vec a = x;
  for (Eigen::Index k = 0; k < net.depth(); ++k) {
    Vec z = net.W[k] * a + net.b[k];
    if (k < net.depth() - 1) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = act_v(net.act, z(i));
      a = z;
    } else {
      a = z;
    }
  }
  return a;
}

// Central finite differences of a scalar function over the parameter vector.
Vec fd_param_grad(MlpNet net, const std::function<double(const MlpNet&)>& f,
                  double h = 1e-5) {
  Vec p = mlp_params(net);
  Vec g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Vec pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    mlp_set_params(net, pp);
    const double fp = f(net);
    mlp_set_params(net, pm);
    const double fm = f(net);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

MlpNet small_net(std::vector<Eigen::Index> dims, std::uint64_t seed,
                 Activation act = Activation::swish) {
  return mlp_init(dims, act, seed);
}

MlpNet linear_net(const Mat& A) {
  MlpNet net = mlp_init({A.cols(), A.rows()}, Activation::swish, 0);
  net.W[0] = A;
  net.b[0].setZero();
  return net;
}

}  // namespace

TEST_CASE("activation derivatives match finite differences") {
  for (Activation act : {Activation::swish, Activation::tanh}) {
    for (double z = -10.0; z <= 10.0; z += 0.37) {
      const double h = 1e-6;
      const double fd1 = (act_v(act, z + h) - act_v(act, z - h)) / (2.0 * h);
      const double fd2 = (act_v1(act, z + h) - act_v1(act, z - h)) / (2.0 * h);
      const double fd3 = (act_v2(act, z + h) - act_v2(act, z - h)) / (2.0 * h);
      REQUIRE(act_v1(act, z) == Catch::Approx(fd1).margin(1e-6).epsilon(1e-6));
      REQUIRE(act_v2(act, z) == Catch::Approx(fd2).margin(1e-5).epsilon(1e-5));
      REQUIRE(act_v3(act, z) == Catch::Approx(fd3).margin(1e-5).epsilon(1e-5));
    }
  }
}

TEST_CASE("swish is z times sigmoid") {
  REQUIRE(act_v(Activation::swish, 1.3) ==
          Catch::Approx(1.3 / (1.0 + std::exp(-1.3))).epsilon(1e-14));
}

TEST_CASE("mlp_init determinism and validation") {
  MlpNet a = mlp_init({2, 3, 1}, Activation::swish, 0);
  MlpNet b = mlp_init({2, 3, 1}, Activation::swish, 0);
  REQUIRE(mlp_params(a) == mlp_params(b));
  REQUIRE_THROWS_AS(mlp_init({1}, Activation::swish, 0), ConfigError);
  REQUIRE_THROWS_AS(mlp_init({2, 0, 1}, Activation::swish, 0), ConfigError);
  MlpNet big = mlp_init({784, 300, 300, 784}, Activation::swish, 7);
  REQUIRE(big.depth() == 3);
  REQUIRE(big.W[1].rows() == 300);
  // biases start at zero, weights scaled by fan-in
  REQUIRE(big.b[0].norm() == 0.0);
}

TEST_CASE("param vector round-trip is the identity") {
  MlpNet net = small_net({3, 5, 4, 2}, 3);
  Vec p = mlp_params(net);
  MlpNet other = small_net({3, 5, 4, 2}, 99);
  mlp_set_params(other, p);
  REQUIRE(mlp_params(other) == p);
  REQUIRE_THROWS_AS(mlp_set_params(other, Vec::Zero(3)), ShapeError);
}

TEST_CASE("forward: zero net, linear layer, naive oracle") {
  MlpNet zero = small_net({3, 4, 3}, 1);
  for (auto& W : zero.W) W.setZero();
  REQUIRE(mlp_forward(zero, Vec::Random(3)).norm() == 0.0);

  Rng rng = make_rng(5);
  Mat A = gaussian_matrix(rng, 2, 3);
  MlpNet lin = linear_net(A);
  lin.b[0] = gaussian_vector(rng, 2);
  Vec x = gaussian_vector(rng, 3);
  REQUIRE((mlp_forward(lin, x) - (A * x + lin.b[0])).norm() < 1e-14);

  MlpNet net = small_net({4, 6, 5, 3}, 11);
  Vec x2 = gaussian_vector(rng, 4);
  REQUIRE((mlp_forward(net, x2) - naive_forward(net, x2)).norm() < 1e-12);
  REQUIRE_THROWS_AS(mlp_forward(net, Vec::Zero(3)), ShapeError);
}

TEST_CASE("jvp: linear exact, zero tangent, central differences") {
  Rng rng = make_rng(7);
  Mat A = gaussian_matrix(rng, 3, 3);
  MlpNet lin = linear_net(A);
  Vec x = gaussian_vector(rng, 3), v = gaussian_vector(rng, 3);
  REQUIRE((mlp_jvp(lin, x, v).Jv - A * v).norm() < 1e-14);
  REQUIRE(mlp_jvp(lin, x, Vec::Zero(3)).Jv.norm() == 0.0);

  MlpNet net = small_net({3, 8, 8, 3}, 13);
  auto r = mlp_jvp(net, x, v);
  const double h = 1e-5;
  Vec fd = (mlp_forward(net, x + h * v) - mlp_forward(net, x - h * v)) / (2.0 * h);
  REQUIRE((r.Jv - fd).norm() / fd.norm() < 1e-6);
  REQUIRE((r.y - mlp_forward(net, x)).norm() == 0.0);
}

TEST_CASE("vjp: linear closed form and parameter finite differences") {
  Rng rng = make_rng(17);
  Mat A = gaussian_matrix(rng, 2, 3);
  MlpNet lin = linear_net(A);
  lin.b[0] = gaussian_vector(rng, 2);
  Vec x = gaussian_vector(rng, 3), w = gaussian_vector(rng, 2);
  auto r = mlp_vjp(lin, x, w);
  REQUIRE((r.wJ.transpose() - w.transpose() * A).norm() < 1e-14);
  // param_grad wrt A is w x^T, wrt b is w
  Eigen::Index off = 0;
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 3; ++j)
      REQUIRE(r.param_grad(off++) == Catch::Approx(w(i) * x(j)).margin(1e-13));
  for (Eigen::Index i = 0; i < 2; ++i)
    REQUIRE(r.param_grad(off++) == Catch::Approx(w(i)).margin(1e-13));

  REQUIRE(mlp_vjp(lin, x, Vec::Zero(2)).param_grad.norm() == 0.0);

  MlpNet net = small_net({3, 4, 2}, 23);
  Vec w2 = gaussian_vector(rng, 2);
  auto rr = mlp_vjp(net, x, w2);
  Vec fd = fd_param_grad(net, [&](const MlpNet& n) { return w2.dot(mlp_forward(n, x)); });
  REQUIRE((rr.param_grad - fd).norm() / fd.norm() < 1e-4);
}

TEST_CASE("jvp/vjp adjoint consistency") {
  Rng rng = make_rng(29);
  MlpNet net = small_net({5, 9, 7, 5}, 31, Activation::tanh);
  for (int trial = 0; trial < 5; ++trial) {
    Vec x = gaussian_vector(rng, 5);
    Vec u = gaussian_vector(rng, 5);
    Vec v = gaussian_vector(rng, 5);
    const double lhs = v.dot(mlp_jvp(net, x, u).Jv);
    const double rhs = mlp_vjp(net, x, v).wJ.dot(u);
    REQUIRE(lhs == Catch::Approx(rhs).margin(1e-10));
  }
}

TEST_CASE("jacobian trace: linear, identity, dense-Jacobian oracle") {
  Rng rng = make_rng(37);
  Mat A = gaussian_matrix(rng, 4, 4);
  MlpNet lin = linear_net(A);
  Vec x = gaussian_vector(rng, 4);
  REQUIRE(jacobian_trace_exact(lin, x) == Catch::Approx(A.trace()).margin(1e-12));

  MlpNet eye = linear_net(Mat::Identity(4, 4));
  REQUIRE(jacobian_trace_exact(eye, x) == Catch::Approx(4.0).margin(1e-14));

  MlpNet net = small_net({3, 6, 3}, 41);
  // Assemble the full Jacobian column-by-column from one-hot JVPs of an
  // independent finite-difference route.
  Mat J(3, 3);
  const double h = 1e-6;
  for (int j = 0; j < 3; ++j) {
    Vec e = Vec::Zero(3);
    e(j) = 1.0;
    Vec xx = gaussian_vector(rng, 3);
    (void)xx;
    J.col(j) = (mlp_forward(net, x.head(3) + h * e) - mlp_forward(net, x.head(3) - h * e)) /
               (2.0 * h);
  }
  REQUIRE(jacobian_trace_exact(net, x.head(3)) == Catch::Approx(J.trace()).margin(1e-6));

  MlpNet rect = small_net({3, 4, 2}, 43);
  REQUIRE_THROWS_AS(jacobian_trace_exact(rect, Vec::Zero(3)), ShapeError);
}

TEST_CASE("hutchinson unbiasedness on a linear map") {
  Rng rng = make_rng(47);
  Mat A = gaussian_matrix(rng, 5, 5);
  const int k = 100000;
  Vec vals(k);
  for (int i = 0; i < k; ++i) {
    Vec eps = gaussian_vector(rng, 5);
    vals(i) = eps.dot(A * eps);
  }
  const double se = sample_std(vals) / std::sqrt(double(k));
  REQUIRE(std::abs(vals.mean() - A.trace()) < 4.0 * se);
}

TEST_CASE("lsde_param_grad: closed forms and finite differences") {
  Rng rng = make_rng(53);
  Mat A = gaussian_matrix(rng, 3, 3);
  MlpNet lin = linear_net(A);
  Vec x = gaussian_vector(rng, 3), eps = gaussian_vector(rng, 3);

  SECTION("linear net, g = 0, lambda = 0") {
    auto r = lsde_param_grad(lin, x, Vec::Zero(3), eps, 0.0);
    REQUIRE(r.s == Catch::Approx(eps.dot(A * eps)).margin(1e-12));
    REQUIRE(r.r == 0.0);
    // d s / dA = eps eps^T
    Eigen::Index off = 0;
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < 3; ++j)
        REQUIRE(r.param_grad(off++) == Catch::Approx(eps(i) * eps(j)).margin(1e-12));
  }

  SECTION("zero net with positive lambda") {
    MlpNet zero = small_net({3, 4, 3}, 1);
    for (auto& W : zero.W) W.setZero();
    auto r = lsde_param_grad(zero, x, gaussian_vector(rng, 3), eps, 0.7);
    REQUIRE(r.r == 0.0);
    REQUIRE(r.s == Catch::Approx(0.0).margin(1e-14));
  }

  SECTION("random net matches finite differences") {
    MlpNet net = small_net({3, 4, 3}, 59);
    Vec g = gaussian_vector(rng, 3);
    const double lambda = 0.4;
    auto r = lsde_param_grad(net, x, g, eps, lambda);
    Vec fd = fd_param_grad(net, [&](const MlpNet& n) {
      ForwardCache fc;
      Mat F = mlp_forward_batch(n, x.transpose(), &fc);
      Mat Je = mlp_tangent_batch(n, fc, eps.transpose());
      const double s = g.dot(Vec(F.row(0))) + eps.dot(Vec(Je.row(0)));
      return s - lambda * F.row(0).squaredNorm();
    });
    REQUIRE((r.param_grad - fd).norm() / fd.norm() < 1e-4);
  }

  SECTION("errors") {
    MlpNet rect = small_net({3, 4, 2}, 61);
    REQUIRE_THROWS_AS(lsde_param_grad(rect, x, x, eps, 0.1), ShapeError);
    Vec bad = x;
    bad(0) = std::numeric_limits<double>::quiet_NaN();
    MlpNet net = small_net({3, 4, 3}, 59);
    REQUIRE_THROWS_AS(lsde_param_grad(net, bad, x, eps, 0.1), NumericError);
  }
}

TEST_CASE("energy_pair_grad: linear energy, zero coefficients, finite differences") {
  Rng rng = make_rng(67);
  Vec w = gaussian_vector(rng, 4);
  MlpNet lin = linear_net(w.transpose());
  Vec x = gaussian_vector(rng, 4), a = gaussian_vector(rng, 4);

  auto r = energy_pair_grad(lin, x, a);
  REQUIRE((r.grad_x - w).norm() < 1e-13);
  // <a, dE/dx> = <a, w>, so d/dw = a
  for (Eigen::Index j = 0; j < 4; ++j)
    REQUIRE(r.param_grad(j) == Catch::Approx(a(j)).margin(1e-13));

  REQUIRE(energy_pair_grad(lin, x, Vec::Zero(4)).param_grad.norm() == 0.0);

  MlpNet net = small_net({4, 5, 1}, 71);
  auto rr = energy_pair_grad(net, x, a);
  REQUIRE(rr.e == Catch::Approx(mlp_forward(net, x)(0)).margin(1e-14));
  Vec fd = fd_param_grad(net, [&](const MlpNet& n) {
    // recompute grad_x at perturbed parameters with an FD route
    double acc = 0.0;
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < 4; ++j) {
      Vec e = Vec::Zero(4);
      e(j) = 1.0;
      acc += a(j) * (mlp_forward(n, x + h * e)(0) - mlp_forward(n, x - h * e)(0)) / (2.0 * h);
    }
    return acc;
  }, 1e-4);
  REQUIRE((rr.param_grad - fd).norm() / fd.norm() < 1e-4);

  MlpNet rect = small_net({4, 5, 2}, 73);
  REQUIRE_THROWS_AS(energy_pair_grad(rect, x, a), ShapeError);
}

TEST_CASE("operations are bit-deterministic") {
  Rng rng = make_rng(79);
  MlpNet net = small_net({4, 6, 4}, 83);
  Vec x = gaussian_vector(rng, 4), v = gaussian_vector(rng, 4);
  auto a = mlp_jvp(net, x, v);
  auto b = mlp_jvp(net, x, v);
  REQUIRE(a.Jv == b.Jv);
  auto g1 = lsde_param_grad(net, x, v, x, 0.3);
  auto g2 = lsde_param_grad(net, x, v, x, 0.3);
  REQUIRE(g1.param_grad == g2.param_grad);
}

TEST_CASE("net serialization round-trips losslessly") {
  MlpNet net = small_net({3, 7, 2}, 89, Activation::tanh);
  const std::string path = "test_net.lsdc";
  save_net(path, net);
  MlpNet back = load_net(path);
  REQUIRE(back.layer_dims == net.layer_dims);
  REQUIRE(back.act == net.act);
  REQUIRE(mlp_params(back) == mlp_params(net));
  std::remove(path.c_str());
}
