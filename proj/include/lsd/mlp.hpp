#pragma once

#include <vector>

#include "lsd/activation.hpp"
#include "lsd/common.hpp"

namespace lsd {

// Dense MLP: hidden layers share one nonlinearity, output layer is linear.
// All differentiation the training objectives need is provided here as
// explicit passes over the layer structure: forward, input tangent (JVP),
// reverse (VJP / parameter gradients), and a combined reverse-over-forward
// pass for scalars that mix primal outputs with directional derivatives.
struct MlpNet {
  std::vector<Eigen::Index> layer_dims;  // [d_in, h_1, ..., h_L, d_out]
  std::vector<Mat> W;                    // W[k]: dims[k+1] x dims[k]
  std::vector<Vec> b;
  Activation act = Activation::swish;

  Eigen::Index depth() const { return Eigen::Index(W.size()); }
  Eigen::Index d_in() const { return layer_dims.front(); }
  Eigen::Index d_out() const { return layer_dims.back(); }
};

// Per-hidden-layer multiplicative masks (n x h_k), identity when absent.
// Dropout is realized by the caller supplying 0 / (1/keep) entries.
using Masks = std::vector<Mat>;

inline Eigen::Index mlp_n_params(const MlpNet& net) {
  Eigen::Index n = 0;
  for (Eigen::Index k = 0; k < net.depth(); ++k)
    n += net.W[k].size() + net.b[k].size();
  return n;
}

inline MlpNet mlp_init(const std::vector<Eigen::Index>& dims, Activation act,
                       std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("mlp_init: need at least [d_in, d_out]");
  for (auto d : dims)
    if (d < 1) throw ConfigError("mlp_init: all layer dims must be >= 1");
  MlpNet net;
  net.layer_dims = dims;
  net.act = act;
  Rng rng = make_rng(seed);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const double scale = 1.0 / std::sqrt(double(dims[k]));
    net.W.push_back(scale * gaussian_matrix(rng, dims[k + 1], dims[k]));
    net.b.push_back(Vec::Zero(dims[k + 1]));
  }
  return net;
}

// Canonical flattening: layer-major, weights (row-major) before biases.
inline Vec mlp_params(const MlpNet& net) {
  Vec p(mlp_n_params(net));
  Eigen::Index off = 0;
  for (Eigen::Index k = 0; k < net.depth(); ++k) {
    const Mat& W = net.W[k];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) p(off++) = W(i, j);
    p.segment(off, net.b[k].size()) = net.b[k];
    off += net.b[k].size();
  }
  return p;
}

inline void mlp_set_params(MlpNet& net, const Vec& p) {
  if (p.size() != mlp_n_params(net))
    throw ShapeError("mlp_set_params: length mismatch");
  Eigen::Index off = 0;
  for (Eigen::Index k = 0; k < net.depth(); ++k) {
    Mat& W = net.W[k];
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = p(off++);
    net.b[k] = p.segment(off, net.b[k].size());
    off += net.b[k].size();
  }
}

struct ForwardCache {
  std::vector<Mat> A;  // A[0] = X, A[k] activation of layer k-1, k = 1..L
  std::vector<Mat> Z;  // Z[k] preactivation of layer k, k = 0..L-1
};

struct TangentCache {
  std::vector<Mat> T;  // T[0] = input tangent, T[k] tangent of A[k]
  std::vector<Mat> U;  // U[k] tangent of Z[k]
};

inline void check_masks(const MlpNet& net, const Masks* masks, Eigen::Index n) {
  if (!masks) return;
  if (Eigen::Index(masks->size()) != net.depth() - 1)
    throw ShapeError("masks: need one per hidden layer");
  for (Eigen::Index k = 0; k + 1 < net.depth(); ++k)
    if ((*masks)[k].rows() != n || (*masks)[k].cols() != net.layer_dims[k + 1])
      throw ShapeError("masks: shape mismatch");
}

// Rows of X are examples.  Returns the n x d_out output matrix.
inline Mat mlp_forward_batch(const MlpNet& net, const Mat& X,
                             ForwardCache* cache = nullptr,
                             const Masks* masks = nullptr) {
  if (X.cols() != net.d_in()) throw ShapeError("mlp_forward: d_in mismatch");
  check_masks(net, masks, X.rows());
  const Eigen::Index L = net.depth();
  if (cache) {
    cache->A.assign(1, X);
    cache->Z.clear();
  }
  Mat A = X;
  for (Eigen::Index k = 0; k < L; ++k) {
    Mat Z = (A * net.W[k].transpose()).rowwise() + net.b[k].transpose();
    if (k < L - 1) {
      A = act_v(net.act, Z);
      if (masks) A.array() *= (*masks)[k].array();
    } else {
      A = Z;
    }
    if (cache) {
      cache->Z.push_back(std::move(Z));
      cache->A.push_back(A);
    }
  }
  return A;
}

// Propagates an input tangent T0 (n x d_in) through the cached forward
// pass.  Returns J_i t_i stacked as rows.
inline Mat mlp_tangent_batch(const MlpNet& net, const ForwardCache& fc,
                             const Mat& T0, TangentCache* cache = nullptr,
                             const Masks* masks = nullptr) {
  if (T0.cols() != net.d_in() || T0.rows() != fc.A[0].rows())
    throw ShapeError("mlp_tangent: tangent shape mismatch");
  const Eigen::Index L = net.depth();
  if (cache) {
    cache->T.assign(1, T0);
    cache->U.clear();
  }
  Mat T = T0;
  for (Eigen::Index k = 0; k < L; ++k) {
    Mat U = T * net.W[k].transpose();
    if (k < L - 1) {
      T = act_v1(net.act, fc.Z[k]).array() * U.array();
      if (masks) T.array() *= (*masks)[k].array();
    } else {
      T = U;
    }
    if (cache) {
      cache->U.push_back(std::move(U));
      cache->T.push_back(T);
    }
  }
  return T;
}

// Reverse pass for the scalar
//   Phi = sum_i [ Abar_i . f(x_i) + Tbar_i . (J_i t_i) ]
// through the combined primal+tangent computation.  Pass tc = nullptr (and
// Tbar empty) for a plain VJP.  Optionally returns the input cotangents
// dPhi/dx_i as rows of *xbar.
inline Vec mlp_mixed_reverse(const MlpNet& net, const ForwardCache& fc,
                             const TangentCache* tc, const Mat& Abar_out,
                             const Mat& Tbar_out, const Masks* masks = nullptr,
                             Mat* xbar = nullptr) {
  const Eigen::Index L = net.depth();
  const bool with_tangent = (tc != nullptr);
  Vec grad = Vec::Zero(mlp_n_params(net));

  Mat Abar = Abar_out;
  Mat Tbar = Tbar_out;
  Eigen::Index off_end = grad.size();
  std::vector<Eigen::Index> offsets(L);
  {
    Eigen::Index off = 0;
    for (Eigen::Index k = 0; k < L; ++k) {
      offsets[k] = off;
      off += net.W[k].size() + net.b[k].size();
    }
  }
  (void)off_end;

  for (Eigen::Index k = L - 1; k >= 0; --k) {
    Mat Zbar, Ubar;
    if (k == L - 1) {
      Zbar = Abar;
      if (with_tangent) Ubar = Tbar;
    } else {
      Mat v1 = act_v1(net.act, fc.Z[k]);
      Zbar = Abar.array() * v1.array();
      if (with_tangent) {
        Mat v2 = act_v2(net.act, fc.Z[k]);
        Zbar.array() += Tbar.array() * v2.array() * tc->U[k].array();
        Ubar = Tbar.array() * v1.array();
      }
      if (masks) {
        Zbar.array() *= (*masks)[k].array();
        if (with_tangent) Ubar.array() *= (*masks)[k].array();
      }
    }
    // dW = Zbar^T A_{k} + Ubar^T T_{k}; db = column sums of Zbar
    Mat dW = Zbar.transpose() * fc.A[k];
    if (with_tangent) dW.noalias() += Ubar.transpose() * tc->T[k];
    Vec db = Zbar.colwise().sum();
    Eigen::Index off = offsets[k];
    for (Eigen::Index i = 0; i < dW.rows(); ++i)
      for (Eigen::Index j = 0; j < dW.cols(); ++j) grad(off++) = dW(i, j);
    grad.segment(off, db.size()) += db;

    if (k > 0 || xbar) {
      Abar = Zbar * net.W[k];
      if (with_tangent) Tbar = Ubar * net.W[k];
    }
  }
  if (xbar) *xbar = Abar;
  return grad;
}

// ---------------------------------------------------------------------------
// Single-example operations.

inline Vec mlp_forward(const MlpNet& net, const Vec& x) {
  if (!x.allFinite()) throw NumericError("mlp_forward: non-finite input");
  return mlp_forward_batch(net, x.transpose()).row(0);
}

struct JvpResult {
  Vec y;
  Vec Jv;
};

inline JvpResult mlp_jvp(const MlpNet& net, const Vec& x, const Vec& v) {
  if (v.size() != net.d_in()) throw ShapeError("mlp_jvp: tangent dim mismatch");
  ForwardCache fc;
  Mat Y = mlp_forward_batch(net, x.transpose(), &fc);
  Mat Jv = mlp_tangent_batch(net, fc, v.transpose());
  return {Y.row(0), Jv.row(0)};
}

struct VjpResult {
  Vec y;
  Vec wJ;
  Vec param_grad;
};

inline VjpResult mlp_vjp(const MlpNet& net, const Vec& x, const Vec& w) {
  if (w.size() != net.d_out()) throw ShapeError("mlp_vjp: cotangent dim mismatch");
  ForwardCache fc;
  Mat Y = mlp_forward_batch(net, x.transpose(), &fc);
  Mat xbar;
  Vec grad = mlp_mixed_reverse(net, fc, nullptr, w.transpose(), Mat(), nullptr, &xbar);
  return {Y.row(0), xbar.row(0), grad};
}

// Exact Jacobian trace via d_in tangent passes with basis vectors.
inline Vec mlp_trace_batch(const MlpNet& net, const ForwardCache& fc) {
  const Eigen::Index d = net.d_in();
  if (net.d_out() != d) throw ShapeError("jacobian trace: net must be square");
  const Eigen::Index n = fc.A[0].rows();
  Vec tr = Vec::Zero(n);
  Mat T0 = Mat::Zero(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    T0.col(j).setOnes();
    Mat TL = mlp_tangent_batch(net, fc, T0);
    tr += TL.col(j);
    T0.col(j).setZero();
  }
  return tr;
}

inline double jacobian_trace_exact(const MlpNet& net, const Vec& x) {
  ForwardCache fc;
  mlp_forward_batch(net, x.transpose(), &fc);
  return mlp_trace_batch(net, fc)(0);
}

// Hutchinson probe terms eps_i^T J_i eps_i for cached forward states.
inline Vec mlp_hutchinson_batch(const MlpNet& net, const ForwardCache& fc,
                                const Mat& Eps) {
  Mat TL = mlp_tangent_batch(net, fc, Eps);
  return (TL.array() * Eps.array()).rowwise().sum();
}

struct LsdeGradResult {
  double s;  // g^T f(x) + eps^T (df/dx) eps
  double r;  // lambda * ||f(x)||^2
  Vec param_grad;  // d(s - r)/dparams
};

inline LsdeGradResult lsde_param_grad(const MlpNet& net, const Vec& x,
                                      const Vec& g, const Vec& eps,
                                      double lambda) {
  if (net.d_in() != net.d_out())
    throw ShapeError("lsde_param_grad: net must be square");
  if (g.size() != net.d_in() || eps.size() != net.d_in())
    throw ShapeError("lsde_param_grad: vector dim mismatch");
  if (!x.allFinite() || !g.allFinite() || !eps.allFinite())
    throw NumericError("lsde_param_grad: non-finite input");
  ForwardCache fc;
  Mat F = mlp_forward_batch(net, x.transpose(), &fc);
  TangentCache tc;
  Mat Jeps = mlp_tangent_batch(net, fc, eps.transpose(), &tc);
  const Vec f = F.row(0);
  const double s = g.dot(f) + eps.dot(Jeps.row(0));
  const double r = lambda * f.squaredNorm();
  Mat Abar = (g - 2.0 * lambda * f).transpose();
  Mat Tbar = eps.transpose();
  Vec grad = mlp_mixed_reverse(net, fc, &tc, Abar, Tbar);
  return {s, r, grad};
}

struct EnergyPairGrad {
  double e;
  Vec grad_x;
  Vec param_grad;  // dparams <a, dE/dx>
};

inline EnergyPairGrad energy_pair_grad(const MlpNet& net, const Vec& x,
                                       const Vec& a) {
  if (net.d_out() != 1) throw ShapeError("energy_pair_grad: d_out must be 1");
  if (a.size() != net.d_in())
    throw ShapeError("energy_pair_grad: coefficient dim mismatch");
  ForwardCache fc;
  Mat Y = mlp_forward_batch(net, x.transpose(), &fc);
  Mat xbar;
  mlp_mixed_reverse(net, fc, nullptr, Mat::Ones(1, 1), Mat(), nullptr, &xbar);
  TangentCache tc;
  mlp_tangent_batch(net, fc, a.transpose(), &tc);
  Vec grad = mlp_mixed_reverse(net, fc, &tc, Mat::Zero(1, 1), Mat::Ones(1, 1));
  return {Y(0, 0), xbar.row(0), grad};
}

// Batched gradient of sum_i c_i <a_i, dE/dx_i> for an energy net (d -> 1).
inline Vec energy_pair_grad_batch(const MlpNet& net, const Mat& X, const Mat& A,
                                  const Vec& weights, Mat* grad_x = nullptr) {
  if (net.d_out() != 1) throw ShapeError("energy_pair_grad: d_out must be 1");
  ForwardCache fc;
  mlp_forward_batch(net, X, &fc);
  if (grad_x) {
    Mat xbar;
    mlp_mixed_reverse(net, fc, nullptr, Mat::Ones(X.rows(), 1), Mat(), nullptr,
                      &xbar);
    *grad_x = xbar;
  }
  TangentCache tc;
  mlp_tangent_batch(net, fc, A, &tc);
  return mlp_mixed_reverse(net, fc, &tc, Mat::Zero(X.rows(), 1), weights);
}

// Batched gradient of the energy alone: d/dparams sum_i c_i E(x_i).
inline Vec energy_value_grad_batch(const MlpNet& net, const Mat& X,
                                   const Vec& weights) {
  if (net.d_out() != 1) throw ShapeError("energy grad: d_out must be 1");
  ForwardCache fc;
  mlp_forward_batch(net, X, &fc);
  return mlp_mixed_reverse(net, fc, nullptr, weights, Mat());
}

// Batched input gradient of an energy net: rows are dE/dx_i.
inline Mat energy_input_grad_batch(const MlpNet& net, const Mat& X) {
  if (net.d_out() != 1) throw ShapeError("energy grad: d_out must be 1");
  ForwardCache fc;
  mlp_forward_batch(net, X, &fc);
  Mat xbar;
  mlp_mixed_reverse(net, fc, nullptr, Mat::Ones(X.rows(), 1), Mat(), nullptr,
                    &xbar);
  return xbar;
}

}  // namespace lsd
