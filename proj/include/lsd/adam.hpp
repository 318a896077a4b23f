#pragma once

#include "lsd/common.hpp"

namespace lsd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  Vec m;
  Vec v;

  explicit AdamState(AdamConfig c = {}) : cfg(c) {}
};

// Standard Adam with bias correction; maximize flips the gradient sign.
// Weight decay is plain L2 (added to the descent gradient).
inline Vec adam_step(AdamState& st, const Vec& params, const Vec& grad, bool maximize) {
  if (params.size() != grad.size()) throw ShapeError("adam_step: length mismatch");
  if (st.m.size() == 0) {
    st.m = Vec::Zero(params.size());
    st.v = Vec::Zero(params.size());
  }
  if (st.m.size() != params.size()) throw ShapeError("adam_step: state length mismatch");
  Vec g = maximize ? Vec(-grad) : grad;
  if (st.cfg.weight_decay != 0.0) g += st.cfg.weight_decay * params;
  st.step += 1;
  st.m = st.cfg.beta1 * st.m + (1.0 - st.cfg.beta1) * g;
  st.v = st.cfg.beta2 * st.v.array().matrix() + (1.0 - st.cfg.beta2) * g.array().square().matrix();
  const double bc1 = 1.0 - std::pow(st.cfg.beta1, double(st.step));
  const double bc2 = 1.0 - std::pow(st.cfg.beta2, double(st.step));
  Vec mhat = st.m / bc1;
  Vec vhat = st.v / bc2;
  return params - st.cfg.lr * (mhat.array() / (vhat.array().sqrt() + st.cfg.eps)).matrix();
}

}  // namespace lsd
