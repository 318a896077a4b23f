#pragma once

#include <cmath>

#include "lsd/common.hpp"

namespace lsd {

enum class Activation { swish, tanh };

namespace detail {
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace detail

// Scalar value / first / second / third derivative of the hidden
// nonlinearity.  The third derivative is only needed by the second-order
// tangent machinery (sliced score matching on MLP energies).
inline double act_v(Activation a, double z) {
  switch (a) {
    case Activation::swish: return z * detail::sigmoid(z);
    case Activation::tanh: return std::tanh(z);
  }
  return 0.0;
}

inline double act_v1(Activation a, double z) {
  switch (a) {
    case Activation::swish: {
      const double s = detail::sigmoid(z);
      return s + z * s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 0.0;
}

inline double act_v2(Activation a, double z) {
  switch (a) {
    case Activation::swish: {
      const double s = detail::sigmoid(z);
      const double s1 = s * (1.0 - s);
      const double s2 = s1 * (1.0 - 2.0 * s);
      return 2.0 * s1 + z * s2;
    }
    case Activation::tanh: {
      const double t = std::tanh(z);
      return -2.0 * t * (1.0 - t * t);
    }
  }
  return 0.0;
}

inline double act_v3(Activation a, double z) {
  switch (a) {
    case Activation::swish: {
      const double s = detail::sigmoid(z);
      const double s1 = s * (1.0 - s);
      const double s2 = s1 * (1.0 - 2.0 * s);
      const double s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
      return 3.0 * s2 + z * s3;
    }
    case Activation::tanh: {
      const double t = std::tanh(z);
      return (6.0 * t * t - 2.0) * (1.0 - t * t);
    }
  }
  return 0.0;
}

// Elementwise matrix versions used by the batched passes.
inline Mat act_v(Activation a, const Mat& z) {
  return z.unaryExpr([a](double x) { return act_v(a, x); });
}
inline Mat act_v1(Activation a, const Mat& z) {
  return z.unaryExpr([a](double x) { return act_v1(a, x); });
}
inline Mat act_v2(Activation a, const Mat& z) {
  return z.unaryExpr([a](double x) { return act_v2(a, x); });
}
inline Mat act_v3(Activation a, const Mat& z) {
  return z.unaryExpr([a](double x) { return act_v3(a, x); });
}

inline const char* activation_name(Activation a) {
  return a == Activation::swish ? "swish" : "tanh";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "swish") return Activation::swish;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation: " + s);
}

}  // namespace lsd
