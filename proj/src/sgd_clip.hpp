#pragma once

#include <cmath>

#include "fdch/mlp.hpp"

namespace fdch::detail {

// SGD step with each layer's gradient norm capped at kGradClip. The pair
// and balance sums make early training gradients grow with n while late
// gradients shrink by orders of magnitude; the cap bounds the former
// without shrinking the latter. Directions are untouched.
constexpr double kGradClip = 1.0;

inline void clipped_sgd(Mlp& net, const Grads& grads, double lr) {
  Grads scaled = grads;
  for (LayerGrads& g : scaled.layers) {
    const double norm = std::sqrt(g.weights.squaredNorm() + g.bias.squaredNorm());
    if (norm > kGradClip) {
      const double f = kGradClip / norm;
      g.weights *= f;
      g.bias *= f;
    }
  }
  sgd_step(net, scaled, lr);
}

}  // namespace fdch::detail
