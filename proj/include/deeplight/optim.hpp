#pragma once

#include <cstdint>

#include "deeplight/autodiff.hpp"

namespace deeplight::nn {

double global_norm(const GradientSet& grads);

/// Rescales all gradients by threshold/‖g‖₂ when ‖g‖₂ exceeds `threshold`.
/// Returns the norm before clipping.
double clip_global_norm(GradientSet& grads, double threshold);

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  ParamSet first_moment;
  ParamSet second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ParamSet& params, AdamHyper hyper = {});
};

/// Bias-corrected Adam update, in place. Increments `state.step`.
void adam_step(AdamState& state, ParamSet& params, const GradientSet& grads);

}  // namespace deeplight::nn
