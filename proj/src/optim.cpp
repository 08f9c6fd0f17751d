#include "deeplight/optim.hpp"

#include <cmath>

#include "deeplight/error.hpp"

namespace deeplight::nn {

double global_norm(const GradientSet& grads) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double v : grads[i].data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(GradientSet& grads, double threshold) {
  const double norm = global_norm(grads);
  if (norm > threshold) {
    const double s = threshold / norm;
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (double& v : grads[i].data()) v *= s;
    }
  }
  return norm;
}

AdamState AdamState::for_params(const ParamSet& params, AdamHyper hyper) {
  AdamState s;
  s.hyper = hyper;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  return s;
}

void adam_step(AdamState& state, ParamSet& params, const GradientSet& grads) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment)) {
    throw ConfigError("adam_step: parameter, gradient and moment layouts differ");
  }
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    double* w = params[p].raw();
    const double* g = grads[p].raw();
    double* m = state.first_moment[p].raw();
    double* v = state.second_moment[p].raw();
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

}  // namespace deeplight::nn
