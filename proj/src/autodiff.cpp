#include "deeplight/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"

namespace deeplight::nn {

std::size_t ParamSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
  return tensors_.size() - 1;
}

std::size_t ParamSet::index(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ConfigError("unknown parameter '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

bool ParamSet::contains(std::string_view name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], Tensor(tensors_[i].shape()));
  return out;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (names_[i] != other.names_[i] || tensors_[i].shape() != other.tensors_[i].shape()) return false;
  }
  return true;
}

Var Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::param(const ParamSet& params, std::size_t index) {
  Var v = push(params[index], track_);
  nodes_[v.id].param_index = static_cast<long>(index);
  return v;
}

Var Tape::conv2d(Var input, Var kernels, Var bias, std::size_t stride) {
  Tensor out = nn::conv2d(value(input), value(kernels), value(bias), stride);
  const bool ng = nodes_[input.id].needs_grad || nodes_[kernels.id].needs_grad || nodes_[bias.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, input, kernels, bias, o, stride] {
      const Tensor& g = nodes_[o.id].grad;
      if (nodes_[kernels.id].needs_grad || nodes_[bias.id].needs_grad) {
        Tensor& gk = grad_of(kernels.id);
        Tensor& gb = grad_of(bias.id);
        conv2d_backward_params(g, nodes_[input.id].value, stride, gk, gb);
      }
      if (nodes_[input.id].needs_grad) {
        Tensor gi = conv2d_backward_input(g, nodes_[kernels.id].value, nodes_[input.id].value.shape(), stride);
        axpy(1.0, gi, grad_of(input.id));
      }
    };
  }
  return o;
}

Var Tape::linear(Var weights, Var x, Var bias) {
  Tensor out = nn::linear(value(weights), value(x), value(bias));
  const bool ng = nodes_[weights.id].needs_grad || nodes_[x.id].needs_grad || nodes_[bias.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, weights, x, bias, o] {
      const Tensor& g = nodes_[o.id].grad;
      const Tensor& w = nodes_[weights.id].value;
      const Tensor& xv = nodes_[x.id].value;
      const std::size_t rows = w.dim(0), cols = w.dim(1);
      if (nodes_[weights.id].needs_grad) {
        double* gw = grad_of(weights.id).raw();
        for (std::size_t r = 0; r < rows; ++r) {
          const double gv = g[r];
          if (gv == 0.0) continue;
          double* row = gw + r * cols;
          for (std::size_t c = 0; c < cols; ++c) row[c] += gv * xv[c];
        }
      }
      if (nodes_[bias.id].needs_grad) axpy(1.0, g, grad_of(bias.id));
      if (nodes_[x.id].needs_grad) axpy(1.0, linear_transpose(w, g), grad_of(x.id));
    };
  }
  return o;
}

Var Tape::relu(Var x) {
  Tensor out = activate(Activation::relu, value(x));
  const bool ng = nodes_[x.id].needs_grad;
  relu_inputs_.push_back(x.id);
  Var o = push(std::move(out), ng);
  nodes_[o.id].is_relu = true;
  if (ng) {
    nodes_[o.id].backprop = [this, x, o] {
      const Tensor& g = nodes_[o.id].grad;
      const Tensor& in = nodes_[x.id].value;
      Tensor& gx = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (in[i] > 0.0) gx[i] += g[i];
    };
  }
  return o;
}

Var Tape::sigmoid(Var x) {
  Tensor out = activate(Activation::logistic, value(x));
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o] {
      const Tensor& g = nodes_[o.id].grad;
      const Tensor& y = nodes_[o.id].value;
      Tensor& gx = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return o;
}

Var Tape::tanh(Var x) {
  Tensor out = activate(Activation::tanh, value(x));
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o] {
      const Tensor& g = nodes_[o.id].grad;
      const Tensor& y = nodes_[o.id].value;
      Tensor& gx = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  }
  return o;
}

Var Tape::add(Var a, Var b) {
  if (value(a).shape() != value(b).shape()) throw ConfigError("add: shape mismatch");
  Tensor out = value(a);
  axpy(1.0, value(b), out);
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, a, b, o] {
      const Tensor& g = nodes_[o.id].grad;
      if (nodes_[a.id].needs_grad) axpy(1.0, g, grad_of(a.id));
      if (nodes_[b.id].needs_grad) axpy(1.0, g, grad_of(b.id));
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() != bv.shape()) throw ConfigError("mul: shape mismatch");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, a, b, o] {
      const Tensor& g = nodes_[o.id].grad;
      if (nodes_[a.id].needs_grad) {
        Tensor& ga = grad_of(a.id);
        const Tensor& bv2 = nodes_[b.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (nodes_[b.id].needs_grad) {
        Tensor& gb = grad_of(b.id);
        const Tensor& av2 = nodes_[a.id].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    };
  }
  return o;
}

Var Tape::concat(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  std::vector<double> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t na = av.size();
  const bool ng = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  const std::size_t total = data.size();
  Var o = push(Tensor({total}, std::move(data)), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, a, b, o, na] {
      const Tensor& g = nodes_[o.id].grad;
      if (nodes_[a.id].needs_grad) {
        Tensor& ga = grad_of(a.id);
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (nodes_[b.id].needs_grad) {
        Tensor& gb = grad_of(b.id);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      }
    };
  }
  return o;
}

Var Tape::row(Var x, std::size_t i) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2 || i >= xv.dim(0)) throw ConfigError("row: index out of range");
  const std::size_t cols = xv.dim(1);
  std::vector<double> data(xv.raw() + i * cols, xv.raw() + (i + 1) * cols);
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(Tensor({cols}, std::move(data)), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o, i, cols] {
      const Tensor& g = nodes_[o.id].grad;
      double* gx = grad_of(x.id).raw() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) gx[c] += g[c];
    };
  }
  return o;
}

Var Tape::reshape(Var x, Shape shape) {
  Tensor out = value(x).reshaped(std::move(shape));
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o] {
      const Tensor& g = nodes_[o.id].grad;
      Tensor& gx = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return o;
}

Var Tape::scale(Var x, const Tensor& mask) {
  const Tensor& xv = value(x);
  if (mask.size() != xv.size()) throw ConfigError("scale: mask size mismatch");
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(std::move(out), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o, mask] {
      const Tensor& g = nodes_[o.id].grad;
      Tensor& gx = grad_of(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    };
  }
  return o;
}

Var Tape::sum(Var x) {
  double s = 0.0;
  for (double v : value(x).data()) s += v;
  const bool ng = nodes_[x.id].needs_grad;
  Var o = push(Tensor::scalar(s), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, x, o] {
      const double g = nodes_[o.id].grad[0];
      for (double& v : grad_of(x.id).data()) v += g;
    };
  }
  return o;
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = value(logits);
  if (label >= z.size()) throw ConfigError("softmax_cross_entropy: label out of range");
  Tensor p = softmax(z);
  const double m = *std::max_element(z.data().begin(), z.data().end());
  double lse = 0.0;
  for (double v : z.data()) lse += std::exp(v - m);
  const double loss = m + std::log(lse) - z[label];
  const bool ng = nodes_[logits.id].needs_grad;
  Var o = push(Tensor::scalar(loss), ng);
  if (ng) {
    nodes_[o.id].backprop = [this, logits, o, label, p] {
      const double g = nodes_[o.id].grad[0];
      Tensor& gz = grad_of(logits.id);
      for (std::size_t k = 0; k < p.size(); ++k) gz[k] += g * (p[k] - (k == label ? 1.0 : 0.0));
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw std::invalid_argument("backward: unknown node");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_string(nodes_[loss.id].value.shape()));
  }
  grad_of(loss.id).fill(1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backprop && !n.grad.empty()) n.backprop();
  }
}

std::vector<bool> Tape::relu_pattern() const {
  std::vector<bool> pattern;
  for (std::size_t id : relu_inputs_) {
    for (double v : nodes_[id].value.data()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

GradientSet reverse_gradient(Tape& tape, Var loss, const ParamSet& params) {
  tape.backward(loss);
  GradientSet grads = params.zeros_like();
  for (const auto& n : tape.nodes_) {
    if (n.param_index < 0 || n.grad.empty()) continue;
    axpy(1.0, n.grad, grads[static_cast<std::size_t>(n.param_index)]);
  }
  return grads;
}

}  // namespace deeplight::nn
