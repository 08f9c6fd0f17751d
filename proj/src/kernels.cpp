#include "deeplight/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "deeplight/error.hpp"

namespace deeplight::nn {

namespace {

struct ConvGeometry {
  std::size_t n, h, w, cin, k, cout, stride, oh, ow, pad_h, pad_w;
  bool batched;
};

ConvGeometry conv_geometry(const Shape& in, const Shape& kernel_shape, std::size_t stride) {
  if (in.size() != 3 && in.size() != 4) {
    throw ConfigError("conv2d expects input [N,H,W,C] or [H,W,C], got " + shape_string(in));
  }
  if (kernel_shape.size() != 4 || kernel_shape[0] != kernel_shape[1]) {
    throw ConfigError("conv2d kernels must be [k,k,Cin,Cout], got " + shape_string(kernel_shape));
  }
  if (kernel_shape[0] % 2 == 0) throw ConfigError("conv2d kernel size must be odd");
  if (stride != 1 && stride != 2) throw ConfigError("conv2d stride must be 1 or 2");
  ConvGeometry g{};
  g.batched = in.size() == 4;
  const std::size_t off = g.batched ? 1 : 0;
  g.n = g.batched ? in[0] : 1;
  g.h = in[off];
  g.w = in[off + 1];
  g.cin = in[off + 2];
  g.k = kernel_shape[0];
  g.cout = kernel_shape[3];
  if (kernel_shape[2] != g.cin) {
    throw ConfigError("conv2d channel mismatch: input has " + std::to_string(g.cin) + " channels, kernels expect " +
                      std::to_string(kernel_shape[2]));
  }
  g.stride = stride;
  g.oh = same_extent(g.h, stride);
  g.ow = same_extent(g.w, stride);
  g.pad_h = same_pad_before(g.h, g.k, stride);
  g.pad_w = same_pad_before(g.w, g.k, stride);
  return g;
}

Shape output_shape(const ConvGeometry& g) {
  if (g.batched) return {g.n, g.oh, g.ow, g.cout};
  return {g.oh, g.ow, g.cout};
}

}  // namespace

std::size_t same_pad_before(std::size_t n, std::size_t kernel, std::size_t stride) {
  const std::size_t out = same_extent(n, stride);
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > n ? needed - n : 0;
  return total / 2;
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Patch matrix [N*OH*OW, k*k*Cin]; column order matches the kernel layout
// [k,k,Cin,Cout] flattened to [k*k*Cin, Cout].
RowMatrix im2col(const ConvGeometry& g, const double* in) {
  const std::size_t patch = g.k * g.k * g.cin;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.n * g.oh * g.ow), static_cast<Eigen::Index>(patch));
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        double* row = cols.data() + ((n * g.oh + oy) * g.ow + ox) * patch;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            const double* ip = in + ((n * g.h + iy) * g.w + ix) * g.cin;
            std::copy(ip, ip + g.cin, row + (ky * g.k + kx) * g.cin);
          }
        }
      }
    }
  }
  return cols;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  const auto g = conv_geometry(input.shape(), kernels.shape(), stride);
  if (bias.size() != g.cout) throw ConfigError("conv2d bias length must equal Cout");
  Tensor out(output_shape(g));
  const auto rows = static_cast<Eigen::Index>(g.n * g.oh * g.ow);
  const auto patch = static_cast<Eigen::Index>(g.k * g.k * g.cin);
  const auto cout = static_cast<Eigen::Index>(g.cout);
  const RowMatrix cols = im2col(g, input.raw());
  MutMap o(out.raw(), rows, cout);
  o.noalias() = cols * ConstMap(kernels.raw(), patch, cout);
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.raw(), cout);
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels, const Shape& input_shape,
                             std::size_t stride) {
  const auto g = conv_geometry(input_shape, kernels.shape(), stride);
  if (grad_out.shape() != output_shape(g)) {
    throw ConfigError("conv2d upstream gradient shape " + shape_string(grad_out.shape()) + " does not match output " +
                      shape_string(output_shape(g)));
  }
  const auto rows = static_cast<Eigen::Index>(g.n * g.oh * g.ow);
  const auto patch = static_cast<Eigen::Index>(g.k * g.k * g.cin);
  const auto cout = static_cast<Eigen::Index>(g.cout);
  RowMatrix gcols(rows, patch);
  gcols.noalias() = ConstMap(grad_out.raw(), rows, cout) * ConstMap(kernels.raw(), patch, cout).transpose();

  Tensor gin(input_shape);
  double* gi = gin.raw();
  const std::size_t psize = static_cast<std::size_t>(patch);
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const double* row = gcols.data() + ((n * g.oh + oy) * g.ow + ox) * psize;
        for (std::size_t ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t kx = 0; kx < g.k; ++kx) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_w);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            double* ip = gi + ((n * g.h + iy) * g.w + ix) * g.cin;
            const double* src = row + (ky * g.k + kx) * g.cin;
            for (std::size_t ci = 0; ci < g.cin; ++ci) ip[ci] += src[ci];
          }
        }
      }
    }
  }
  return gin;
}

void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, std::size_t stride, Tensor& grad_kernels,
                            Tensor& grad_bias) {
  const auto g = conv_geometry(input.shape(), grad_kernels.shape(), stride);
  const auto rows = static_cast<Eigen::Index>(g.n * g.oh * g.ow);
  const auto patch = static_cast<Eigen::Index>(g.k * g.k * g.cin);
  const auto cout = static_cast<Eigen::Index>(g.cout);
  const RowMatrix cols = im2col(g, input.raw());
  const ConstMap go(grad_out.raw(), rows, cout);
  MutMap(grad_kernels.raw(), patch, cout).noalias() += cols.transpose() * go;
  Eigen::Map<Eigen::RowVectorXd>(grad_bias.raw(), cout) += go.colwise().sum();
}

Tensor linear(const Tensor& weights, const Tensor& x, const Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(1) != x.size() || weights.dim(0) != bias.size()) {
    throw ConfigError("linear: weights " + shape_string(weights.shape()) + " incompatible with input of length " +
                      std::to_string(x.size()) + " and bias of length " + std::to_string(bias.size()));
  }
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  Tensor y({rows});
  const double* w = weights.raw();
  const double* xs = x.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double s = bias[r];
    for (std::size_t c = 0; c < cols; ++c) s += wr[c] * xs[c];
    y[r] = s;
  }
  return y;
}

Tensor linear_transpose(const Tensor& weights, const Tensor& g) {
  const std::size_t rows = weights.dim(0), cols = weights.dim(1);
  if (g.size() != rows) throw ConfigError("linear_transpose: gradient length mismatch");
  Tensor out({cols});
  double* o = out.raw();
  const double* w = weights.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    const double gv = g[r];
    if (gv == 0.0) continue;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] += gv * wr[c];
  }
  return out;
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double m = *std::max_element(p.data().begin(), p.data().end());
  double s = 0.0;
  for (double& v : p.data()) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : p.data()) v /= s;
  return p;
}

Tensor activate(Activation kind, const Tensor& z) {
  Tensor out = z;
  switch (kind) {
    case Activation::relu:
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::logistic:
      for (double& v : out.data()) v = logistic(v);
      break;
    case Activation::tanh:
      for (double& v : out.data()) v = std::tanh(v);
      break;
    case Activation::softmax: {
      const std::size_t last = z.shape().back();
      const std::size_t rows = z.size() / last;
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.raw() + r * last;
        const double m = *std::max_element(row, row + last);
        double s = 0.0;
        for (std::size_t c = 0; c < last; ++c) {
          row[c] = std::exp(row[c] - m);
          s += row[c];
        }
        for (std::size_t c = 0; c < last; ++c) row[c] /= s;
      }
      break;
    }
  }
  return out;
}

}  // namespace deeplight::nn
