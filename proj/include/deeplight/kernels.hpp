#pragma once

// Stateless dense kernels shared by the autodiff tape and relevance propagation.

#include <cstddef>

#include "deeplight/tensor.hpp"

namespace deeplight::nn {

enum class Activation { relu, logistic, tanh, softmax };

/// Output extent of a "same"-padded convolution: ceil(n / stride).
constexpr std::size_t same_extent(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }

/// Zero padding placed before the first row/column (TensorFlow "SAME" convention).
std::size_t same_pad_before(std::size_t n, std::size_t kernel, std::size_t stride);

/// Batched 2D convolution.
/// input [N,H,W,Cin] (or [H,W,Cin]), kernels [k,k,Cin,Cout], bias [Cout].
/// Returns [N,ceil(H/s),ceil(W/s),Cout] (rank follows the input).
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride);

/// Gradient of conv2d w.r.t. its input for upstream gradient `grad_out`.
/// This is also the transposed convolution used by relevance propagation.
Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels, const Shape& input_shape,
                             std::size_t stride);

/// Accumulates kernel and bias gradients.
void conv2d_backward_params(const Tensor& grad_out, const Tensor& input, std::size_t stride, Tensor& grad_kernels,
                            Tensor& grad_bias);

/// y = W x + b with W [out,in], x [in], b [out].
Tensor linear(const Tensor& weights, const Tensor& x, const Tensor& bias);

/// Wᵀ g for W [out,in], g [out].
Tensor linear_transpose(const Tensor& weights, const Tensor& g);

double logistic(double z);

/// Elementwise activation; softmax normalizes over the last axis.
Tensor activate(Activation kind, const Tensor& z);

/// Numerically stable softmax of a flat vector.
Tensor softmax(const Tensor& logits);

}  // namespace deeplight::nn
