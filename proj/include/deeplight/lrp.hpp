#pragma once

// Layer-wise relevance propagation for the DeepLight decoder: the epsilon
// rule for weighted connections, the gate/source rule for LSTM products and
// the identity rule for elementwise activations.

#include <cstddef>
#include <vector>

#include "deeplight/model.hpp"
#include "deeplight/training.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::lrp {

struct LrpConfig {
  double epsilon = 1e-3;
};

/// sign(0) is +1.
inline double stabilized(double z, double eps) { return z + (z >= 0.0 ? eps : -eps); }

/// R_{i<-j} = z_ij / (z_j + eps*sign(z_j)) * R_j for every i.
std::vector<double> lrp_linear_message(const std::vector<double>& z_ij, double z_j, double r_j, double eps);

struct GateSplit {
  double gate = 0.0;
  double source = 0.0;
};

/// Product gate*source: all relevance goes to the source.
inline GateSplit lrp_multiplicative(double r_j, double /*gate_value*/ = 0.0, double /*source_value*/ = 0.0) {
  return {0.0, r_j};
}

/// Epsilon rule through y = W a + b (W is [out, in]); returns relevance of a.
nn::Tensor lrp_dense(const nn::Tensor& weights, const nn::Tensor& a, const nn::Tensor& bias, const nn::Tensor& r_out,
                     double eps);

/// Epsilon rule through a same-padded convolution; returns relevance of the
/// convolution input.
nn::Tensor lrp_conv(const nn::Tensor& input, const nn::Tensor& kernels, const nn::Tensor& preactivation,
                    const nn::Tensor& r_out, std::size_t stride, double eps);

enum class Status { decomposed, not_decomposed };

struct RelevanceVolume {
  Status status = Status::not_decomposed;
  Volume3D relevance;
  std::size_t target = 0;
  std::size_t predicted = 0;
  double fa = 0.0;                    // pre-softmax score of the target state
  bool correct = false;
  bool nonpositive_evidence = false;  // correct but fa <= 0
  double gate_relevance = 0.0;        // total |R| routed into LSTM gates
  double feature_relevance = 0.0;     // total R reaching the LSTM inputs
  std::vector<double> slice_relevance;  // sum of R_d per axial slice
};

/// Propagates the target logit down to the input voxels regardless of the
/// decoder's decision.
RelevanceVolume relevance_for(const model::DeepLightParams& params, const model::SliceSequence& seq,
                              std::size_t target, const LrpConfig& config = {}, double voxel_mm = 2.0);

/// Decomposes a correctly decoded sample; misclassified samples come back
/// with status not_decomposed and no relevance volume.
RelevanceVolume lrp_decompose(const model::DeepLightParams& params, const model::SliceSequence& seq,
                              std::size_t true_state, const LrpConfig& config = {}, double voxel_mm = 2.0);

/// True when offset*TR lies in [lo_s, hi_s].
bool in_window(int block_offset, double tr_s, double lo_s = 5.0, double hi_s = 15.0);

/// Indices of labeled samples whose onset-relative time lies in the window.
std::vector<std::size_t> select_window(const train::Dataset& data, double lo_s = 5.0, double hi_s = 15.0);

}  // namespace deeplight::lrp
