#pragma once

// DeepLight decoder: a volume is cut into axial slices, each slice passes a
// shared convolutional feature extractor, the resulting sequence is read by a
// bi-directional LSTM, and the two final LSTM outputs feed a softmax layer.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "deeplight/autodiff.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::model {

inline constexpr std::size_t kNumStates = 4;
inline constexpr std::array<const char*, kNumStates> kStateNames{"body", "face", "place", "tool"};

struct ConvLayerSpec {
  std::size_t channels = 16;
  std::size_t stride = 1;
};

/// Architecture of the decoder for a given slice size.
struct ArchSpec {
  std::size_t slice_x = 0;
  std::size_t slice_y = 0;
  std::size_t kernel = 3;
  std::vector<ConvLayerSpec> conv;
  std::size_t lstm_units = 40;
  std::size_t classes = kNumStates;

  /// Eight conv3 layers (16,16,16,16,32,32,32,32), odd layers stride 2, two
  /// 40-unit LSTMs, four outputs.
  static ArchSpec deeplight(std::size_t slice_x, std::size_t slice_y);

  /// Extents [h, w, c] of one slice after the conv stack.
  nn::Shape feature_map_shape() const;
  std::size_t feature_dim() const;
  void validate() const;
};

enum class Direction { forward, backward };

std::string param_prefix(Direction d);

/// Learned weights together with the architecture they belong to.
struct DeepLightParams {
  ArchSpec arch;
  nn::ParamSet params;
};

/// Glorot-normal weights (std = sqrt(2/(fan_in+fan_out))), zero biases.
DeepLightParams init_params(const ArchSpec& arch, std::uint64_t seed);

/// Standard deviation used by init_params for a weight of the given fans.
double glorot_stddev(std::size_t fan_in, std::size_t fan_out);

/// Axial slices of a volume, stored as one [Z, X, Y, 1] tensor; slice k is the
/// plane at z = k.
struct SliceSequence {
  nn::Tensor slices;

  std::size_t length() const { return slices.dim(0); }
  nn::Tensor slice(std::size_t k) const;
};

SliceSequence slice_volume(const Volume3D& volume);
/// Inverse of slice_volume.
Volume3D restack(const SliceSequence& seq, double voxel_mm);

/// Supplies inverted-dropout masks during training. Layer indices are 1-based:
/// conv layers 1..L, L+1 = LSTM inputs, L+2 = LSTM outputs. Returning nullopt
/// leaves the layer untouched.
using MaskSource = std::function<std::optional<nn::Tensor>(std::size_t layer, const nn::Shape& shape)>;

/// Handles to the intermediate values of one forward pass.
struct ForwardTrace {
  struct ConvLayer {
    nn::Var input;           // input to the convolution (after dropout of the previous layer)
    nn::Var preactivation;   // conv output before ReLU
    nn::Var output;          // after ReLU (and dropout when training)
  };
  struct LstmStep {
    std::size_t slice = 0;
    nn::Var joint;      // [h_{s-1}, a_s]
    nn::Var cell_prev;  // C_{s-1}
    nn::Var forget, input, candidate_pre, candidate, output_gate;
    nn::Var cell;       // C_s
    nn::Var hidden;     // h_s
  };

  std::vector<ConvLayer> conv;
  nn::Var features;  // [Z, D] as consumed by the LSTMs
  std::vector<LstmStep> forward_steps;
  std::vector<LstmStep> backward_steps;
  nn::Var joint_output;  // [h_fwd_last, h_bwd_last]
  nn::Var logits;
};

/// Records the full decoder on `tape`. `masks` is only consulted in training.
ForwardTrace forward(nn::Tape& tape, const DeepLightParams& params, const SliceSequence& seq,
                     const MaskSource* masks = nullptr);

/// Flattened conv features of a single [X, Y] slice.
nn::Tensor feature_extract(const nn::Tensor& slice, const DeepLightParams& params);

struct LstmState {
  nn::Tensor cell;
  nn::Tensor hidden;
};

struct LstmStepResult {
  nn::Tensor forget, input, candidate, output_gate;
  LstmState state;
};

LstmState zero_state(std::size_t units);

/// One LSTM update of the unit in direction `d`.
LstmStepResult lstm_step(const nn::Tensor& input, const LstmState& prev, const nn::ParamSet& params, Direction d);

struct Decoding {
  nn::Tensor logits;
  nn::Tensor posterior;
  std::size_t predicted = 0;
};

/// Inference (no dropout). Deterministic.
Decoding bilstm_decode(const SliceSequence& seq, const DeepLightParams& params);
Decoding decode(const Volume3D& volume, const DeepLightParams& params);

/// Pre-softmax joint LSTM output for inspection and tests.
nn::Tensor joint_output(const SliceSequence& seq, const DeepLightParams& params);

}  // namespace deeplight::model
