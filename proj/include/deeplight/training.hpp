#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "deeplight/model.hpp"
#include "deeplight/rng.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::train {

/// One labeled TR of a run.
struct Sample {
  std::size_t run = 0;  // index into Dataset::runs
  std::size_t tr = 0;
  int label = -1;
  std::size_t subject = 0;
  int block_offset = -1;
  int block_index = -1;
};

/// Labeled TRs referencing shared run data.
struct Dataset {
  std::vector<std::shared_ptr<const Volume4D>> runs;
  std::vector<Sample> samples;
  double tr_s = 0.72;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  Volume3D volume(std::size_t i) const;
  model::SliceSequence sequence(std::size_t i) const;
  /// Samples restricted to the given indices (run data is shared).
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 60;
  double clip_threshold = 5.0;
  /// Dropout probability per layer index 1..L+2; missing entries use 0.5.
  std::vector<double> dropout{0.3, 0.3, 0.4, 0.4, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  std::size_t patience = 5;
  std::uint64_t seed = 1;

  double dropout_rate(std::size_t layer) const;
  void validate() const;
};

/// Inverted-dropout mask: entries are 0 with probability p and 1/(1-p)
/// otherwise. p = 0 gives all ones. Throws ConfigError unless 0 <= p < 1.
nn::Tensor dropout_mask(double p, const nn::Shape& shape, Rng& rng);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t stopping_epoch = 0;
  std::size_t best_epoch = 0;

  bool operator==(const TrainReport&) const = default;
};

void write_report_csv(std::ostream& out, const TrainReport& report);

struct TrainResult {
  model::DeepLightParams params;
  TrainReport report;
};

/// Mini-batch Adam on the softmax cross-entropy with global norm clipping.
/// When `validation` is non-empty, training stops once validation accuracy
/// has not improved for `patience` epochs and the best weights are returned.
TrainResult train(const Dataset& data, const Dataset& validation, const model::DeepLightParams& init,
                  const TrainConfig& config);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  std::array<std::array<std::size_t, model::kNumStates>, model::kNumStates> confusion{};  // [true][predicted]
  std::vector<int> predicted;
  std::vector<double> target_logit;
};

Evaluation evaluate(const model::DeepLightParams& params, const Dataset& data);

struct OffsetAccuracy {
  int offset = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/// Accuracy per within-block TR index, pooled over blocks and subjects.
std::vector<OffsetAccuracy> accuracy_by_block_time(const Evaluation& eval, const Dataset& data);
std::vector<OffsetAccuracy> accuracy_by_block_time(const model::DeepLightParams& params, const Dataset& data);

}  // namespace deeplight::train
