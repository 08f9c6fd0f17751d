#pragma once

// Block design of the working-memory experiment: per run, eight 25 s task
// blocks (two per state) and four 15 s fixation blocks, 260 s in total.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace deeplight {

inline constexpr double kTaskBlockS = 25.0;
inline constexpr double kFixationBlockS = 15.0;
inline constexpr double kRunS = 260.0;
inline constexpr double kTrialS = 2.5;
inline constexpr std::size_t kTaskBlocksPerRun = 8;
inline constexpr std::size_t kFixationBlocksPerRun = 4;

struct Block {
  int state = -1;  // -1 for fixation
  double onset_s = 0.0;
  double duration_s = 0.0;

  bool is_task() const noexcept { return state >= 0; }
};

/// One run's schedule together with its per-TR annotations.
struct RunDesign {
  double tr_s = 0.72;
  double duration_s = kRunS;
  std::vector<Block> blocks;

  // One entry per TR. `labels` holds the state for the first
  // labeled_per_block() TRs of each task block and -1 elsewhere;
  // `block_offset` is the TR index within the enclosing task block (-1 in
  // fixation); `block_index` numbers task blocks 0..7 in run order.
  std::vector<int> labels;
  std::vector<int> block_offset;
  std::vector<int> block_index;

  std::size_t timepoints() const noexcept { return labels.size(); }
  /// 1 for every TR inside a block of `state`, else 0.
  std::vector<double> boxcar(int state) const;
  /// TRs labeled per task block: floor(25 s / TR), equal for every block.
  std::size_t labeled_per_block() const;
};

struct BlockDesign {
  std::vector<RunDesign> runs;
};

/// floor(duration / tr) with a small tolerance against rounding.
std::size_t count_trs(double duration_s, double tr_s);

/// Builds the annotations of a run from its block list.
RunDesign annotate_run(std::vector<Block> blocks, double tr_s, double duration_s = kRunS);

/// Task-task-fixation pattern repeated four times; the state order of the
/// eight task blocks is shuffled per run from `seed`.
BlockDesign make_block_design(std::uint64_t seed, double tr_s = 0.72, std::size_t runs = 2);

}  // namespace deeplight
