#include "deeplight/design.hpp"

#include <algorithm>
#include <cmath>

#include "deeplight/error.hpp"
#include "deeplight/model.hpp"
#include "deeplight/rng.hpp"

namespace deeplight {

std::size_t count_trs(double duration_s, double tr_s) {
  if (!(tr_s > 0.0)) throw ConfigError("TR must be positive");
  return static_cast<std::size_t>(std::floor(duration_s / tr_s + 1e-9));
}

std::vector<double> RunDesign::boxcar(int state) const {
  std::vector<double> out(timepoints(), 0.0);
  for (std::size_t t = 0; t < out.size(); ++t) {
    const double time = static_cast<double>(t) * tr_s;
    for (const auto& b : blocks) {
      if (b.state == state && time >= b.onset_s - 1e-9 && time < b.onset_s + b.duration_s - 1e-9) out[t] = 1.0;
    }
  }
  return out;
}

std::size_t RunDesign::labeled_per_block() const { return count_trs(kTaskBlockS, tr_s); }

RunDesign annotate_run(std::vector<Block> blocks, double tr_s, double duration_s) {
  RunDesign r;
  r.tr_s = tr_s;
  r.duration_s = duration_s;
  r.blocks = std::move(blocks);
  const std::size_t n = count_trs(duration_s, tr_s);
  r.labels.assign(n, -1);
  r.block_offset.assign(n, -1);
  r.block_index.assign(n, -1);
  const std::size_t keep = count_trs(kTaskBlockS, tr_s);
  int task_ordinal = 0;
  for (const auto& b : r.blocks) {
    if (!b.is_task()) continue;
    const auto first = static_cast<std::size_t>(std::ceil(b.onset_s / tr_s - 1e-9));
    for (std::size_t t = first; t < n; ++t) {
      const double time = static_cast<double>(t) * tr_s;
      if (time >= b.onset_s + b.duration_s - 1e-9) break;
      const std::size_t off = t - first;
      r.block_offset[t] = static_cast<int>(off);
      r.block_index[t] = task_ordinal;
      if (off < keep) r.labels[t] = b.state;
    }
    ++task_ordinal;
  }
  return r;
}

BlockDesign make_block_design(std::uint64_t seed, double tr_s, std::size_t runs) {
  if (!(tr_s > 0.0) || tr_s * 2 > kFixationBlockS) throw ConfigError("TR must be positive and shorter than a block");
  BlockDesign d;
  for (std::size_t run = 0; run < runs; ++run) {
    std::vector<int> states;
    for (std::size_t s = 0; s < model::kNumStates; ++s) states.insert(states.end(), 2, static_cast<int>(s));
    Rng rng(derive_seed(seed, seed_tag::design, run));
    std::shuffle(states.begin(), states.end(), rng);
    std::vector<Block> blocks;
    double t = 0.0;
    std::size_t next = 0;
    for (std::size_t group = 0; group < kFixationBlocksPerRun; ++group) {
      for (int k = 0; k < 2; ++k) {
        blocks.push_back({states[next++], t, kTaskBlockS});
        t += kTaskBlockS;
      }
      blocks.push_back({-1, t, kFixationBlockS});
      t += kFixationBlockS;
    }
    d.runs.push_back(annotate_run(std::move(blocks), tr_s, t));
  }
  return d;
}

}  // namespace deeplight
