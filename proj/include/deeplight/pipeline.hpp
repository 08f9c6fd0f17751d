#pragma once

// Study-level glue shared by the command line tool, the acceptance suite and
// the Python bindings.

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deeplight/baselines.hpp"
#include "deeplight/design.hpp"
#include "deeplight/lrp.hpp"
#include "deeplight/phantom.hpp"
#include "deeplight/preprocess.hpp"
#include "deeplight/training.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::pipeline {

struct SubjectData {
  std::size_t id = 0;
  bool test = false;
  BlockDesign design;
  std::vector<std::shared_ptr<const Volume4D>> runs;
};

/// A set of subjects on one grid plus optional target masks and brain mask.
struct Study {
  GridShape grid;
  double voxel_mm = 2.0;
  double tr_s = 0.72;
  std::vector<SubjectData> subjects;
  std::vector<std::vector<char>> targets;  // per state, over `grid`
  std::vector<char> mask;                  // over `grid`; empty means all voxels
  std::optional<BoundingBox> box;          // crop applied to reach `grid`

  std::vector<std::size_t> subject_ids(bool test) const;
  const SubjectData& subject(std::size_t id) const;
};

Study from_phantom(const phantom::PhantomSpec& spec, std::vector<phantom::PhantomSubject> subjects);

/// Mask on the raw data (jointly over all runs), then smoothing,
/// detrend/standardize and highpass per run, then cropping to the mask box.
Study preprocess_study(const Study& raw, const preprocess::PreprocConfig& config);

/// Labeled TRs of the given subjects.
train::Dataset make_dataset(const Study& study, const std::vector<std::size_t>& subject_ids);

/// Per sample: true when it belongs to the first block of its state in the
/// subject's run `run` (0-based). These samples feed the time-resolved maps.
std::vector<char> timecourse_blocks(const Study& study, const train::Dataset& data, std::size_t run = 1);

/// Labeled TRs of one run as a sample matrix (columns are grid voxels).
baselines::SampleMatrix run_samples(const Volume4D& run, const RunDesign& design);

struct Attribution {
  std::size_t sample = 0;  // index into the dataset
  lrp::RelevanceVolume relevance;
};

/// Decomposes the given samples (in order); misclassified ones come back
/// with status not_decomposed.
std::vector<Attribution> attribute(const model::DeepLightParams& params, const train::Dataset& data,
                                   const std::vector<std::size_t>& indices, const lrp::LrpConfig& config);

/// Per-state group maps: subject means of smoothed relevance (decomposed
/// samples only), averaged over subjects. Empty volume for a state without
/// samples.
std::vector<Volume3D> deeplight_group_maps(const train::Dataset& data, const std::vector<Attribution>& attributions,
                                           double fwhm_mm = 3.0);

/// All TRs of a subject's runs stacked in time: [T, voxels].
baselines::Matrix subject_series(const SubjectData& subject);

struct GlmGroup {
  std::vector<std::vector<std::vector<double>>> effects;  // [state][subject] contrast effect per voxel
  std::vector<std::vector<std::vector<double>>> z;        // [state][subject]
  std::vector<baselines::Matrix> betas;                   // per subject, P x voxels
  std::vector<baselines::SecondLevel> group;              // per state
};

/// First-level GLM for each subject and a second-level t-test per state.
GlmGroup glm_group(const Study& study, const std::vector<std::size_t>& subject_ids);

/// One row per subject and state: the state's first-level beta map.
baselines::SampleMatrix beta_samples(const GlmGroup& glm);

/// Labeled TRs of one subject, runs concatenated.
baselines::SampleMatrix subject_samples(const Study& study, std::size_t subject_id);

struct Fit {
  train::TrainResult result;
  std::size_t attempt = 0;      // 0 for the first initialization
  std::uint64_t init_seed = 0;
};

/// Trains from a fresh initialization per attempt. When the best validation
/// accuracy stays within 0.1 of chance the run is discarded and the next
/// attempt starts, up to `restarts` times.
Fit fit_decoder(const train::Dataset& data, const train::Dataset& validation, const model::ArchSpec& arch,
                std::uint64_t seed, const train::TrainConfig& config, std::size_t restarts);

struct LassoSearch {
  std::vector<double> lambdas;
  std::vector<double> accuracies;  // on the selection data
  std::size_t best = 0;
  baselines::LassoModel model;     // refit at the selected lambda
};

/// Grid search over `lambdas` with `options.epochs` each, scored on
/// `selection`, then a refit with `final_epochs`.
LassoSearch lasso_group(const std::vector<baselines::SampleMatrix>& subjects, const baselines::SampleMatrix& selection,
                        const std::vector<double>& lambdas, const baselines::LassoSgdOptions& options,
                        std::size_t final_epochs);

struct MapScore {
  int state = -1;
  double threshold = 0.0;
  std::size_t count = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool empty = false;
};

/// Thresholds each state's map at the q-th percentile of its positive
/// in-mask values and scores it against the state's target mask.
std::vector<MapScore> score_maps(const Study& study, const std::vector<Volume3D>& maps, double q);
/// Same for precomputed keep masks.
std::vector<MapScore> score_masks(const Study& study, const std::vector<std::vector<char>>& keep);

/// On-disk study: dataset.json plus one VOL1 per run and one per target.
void save_study(const std::filesystem::path& dir, const Study& study);
Study load_study(const std::filesystem::path& dir);

std::string design_json(const BlockDesign& design);
BlockDesign design_from_json(const std::string& text);

}  // namespace deeplight::pipeline
