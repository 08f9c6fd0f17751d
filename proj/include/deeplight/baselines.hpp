#pragma once

// Conventional analyses: the voxelwise GLM, whole-brain L1 logistic
// regression and the searchlight with linear SVMs.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deeplight/design.hpp"
#include "deeplight/volume.hpp"

namespace deeplight::baselines {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Samples in rows (float storage), one label per row.
struct SampleMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<float> data;
  std::vector<int> labels;

  const float* row(std::size_t r) const { return data.data() + r * cols; }
  void append(const float* values, int label);
};

// ---------------------------------------------------------------- GLM

/// Unnormalized double-gamma response at time t (s): peak shape 6,
/// undershoot shape 16, undershoot ratio 1/6.
double hrf_value(double t_s);
/// HRF sampled every TR on [0, 32] s, scaled so the largest sample is 1.
std::vector<double> hrf_samples(double tr_s);
/// Causal convolution with hrf_samples, truncated to the input length.
std::vector<double> hrf_convolve(const std::vector<double>& boxcar, double tr_s);

struct DesignMatrix {
  Matrix x;
  std::vector<std::string> names;
  std::vector<std::size_t> confounds;
};

/// Runs stacked in time: four HRF-convolved state predictors, intercept, one
/// centered linear drift per run and an indicator for every run after the
/// first.
DesignMatrix make_design(const BlockDesign& design);

struct GlmResult {
  Matrix beta;               // P x N
  std::vector<double> residual_variance;  // per voxel, T - P dof
  Matrix xtx_inverse;        // P x P
  std::size_t dof = 0;
};

/// Ordinary least squares. Throws ConfigError naming collinear columns.
GlmResult glm_fit(const Matrix& y, const DesignMatrix& x);

struct ContrastMap {
  std::vector<double> effect;  // c'beta
  std::vector<double> z;       // c'beta / SE
  std::vector<double> p;       // one-sided, Student t with the fit's dof
};

ContrastMap glm_contrast(const GlmResult& fit, const std::vector<double>& contrast);
/// State s against the mean of the other states; confounds weighted 0.
std::vector<double> state_contrast(std::size_t state, const DesignMatrix& x);

struct SecondLevel {
  std::vector<double> t;
  std::vector<double> p;  // one-sided
  std::size_t dof = 0;
};

/// One-sample t-test across subjects per voxel. Needs at least 2 subjects.
SecondLevel second_level(const std::vector<std::vector<double>>& subject_effects);

// ---------------------------------------------------------------- lasso

struct LassoModel {
  std::vector<std::vector<double>> coef;  // one vector per class
  std::vector<double> intercept;
  double lambda = 0.0;

  std::vector<double> scores(const float* x) const;
  int predict(const float* x) const;
  std::size_t nonzeros() const;
};

struct LassoOptions {
  std::size_t max_iter = 3000;
  double tolerance = 1e-9;
};

/// Binary objective sum_t NLL_t + lambda*|beta|_1 (intercept unpenalized).
double lasso_objective(const SampleMatrix& x, const std::vector<double>& y01, const std::vector<double>& beta,
                       double intercept, double lambda);

/// One-vs-rest full-batch fit by accelerated proximal gradient.
LassoModel lasso_fit(const SampleMatrix& x, double lambda, const LassoOptions& opt = {},
                     const LassoModel* warm_start = nullptr);

/// Fits along a grid of lambdas (largest first, warm-started).
std::vector<LassoModel> lasso_path(const SampleMatrix& x, const std::vector<double>& lambdas,
                                   const LassoOptions& opt = {});

/// Smallest lambda for which all coefficients of every class are zero.
double lasso_lambda_max(const SampleMatrix& x);

struct LassoSgdOptions {
  std::size_t epochs = 25;
  std::size_t subjects_per_epoch = 5;
  std::size_t batches_per_epoch = 50;
  std::size_t batch_size = 50;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;
};

/// Group-level proximal SGD on the mean batch loss plus lambda*|beta|_1.
LassoModel lasso_fit_sgd(const std::vector<SampleMatrix>& subjects, double lambda, const LassoSgdOptions& opt);

/// 100 log-spaced C values in [1e-6, 100] (lambda = 1/C).
std::vector<double> subject_c_grid();
/// The group-level lambda grid.
std::vector<double> group_lambda_grid();

double accuracy(const LassoModel& model, const SampleMatrix& x);

// ---------------------------------------------------------------- SVM / searchlight

struct SvmModel {
  std::vector<double> w;
  double b = 0.0;

  double decision(const double* x) const;
};

struct SvmOptions {
  double c = 1.0;
  std::size_t epochs = 20;
  std::uint64_t seed = 1;
};

/// Pegasos on the hinge loss with lambda = 1/(C n); labels are +1/-1.
SvmModel svm_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const SvmOptions& opt = {});

struct OvrSvm {
  std::vector<SvmModel> classes;
  int predict(const double* x) const;
};

OvrSvm svm_train_ovr(const std::vector<std::vector<double>>& x, const std::vector<int>& labels, std::size_t classes,
                     const SvmOptions& opt = {});

using Offset = std::array<int, 3>;

/// Integer offsets d with |d * voxel_mm| <= radius_mm.
std::vector<Offset> sphere_offsets(double radius_mm, double voxel_mm);

struct SearchlightConfig {
  double radius_mm = 5.6;
  SvmOptions svm;
};

struct SearchlightMap {
  Volume3D accuracy;          // 0 outside the mask
  std::vector<Volume3D> state_accuracy;  // binary accuracy of each one-vs-rest classifier
  std::vector<char> centers;  // mask over the grid
  double radius_mm = 0.0;
};

/// Trains one-vs-rest SVMs on `train` and scores `test` at every masked
/// center. Columns of the sample matrices are grid voxels.
SearchlightMap searchlight(const SampleMatrix& train, const SampleMatrix& test, const GridShape& grid,
                           const std::vector<char>& mask, double voxel_mm, const SearchlightConfig& config);

}  // namespace deeplight::baselines
