#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "deeplight/baselines.hpp"
#include "deeplight/error.hpp"
#include "deeplight/rng.hpp"

namespace deeplight::baselines {

double SvmModel::decision(const double* x) const {
  double s = b;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * x[i];
  return s;
}

SvmModel svm_train(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const SvmOptions& opt) {
  const std::size_t n = x.size();
  if (n == 0 || y.size() != n) throw InputError("SVM needs one label per sample");
  bool pos = false, neg = false;
  for (int v : y) {
    if (v != 1 && v != -1) throw InputError("SVM labels must be +1 or -1");
    (v > 0 ? pos : neg) = true;
  }
  if (!pos || !neg) throw InputError("SVM training needs both classes");
  if (!(opt.c > 0.0) || opt.epochs == 0) throw ConfigError("SVM needs C > 0 and at least one epoch");
  const std::size_t d = x.front().size();
  const double lambda = 1.0 / (opt.c * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  // The last coordinate is the bias, learned as the weight of a constant feature.
  std::vector<double> w(d + 1, 0.0), avg(d + 1, 0.0);
  std::size_t averaged = 0;
  const std::size_t total = opt.epochs * n;
  std::vector<std::size_t> order(n);
  Rng rng(derive_seed(opt.seed, seed_tag::svm));
  std::size_t t = 0;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const auto& xi = x[i];
      if (xi.size() != d) throw InputError("SVM samples differ in dimension");
      double margin = w[d];
      for (std::size_t k = 0; k < d; ++k) margin += w[k] * xi[k];
      margin *= y[i];
      const double shrink = 1.0 - eta * lambda;
      for (double& v : w) v *= shrink;
      if (margin < 1.0) {
        const double s = eta * y[i];
        for (std::size_t k = 0; k < d; ++k) w[k] += s * xi[k];
        w[d] += s;
      }
      double norm = 0.0;
      for (double v : w) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > radius) {
        for (double& v : w) v *= radius / norm;
      }
      if (2 * t > total) {
        for (std::size_t k = 0; k <= d; ++k) avg[k] += w[k];
        ++averaged;
      }
    }
  }
  SvmModel m;
  m.w.assign(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) m.w[k] = avg[k] / static_cast<double>(averaged);
  m.b = avg[d] / static_cast<double>(averaged);
  return m;
}

int OvrSvm::predict(const double* x) const {
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const double s = classes[k].decision(x);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(k);
    }
  }
  return best;
}

OvrSvm svm_train_ovr(const std::vector<std::vector<double>>& x, const std::vector<int>& labels, std::size_t classes,
                     const SvmOptions& opt) {
  OvrSvm m;
  std::vector<int> y(labels.size());
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == static_cast<int>(k) ? 1 : -1;
    SvmOptions o = opt;
    o.seed = derive_seed(opt.seed, seed_tag::svm, k);
    m.classes.push_back(svm_train(x, y, o));
  }
  return m;
}

std::vector<Offset> sphere_offsets(double radius_mm, double voxel_mm) {
  if (!(radius_mm > 0.0) || !(voxel_mm > 0.0)) throw ConfigError("searchlight radius and voxel size must be positive");
  const int r = static_cast<int>(std::floor(radius_mm / voxel_mm));
  const double lim = radius_mm * radius_mm;
  std::vector<Offset> out;
  for (int dz = -r; dz <= r; ++dz)
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double d2 = static_cast<double>(dx * dx + dy * dy + dz * dz) * voxel_mm * voxel_mm;
        if (d2 <= lim * (1.0 + 1e-12)) out.push_back({dx, dy, dz});
      }
  return out;
}

SearchlightMap searchlight(const SampleMatrix& train, const SampleMatrix& test, const GridShape& grid,
                           const std::vector<char>& mask, double voxel_mm, const SearchlightConfig& config) {
  if (train.cols != grid.voxels() || test.cols != grid.voxels() || mask.size() != grid.voxels()) {
    throw InputError("searchlight data do not match the grid");
  }
  if (train.rows == 0 || test.rows == 0) throw InputError("searchlight needs training and test samples");
  const auto offsets = sphere_offsets(config.radius_mm, voxel_mm);
  std::size_t classes = 0;
  for (int l : train.labels) classes = std::max(classes, static_cast<std::size_t>(l) + 1);

  SearchlightMap out;
  out.radius_mm = config.radius_mm;
  out.accuracy = Volume3D(grid, voxel_mm, 0.0);
  out.centers = mask;
  out.state_accuracy.assign(classes, Volume3D(grid, voxel_mm, 0.0));
  std::vector<std::size_t> centers;
  for (std::size_t v = 0; v < grid.voxels(); ++v) {
    if (mask[v]) centers.push_back(v);
  }
#pragma omp parallel for schedule(dynamic, 16)
  for (std::size_t ci = 0; ci < centers.size(); ++ci) {
    const std::size_t v = centers[ci];
    const long cx = static_cast<long>(v % grid.x);
    const long cy = static_cast<long>((v / grid.x) % grid.y);
    const long cz = static_cast<long>(v / (grid.x * grid.y));
    std::vector<std::size_t> voxels;
    for (const auto& o : offsets) {
      const long x = cx + o[0], y = cy + o[1], z = cz + o[2];
      if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(grid.x) || y >= static_cast<long>(grid.y) ||
          z >= static_cast<long>(grid.z)) {
        continue;
      }
      const std::size_t idx = grid.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y), static_cast<std::size_t>(z));
      if (mask[idx]) voxels.push_back(idx);
    }
    auto gather = [&](const SampleMatrix& m) {
      std::vector<std::vector<double>> f(m.rows, std::vector<double>(voxels.size()));
      for (std::size_t r = 0; r < m.rows; ++r) {
        const float* row = m.row(r);
        for (std::size_t k = 0; k < voxels.size(); ++k) f[r][k] = row[voxels[k]];
      }
      return f;
    };
    const auto svm = svm_train_ovr(gather(train), train.labels, classes, config.svm);
    const auto xt = gather(test);
    std::size_t ok = 0;
    for (std::size_t r = 0; r < test.rows; ++r) ok += svm.predict(xt[r].data()) == test.labels[r] ? 1 : 0;
    out.accuracy.data[v] = static_cast<double>(ok) / static_cast<double>(test.rows);
    for (std::size_t k = 0; k < classes; ++k) {
      std::size_t hit = 0;
      for (std::size_t r = 0; r < test.rows; ++r) {
        const bool positive = svm.classes[k].decision(xt[r].data()) > 0.0;
        hit += positive == (test.labels[r] == static_cast<int>(k)) ? 1 : 0;
      }
      out.state_accuracy[k].data[v] = static_cast<double>(hit) / static_cast<double>(test.rows);
    }
  }
  return out;
}

}  // namespace deeplight::baselines
