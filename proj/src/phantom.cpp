#include "deeplight/phantom.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "deeplight/baselines.hpp"
#include "deeplight/error.hpp"
#include "deeplight/rng.hpp"

namespace deeplight::phantom {

double Ellipsoid::distance(double x, double y, double z) const {
  const double dx = (x - center[0]) / radii[0];
  const double dy = (y - center[1]) / radii[1];
  const double dz = (z - center[2]) / radii[2];
  return dx * dx + dy * dy + dz * dz;
}

Ellipsoid PhantomSpec::head() const {
  Ellipsoid e;
  const std::array<std::size_t, 3> ext{grid.x, grid.y, grid.z};
  for (int a = 0; a < 3; ++a) {
    e.center[a] = (static_cast<double>(ext[a]) - 1.0) / 2.0;
    e.radii[a] = static_cast<double>(ext[a]) / 2.0;
  }
  return e;
}

void PhantomSpec::validate() const {
  if (grid.voxels() == 0) throw ConfigError("phantom grid must be non-empty");
  if (!(voxel_mm > 0.0) || !(tr_s > 0.0)) throw ConfigError("phantom voxel size and TR must be positive");
  if (!(amplitude >= 0.0) || !(noise_sigma >= 0.0)) throw ConfigError("phantom amplitude and noise must be >= 0");
  if (runs == 0 || subjects() == 0) throw ConfigError("phantom needs at least one subject and run");
  if (jitter_voxels < 0) throw ConfigError("phantom jitter must be >= 0");
  const std::array<std::size_t, 3> ext{grid.x, grid.y, grid.z};
  for (std::size_t s = 0; s < rois.size(); ++s) {
    for (int a = 0; a < 3; ++a) {
      const double lo = rois[s].center[a] - rois[s].radii[a];
      const double hi = rois[s].center[a] + rois[s].radii[a];
      if (!(rois[s].radii[a] > 0.0) || lo < 0.0 || hi > static_cast<double>(ext[a]) - 1.0) {
        throw ConfigError(std::string("ROI '") + model::kStateNames[s] + "' lies outside the grid");
      }
    }
  }
  for (std::size_t k = 0; k < grid.z; ++k)
    for (std::size_t j = 0; j < grid.y; ++j)
      for (std::size_t i = 0; i < grid.x; ++i) {
        int inside = 0;
        for (const auto& r : rois) inside += r.contains(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
        if (inside > 1) throw ConfigError("phantom ROIs overlap");
      }
}

std::vector<int> roi_labels(const GridShape& grid, const std::array<Ellipsoid, model::kNumStates>& rois) {
  std::vector<int> out(grid.voxels(), -1);
  for (std::size_t k = 0; k < grid.z; ++k)
    for (std::size_t j = 0; j < grid.y; ++j)
      for (std::size_t i = 0; i < grid.x; ++i) {
        double best = 1.0;
        for (std::size_t s = 0; s < rois.size(); ++s) {
          const double d = rois[s].distance(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
          if (d <= best) {
            best = d;
            out[grid.index(i, j, k)] = static_cast<int>(s);
          }
        }
      }
  return out;
}

std::vector<std::vector<char>> target_masks(const PhantomSpec& spec) {
  const auto labels = roi_labels(spec.grid, spec.rois);
  std::vector<std::vector<char>> out(model::kNumStates, std::vector<char>(labels.size(), 0));
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] >= 0) out[static_cast<std::size_t>(labels[v])][v] = 1;
  }
  return out;
}

std::array<Ellipsoid, model::kNumStates> subject_rois(const PhantomSpec& spec, std::size_t subject) {
  auto rois = spec.rois;
  Rng rng(derive_seed(spec.seed, seed_tag::phantom, subject, 1000));
  std::uniform_int_distribution<int> shift(-spec.jitter_voxels, spec.jitter_voxels);
  for (auto& r : rois)
    for (double& c : r.center) c += shift(rng);
  return rois;
}

BlockDesign subject_design(const PhantomSpec& spec, std::size_t subject) {
  return make_block_design(derive_seed(spec.seed, seed_tag::design, subject), spec.tr_s, spec.runs);
}

PhantomSubject generate_subject(const PhantomSpec& spec, std::size_t subject, const BlockDesign& design) {
  spec.validate();
  if (design.runs.size() != spec.runs) throw ConfigError("design run count does not match the phantom");
  PhantomSubject out;
  out.id = subject;
  out.test = subject >= spec.train_subjects;
  out.design = design;
  out.rois = subject_rois(spec, subject);
  const GridShape g = spec.grid;
  const auto labels = roi_labels(g, out.rois);
  const Ellipsoid head = spec.head();
  std::vector<float> base(g.voxels(), 0.0f);
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t j = 0; j < g.y; ++j)
      for (std::size_t i = 0; i < g.x; ++i) {
        if (head.contains(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k))) {
          base[g.index(i, j, k)] = static_cast<float>(spec.baseline);
        }
      }
  for (std::size_t r = 0; r < spec.runs; ++r) {
    const auto& run = design.runs[r];
    const std::size_t t_count = run.timepoints();
    std::vector<std::vector<double>> signal(model::kNumStates);
    for (std::size_t s = 0; s < model::kNumStates; ++s) {
      signal[s] = baselines::hrf_convolve(run.boxcar(static_cast<int>(s)), run.tr_s);
    }
    Volume4D vol(g, t_count, spec.voxel_mm, run.tr_s);
    Rng rng(derive_seed(spec.seed, seed_tag::phantom, subject, r));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t t = 0; t < t_count; ++t) {
      float* f = vol.frame(t);
      for (std::size_t v = 0; v < g.voxels(); ++v) {
        double x = base[v];
        if (labels[v] >= 0) x += spec.amplitude * signal[static_cast<std::size_t>(labels[v])][t];
        if (spec.noise_sigma > 0.0) x += spec.noise_sigma * noise(rng);
        f[v] = static_cast<float>(x);
      }
    }
    out.runs.push_back(std::move(vol));
  }
  return out;
}

PhantomSubject generate_subject(const PhantomSpec& spec, std::size_t subject) {
  return generate_subject(spec, subject, subject_design(spec, subject));
}

std::vector<PhantomSubject> generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  std::vector<PhantomSubject> out(spec.subjects());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = generate_subject(spec, s);
  return out;
}

}  // namespace deeplight::phantom
