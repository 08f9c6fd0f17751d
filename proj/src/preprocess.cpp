#include "deeplight/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "deeplight/error.hpp"

namespace deeplight::preprocess {

void PreprocConfig::validate() const {
  if (!(fwhm_mm >= 0.0)) throw ConfigError("preprocess.fwhm_mm must be non-negative");
  if (!(highpass_cutoff_s > 0.0)) throw ConfigError("preprocess.highpass_cutoff_s must be positive");
  if (!(mask_fraction > 0.0 && mask_fraction < 1.0)) throw ConfigError("preprocess.mask_fraction must lie in (0, 1)");
}

double sigma_voxels(double fwhm_mm, double voxel_mm) {
  if (!(fwhm_mm >= 0.0) || !(voxel_mm > 0.0)) throw ConfigError("FWHM must be >= 0 and voxel size > 0");
  return fwhm_mm / (2.0 * std::sqrt(2.0 * std::log(2.0)) * voxel_mm);
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const auto radius = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

// Convolves along one axis; stride is the distance between neighbours on that
// axis, n its length, and count * inner enumerates the lines.
void convolve_axis(std::vector<double>& data, const GridShape& g, int axis, const std::vector<double>& k) {
  if (k.size() == 1) return;
  const long r = static_cast<long>(k.size() / 2);
  const std::size_t n = axis == 0 ? g.x : axis == 1 ? g.y : g.z;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? g.x : g.x * g.y;
  std::vector<double> out(data.size(), 0.0);
  for (std::size_t kz = 0; kz < g.z; ++kz)
    for (std::size_t jy = 0; jy < g.y; ++jy)
      for (std::size_t ix = 0; ix < g.x; ++ix) {
        const std::size_t idx = g.index(ix, jy, kz);
        const long pos = static_cast<long>(axis == 0 ? ix : axis == 1 ? jy : kz);
        double s = 0.0;
        for (long d = -r; d <= r; ++d) {
          const long p = pos + d;
          if (p < 0 || p >= static_cast<long>(n)) continue;
          s += k[static_cast<std::size_t>(d + r)] *
               data[static_cast<std::size_t>(static_cast<long>(idx) + d * static_cast<long>(stride))];
        }
        out[idx] = s;
      }
  data.swap(out);
}

}  // namespace

Volume3D gaussian_smooth(const Volume3D& volume, double fwhm_mm) {
  const auto k = gaussian_kernel(sigma_voxels(fwhm_mm, volume.voxel_mm));
  Volume3D out = volume;
  for (int axis = 0; axis < 3; ++axis) convolve_axis(out.data, out.shape, axis, k);
  return out;
}

void gaussian_smooth(Volume4D& run, double fwhm_mm) {
  const auto k = gaussian_kernel(sigma_voxels(fwhm_mm, run.voxel_mm));
  if (k.size() == 1) return;
#pragma omp parallel for schedule(static)
  for (std::size_t t = 0; t < run.timepoints; ++t) {
    float* f = run.frame(t);
    std::vector<double> v(f, f + run.shape.voxels());
    for (int axis = 0; axis < 3; ++axis) convolve_axis(v, run.shape, axis, k);
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  }
}

std::vector<double> detrend_standardize(const std::vector<double>& series) {
  const std::size_t n = series.size();
  if (n < 3) throw InputError("detrending needs at least 3 timepoints");
  const double tmean = static_cast<double>(n - 1) / 2.0;
  double ymean = 0.0;
  for (double v : series) ymean += v;
  ymean /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tmean;
    sxy += dt * (series[t] - ymean);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  std::vector<double> r(n);
  double scale = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    r[t] = series[t] - ymean - slope * (static_cast<double>(t) - tmean);
    scale = std::max(scale, std::abs(series[t]));
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double& v : r) {
    v -= mean;
    var += v * v;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (sd <= 1e-10 * std::max(scale, 1e-300)) return std::vector<double>(n, 0.0);
  for (double& v : r) v /= sd;
  return r;
}

std::vector<Section> butterworth_highpass(std::size_t order, double cutoff_hz, double sample_hz) {
  if (order == 0) throw ConfigError("filter order must be positive");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_hz / 2.0)) throw ConfigError("cutoff must lie below Nyquist");
  using cd = std::complex<double>;
  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * sample_hz;
  const double warped = fs2 * std::tan(pi * cutoff_hz / sample_hz);
  std::vector<Section> sos;
  // Prototype poles in the upper half plane plus the real pole for odd order.
  for (std::size_t k = 0; k < (order + 1) / 2; ++k) {
    const double theta = pi * static_cast<double>(2 * k + order + 1) / static_cast<double>(2 * order);
    const cd proto = std::polar(1.0, theta);
    const cd analog = warped / proto;
    const cd p = (fs2 + analog) / (fs2 - analog);
    Section s;
    const bool real_pole = 2 * k + 1 == order;
    if (real_pole) {
      s.b = {1.0, -1.0, 0.0};
      s.a = {1.0, -p.real(), 0.0};
    } else {
      s.b = {1.0, -2.0, 1.0};
      s.a = {1.0, -2.0 * p.real(), std::norm(p)};
    }
    // Unit gain at Nyquist (z = -1).
    const double num = s.b[0] - s.b[1] + s.b[2];
    const double den = s.a[0] - s.a[1] + s.a[2];
    for (double& v : s.b) v *= den / num;
    sos.push_back(s);
  }
  return sos;
}

namespace {

void sosfilt(const std::vector<Section>& sos, std::vector<double>& x, const std::vector<std::array<double, 2>>& zi) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& s = sos[k];
    double z1 = zi[k][0], z2 = zi[k][1];
    for (double& v : x) {
      const double y = s.b[0] * v + z1;
      z1 = s.b[1] * v - s.a[1] * y + z2;
      z2 = s.b[2] * v - s.a[2] * y;
      v = y;
    }
  }
}

// Steady-state states for a unit step through the cascade.
std::vector<std::array<double, 2>> sos_zi(const std::vector<Section>& sos) {
  std::vector<std::array<double, 2>> zi;
  double scale = 1.0;
  for (const auto& s : sos) {
    const double g = (s.b[0] + s.b[1] + s.b[2]) / (s.a[0] + s.a[1] + s.a[2]);
    const double z2 = s.b[2] - s.a[2] * g;
    const double z1 = g - s.b[0];
    zi.push_back({scale * z1, scale * z2});
    scale *= g;
  }
  return zi;
}

}  // namespace

std::vector<double> sosfiltfilt(const std::vector<Section>& sos, const std::vector<double>& x) {
  std::size_t first_order = 0;
  for (const auto& s : sos) first_order += (s.b[2] == 0.0 && s.a[2] == 0.0) ? 1 : 0;
  std::size_t pad = 3 * (2 * sos.size() + 1 - first_order);
  const std::size_t n = x.size();
  if (n <= pad) pad = n > 1 ? n - 1 : 0;
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = sos_zi(sos);
  auto scaled = [&](double x0) {
    auto z = zi;
    for (auto& s : z) {
      s[0] *= x0;
      s[1] *= x0;
    }
    return z;
  };
  sosfilt(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + n)};
}

std::vector<double> highpass(const std::vector<double>& series, double cutoff_s, double tr_s) {
  if (!(tr_s > 0.0) || !(cutoff_s > 2.0 * tr_s)) {
    throw ConfigError("highpass cutoff must exceed twice the TR");
  }
  if (series.empty()) return {};
  return sosfiltfilt(butterworth_highpass(5, 1.0 / cutoff_s, 1.0 / tr_s), series);
}

namespace {

BrainMask box_flagged(const GridShape& g, std::vector<char> flagged) {
  BrainMask m;
  m.grid = g;
  m.box.lo = {g.x, g.y, g.z};
  m.box.hi = {0, 0, 0};
  bool any = false;
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t j = 0; j < g.y; ++j)
      for (std::size_t i = 0; i < g.x; ++i) {
        if (!flagged[g.index(i, j, k)]) continue;
        any = true;
        const std::array<std::size_t, 3> p{i, j, k};
        for (int a = 0; a < 3; ++a) {
          m.box.lo[a] = std::min(m.box.lo[a], p[a]);
          m.box.hi[a] = std::max(m.box.hi[a], p[a]);
        }
      }
  if (!any) throw InputError("no voxel passes the brain mask criterion");
  m.flagged = std::move(flagged);
  return m;
}

}  // namespace

BrainMask compute_mask(const std::vector<const Volume4D*>& runs, double fraction) {
  if (runs.empty()) throw InputError("mask computation needs at least one run");
  const GridShape g = runs.front()->shape;
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto* r : runs) {
    if (!(r->shape == g)) throw InputError("all runs must share one grid for the mask");
    for (float v : r->data) peak = std::max(peak, static_cast<double>(v));
  }
  const double thr = fraction * peak;
  std::vector<char> flagged(g.voxels(), 0);
  for (const auto* r : runs) {
    for (std::size_t t = 0; t < r->timepoints; ++t) {
      const float* f = r->frame(t);
      for (std::size_t v = 0; v < g.voxels(); ++v) flagged[v] |= static_cast<double>(f[v]) > thr;
    }
  }
  return box_flagged(g, std::move(flagged));
}

BrainMask compute_mask(const std::vector<Volume3D>& volumes, double fraction) {
  if (volumes.empty()) throw InputError("mask computation needs at least one volume");
  const GridShape g = volumes.front().shape;
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& v : volumes) {
    if (!(v.shape == g)) throw InputError("all volumes must share one grid for the mask");
    for (double x : v.data) peak = std::max(peak, x);
  }
  std::vector<char> flagged(g.voxels(), 0);
  for (const auto& v : volumes)
    for (std::size_t i = 0; i < g.voxels(); ++i) flagged[i] |= v.data[i] > fraction * peak;
  return box_flagged(g, std::move(flagged));
}

Volume4D preprocess_run(const Volume4D& run, const PreprocConfig& config) {
  config.validate();
  Volume4D out = run;
  gaussian_smooth(out, config.fwhm_mm);
  if (!(config.highpass_cutoff_s > 2.0 * run.tr_s)) throw ConfigError("highpass cutoff must exceed twice the TR");
  const auto sos = butterworth_highpass(5, 1.0 / config.highpass_cutoff_s, 1.0 / run.tr_s);
  for_each_series(out, [&](const std::vector<double>& s) { return sosfiltfilt(sos, detrend_standardize(s)); });
  return out;
}

}  // namespace deeplight::preprocess
