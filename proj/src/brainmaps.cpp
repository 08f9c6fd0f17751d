#include "deeplight/brainmaps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "deeplight/error.hpp"
#include "deeplight/preprocess.hpp"

namespace deeplight::maps {

std::optional<Volume3D> aggregate_subject(const std::vector<Volume3D>& volumes, double fwhm_mm) {
  if (volumes.empty()) return std::nullopt;
  std::vector<Volume3D> smoothed;
  smoothed.reserve(volumes.size());
  for (const auto& v : volumes) smoothed.push_back(preprocess::gaussian_smooth(v, fwhm_mm));
  return aggregate_group(smoothed);
}

Volume3D aggregate_group(const std::vector<Volume3D>& maps) {
  if (maps.empty()) throw InputError("cannot average an empty set of maps");
  Volume3D out(maps.front().shape, maps.front().voxel_mm, 0.0);
  for (const auto& m : maps) {
    if (!(m.shape == out.shape)) throw InputError("brain maps differ in grid shape");
    for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] += m.data[i];
  }
  const double inv = 1.0 / static_cast<double>(maps.size());
  for (double& v : out.data) v *= inv;
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

ThresholdedMask threshold_percentile(const std::vector<double>& values, double q, const std::vector<char>* within) {
  if (!(q >= 0.0 && q < 100.0)) throw ConfigError("percentile threshold must lie in [0, 100)");
  if (within != nullptr && within->size() != values.size()) throw InputError("mask does not match the map");
  ThresholdedMask m;
  m.rule = "percentile " + std::to_string(q);
  m.keep.assign(values.size(), 0);
  std::vector<double> positive;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((within == nullptr || (*within)[i]) && values[i] > 0.0) positive.push_back(values[i]);
  }
  if (positive.empty()) {
    m.empty_warning = true;
    m.threshold = std::numeric_limits<double>::infinity();
    return m;
  }
  m.threshold = percentile(positive, q);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((within == nullptr || (*within)[i]) && values[i] > 0.0 && values[i] >= m.threshold) {
      m.keep[i] = 1;
      ++m.count;
    }
  }
  return m;
}

ThresholdedMask threshold_fdr(const std::vector<double>& p, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("FDR rate must lie in (0, 1]");
  ThresholdedMask m;
  m.rule = "fdr " + std::to_string(rate);
  m.keep.assign(p.size(), 0);
  std::vector<double> sorted(p);
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(p.size());
  double cut = -1.0;
  for (std::size_t k = sorted.size(); k-- > 0;) {
    if (sorted[k] <= static_cast<double>(k + 1) * rate / n) {
      cut = sorted[k];
      break;
    }
  }
  m.threshold = cut;
  if (cut < 0.0) {
    m.empty_warning = true;
    return m;
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= cut) {
      m.keep[i] = 1;
      ++m.count;
    }
  }
  return m;
}

ThresholdedMask threshold_p(const std::vector<double>& p, double alpha) {
  ThresholdedMask m;
  m.rule = "p " + std::to_string(alpha);
  m.threshold = alpha;
  m.keep.assign(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= alpha) {
      m.keep[i] = 1;
      ++m.count;
    }
  }
  m.empty_warning = m.count == 0;
  return m;
}

F1Report f1_similarity(const std::vector<char>& source, const std::vector<char>& target) {
  if (source.size() != target.size()) throw InputError("masks differ in size");
  std::size_t s = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    s += source[i] ? 1 : 0;
    t += target[i] ? 1 : 0;
    both += (source[i] && target[i]) ? 1 : 0;
  }
  F1Report r;
  if (s == 0 || t == 0) {
    r.empty = true;
    return r;
  }
  r.precision = static_cast<double>(both) / static_cast<double>(s);
  r.recall = static_cast<double>(both) / static_cast<double>(t);
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::vector<TimePoint> time_resolved_maps(const std::vector<TimedVolume>& volumes,
                                          const std::vector<std::vector<char>>& targets, double q, double fwhm_mm) {
  int max_offset = -1;
  for (const auto& v : volumes) max_offset = std::max(max_offset, v.offset);
  std::vector<TimePoint> out(static_cast<std::size_t>(max_offset + 1));
  const std::size_t states = targets.size();
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& tp = out[k];
    tp.offset = static_cast<int>(k);
    tp.state_f1.assign(states, std::numeric_limits<double>::quiet_NaN());
    double f1_sum = 0.0;
    std::size_t f1_n = 0;
    for (std::size_t s = 0; s < states; ++s) {
      std::map<std::size_t, std::vector<Volume3D>> by_subject;
      for (const auto& v : volumes) {
        if (v.offset == tp.offset && v.state == static_cast<int>(s)) by_subject[v.subject].push_back(v.volume);
      }
      if (by_subject.empty()) continue;
      std::vector<Volume3D> subject_maps;
      for (auto& [subject, vols] : by_subject) {
        tp.samples += vols.size();
        subject_maps.push_back(*aggregate_subject(vols, fwhm_mm));
      }
      const Volume3D group = aggregate_group(subject_maps);
      const auto mask = threshold_percentile(group.data, q);
      const double f1 = f1_similarity(mask.keep, targets[s]).f1;
      tp.state_f1[s] = f1;
      f1_sum += f1;
      ++f1_n;
    }
    tp.skipped = f1_n == 0;
    tp.mean_f1 = f1_n ? f1_sum / static_cast<double>(f1_n) : 0.0;
  }
  return out;
}

Volume3D coefficient_attribution(const Volume3D& sample, const std::vector<double>& coef) {
  if (coef.size() != sample.data.size()) throw InputError("coefficients do not match the sample grid");
  Volume3D out = sample;
  for (std::size_t i = 0; i < coef.size(); ++i) out.data[i] *= coef[i];
  return out;
}

}  // namespace deeplight::maps
