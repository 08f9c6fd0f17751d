#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "deeplight/baselines.hpp"
#include "deeplight/error.hpp"
#include "deeplight/model.hpp"

namespace deeplight::baselines {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double gamma_pdf(double t, double shape) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
}

double upper_tail(double t, double dof) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  boost::math::students_t dist(dof);
  return boost::math::cdf(boost::math::complement(dist, t));
}

double safe_ratio(double num, double den) {
  if (den > 0.0) return num / den;
  if (num == 0.0) return 0.0;
  return num > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

}  // namespace

void SampleMatrix::append(const float* values, int label) {
  data.insert(data.end(), values, values + cols);
  labels.push_back(label);
  ++rows;
}

double hrf_value(double t_s) { return gamma_pdf(t_s, 6.0) - gamma_pdf(t_s, 16.0) / 6.0; }

std::vector<double> hrf_samples(double tr_s) {
  if (!(tr_s > 0.0)) throw ConfigError("TR must be positive");
  std::vector<double> h;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * tr_s;
    if (t > 32.0 + 1e-9) break;
    h.push_back(hrf_value(t));
  }
  const double peak = *std::max_element(h.begin(), h.end());
  for (double& v : h) v /= peak;
  return h;
}

std::vector<double> hrf_convolve(const std::vector<double>& boxcar, double tr_s) {
  const auto h = hrf_samples(tr_s);
  std::vector<double> out(boxcar.size(), 0.0);
  for (std::size_t t = 0; t < boxcar.size(); ++t) {
    if (boxcar[t] == 0.0) continue;
    for (std::size_t k = 0; k < h.size() && t + k < out.size(); ++k) out[t + k] += boxcar[t] * h[k];
  }
  return out;
}

DesignMatrix make_design(const BlockDesign& design) {
  if (design.runs.empty()) throw InputError("design has no runs");
  const std::size_t runs = design.runs.size();
  std::size_t total = 0;
  for (const auto& r : design.runs) total += r.timepoints();
  const std::size_t states = model::kNumStates;
  const std::size_t cols = states + 1 + runs + (runs - 1);
  DesignMatrix d;
  d.x = Matrix(total, cols);
  for (std::size_t s = 0; s < states; ++s) d.names.emplace_back(model::kStateNames[s]);
  d.names.emplace_back("intercept");
  for (std::size_t r = 0; r < runs; ++r) d.names.push_back("drift_run" + std::to_string(r + 1));
  for (std::size_t r = 1; r < runs; ++r) d.names.push_back("run" + std::to_string(r + 1));
  for (std::size_t c = states; c < cols; ++c) d.confounds.push_back(c);

  std::size_t row0 = 0;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto& run = design.runs[r];
    const std::size_t n = run.timepoints();
    for (std::size_t s = 0; s < states; ++s) {
      const auto pred = hrf_convolve(run.boxcar(static_cast<int>(s)), run.tr_s);
      for (std::size_t t = 0; t < n; ++t) d.x(row0 + t, s) = pred[t];
    }
    const double mid = static_cast<double>(n - 1) / 2.0;
    for (std::size_t t = 0; t < n; ++t) {
      d.x(row0 + t, states) = 1.0;
      d.x(row0 + t, states + 1 + r) = mid > 0 ? (static_cast<double>(t) - mid) / mid : 0.0;
      if (r > 0) d.x(row0 + t, states + runs + r) = 1.0;
    }
    row0 += n;
  }
  return d;
}

namespace {

// Sequential Gram-Schmidt; throws when a column lies in the span of earlier ones.
void check_rank(const DesignMatrix& d) {
  const std::size_t t = d.x.rows, p = d.x.cols;
  std::vector<Eigen::VectorXd> basis;
  std::vector<std::size_t> basis_col;
  for (std::size_t c = 0; c < p; ++c) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(t));
    for (std::size_t r = 0; r < t; ++r) v[static_cast<Eigen::Index>(r)] = d.x(r, c);
    const double norm0 = v.norm();
    std::vector<std::size_t> involved;
    for (std::size_t b = 0; b < basis.size(); ++b) {
      const double proj = basis[b].dot(v);
      if (std::abs(proj) > 1e-10 * std::max(norm0, 1.0)) involved.push_back(basis_col[b]);
      v -= proj * basis[b];
    }
    if (v.norm() <= 1e-9 * std::max(norm0, 1e-300)) {
      std::string msg = "design matrix is rank deficient: column '" + d.names[c] + "' is collinear with";
      if (involved.empty()) msg += " nothing (it is all zeros)";
      for (std::size_t k = 0; k < involved.size(); ++k) msg += (k ? ", '" : " '") + d.names[involved[k]] + "'";
      throw ConfigError(msg);
    }
    basis.push_back(v / v.norm());
    basis_col.push_back(c);
  }
}

}  // namespace

GlmResult glm_fit(const Matrix& y, const DesignMatrix& d) {
  const std::size_t t = d.x.rows, p = d.x.cols;
  if (y.rows != t) throw InputError("GLM data has " + std::to_string(y.rows) + " timepoints, design has " + std::to_string(t));
  if (t <= p) throw InputError("GLM needs more timepoints than predictors");
  check_rank(d);
  const Eigen::Map<const RowMatrix> X(d.x.data.data(), static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p));
  const Eigen::Map<const RowMatrix> Y(y.data.data(), static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(y.cols));
  const auto qr = X.colPivHouseholderQr();
  const RowMatrix beta = qr.solve(Y);
  const RowMatrix resid = Y - X * beta;
  GlmResult out;
  out.dof = t - p;
  out.beta = Matrix(p, y.cols);
  std::copy(beta.data(), beta.data() + beta.size(), out.beta.data.begin());
  out.residual_variance.resize(y.cols);
  for (std::size_t v = 0; v < y.cols; ++v) {
    out.residual_variance[v] = resid.col(static_cast<Eigen::Index>(v)).squaredNorm() / static_cast<double>(out.dof);
  }
  const RowMatrix xtx_inv = (X.transpose() * X).inverse();
  out.xtx_inverse = Matrix(p, p);
  std::copy(xtx_inv.data(), xtx_inv.data() + xtx_inv.size(), out.xtx_inverse.data.begin());
  return out;
}

ContrastMap glm_contrast(const GlmResult& fit, const std::vector<double>& c) {
  const std::size_t p = fit.beta.rows, n = fit.beta.cols;
  if (c.size() != p) throw ConfigError("contrast has " + std::to_string(c.size()) + " weights, design has " + std::to_string(p));
  double quad = 0.0;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) quad += c[i] * fit.xtx_inverse(i, j) * c[j];
  ContrastMap m;
  m.effect.assign(n, 0.0);
  m.z.assign(n, 0.0);
  m.p.assign(n, 0.5);
  for (std::size_t v = 0; v < n; ++v) {
    double e = 0.0;
    for (std::size_t i = 0; i < p; ++i) e += c[i] * fit.beta(i, v);
    const double se = std::sqrt(std::max(quad, 0.0) * fit.residual_variance[v]);
    m.effect[v] = e;
    m.z[v] = safe_ratio(e, se);
    m.p[v] = upper_tail(m.z[v], static_cast<double>(fit.dof));
  }
  return m;
}

std::vector<double> state_contrast(std::size_t state, const DesignMatrix& x) {
  if (state >= model::kNumStates) throw ConfigError("state index out of range");
  std::vector<double> c(x.x.cols, 0.0);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    c[s] = s == state ? 1.0 : -1.0 / static_cast<double>(model::kNumStates - 1);
  }
  return c;
}

SecondLevel second_level(const std::vector<std::vector<double>>& effects) {
  if (effects.size() < 2) throw InputError("second-level analysis needs at least two subjects");
  const std::size_t n = effects.front().size();
  for (const auto& e : effects) {
    if (e.size() != n) throw InputError("subject contrast maps differ in size");
  }
  const double k = static_cast<double>(effects.size());
  SecondLevel out;
  out.dof = effects.size() - 1;
  out.t.assign(n, 0.0);
  out.p.assign(n, 0.5);
  for (std::size_t v = 0; v < n; ++v) {
    double mean = 0.0;
    for (const auto& e : effects) mean += e[v];
    mean /= k;
    double ss = 0.0;
    for (const auto& e : effects) ss += (e[v] - mean) * (e[v] - mean);
    const double sd = std::sqrt(ss / (k - 1.0));
    out.t[v] = safe_ratio(mean, sd / std::sqrt(k));
    out.p[v] = upper_tail(out.t[v], static_cast<double>(out.dof));
  }
  return out;
}

}  // namespace deeplight::baselines
