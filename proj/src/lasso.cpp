#include <algorithm>
#include <cmath>
#include <numeric>

#include "deeplight/baselines.hpp"
#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"
#include "deeplight/model.hpp"
#include "deeplight/rng.hpp"

namespace deeplight::baselines {

namespace {

constexpr std::size_t kClasses = model::kNumStates;

double soft(double v, double t) { return v > t ? v - t : v < -t ? v + t : 0.0; }

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_samples(const SampleMatrix& x) {
  if (x.rows == 0 || x.cols == 0) throw InputError("lasso needs a non-empty sample matrix");
  for (int l : x.labels) {
    if (l < 0 || l >= static_cast<int>(kClasses)) throw InputError("lasso labels must lie in 0..3");
  }
}

std::vector<double> binary_targets(const SampleMatrix& x, std::size_t k) {
  std::vector<double> y(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) y[r] = x.labels[r] == static_cast<int>(k) ? 1.0 : 0.0;
  return y;
}

void matvec(const SampleMatrix& x, const std::vector<double>& beta, double b, std::vector<double>& z) {
  z.resize(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const float* row = x.row(r);
    double s = b;
    for (std::size_t c = 0; c < x.cols; ++c) s += static_cast<double>(row[c]) * beta[c];
    z[r] = s;
  }
}

void matvec_t(const SampleMatrix& x, const std::vector<double>& r, std::vector<double>& g) {
  g.assign(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double ri = r[i];
    if (ri == 0.0) continue;
    const float* row = x.row(i);
    for (std::size_t c = 0; c < x.cols; ++c) g[c] += ri * static_cast<double>(row[c]);
  }
}

// Largest eigenvalue of [X 1]'[X 1] by power iteration.
double gram_norm(const SampleMatrix& x) {
  std::vector<double> v(x.cols, 1.0), z, g;
  double vb = 1.0, lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    matvec(x, v, vb, z);
    matvec_t(x, z, g);
    double gb = std::accumulate(z.begin(), z.end(), 0.0);
    double norm = gb * gb;
    for (double e : g) norm += e * e;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 1.0;
    const double prev = lambda;
    lambda = norm / std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), vb * vb));
    for (std::size_t c = 0; c < v.size(); ++c) v[c] = g[c] / norm;
    vb = gb / norm;
    if (std::abs(lambda - prev) <= 1e-6 * lambda) break;
  }
  return lambda;
}

struct Binary {
  std::vector<double> beta;
  double b = 0.0;
};

Binary fista(const SampleMatrix& x, const std::vector<double>& y, double lambda, double lipschitz, Binary start,
             const LassoOptions& opt) {
  const double step = 1.0 / lipschitz;
  Binary cur = std::move(start), prev = cur;
  Binary probe = cur;
  double t = 1.0;
  std::vector<double> z, resid(x.rows), g;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    matvec(x, probe.beta, probe.b, z);
    double gb = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
      resid[r] = nn::logistic(z[r]) - y[r];
      gb += resid[r];
    }
    matvec_t(x, resid, g);
    Binary next;
    next.beta.resize(x.cols);
    double change = 0.0, scale = std::abs(probe.b - step * gb);
    for (std::size_t c = 0; c < x.cols; ++c) {
      next.beta[c] = soft(probe.beta[c] - step * g[c], step * lambda);
      change = std::max(change, std::abs(next.beta[c] - cur.beta[c]));
      scale = std::max(scale, std::abs(next.beta[c]));
    }
    next.b = probe.b - step * gb;
    change = std::max(change, std::abs(next.b - cur.b));
    // Gradient-based adaptive restart.
    double restart = (probe.b - next.b) * (next.b - cur.b);
    for (std::size_t c = 0; c < x.cols; ++c) restart += (probe.beta[c] - next.beta[c]) * (next.beta[c] - cur.beta[c]);
    if (restart > 0.0) t = 1.0;
    const double t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
    const double mom = restart > 0.0 ? 0.0 : (t - 1.0) / t_next;
    prev = std::move(cur);
    cur = std::move(next);
    probe.b = cur.b + mom * (cur.b - prev.b);
    for (std::size_t c = 0; c < x.cols; ++c) probe.beta[c] = cur.beta[c] + mom * (cur.beta[c] - prev.beta[c]);
    t = t_next;
    if (change <= opt.tolerance * std::max(1.0, scale)) break;
  }
  return cur;
}

}  // namespace

std::vector<double> LassoModel::scores(const float* x) const {
  std::vector<double> s(coef.size());
  for (std::size_t k = 0; k < coef.size(); ++k) {
    double v = intercept[k];
    for (std::size_t c = 0; c < coef[k].size(); ++c) v += coef[k][c] * static_cast<double>(x[c]);
    s[k] = v;
  }
  return s;
}

int LassoModel::predict(const float* x) const {
  const auto s = scores(x);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

std::size_t LassoModel::nonzeros() const {
  std::size_t n = 0;
  for (const auto& c : coef) n += static_cast<std::size_t>(std::count_if(c.begin(), c.end(), [](double v) { return v != 0.0; }));
  return n;
}

double lasso_objective(const SampleMatrix& x, const std::vector<double>& y01, const std::vector<double>& beta,
                       double intercept, double lambda) {
  std::vector<double> z;
  matvec(x, beta, intercept, z);
  double f = 0.0;
  for (std::size_t r = 0; r < x.rows; ++r) f += softplus(z[r]) - y01[r] * z[r];
  double l1 = 0.0;
  for (double b : beta) l1 += std::abs(b);
  return f + lambda * l1;
}

LassoModel lasso_fit(const SampleMatrix& x, double lambda, const LassoOptions& opt, const LassoModel* warm) {
  check_samples(x);
  if (!(lambda >= 0.0)) throw ConfigError("lasso lambda must be non-negative");
  const double lip = 0.25 * gram_norm(x) * 1.01;
  LassoModel m;
  m.lambda = lambda;
  m.coef.resize(kClasses);
  m.intercept.resize(kClasses);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < kClasses; ++k) {
    const auto y = binary_targets(x, k);
    Binary start;
    if (warm != nullptr && warm->coef.size() == kClasses && warm->coef[k].size() == x.cols) {
      start.beta = warm->coef[k];
      start.b = warm->intercept[k];
    } else {
      start.beta.assign(x.cols, 0.0);
      const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      const double p = std::clamp(mean, 1e-6, 1 - 1e-6);
      start.b = std::log(p / (1 - p));
    }
    auto fit = fista(x, y, lambda, lip, std::move(start), opt);
    m.coef[k] = std::move(fit.beta);
    m.intercept[k] = fit.b;
  }
  return m;
}

std::vector<LassoModel> lasso_path(const SampleMatrix& x, const std::vector<double>& lambdas, const LassoOptions& opt) {
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });
  std::vector<LassoModel> out(lambdas.size());
  const LassoModel* warm = nullptr;
  for (std::size_t i : order) {
    out[i] = lasso_fit(x, lambdas[i], opt, warm);
    warm = &out[i];
  }
  return out;
}

double lasso_lambda_max(const SampleMatrix& x) {
  check_samples(x);
  double best = 0.0;
  std::vector<double> g;
  for (std::size_t k = 0; k < kClasses; ++k) {
    auto y = binary_targets(x, k);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    for (double& v : y) v = mean - v;
    matvec_t(x, y, g);
    for (double v : g) best = std::max(best, std::abs(v));
  }
  return best;
}

LassoModel lasso_fit_sgd(const std::vector<SampleMatrix>& subjects, double lambda, const LassoSgdOptions& opt) {
  if (subjects.empty()) throw InputError("group lasso needs at least one subject");
  const std::size_t cols = subjects.front().cols;
  for (const auto& s : subjects) {
    check_samples(s);
    if (s.cols != cols) throw InputError("subjects differ in voxel count");
  }
  if (!(lambda >= 0.0) || !(opt.learning_rate > 0.0) || opt.batch_size == 0) {
    throw ConfigError("group lasso needs lambda >= 0, learning rate > 0 and batch size > 0");
  }
  LassoModel m;
  m.lambda = lambda;
  m.coef.assign(kClasses, std::vector<double>(cols, 0.0));
  m.intercept.assign(kClasses, 0.0);
  std::vector<std::size_t> ids(subjects.size());
  std::vector<double> z(kClasses);
  std::vector<std::vector<double>> g(kClasses, std::vector<double>(cols));
  std::vector<double> gb(kClasses);
  const double eta = opt.learning_rate;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rng(derive_seed(opt.seed, seed_tag::lasso, epoch));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t chosen = std::min(opt.subjects_per_epoch, ids.size());
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t s = 0; s < chosen; ++s)
      for (std::size_t r = 0; r < subjects[ids[s]].rows; ++r) pool.emplace_back(ids[s], r);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t batch = 0; batch < opt.batches_per_epoch; ++batch) {
      for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t n = 0; n < opt.batch_size; ++n) {
        const auto [s, r] = pool[pick(rng)];
        const float* row = subjects[s].row(r);
        const int label = subjects[s].labels[r];
        for (std::size_t k = 0; k < kClasses; ++k) {
          double v = m.intercept[k];
          for (std::size_t c = 0; c < cols; ++c) v += m.coef[k][c] * static_cast<double>(row[c]);
          const double resid = nn::logistic(v) - (label == static_cast<int>(k) ? 1.0 : 0.0);
          gb[k] += resid;
          for (std::size_t c = 0; c < cols; ++c) g[k][c] += resid * static_cast<double>(row[c]);
        }
      }
      const double inv = 1.0 / static_cast<double>(opt.batch_size);
      for (std::size_t k = 0; k < kClasses; ++k) {
        for (std::size_t c = 0; c < cols; ++c) m.coef[k][c] = soft(m.coef[k][c] - eta * inv * g[k][c], eta * lambda);
        m.intercept[k] -= eta * inv * gb[k];
      }
    }
  }
  return m;
}

std::vector<double> subject_c_grid() {
  std::vector<double> c(100);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::pow(10.0, -6.0 + 8.0 * static_cast<double>(i) / 99.0);
  return c;
}

std::vector<double> group_lambda_grid() {
  return {1e-7, 1e-6, 1e-5, 1e-4, 2e-4, 3e-4, 5e-4, 8e-4, 1e-3, 2e-3,
          4e-3, 7e-3, 1e-2, 2e-2, 3e-2, 6e-2, 0.1,  0.2,  0.3,  0.5};
}

double accuracy(const LassoModel& model, const SampleMatrix& x) {
  if (x.rows == 0) throw InputError("cannot score an empty sample matrix");
  std::size_t ok = 0;
  for (std::size_t r = 0; r < x.rows; ++r) ok += model.predict(x.row(r)) == x.labels[r] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(x.rows);
}

}  // namespace deeplight::baselines
