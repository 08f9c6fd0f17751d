#include "deeplight/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "deeplight/error.hpp"
#include "deeplight/io.hpp"

namespace deeplight {

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value for " + key + ": '" + value + "'");
}

double to_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, value);
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, value);
  return out;
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, item));
  if (out.empty()) bad_value(key, value);
  return out;
}

std::array<double, 3> to_triple(const std::string& key, const std::string& value) {
  const auto v = to_list(key, value);
  if (v.size() != 3) bad_value(key, value);
  return {v[0], v[1], v[2]};
}

std::map<std::string, Setter> setters() {
  std::map<std::string, Setter> s;
  auto dbl = [&](const std::string& key, std::function<double&(RunConfig&)> f) {
    s[key] = [key, f](RunConfig& c, const std::string& v) { f(c) = to_double(key, v); };
  };
  auto count = [&](const std::string& key, std::function<std::size_t&(RunConfig&)> f) {
    s[key] = [key, f](RunConfig& c, const std::string& v) { f(c) = static_cast<std::size_t>(to_uint(key, v)); };
  };

  s["run.seed"] = [](RunConfig& c, const std::string& v) { c.apply_seed(to_uint("run.seed", v)); };
  count("run.validation_subjects", [](RunConfig& c) -> std::size_t& { return c.validation_subjects; });
  count("run.init_restarts", [](RunConfig& c) -> std::size_t& { return c.init_restarts; });

  s["phantom.grid"] = [](RunConfig& c, const std::string& v) {
    const auto g = to_triple("phantom.grid", v);
    for (double x : g) {
      if (x < 1 || x != std::floor(x)) bad_value("phantom.grid", v);
    }
    c.phantom.grid = {static_cast<std::size_t>(g[0]), static_cast<std::size_t>(g[1]), static_cast<std::size_t>(g[2])};
  };
  dbl("phantom.voxel_mm", [](RunConfig& c) -> double& { return c.phantom.voxel_mm; });
  dbl("phantom.tr_s", [](RunConfig& c) -> double& { return c.phantom.tr_s; });
  dbl("phantom.amplitude", [](RunConfig& c) -> double& { return c.phantom.amplitude; });
  dbl("phantom.noise_sigma", [](RunConfig& c) -> double& { return c.phantom.noise_sigma; });
  dbl("phantom.baseline", [](RunConfig& c) -> double& { return c.phantom.baseline; });
  s["phantom.jitter_voxels"] = [](RunConfig& c, const std::string& v) {
    c.phantom.jitter_voxels = static_cast<int>(to_uint("phantom.jitter_voxels", v));
  };
  count("phantom.train_subjects", [](RunConfig& c) -> std::size_t& { return c.phantom.train_subjects; });
  count("phantom.test_subjects", [](RunConfig& c) -> std::size_t& { return c.phantom.test_subjects; });
  count("phantom.runs", [](RunConfig& c) -> std::size_t& { return c.phantom.runs; });
  for (std::size_t st = 0; st < model::kNumStates; ++st) {
    const std::string name = model::kStateNames[st];
    const std::string ck = "phantom." + name + "_center", rk = "phantom." + name + "_radii";
    s[ck] = [st, ck](RunConfig& c, const std::string& v) { c.phantom.rois[st].center = to_triple(ck, v); };
    s[rk] = [st, rk](RunConfig& c, const std::string& v) { c.phantom.rois[st].radii = to_triple(rk, v); };
  }

  dbl("preprocess.fwhm_mm", [](RunConfig& c) -> double& { return c.preprocess.fwhm_mm; });
  dbl("preprocess.highpass_cutoff_s", [](RunConfig& c) -> double& { return c.preprocess.highpass_cutoff_s; });
  dbl("preprocess.mask_fraction", [](RunConfig& c) -> double& { return c.preprocess.mask_fraction; });

  dbl("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; });
  count("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
  count("train.max_epochs", [](RunConfig& c) -> std::size_t& { return c.train.max_epochs; });
  dbl("train.clip_threshold", [](RunConfig& c) -> double& { return c.train.clip_threshold; });
  s["train.dropout"] = [](RunConfig& c, const std::string& v) { c.train.dropout = to_list("train.dropout", v); };
  count("train.patience", [](RunConfig& c) -> std::size_t& { return c.train.patience; });

  dbl("lrp.epsilon", [](RunConfig& c) -> double& { return c.lrp.epsilon; });
  dbl("lrp.window_lo_s", [](RunConfig& c) -> double& { return c.window.lo_s; });
  dbl("lrp.window_hi_s", [](RunConfig& c) -> double& { return c.window.hi_s; });

  s["glm.threshold"] = [](RunConfig& c, const std::string& v) {
    const std::string t = trim(v);
    if (t == "fdr") {
      c.glm.threshold = GlmThreshold::fdr;
    } else if (t == "p") {
      c.glm.threshold = GlmThreshold::p;
    } else {
      bad_value("glm.threshold", v);
    }
  };
  dbl("glm.fdr_rate", [](RunConfig& c) -> double& { return c.glm.fdr_rate; });
  dbl("glm.p_alpha", [](RunConfig& c) -> double& { return c.glm.p_alpha; });

  dbl("searchlight.radius_mm", [](RunConfig& c) -> double& { return c.searchlight.radius_mm; });
  dbl("searchlight.svm_c", [](RunConfig& c) -> double& { return c.searchlight.svm.c; });
  count("searchlight.svm_epochs", [](RunConfig& c) -> std::size_t& { return c.searchlight.svm.epochs; });

  count("lasso.epochs", [](RunConfig& c) -> std::size_t& { return c.lasso.sgd.epochs; });
  count("lasso.subjects_per_epoch", [](RunConfig& c) -> std::size_t& { return c.lasso.sgd.subjects_per_epoch; });
  count("lasso.batches_per_epoch", [](RunConfig& c) -> std::size_t& { return c.lasso.sgd.batches_per_epoch; });
  count("lasso.batch_size", [](RunConfig& c) -> std::size_t& { return c.lasso.sgd.batch_size; });
  dbl("lasso.learning_rate", [](RunConfig& c) -> double& { return c.lasso.sgd.learning_rate; });
  s["lasso.lambdas"] = [](RunConfig& c, const std::string& v) { c.lasso.lambdas = to_list("lasso.lambdas", v); };

  dbl("maps.percentile", [](RunConfig& c) -> double& { return c.maps.percentile; });
  dbl("maps.fwhm_mm", [](RunConfig& c) -> double& { return c.maps.fwhm_mm; });
  count("maps.timecourse_run", [](RunConfig& c) -> std::size_t& { return c.maps.timecourse_run; });
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string fmt_triple(const std::array<double, 3>& v) { return fmt_list({v[0], v[1], v[2]}); }

}  // namespace

void RunConfig::apply_seed(std::uint64_t master) {
  seed = master;
  phantom.seed = master;
  train.seed = master;
  searchlight.svm.seed = master;
  lasso.sgd.seed = master;
}

void RunConfig::validate() const {
  phantom.validate();
  preprocess.validate();
  if (!(preprocess.highpass_cutoff_s > 2.0 * phantom.tr_s)) {
    throw ConfigError("preprocess.highpass_cutoff_s must exceed twice the TR");
  }
  train.validate();
  if (!(lrp.epsilon >= 0.0)) throw ConfigError("lrp.epsilon must be non-negative");
  if (!(window.lo_s < window.hi_s)) throw ConfigError("lrp.window_lo_s must be below lrp.window_hi_s");
  if (!(glm.fdr_rate > 0.0 && glm.fdr_rate <= 1.0)) throw ConfigError("glm.fdr_rate must lie in (0, 1]");
  if (!(glm.p_alpha > 0.0 && glm.p_alpha <= 1.0)) throw ConfigError("glm.p_alpha must lie in (0, 1]");
  if (!(searchlight.radius_mm > 0.0)) throw ConfigError("searchlight.radius_mm must be positive");
  if (!(searchlight.svm.c > 0.0)) throw ConfigError("searchlight.svm_c must be positive");
  if (searchlight.svm.epochs == 0) throw ConfigError("searchlight.svm_epochs must be positive");
  if (lasso.sgd.subjects_per_epoch == 0) throw ConfigError("lasso.subjects_per_epoch must be positive");
  if (lasso.sgd.batches_per_epoch == 0) throw ConfigError("lasso.batches_per_epoch must be positive");
  if (lasso.sgd.batch_size == 0) throw ConfigError("lasso.batch_size must be positive");
  if (!(lasso.sgd.learning_rate > 0.0)) throw ConfigError("lasso.learning_rate must be positive");
  for (double l : lasso.lambdas) {
    if (!(l > 0.0)) throw ConfigError("lasso.lambdas must be positive");
  }
  if (!(maps.percentile >= 0.0 && maps.percentile <= 100.0)) throw ConfigError("maps.percentile must lie in [0, 100]");
  if (!(maps.fwhm_mm >= 0.0)) throw ConfigError("maps.fwhm_mm must be non-negative");
  if (maps.timecourse_run < 1) throw ConfigError("maps.timecourse_run must be at least 1");
  if (validation_subjects >= phantom.train_subjects) {
    throw ConfigError("run.validation_subjects must leave at least one training subject");
  }
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  static const auto table = setters();
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key outside a section: " + section);
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = table.find(full);
      if (it == table.end()) throw ConfigError("unknown config key: " + full);
      it->second(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_text(path)); }

std::string to_ini(const RunConfig& c) {
  std::ostringstream o;
  o << "[run]\nseed = " << c.seed << "\nvalidation_subjects = " << c.validation_subjects
    << "\ninit_restarts = " << c.init_restarts << "\n\n";
  o << "[phantom]\ngrid = " << c.phantom.grid.x << "," << c.phantom.grid.y << "," << c.phantom.grid.z << "\n";
  o << "voxel_mm = " << fmt(c.phantom.voxel_mm) << "\ntr_s = " << fmt(c.phantom.tr_s) << "\n";
  o << "amplitude = " << fmt(c.phantom.amplitude) << "\nnoise_sigma = " << fmt(c.phantom.noise_sigma) << "\n";
  o << "baseline = " << fmt(c.phantom.baseline) << "\njitter_voxels = " << c.phantom.jitter_voxels << "\n";
  o << "train_subjects = " << c.phantom.train_subjects << "\ntest_subjects = " << c.phantom.test_subjects << "\n";
  o << "runs = " << c.phantom.runs << "\n";
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    o << model::kStateNames[s] << "_center = " << fmt_triple(c.phantom.rois[s].center) << "\n";
    o << model::kStateNames[s] << "_radii = " << fmt_triple(c.phantom.rois[s].radii) << "\n";
  }
  o << "\n[preprocess]\nfwhm_mm = " << fmt(c.preprocess.fwhm_mm) << "\nhighpass_cutoff_s = "
    << fmt(c.preprocess.highpass_cutoff_s) << "\nmask_fraction = " << fmt(c.preprocess.mask_fraction) << "\n";
  o << "\n[train]\nlearning_rate = " << fmt(c.train.learning_rate) << "\nbatch_size = " << c.train.batch_size
    << "\nmax_epochs = " << c.train.max_epochs << "\nclip_threshold = " << fmt(c.train.clip_threshold)
    << "\ndropout = " << fmt_list(c.train.dropout) << "\npatience = " << c.train.patience << "\n";
  o << "\n[lrp]\nepsilon = " << fmt(c.lrp.epsilon) << "\nwindow_lo_s = " << fmt(c.window.lo_s)
    << "\nwindow_hi_s = " << fmt(c.window.hi_s) << "\n";
  o << "\n[glm]\nthreshold = " << (c.glm.threshold == GlmThreshold::fdr ? "fdr" : "p")
    << "\nfdr_rate = " << fmt(c.glm.fdr_rate) << "\np_alpha = " << fmt(c.glm.p_alpha) << "\n";
  o << "\n[searchlight]\nradius_mm = " << fmt(c.searchlight.radius_mm) << "\nsvm_c = " << fmt(c.searchlight.svm.c)
    << "\nsvm_epochs = " << c.searchlight.svm.epochs << "\n";
  o << "\n[lasso]\nepochs = " << c.lasso.sgd.epochs << "\nsubjects_per_epoch = " << c.lasso.sgd.subjects_per_epoch
    << "\nbatches_per_epoch = " << c.lasso.sgd.batches_per_epoch << "\nbatch_size = " << c.lasso.sgd.batch_size
    << "\nlearning_rate = " << fmt(c.lasso.sgd.learning_rate) << "\nlambdas = " << fmt_list(c.lasso.lambdas) << "\n";
  o << "\n[maps]\npercentile = " << fmt(c.maps.percentile) << "\nfwhm_mm = " << fmt(c.maps.fwhm_mm)
    << "\ntimecourse_run = " << c.maps.timecourse_run << "\n";
  return o.str();
}

}  // namespace deeplight
