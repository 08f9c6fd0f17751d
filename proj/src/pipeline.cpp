#include "deeplight/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "deeplight/brainmaps.hpp"
#include "deeplight/error.hpp"
#include "deeplight/io.hpp"
#include "json.hpp"

namespace deeplight::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::size_t> Study::subject_ids(bool test) const {
  std::vector<std::size_t> out;
  for (const auto& s : subjects) {
    if (s.test == test) out.push_back(s.id);
  }
  return out;
}

const SubjectData& Study::subject(std::size_t id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw InputError("no subject with id " + std::to_string(id));
}

Study from_phantom(const phantom::PhantomSpec& spec, std::vector<phantom::PhantomSubject> subjects) {
  Study st;
  st.grid = spec.grid;
  st.voxel_mm = spec.voxel_mm;
  st.tr_s = spec.tr_s;
  st.targets = phantom::target_masks(spec);
  for (auto& s : subjects) {
    SubjectData d;
    d.id = s.id;
    d.test = s.test;
    d.design = std::move(s.design);
    for (auto& r : s.runs) d.runs.push_back(std::make_shared<const Volume4D>(std::move(r)));
    st.subjects.push_back(std::move(d));
  }
  return st;
}

namespace {

std::vector<char> crop_mask(const std::vector<char>& m, const GridShape& g, const BoundingBox& box) {
  const GridShape e = box.extent();
  std::vector<char> out(e.voxels(), 0);
  for (std::size_t k = 0; k < e.z; ++k)
    for (std::size_t j = 0; j < e.y; ++j)
      for (std::size_t i = 0; i < e.x; ++i) out[e.index(i, j, k)] = m[g.index(i + box.lo[0], j + box.lo[1], k + box.lo[2])];
  return out;
}

}  // namespace

Study preprocess_study(const Study& raw, const preprocess::PreprocConfig& config) {
  config.validate();
  std::vector<const Volume4D*> all;
  for (const auto& s : raw.subjects)
    for (const auto& r : s.runs) all.push_back(r.get());
  const BrainMask mask = preprocess::compute_mask(all, config.mask_fraction);
  Study out;
  out.grid = mask.box.extent();
  out.voxel_mm = raw.voxel_mm;
  out.tr_s = raw.tr_s;
  out.box = mask.box;
  out.mask = crop_mask(mask.flagged, raw.grid, mask.box);
  for (const auto& t : raw.targets) out.targets.push_back(crop_mask(t, raw.grid, mask.box));
  for (const auto& s : raw.subjects) {
    SubjectData d;
    d.id = s.id;
    d.test = s.test;
    d.design = s.design;
    for (const auto& r : s.runs) {
      d.runs.push_back(std::make_shared<const Volume4D>(crop(preprocess::preprocess_run(*r, config), mask.box)));
    }
    out.subjects.push_back(std::move(d));
  }
  return out;
}

train::Dataset make_dataset(const Study& study, const std::vector<std::size_t>& subject_ids) {
  train::Dataset d;
  d.tr_s = study.tr_s;
  for (std::size_t id : subject_ids) {
    const auto& s = study.subject(id);
    if (s.runs.size() != s.design.runs.size()) throw InputError("subject runs and design disagree");
    for (std::size_t r = 0; r < s.runs.size(); ++r) {
      const std::size_t run_index = d.runs.size();
      d.runs.push_back(s.runs[r]);
      const auto& rd = s.design.runs[r];
      if (rd.timepoints() != s.runs[r]->timepoints) throw InputError("run length does not match its design");
      for (std::size_t t = 0; t < rd.timepoints(); ++t) {
        if (rd.labels[t] < 0) continue;
        d.samples.push_back({run_index, t, rd.labels[t], id, rd.block_offset[t], rd.block_index[t]});
      }
    }
  }
  return d;
}

std::vector<char> timecourse_blocks(const Study& study, const train::Dataset& data, std::size_t run) {
  std::vector<char> out(data.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    if (s.label < 0) continue;
    const auto& subj = study.subject(s.subject);
    if (run >= subj.runs.size() || data.runs[s.run] != subj.runs[run]) continue;
    const auto& rd = subj.design.runs[run];
    int ordinal = 0, first = -1;
    for (const auto& b : rd.blocks) {
      if (!b.is_task()) continue;
      if (b.state == s.label) {
        first = ordinal;
        break;
      }
      ++ordinal;
    }
    out[i] = s.block_index == first ? 1 : 0;
  }
  return out;
}

baselines::SampleMatrix run_samples(const Volume4D& run, const RunDesign& design) {
  if (design.timepoints() != run.timepoints) throw InputError("run length does not match its design");
  baselines::SampleMatrix m;
  m.cols = run.shape.voxels();
  for (std::size_t t = 0; t < run.timepoints; ++t) {
    if (design.labels[t] >= 0) m.append(run.frame(t), design.labels[t]);
  }
  return m;
}

Fit fit_decoder(const train::Dataset& data, const train::Dataset& validation, const model::ArchSpec& arch,
                std::uint64_t seed, const train::TrainConfig& config, std::size_t restarts) {
  const double chance = 1.0 / static_cast<double>(arch.classes);
  Fit fit;
  for (std::size_t attempt = 0;; ++attempt) {
    fit.attempt = attempt;
    fit.init_seed = derive_seed(seed, seed_tag::init, attempt);
    fit.result = train::train(data, validation, model::init_params(arch, fit.init_seed), config);
    const auto& rep = fit.result.report;
    if (validation.empty() || attempt >= restarts || rep.best_epoch == 0) break;
    if (rep.epochs[rep.best_epoch - 1].val_acc > chance + 0.1) break;
  }
  return fit;
}

std::vector<Attribution> attribute(const model::DeepLightParams& params, const train::Dataset& data,
                                   const std::vector<std::size_t>& indices, const lrp::LrpConfig& config) {
  std::vector<Attribution> out(indices.size());
  const double voxel = data.runs.empty() ? 2.0 : data.runs.front()->voxel_mm;
#pragma omp parallel for schedule(dynamic, 2)
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    out[k].sample = i;
    out[k].relevance = lrp::lrp_decompose(params, data.sequence(i), static_cast<std::size_t>(data.samples[i].label),
                                          config, voxel);
  }
  return out;
}

std::vector<Volume3D> deeplight_group_maps(const train::Dataset& data, const std::vector<Attribution>& attributions,
                                           double fwhm_mm) {
  std::vector<Volume3D> out(model::kNumStates);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    std::map<std::size_t, std::vector<Volume3D>> by_subject;
    for (const auto& a : attributions) {
      if (a.relevance.status != lrp::Status::decomposed || a.relevance.target != s) continue;
      by_subject[data.samples[a.sample].subject].push_back(a.relevance.relevance);
    }
    std::vector<Volume3D> subject_maps;
    for (auto& [id, vols] : by_subject) subject_maps.push_back(*maps::aggregate_subject(vols, fwhm_mm));
    if (!subject_maps.empty()) out[s] = maps::aggregate_group(subject_maps);
  }
  return out;
}

baselines::Matrix subject_series(const SubjectData& subject) {
  if (subject.runs.empty()) throw InputError("subject " + std::to_string(subject.id) + " has no runs");
  const std::size_t n = subject.runs.front()->shape.voxels();
  std::size_t t_total = 0;
  for (const auto& r : subject.runs) {
    if (r->shape.voxels() != n) throw InputError("runs of a subject differ in grid");
    t_total += r->timepoints;
  }
  baselines::Matrix y(t_total, n);
  std::size_t row = 0;
  for (const auto& r : subject.runs) {
    for (std::size_t t = 0; t < r->timepoints; ++t, ++row) {
      const float* f = r->frame(t);
      std::copy(f, f + n, y.data.begin() + static_cast<std::ptrdiff_t>(row * n));
    }
  }
  return y;
}

GlmGroup glm_group(const Study& study, const std::vector<std::size_t>& subject_ids) {
  if (subject_ids.empty()) throw InputError("GLM needs at least one subject");
  GlmGroup out;
  out.effects.assign(model::kNumStates, {});
  out.z.assign(model::kNumStates, {});
  for (std::size_t id : subject_ids) {
    const auto& s = study.subject(id);
    const auto x = baselines::make_design(s.design);
    const auto fit = baselines::glm_fit(subject_series(s), x);
    for (std::size_t st = 0; st < model::kNumStates; ++st) {
      auto c = baselines::glm_contrast(fit, baselines::state_contrast(st, x));
      out.effects[st].push_back(std::move(c.effect));
      out.z[st].push_back(std::move(c.z));
    }
    out.betas.push_back(fit.beta);
  }
  if (subject_ids.size() >= 2) {
    for (std::size_t st = 0; st < model::kNumStates; ++st) out.group.push_back(baselines::second_level(out.effects[st]));
  }
  return out;
}

baselines::SampleMatrix beta_samples(const GlmGroup& glm) {
  baselines::SampleMatrix m;
  if (glm.betas.empty()) return m;
  m.cols = glm.betas.front().cols;
  for (const auto& b : glm.betas) {
    std::vector<float> row(b.cols);
    for (std::size_t st = 0; st < model::kNumStates; ++st) {
      for (std::size_t v = 0; v < b.cols; ++v) row[v] = static_cast<float>(b(st, v));
      m.append(row.data(), static_cast<int>(st));
    }
  }
  return m;
}

baselines::SampleMatrix subject_samples(const Study& study, std::size_t subject_id) {
  const auto& s = study.subject(subject_id);
  baselines::SampleMatrix m;
  m.cols = study.grid.voxels();
  for (std::size_t r = 0; r < s.runs.size(); ++r) {
    const auto part = run_samples(*s.runs[r], s.design.runs.at(r));
    m.data.insert(m.data.end(), part.data.begin(), part.data.end());
    m.labels.insert(m.labels.end(), part.labels.begin(), part.labels.end());
    m.rows += part.rows;
  }
  return m;
}

LassoSearch lasso_group(const std::vector<baselines::SampleMatrix>& subjects, const baselines::SampleMatrix& selection,
                        const std::vector<double>& lambdas, const baselines::LassoSgdOptions& options,
                        std::size_t final_epochs) {
  if (lambdas.empty()) throw ConfigError("lasso.lambdas must not be empty");
  LassoSearch out;
  out.lambdas = lambdas;
  out.accuracies.assign(lambdas.size(), 0.0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    out.accuracies[i] = baselines::accuracy(baselines::lasso_fit_sgd(subjects, lambdas[i], options), selection);
  }
  out.best = static_cast<std::size_t>(std::max_element(out.accuracies.begin(), out.accuracies.end()) -
                                      out.accuracies.begin());
  auto final_opt = options;
  final_opt.epochs = final_epochs;
  out.model = baselines::lasso_fit_sgd(subjects, lambdas[out.best], final_opt);
  return out;
}

std::vector<MapScore> score_masks(const Study& study, const std::vector<std::vector<char>>& keep) {
  if (keep.size() != study.targets.size()) throw InputError("need one map per target");
  std::vector<MapScore> out;
  for (std::size_t st = 0; st < keep.size(); ++st) {
    const auto f = maps::f1_similarity(keep[st], study.targets[st]);
    MapScore sc;
    sc.state = static_cast<int>(st);
    sc.count = static_cast<std::size_t>(std::count(keep[st].begin(), keep[st].end(), 1));
    sc.precision = f.precision;
    sc.recall = f.recall;
    sc.f1 = f.f1;
    sc.empty = f.empty;
    out.push_back(sc);
  }
  return out;
}

std::vector<MapScore> score_maps(const Study& study, const std::vector<Volume3D>& group, double q) {
  if (group.size() != study.targets.size()) throw InputError("need one map per target");
  const std::vector<char>* within = study.mask.empty() ? nullptr : &study.mask;
  std::vector<std::vector<char>> keep;
  std::vector<double> thresholds;
  for (const auto& m : group) {
    if (m.data.empty()) {
      keep.emplace_back(study.grid.voxels(), 0);
      thresholds.push_back(0.0);
      continue;
    }
    const auto t = maps::threshold_percentile(m.data, q, within);
    keep.push_back(t.keep);
    thresholds.push_back(t.threshold);
  }
  auto out = score_masks(study, keep);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].threshold = thresholds[i];
  return out;
}

std::string design_json(const BlockDesign& design) {
  json runs = json::array();
  for (const auto& r : design.runs) {
    json blocks = json::array();
    for (const auto& b : r.blocks) blocks.push_back({{"state", b.state}, {"onset_s", b.onset_s}, {"duration_s", b.duration_s}});
    runs.push_back({{"tr_s", r.tr_s}, {"duration_s", r.duration_s}, {"blocks", blocks}, {"labels", r.labels},
                    {"block_offset", r.block_offset}});
  }
  return json{{"runs", runs}}.dump(1);
}

BlockDesign design_from_json(const std::string& text) {
  BlockDesign d;
  try {
    const json j = json::parse(text);
    for (const auto& r : j.at("runs")) {
      std::vector<Block> blocks;
      for (const auto& b : r.at("blocks")) {
        blocks.push_back({b.at("state").get<int>(), b.at("onset_s").get<double>(), b.at("duration_s").get<double>()});
      }
      d.runs.push_back(annotate_run(std::move(blocks), r.at("tr_s").get<double>(), r.at("duration_s").get<double>()));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed design: ") + e.what());
  }
  return d;
}

namespace {

std::string subject_dir(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%02zu", id);
  return buf;
}

Volume3D mask_volume(const std::vector<char>& m, const GridShape& g, double voxel) {
  Volume3D v(g, voxel);
  for (std::size_t i = 0; i < m.size(); ++i) v.data[i] = m[i] ? 1.0 : 0.0;
  return v;
}

std::vector<char> volume_mask(const Volume3D& v) {
  std::vector<char> m(v.data.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = v.data[i] > 0.5 ? 1 : 0;
  return m;
}

}  // namespace

void save_study(const fs::path& dir, const Study& study) {
  fs::create_directories(dir);
  json j;
  j["format"] = "deeplight-study";
  j["grid"] = {study.grid.x, study.grid.y, study.grid.z};
  j["voxel_mm"] = study.voxel_mm;
  j["tr_s"] = study.tr_s;
  if (study.box) {
    j["box"] = {{"lo", study.box->lo}, {"hi", study.box->hi}};
  } else {
    j["box"] = nullptr;
  }
  if (!study.mask.empty()) {
    io::write_vol1(dir / "mask.vol1", mask_volume(study.mask, study.grid, study.voxel_mm));
    j["mask"] = "mask.vol1";
  } else {
    j["mask"] = nullptr;
  }
  json targets = json::array();
  for (std::size_t s = 0; s < study.targets.size(); ++s) {
    const std::string rel = std::string("targets/") + model::kStateNames[s] + ".vol1";
    io::write_vol1(dir / rel, mask_volume(study.targets[s], study.grid, study.voxel_mm));
    targets.push_back(rel);
  }
  j["targets"] = targets;
  json subjects = json::array();
  for (const auto& s : study.subjects) {
    const std::string sd = subject_dir(s.id);
    json runs = json::array();
    for (std::size_t r = 0; r < s.runs.size(); ++r) {
      const std::string rel = sd + "/run-" + std::to_string(r + 1) + ".vol1";
      io::write_vol1(dir / rel, *s.runs[r]);
      runs.push_back(rel);
    }
    io::write_text(dir / sd / "design.json", design_json(s.design) + "\n");
    subjects.push_back({{"id", s.id}, {"test", s.test}, {"design", sd + "/design.json"}, {"runs", runs}});
  }
  j["subjects"] = subjects;
  io::write_text(dir / "dataset.json", j.dump(1) + "\n");
}

Study load_study(const fs::path& dir) {
  const std::string text = io::read_text(dir / "dataset.json");
  Study st;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "deeplight-study") throw InputError("not a study manifest: " + (dir / "dataset.json").string());
    const auto g = j.at("grid");
    st.grid = {g.at(0).get<std::size_t>(), g.at(1).get<std::size_t>(), g.at(2).get<std::size_t>()};
    st.voxel_mm = j.at("voxel_mm").get<double>();
    st.tr_s = j.at("tr_s").get<double>();
    if (!j.at("box").is_null()) {
      BoundingBox b;
      b.lo = j.at("box").at("lo").get<std::array<std::size_t, 3>>();
      b.hi = j.at("box").at("hi").get<std::array<std::size_t, 3>>();
      st.box = b;
    }
    if (!j.at("mask").is_null()) st.mask = volume_mask(io::read_vol1_volume(dir / j.at("mask").get<std::string>()));
    for (const auto& t : j.at("targets")) st.targets.push_back(volume_mask(io::read_vol1_volume(dir / t.get<std::string>())));
    for (const auto& s : j.at("subjects")) {
      SubjectData d;
      d.id = s.at("id").get<std::size_t>();
      d.test = s.at("test").get<bool>();
      d.design = design_from_json(io::read_text(dir / s.at("design").get<std::string>()));
      for (const auto& r : s.at("runs")) {
        auto run = io::read_vol1(dir / r.get<std::string>());
        if (!(run.shape == st.grid)) throw InputError("run grid does not match the manifest: " + r.get<std::string>());
        d.runs.push_back(std::make_shared<const Volume4D>(std::move(run)));
      }
      st.subjects.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed study manifest " + (dir / "dataset.json").string() + ": " + e.what());
  }
  return st;
}

}  // namespace deeplight::pipeline
