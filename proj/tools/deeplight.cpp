// deeplight: command line front end for the decoding pipeline.

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deeplight/brainmaps.hpp"
#include "deeplight/config.hpp"
#include "deeplight/error.hpp"
#include "deeplight/io.hpp"
#include "deeplight/lrp.hpp"
#include "deeplight/phantom.hpp"
#include "deeplight/pipeline.hpp"
#include "deeplight/training.hpp"

namespace fs = std::filesystem;
using namespace deeplight;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.apply_seed(*c.seed);
  cfg.validate();
  return cfg;
}

void set_threads(int flag) {
  int n = flag;
  if (const char* env = std::getenv("DEEPLIGHT_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("invalid DEEPLIGHT_THREADS: '") + env + "'");
    n = static_cast<int>(v);
  }
  if (n > 0) omp_set_num_threads(n);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string sub_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sub-%02zu", id);
  return buf;
}

/// 1-based run number of a sample within its subject.
std::size_t run_number(const pipeline::Study& st, const train::Dataset& ds, const train::Sample& s) {
  const auto& runs = st.subject(s.subject).runs;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r] == ds.runs[s.run]) return r + 1;
  }
  return 0;
}

std::vector<std::size_t> training_ids(const pipeline::Study& st, std::size_t validation, std::vector<std::size_t>* val) {
  auto ids = st.subject_ids(false);
  if (ids.size() <= validation) {
    throw InputError("need more than " + std::to_string(validation) + " training subjects");
  }
  val->assign(ids.end() - static_cast<std::ptrdiff_t>(validation), ids.end());
  ids.resize(ids.size() - validation);
  return ids;
}

std::vector<std::size_t> test_ids(const pipeline::Study& st) {
  auto ids = st.subject_ids(true);
  if (ids.empty()) throw InputError("the study has no test subjects");
  return ids;
}

Volume3D mask_volume(const std::vector<char>& m, const pipeline::Study& st) {
  Volume3D v(st.grid, st.voxel_mm);
  for (std::size_t i = 0; i < m.size(); ++i) v.data[i] = m[i] ? 1.0 : 0.0;
  return v;
}

Volume3D to_volume(const std::vector<double>& values, const pipeline::Study& st) {
  Volume3D v(st.grid, st.voxel_mm);
  if (values.size() != v.data.size()) throw InputError("map does not match the study grid");
  v.data = values;
  return v;
}

void write_scores(const fs::path& path, const std::string& method, const std::vector<pipeline::MapScore>& scores) {
  std::ostringstream o;
  o << "method,state,threshold,count,precision,recall,f1,empty\n";
  for (const auto& s : scores) {
    o << method << "," << model::kStateNames[static_cast<std::size_t>(s.state)] << "," << num(s.threshold) << ","
      << s.count << "," << num(s.precision) << "," << num(s.recall) << "," << num(s.f1) << "," << (s.empty ? 1 : 0)
      << "\n";
  }
  io::write_text(path, o.str());
}

void write_timecourse(const fs::path& path, const std::vector<maps::TimePoint>& tps, double tr_s) {
  std::ostringstream o;
  o << "offset,time_s,samples,skipped";
  for (const char* name : model::kStateNames) o << ",f1_" << name;
  o << ",mean_f1\n";
  for (const auto& p : tps) {
    o << p.offset << "," << num(p.offset * tr_s) << "," << p.samples << "," << (p.skipped ? 1 : 0);
    for (std::size_t s = 0; s < model::kNumStates; ++s) {
      o << ",";
      if (s < p.state_f1.size() && p.state_f1[s] == p.state_f1[s]) o << num(p.state_f1[s]);
    }
    o << "," << num(p.mean_f1) << "\n";
  }
  io::write_text(path, o.str());
}

// ---------------------------------------------------------------- commands

void cmd_phantom(const Common& c, const fs::path& out) {
  const auto cfg = resolve(c);
  const auto study = pipeline::from_phantom(cfg.phantom, phantom::generate_phantom(cfg.phantom));
  pipeline::save_study(out, study);
  io::write_text(out / "config.ini", to_ini(cfg));
}

void cmd_preprocess(const Common& c, const fs::path& in, const fs::path& out) {
  const auto cfg = resolve(c);
  const auto raw = pipeline::load_study(in);
  pipeline::save_study(out, pipeline::preprocess_study(raw, cfg.preprocess));
}

void cmd_train(const Common& c, const fs::path& data, const fs::path& out, std::optional<std::size_t> epochs) {
  auto cfg = resolve(c);
  if (epochs) cfg.train.max_epochs = *epochs;
  const auto st = pipeline::load_study(data);
  std::vector<std::size_t> val;
  const auto ids = training_ids(st, cfg.validation_subjects, &val);
  const auto train_set = pipeline::make_dataset(st, ids);
  const auto val_set = pipeline::make_dataset(st, val);
  const auto arch = model::ArchSpec::deeplight(st.grid.x, st.grid.y);
  const auto fit = pipeline::fit_decoder(train_set, val_set, arch, cfg.seed, cfg.train, cfg.init_restarts);
  const auto& rep = fit.result.report;
  fs::create_directories(out);
  io::write_checkpoint(out / "model.dlp", fit.result.params);
  std::ostringstream csv;
  train::write_report_csv(csv, rep);
  io::write_text(out / "train_report.csv", csv.str());
  nlohmann::json summary{{"attempt", fit.attempt},
                         {"init_seed", fit.init_seed},
                         {"best_epoch", rep.best_epoch},
                         {"stopping_epoch", rep.stopping_epoch},
                         {"best_val_acc", rep.best_epoch ? nlohmann::json(rep.epochs[rep.best_epoch - 1].val_acc)
                                                         : nlohmann::json(nullptr)}};
  io::write_text(out / "train_summary.json", summary.dump(1) + "\n");
}

void cmd_evaluate(const Common& c, const fs::path& data, const fs::path& model_path, const fs::path& out) {
  const auto cfg = resolve(c);
  io::require_file(model_path);
  const auto st = pipeline::load_study(data);
  const auto params = io::read_checkpoint(model_path);
  const auto ds = pipeline::make_dataset(st, test_ids(st));
  const auto ev = train::evaluate(params, ds);
  fs::create_directories(out);

  std::ostringstream pred;
  pred << "sample,subject,run,tr,label,predicted,block_offset,window\n";
  std::size_t win_total = 0, win_correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    const bool w = lrp::in_window(s.block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s);
    if (w) {
      ++win_total;
      win_correct += ev.predicted[i] == s.label ? 1 : 0;
    }
    pred << i << "," << s.subject << "," << run_number(st, ds, s) << "," << s.tr << "," << s.label << "," << ev.predicted[i] << ","
         << s.block_offset << "," << (w ? 1 : 0) << "\n";
  }
  io::write_text(out / "predictions.csv", pred.str());

  std::ostringstream conf;
  conf << "true";
  for (const char* n : model::kStateNames) conf << "," << n;
  conf << "\n";
  for (std::size_t t = 0; t < model::kNumStates; ++t) {
    conf << model::kStateNames[t];
    for (std::size_t p = 0; p < model::kNumStates; ++p) conf << "," << ev.confusion[t][p];
    conf << "\n";
  }
  io::write_text(out / "confusion.csv", conf.str());

  std::ostringstream bt;
  bt << "offset,time_s,correct,total,accuracy\n";
  for (const auto& o : train::accuracy_by_block_time(ev, ds)) {
    bt << o.offset << "," << num(o.offset * ds.tr_s) << "," << o.correct << "," << o.total << "," << num(o.accuracy())
       << "\n";
  }
  io::write_text(out / "accuracy_by_time.csv", bt.str());

  const double win_acc = win_total ? static_cast<double>(win_correct) / static_cast<double>(win_total) : 0.0;
  std::ostringstream sum;
  sum << "metric,value\naccuracy," << num(ev.accuracy) << "\nloss," << num(ev.loss) << "\nsamples," << ds.size()
      << "\nwindow_accuracy," << num(win_acc) << "\nwindow_samples," << win_total << "\n";
  io::write_text(out / "summary.csv", sum.str());
  std::printf("accuracy %.4f, window accuracy %.4f (%zu samples)\n", ev.accuracy, win_acc, win_total);
}

void cmd_attribute(const Common& c, const fs::path& data, const fs::path& model_path, const fs::path& out,
                   bool all) {
  const auto cfg = resolve(c);
  io::require_file(model_path);
  const auto st = pipeline::load_study(data);
  const auto params = io::read_checkpoint(model_path);
  const auto ds = pipeline::make_dataset(st, test_ids(st));
  const auto course = pipeline::timecourse_blocks(st, ds, cfg.maps.timecourse_run - 1);
  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (all || course[i] || lrp::in_window(s.block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s)) {
      indices.push_back(i);
    }
  }
  const auto attr = pipeline::attribute(params, ds, indices, cfg.lrp);
  fs::create_directories(out / "relevance");
  fs::create_directories(out / "timecourse");
  std::ostringstream idx;
  idx << "file,sample,subject,run,tr,state,block_offset,window,timecourse\n";
  std::vector<pipeline::Attribution> window_attr;
  std::size_t written = 0;
  for (const auto& a : attr) {
    if (a.relevance.status != lrp::Status::decomposed) continue;
    const auto& s = ds.samples[a.sample];
    const std::size_t run = run_number(st, ds, s);
    char name[96];
    const bool w = lrp::in_window(s.block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s);
    std::snprintf(name, sizeof name, "%s/%s_run-%zu_tr-%04zu.vol1", w || all ? "relevance" : "timecourse",
                  sub_name(s.subject).c_str(), run, s.tr);
    io::write_vol1(out / name, a.relevance.relevance);
    std::ostringstream side;
    side << "{\"sample\": " << a.sample << ", \"subject\": " << s.subject << ", \"run\": " << run
         << ", \"tr\": " << s.tr << ", \"state\": \"" << model::kStateNames[static_cast<std::size_t>(s.label)]
         << "\", \"fa\": " << num(a.relevance.fa) << ", \"correct\": " << (a.relevance.correct ? "true" : "false")
         << ", \"nonpositive_evidence\": " << (a.relevance.nonpositive_evidence ? "true" : "false") << "}\n";
    io::write_text(out / fs::path(name).replace_extension(".json"), side.str());
    idx << name << "," << a.sample << "," << s.subject << "," << run << "," << s.tr << ","
        << model::kStateNames[static_cast<std::size_t>(s.label)] << "," << s.block_offset << "," << (w ? 1 : 0) << ","
        << static_cast<int>(course[a.sample]) << "\n";
    if (w) window_attr.push_back(a);
    ++written;
  }
  io::write_text(out / "attributions.csv", idx.str());
  const auto group = pipeline::deeplight_group_maps(ds, window_attr, cfg.maps.fwhm_mm);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    if (!group[s].data.empty()) io::write_vol1(out / (std::string("group_") + model::kStateNames[s] + ".vol1"), group[s]);
  }
  std::printf("%zu of %zu samples decomposed\n", written, indices.size());
}

struct RelevanceRecord {
  std::string file;
  std::size_t subject = 0;
  int state = -1;
  int offset = -1;
  bool window = false;
  bool timecourse = false;
};

std::vector<RelevanceRecord> read_index(const fs::path& dir) {
  std::istringstream in(io::read_text(dir / "attributions.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<RelevanceRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 9) throw InputError("malformed attribution index line: " + line);
    RelevanceRecord r;
    r.file = f[0];
    r.subject = std::stoul(f[2]);
    for (std::size_t s = 0; s < model::kNumStates; ++s) {
      if (f[5] == model::kStateNames[s]) r.state = static_cast<int>(s);
    }
    if (r.state < 0) throw InputError("unknown state in attribution index: " + f[5]);
    r.offset = std::stoi(f[6]);
    r.window = f[7] == "1";
    r.timecourse = f[8] == "1";
    out.push_back(r);
  }
  return out;
}

void cmd_maps(const Common& c, const fs::path& data, const fs::path& in, const fs::path& out) {
  const auto cfg = resolve(c);
  const auto st = pipeline::load_study(data);
  const auto records = read_index(in);
  std::vector<maps::TimedVolume> timed;
  std::vector<std::map<std::size_t, std::vector<Volume3D>>> per_state(model::kNumStates);
  for (const auto& r : records) {
    auto v = io::read_vol1_volume(in / r.file);
    if (!(v.shape == st.grid)) throw InputError("relevance volume does not match the study grid: " + r.file);
    if (r.window) per_state[static_cast<std::size_t>(r.state)][r.subject].push_back(v);
    if (r.timecourse) timed.push_back({r.subject, r.state, r.offset, std::move(v)});
  }
  std::vector<Volume3D> group(model::kNumStates);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    std::vector<Volume3D> subj;
    for (auto& [id, vols] : per_state[s]) subj.push_back(*maps::aggregate_subject(vols, cfg.maps.fwhm_mm));
    if (!subj.empty()) group[s] = maps::aggregate_group(subj);
  }
  fs::create_directories(out);
  const auto scores = pipeline::score_maps(st, group, cfg.maps.percentile);
  write_scores(out / "f1.csv", "deeplight", scores);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    if (group[s].data.empty()) continue;
    const auto t = maps::threshold_percentile(group[s].data, cfg.maps.percentile, st.mask.empty() ? nullptr : &st.mask);
    io::write_vol1(out / (std::string("group_") + model::kStateNames[s] + ".vol1"), group[s]);
    io::write_vol1(out / (std::string("thresholded_") + model::kStateNames[s] + ".vol1"), mask_volume(t.keep, st));
  }
  const auto tps = maps::time_resolved_maps(timed, st.targets, cfg.maps.percentile, cfg.maps.fwhm_mm);
  write_timecourse(out / "timecourse.csv", tps, st.tr_s);
  for (const auto& s : scores) {
    std::printf("%s f1 %.3f\n", model::kStateNames[static_cast<std::size_t>(s.state)], s.f1);
  }
}

void cmd_glm(const Common& c, const fs::path& data, const fs::path& out, const std::string& rule) {
  auto cfg = resolve(c);
  if (rule == "fdr") {
    cfg.glm.threshold = GlmThreshold::fdr;
  } else if (rule == "p") {
    cfg.glm.threshold = GlmThreshold::p;
  } else if (!rule.empty()) {
    throw ConfigError("invalid value for --threshold: '" + rule + "'");
  }
  const auto st = pipeline::load_study(data);
  const auto ids = test_ids(st);
  const auto glm = pipeline::glm_group(st, ids);
  fs::create_directories(out);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      io::write_vol1(out / (sub_name(ids[i]) + "_z_" + model::kStateNames[s] + ".vol1"), to_volume(glm.z[s][i], st));
    }
  }
  if (glm.group.empty()) throw InputError("group GLM needs at least two test subjects");
  std::vector<std::vector<char>> keep;
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    io::write_vol1(out / (std::string("group_t_") + model::kStateNames[s] + ".vol1"), to_volume(glm.group[s].t, st));
    io::write_vol1(out / (std::string("group_p_") + model::kStateNames[s] + ".vol1"), to_volume(glm.group[s].p, st));
    auto t = cfg.glm.threshold == GlmThreshold::fdr ? maps::threshold_fdr(glm.group[s].p, cfg.glm.fdr_rate)
                                                   : maps::threshold_p(glm.group[s].p, cfg.glm.p_alpha);
    if (!st.mask.empty()) {
      for (std::size_t v = 0; v < t.keep.size(); ++v) t.keep[v] = t.keep[v] && st.mask[v];
    }
    io::write_vol1(out / (std::string("thresholded_") + model::kStateNames[s] + ".vol1"), mask_volume(t.keep, st));
    keep.push_back(std::move(t.keep));
  }
  write_scores(out / "f1.csv", "glm", pipeline::score_masks(st, keep));
}

void cmd_searchlight(const Common& c, const fs::path& data, const fs::path& out) {
  const auto cfg = resolve(c);
  const auto st = pipeline::load_study(data);
  const auto train_b = pipeline::beta_samples(pipeline::glm_group(st, st.subject_ids(false)));
  const auto test_b = pipeline::beta_samples(pipeline::glm_group(st, test_ids(st)));
  const std::vector<char> mask = st.mask.empty() ? std::vector<char>(st.grid.voxels(), 1) : st.mask;
  const auto sl = baselines::searchlight(train_b, test_b, st.grid, mask, st.voxel_mm, cfg.searchlight);
  fs::create_directories(out);
  io::write_vol1(out / "accuracy.vol1", sl.accuracy);
  for (std::size_t s = 0; s < sl.state_accuracy.size(); ++s) {
    io::write_vol1(out / (std::string("accuracy_") + model::kStateNames[s] + ".vol1"), sl.state_accuracy[s]);
  }
  const auto peak = static_cast<std::size_t>(std::max_element(sl.accuracy.data.begin(), sl.accuracy.data.end()) -
                                             sl.accuracy.data.begin());
  std::ostringstream sum;
  sum << "metric,value\npeak_accuracy," << num(sl.accuracy.data[peak]) << "\npeak_x," << peak % st.grid.x
      << "\npeak_y," << (peak / st.grid.x) % st.grid.y << "\npeak_z," << peak / (st.grid.x * st.grid.y) << "\n";
  io::write_text(out / "summary.csv", sum.str());
  write_scores(out / "f1.csv", "searchlight", pipeline::score_maps(st, sl.state_accuracy, cfg.maps.percentile));
  std::printf("peak accuracy %.4f\n", sl.accuracy.data[peak]);
}

void cmd_lasso(const Common& c, const fs::path& data, const fs::path& out, std::size_t final_epochs) {
  const auto cfg = resolve(c);
  const auto st = pipeline::load_study(data);
  std::vector<baselines::SampleMatrix> subjects;
  for (std::size_t id : st.subject_ids(false)) subjects.push_back(pipeline::subject_samples(st, id));
  baselines::SampleMatrix test;
  test.cols = st.grid.voxels();
  std::vector<std::size_t> row_subject;
  for (std::size_t id : test_ids(st)) {
    const auto m = pipeline::subject_samples(st, id);
    test.data.insert(test.data.end(), m.data.begin(), m.data.end());
    test.labels.insert(test.labels.end(), m.labels.begin(), m.labels.end());
    test.rows += m.rows;
    row_subject.insert(row_subject.end(), m.rows, id);
  }
  const auto search = pipeline::lasso_group(subjects, test, cfg.lasso.lambdas, cfg.lasso.sgd, final_epochs);
  fs::create_directories(out);
  std::ostringstream grid;
  grid << "lambda,accuracy,selected\n";
  for (std::size_t i = 0; i < search.lambdas.size(); ++i) {
    grid << num(search.lambdas[i]) << "," << num(search.accuracies[i]) << "," << (i == search.best ? 1 : 0) << "\n";
  }
  io::write_text(out / "lambda_grid.csv", grid.str());
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    io::write_vol1(out / (std::string("coef_") + model::kStateNames[s] + ".vol1"), to_volume(search.model.coef[s], st));
  }

  // Attribution maps: sample times coefficients of its state.
  const auto ds = pipeline::make_dataset(st, test_ids(st));
  const auto course = pipeline::timecourse_blocks(st, ds, cfg.maps.timecourse_run - 1);
  std::vector<maps::TimedVolume> timed;
  std::vector<std::map<std::size_t, std::vector<Volume3D>>> per_state(model::kNumStates);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    auto v = maps::coefficient_attribution(ds.volume(i), search.model.coef[static_cast<std::size_t>(s.label)]);
    if (lrp::in_window(s.block_offset, ds.tr_s, cfg.window.lo_s, cfg.window.hi_s)) {
      per_state[static_cast<std::size_t>(s.label)][s.subject].push_back(v);
    }
    if (course[i]) timed.push_back({s.subject, s.label, s.block_offset, std::move(v)});
  }
  std::vector<Volume3D> group(model::kNumStates);
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    std::vector<Volume3D> subj;
    for (auto& [id, vols] : per_state[s]) subj.push_back(*maps::aggregate_subject(vols, cfg.maps.fwhm_mm));
    if (!subj.empty()) group[s] = maps::aggregate_group(subj);
  }
  write_scores(out / "f1.csv", "lasso", pipeline::score_maps(st, group, cfg.maps.percentile));
  write_timecourse(out / "timecourse.csv",
                   maps::time_resolved_maps(timed, st.targets, cfg.maps.percentile, cfg.maps.fwhm_mm), st.tr_s);
  const double acc = baselines::accuracy(search.model, test);
  std::ostringstream sum;
  sum << "metric,value\nlambda," << num(search.model.lambda) << "\naccuracy," << num(acc) << "\n";
  for (std::size_t s = 0; s < model::kNumStates; ++s) {
    const auto& w = search.model.coef[s];
    sum << "nonzero_" << model::kStateNames[s] << "," << std::count_if(w.begin(), w.end(), [](double v) { return v != 0.0; })
        << "\n";
  }
  io::write_text(out / "summary.csv", sum.str());
  std::printf("lambda %g, accuracy %.4f\n", search.model.lambda, acc);
}

void cmd_report(const std::vector<std::string>& inputs, const fs::path& out) {
  fs::create_directories(out);
  std::ostringstream index;
  index << "source,file,kind\n";
  for (const auto& in_str : inputs) {
    const fs::path in(in_str);
    if (!fs::is_directory(in)) throw InputError("missing directory: " + in.string());
    const std::string tag = in.filename().empty() ? in.parent_path().filename().string() : in.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (f.extension() == ".csv") {
        const std::string name = tag + "_" + f.filename().string();
        fs::copy_file(f, out / name, fs::copy_options::overwrite_existing);
        index << tag << "," << name << ",csv\n";
      } else if (f.extension() == ".vol1") {
        const auto run = io::read_vol1(f);
        if (run.timepoints != 1) continue;
        const std::string name = tag + "_" + f.stem().string() + ".pgm";
        io::write_pgm_montage(out / name, run.volume(0));
        index << tag << "," << name << ",heatmap\n";
      }
    }
  }
  io::write_text(out / "index.csv", index.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DeepLight: slice-sequence decoding of volumetric brain data with relevance maps"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "INI run configuration");
    sub->add_option("--seed", common.seed, "master seed (overrides [run] seed)");
    sub->add_option("--threads", common.threads, "worker threads (default: all cores)")->check(CLI::PositiveNumber);
  };
  std::string data, out, model_path, in, rule;
  std::vector<std::string> inputs;
  std::optional<std::size_t> epochs;
  std::size_t final_epochs = 200;
  bool all = false;

  auto* ph = app.add_subcommand("phantom", "generate a synthetic study");
  add_common(ph);
  ph->add_option("--out", out, "output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "smooth, detrend, highpass and crop a study");
  add_common(pre);
  pre->add_option("--in", in, "raw study directory")->required();
  pre->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train the decoder on the training subjects");
  add_common(tr);
  tr->add_option("--data", data, "preprocessed study directory")->required();
  tr->add_option("--out", out, "output directory")->required();
  tr->add_option("--epochs", epochs, "override [train] max_epochs");

  auto* ev = app.add_subcommand("evaluate", "decode the test subjects");
  add_common(ev);
  ev->add_option("--data", data, "preprocessed study directory")->required();
  ev->add_option("--model", model_path, "checkpoint")->required();
  ev->add_option("--out", out, "output directory")->required();

  auto* at = app.add_subcommand("attribute", "relevance maps for correctly decoded test samples");
  add_common(at);
  at->add_option("--data", data, "preprocessed study directory")->required();
  at->add_option("--model", model_path, "checkpoint")->required();
  at->add_option("--out", out, "output directory")->required();
  at->add_flag("--all", all, "decompose every labeled test TR, not just the window");

  auto* mp = app.add_subcommand("maps", "group maps, thresholds and F1 scores from relevance volumes");
  add_common(mp);
  mp->add_option("--data", data, "preprocessed study directory")->required();
  mp->add_option("--in", in, "attribute output directory")->required();
  mp->add_option("--out", out, "output directory")->required();

  auto* gl = app.add_subcommand("glm", "first- and second-level GLM on the test subjects");
  add_common(gl);
  gl->add_option("--data", data, "preprocessed study directory")->required();
  gl->add_option("--out", out, "output directory")->required();
  gl->add_option("--threshold", rule, "fdr or p (overrides [glm] threshold)");

  auto* sl = app.add_subcommand("searchlight", "group searchlight on first-level beta maps");
  add_common(sl);
  sl->add_option("--data", data, "preprocessed study directory")->required();
  sl->add_option("--out", out, "output directory")->required();

  auto* la = app.add_subcommand("lasso", "group whole-brain lasso with lambda grid search");
  add_common(la);
  la->add_option("--data", data, "preprocessed study directory")->required();
  la->add_option("--out", out, "output directory")->required();
  la->add_option("--final-epochs", final_epochs, "epochs of the refit at the selected lambda");

  auto* rp = app.add_subcommand("report", "collect CSV metrics and heatmaps into one directory");
  rp->add_option("--in", inputs, "command output directories")->required();
  rp->add_option("--out", out, "output directory")->required();
  rp->add_option("--threads", common.threads, "ignored");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    set_threads(common.threads);
    if (ph->parsed()) cmd_phantom(common, out);
    if (pre->parsed()) cmd_preprocess(common, in, out);
    if (tr->parsed()) cmd_train(common, data, out, epochs);
    if (ev->parsed()) cmd_evaluate(common, data, model_path, out);
    if (at->parsed()) cmd_attribute(common, data, model_path, out, all);
    if (mp->parsed()) cmd_maps(common, data, in, out);
    if (gl->parsed()) cmd_glm(common, data, out, rule);
    if (sl->parsed()) cmd_searchlight(common, data, out);
    if (la->parsed()) cmd_lasso(common, data, out, final_epochs);
    if (rp->parsed()) cmd_report(inputs, out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
