#include "deeplight/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "deeplight/error.hpp"
#include "deeplight/optim.hpp"

namespace deeplight::train {

using model::kNumStates;
using nn::Tensor;

Volume3D Dataset::volume(std::size_t i) const {
  const Sample& s = samples.at(i);
  return runs.at(s.run)->volume(s.tr);
}

model::SliceSequence Dataset::sequence(std::size_t i) const {
  const Sample& s = samples.at(i);
  const Volume4D& run = *runs.at(s.run);
  const GridShape g = run.shape;
  const float* f = run.frame(s.tr);
  Tensor t({g.z, g.x, g.y, 1});
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t x = 0; x < g.x; ++x)
      for (std::size_t y = 0; y < g.y; ++y) t[(k * g.x + x) * g.y + y] = f[g.index(x, y, k)];
  return {std::move(t)};
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset d;
  d.runs = runs;
  d.tr_s = tr_s;
  for (std::size_t i : indices) d.samples.push_back(samples.at(i));
  return d;
}

double TrainConfig::dropout_rate(std::size_t layer) const {
  if (layer == 0) throw ConfigError("dropout layers are numbered from 1");
  return layer <= dropout.size() ? dropout[layer - 1] : 0.5;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(clip_threshold > 0.0)) throw ConfigError("train.clip_threshold must be positive");
  for (double p : dropout) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("train.dropout probabilities must lie in [0, 1)");
  }
}

Tensor dropout_mask(double p, const nn::Shape& shape, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1)");
  Tensor m(shape, 1.0);
  if (p == 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - p);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : m.data()) v = u(rng) < p ? 0.0 : keep_scale;
  return m;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  out.precision(10);
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << '\n';
  }
}

namespace {

void check_labels(const Dataset& data) {
  std::array<std::size_t, kNumStates> counts{};
  for (const auto& s : data.samples) {
    if (s.label < 0 || s.label >= static_cast<int>(kNumStates)) {
      throw InputError("training labels must lie in 0.." + std::to_string(kNumStates - 1));
    }
    ++counts[static_cast<std::size_t>(s.label)];
  }
  for (std::size_t c = 0; c < kNumStates; ++c) {
    if (counts[c] == 0) throw InputError(std::string("class '") + model::kStateNames[c] + "' is absent from the training data");
  }
}

struct SampleOutcome {
  nn::GradientSet grads;
  double loss = 0.0;
  bool correct = false;
};

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.data().begin(), t.data().end()) - t.data().begin());
}

}  // namespace

TrainResult train(const Dataset& data, const Dataset& validation, const model::DeepLightParams& init,
                  const TrainConfig& config) {
  config.validate();
  check_labels(data);
  TrainResult result{init, {}};
  model::DeepLightParams& params = result.params;
  model::DeepLightParams best = init;
  nn::AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  auto adam = nn::AdamState::for_params(params.params, hyper);

  const bool use_validation = !validation.empty();
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::vector<std::size_t> order(data.size());
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, seed_tag::shuffle, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<SampleOutcome> outcomes(n);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        Rng mask_rng(derive_seed(config.seed, seed_tag::dropout, step, idx));
        model::MaskSource masks = [&](std::size_t layer, const nn::Shape& shape) -> std::optional<Tensor> {
          const double p = config.dropout_rate(layer);
          if (p == 0.0) return std::nullopt;
          return dropout_mask(p, shape, mask_rng);
        };
        nn::Tape tape;
        const auto tr = model::forward(tape, params, data.sequence(idx), &masks);
        const auto label = static_cast<std::size_t>(data.samples[idx].label);
        const nn::Var loss = tape.softmax_cross_entropy(tr.logits, label);
        outcomes[b].loss = tape.value(loss)[0];
        outcomes[b].correct = argmax(tape.value(tr.logits)) == label;
        outcomes[b].grads = nn::reverse_gradient(tape, loss, params.params);
      }
      nn::GradientSet grads = std::move(outcomes[0].grads);
      for (std::size_t b = 1; b < n; ++b) {
        for (std::size_t i = 0; i < grads.size(); ++i) nn::axpy(1.0, outcomes[b].grads[i], grads[i]);
      }
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        for (double& v : grads[i].data()) v *= inv;
      }
      for (const auto& o : outcomes) {
        loss_sum += o.loss;
        correct += o.correct ? 1 : 0;
      }
      nn::clip_global_norm(grads, config.clip_threshold);
      nn::adam_step(adam, params.params, grads);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(data.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
    if (use_validation) {
      const auto ev = evaluate(params, validation);
      st.val_loss = ev.loss;
      st.val_acc = ev.accuracy;
    }
    result.report.epochs.push_back(st);
    result.report.stopping_epoch = epoch;

    if (use_validation) {
      if (st.val_acc > best_acc) {
        best_acc = st.val_acc;
        best = params;
        result.report.best_epoch = epoch;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        break;
      }
    } else {
      result.report.best_epoch = epoch;
    }
  }
  if (use_validation && result.report.best_epoch > 0) params = std::move(best);
  return result;
}

Evaluation evaluate(const model::DeepLightParams& params, const Dataset& data) {
  if (data.empty()) throw InputError("cannot evaluate on an empty dataset");
  Evaluation ev;
  const std::size_t n = data.size();
  ev.predicted.assign(n, -1);
  ev.target_logit.assign(n, 0.0);
  std::vector<double> losses(n, 0.0);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = model::bilstm_decode(data.sequence(i), params);
    ev.predicted[i] = static_cast<int>(d.predicted);
    const int label = data.samples[i].label;
    if (label >= 0) {
      ev.target_logit[i] = d.logits[static_cast<std::size_t>(label)];
      losses[i] = -std::log(std::max(d.posterior[static_cast<std::size_t>(label)], 1e-300));
    }
  }
  std::size_t labeled = 0, correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = data.samples[i].label;
    if (label < 0) continue;
    ++labeled;
    loss += losses[i];
    ++ev.confusion[static_cast<std::size_t>(label)][static_cast<std::size_t>(ev.predicted[i])];
    if (ev.predicted[i] == label) ++correct;
  }
  if (labeled == 0) throw InputError("no labeled samples to evaluate");
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(labeled);
  ev.loss = loss / static_cast<double>(labeled);
  return ev;
}

std::vector<OffsetAccuracy> accuracy_by_block_time(const Evaluation& eval, const Dataset& data) {
  if (eval.predicted.size() != data.size()) throw InputError("evaluation does not match the dataset");
  int max_offset = -1;
  for (const auto& s : data.samples) {
    if (s.label >= 0) max_offset = std::max(max_offset, s.block_offset);
  }
  if (max_offset < 0) throw InputError("no task TRs with block offsets in the dataset");
  std::vector<OffsetAccuracy> out(static_cast<std::size_t>(max_offset) + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k].offset = static_cast<int>(k);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    if (s.label < 0 || s.block_offset < 0) continue;
    auto& o = out[static_cast<std::size_t>(s.block_offset)];
    ++o.total;
    if (eval.predicted[i] == s.label) ++o.correct;
  }
  return out;
}

std::vector<OffsetAccuracy> accuracy_by_block_time(const model::DeepLightParams& params, const Dataset& data) {
  return accuracy_by_block_time(evaluate(params, data), data);
}

}  // namespace deeplight::train
