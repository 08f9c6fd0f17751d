#include "deeplight/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"
#include "deeplight/rng.hpp"

namespace deeplight::model {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

const std::array<const char*, 4> kGateNames{"f", "i", "c", "o"};

std::string conv_name(std::size_t layer, const char* what) {
  return "conv" + std::to_string(layer + 1) + "." + what;
}

std::string gate_weight(Direction d, const char* gate) { return param_prefix(d) + ".W_" + gate; }
std::string gate_bias(Direction d, const char* gate) { return param_prefix(d) + ".b_" + gate; }

}  // namespace

std::string param_prefix(Direction d) { return d == Direction::forward ? "lstm_fwd" : "lstm_bwd"; }

ArchSpec ArchSpec::deeplight(std::size_t slice_x, std::size_t slice_y) {
  ArchSpec a;
  a.slice_x = slice_x;
  a.slice_y = slice_y;
  const std::size_t channels[8] = {16, 16, 16, 16, 32, 32, 32, 32};
  for (std::size_t l = 0; l < 8; ++l) a.conv.push_back({channels[l], l % 2 == 0 ? 2u : 1u});
  return a;
}

Shape ArchSpec::feature_map_shape() const {
  std::size_t h = slice_x, w = slice_y, c = 1;
  for (const auto& l : conv) {
    h = nn::same_extent(h, l.stride);
    w = nn::same_extent(w, l.stride);
    c = l.channels;
  }
  return {h, w, c};
}

std::size_t ArchSpec::feature_dim() const { return nn::shape_size(feature_map_shape()); }

void ArchSpec::validate() const {
  if (slice_x < 3 || slice_y < 3) {
    throw InputError("slices must be at least 3x3, got " + std::to_string(slice_x) + "x" + std::to_string(slice_y));
  }
  if (kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
  if (conv.empty()) throw ConfigError("the feature extractor needs at least one conv layer");
  for (const auto& l : conv) {
    if (l.channels == 0) throw ConfigError("conv layers need at least one channel");
    if (l.stride != 1 && l.stride != 2) throw ConfigError("conv stride must be 1 or 2");
  }
  if (lstm_units == 0 || classes < 2) throw ConfigError("need lstm_units > 0 and at least two classes");
}

double glorot_stddev(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

DeepLightParams init_params(const ArchSpec& arch, std::uint64_t seed) {
  arch.validate();
  DeepLightParams out;
  out.arch = arch;
  Rng rng(derive_seed(seed, seed_tag::init));
  auto normal = [&](Shape shape, double sd) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  const std::size_t k = arch.kernel;
  std::size_t cin = 1;
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    const std::size_t cout = arch.conv[l].channels;
    out.params.add(conv_name(l, "w"), normal({k, k, cin, cout}, glorot_stddev(k * k * cin, k * k * cout)));
    out.params.add(conv_name(l, "b"), Tensor({cout}));
    cin = cout;
  }
  const std::size_t units = arch.lstm_units;
  const std::size_t joint = units + arch.feature_dim();
  for (Direction d : {Direction::forward, Direction::backward}) {
    for (const char* g : kGateNames) {
      out.params.add(gate_weight(d, g), normal({units, joint}, glorot_stddev(joint, units)));
      out.params.add(gate_bias(d, g), Tensor({units}));
    }
  }
  out.params.add("out.w", normal({arch.classes, 2 * units}, glorot_stddev(2 * units, arch.classes)));
  out.params.add("out.b", Tensor({arch.classes}));
  return out;
}

Tensor SliceSequence::slice(std::size_t k) const {
  const std::size_t x = slices.dim(1), y = slices.dim(2);
  std::vector<double> data(slices.raw() + k * x * y, slices.raw() + (k + 1) * x * y);
  return Tensor({x, y, 1}, std::move(data));
}

SliceSequence slice_volume(const Volume3D& volume) {
  const GridShape g = volume.shape;
  if (g.voxels() == 0) throw InputError("cannot slice an empty volume");
  Tensor t({g.z, g.x, g.y, 1});
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t i = 0; i < g.x; ++i)
      for (std::size_t j = 0; j < g.y; ++j) t[(k * g.x + i) * g.y + j] = volume.at(i, j, k);
  return {std::move(t)};
}

Volume3D restack(const SliceSequence& seq, double voxel_mm) {
  const GridShape g{seq.slices.dim(1), seq.slices.dim(2), seq.slices.dim(0)};
  Volume3D v(g, voxel_mm);
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t i = 0; i < g.x; ++i)
      for (std::size_t j = 0; j < g.y; ++j) v.at(i, j, k) = seq.slices[(k * g.x + i) * g.y + j];
  return v;
}

namespace {

void check_input(const DeepLightParams& params, const Tensor& slices) {
  if (slices.rank() != 4 || slices.dim(0) == 0) throw InputError("slice sequence must be a non-empty [Z,X,Y,1] tensor");
  if (slices.dim(1) != params.arch.slice_x || slices.dim(2) != params.arch.slice_y) {
    throw ConfigError("slice size " + std::to_string(slices.dim(1)) + "x" + std::to_string(slices.dim(2)) +
                      " does not match the model's " + std::to_string(params.arch.slice_x) + "x" +
                      std::to_string(params.arch.slice_y));
  }
}

Var apply_mask(Tape& tape, Var x, std::size_t layer, const MaskSource* masks) {
  if (masks == nullptr || !*masks) return x;
  auto mask = (*masks)(layer, tape.value(x).shape());
  return mask ? tape.scale(x, *mask) : x;
}

}  // namespace

ForwardTrace forward(Tape& tape, const DeepLightParams& params, const SliceSequence& seq, const MaskSource* masks) {
  const auto& arch = params.arch;
  check_input(params, seq.slices);
  const auto& ps = params.params;
  ForwardTrace tr;
  Var x = tape.constant(seq.slices);
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    Var w = tape.param(ps, conv_name(l, "w"));
    Var b = tape.param(ps, conv_name(l, "b"));
    Var pre = tape.conv2d(x, w, b, arch.conv[l].stride);
    Var out = apply_mask(tape, tape.relu(pre), l + 1, masks);
    tr.conv.push_back({x, pre, out});
    x = out;
  }
  const std::size_t z = seq.length();
  const std::size_t dim = arch.feature_dim();
  tr.features = apply_mask(tape, tape.reshape(x, {z, dim}), arch.conv.size() + 1, masks);

  const std::size_t units = arch.lstm_units;
  std::vector<Var> last_hidden;
  for (Direction d : {Direction::forward, Direction::backward}) {
    Var wf = tape.param(ps, gate_weight(d, "f")), bf = tape.param(ps, gate_bias(d, "f"));
    Var wi = tape.param(ps, gate_weight(d, "i")), bi = tape.param(ps, gate_bias(d, "i"));
    Var wc = tape.param(ps, gate_weight(d, "c")), bc = tape.param(ps, gate_bias(d, "c"));
    Var wo = tape.param(ps, gate_weight(d, "o")), bo = tape.param(ps, gate_bias(d, "o"));
    Var h = tape.constant(Tensor({units}));
    Var c = tape.constant(Tensor({units}));
    auto& steps = d == Direction::forward ? tr.forward_steps : tr.backward_steps;
    for (std::size_t n = 0; n < z; ++n) {
      const std::size_t s = d == Direction::forward ? n : z - 1 - n;
      ForwardTrace::LstmStep st;
      st.slice = s;
      st.cell_prev = c;
      st.joint = tape.concat(h, tape.row(tr.features, s));
      st.forget = tape.sigmoid(tape.linear(wf, st.joint, bf));
      st.input = tape.sigmoid(tape.linear(wi, st.joint, bi));
      st.candidate_pre = tape.linear(wc, st.joint, bc);
      st.candidate = tape.tanh(st.candidate_pre);
      st.cell = tape.add(tape.mul(st.forget, c), tape.mul(st.input, st.candidate));
      st.output_gate = tape.sigmoid(tape.linear(wo, st.joint, bo));
      st.hidden = tape.mul(st.output_gate, tape.tanh(st.cell));
      steps.push_back(st);
      h = st.hidden;
      c = st.cell;
    }
    last_hidden.push_back(h);
  }
  tr.joint_output = apply_mask(tape, tape.concat(last_hidden[0], last_hidden[1]), arch.conv.size() + 2, masks);
  tr.logits = tape.linear(tape.param(ps, "out.w"), tr.joint_output, tape.param(ps, "out.b"));
  return tr;
}

Tensor feature_extract(const Tensor& slice, const DeepLightParams& params) {
  const auto& arch = params.arch;
  if (slice.rank() < 2 || slice.dim(0) < 3 || slice.dim(1) < 3) throw InputError("slice must be at least 3x3");
  if (slice.dim(0) != arch.slice_x || slice.dim(1) != arch.slice_y) {
    throw ConfigError("slice size does not match the model architecture");
  }
  Tensor x = slice.reshaped({1, arch.slice_x, arch.slice_y, 1});
  for (std::size_t l = 0; l < arch.conv.size(); ++l) {
    x = nn::activate(nn::Activation::relu, nn::conv2d(x, params.params.at(conv_name(l, "w")),
                                                      params.params.at(conv_name(l, "b")), arch.conv[l].stride));
  }
  return x.reshaped({x.size()});
}

LstmState zero_state(std::size_t units) { return {Tensor({units}), Tensor({units})}; }

LstmStepResult lstm_step(const Tensor& input, const LstmState& prev, const nn::ParamSet& params, Direction d) {
  const Tensor& wf = params.at(gate_weight(d, "f"));
  const std::size_t units = wf.dim(0);
  if (prev.hidden.size() != units || prev.cell.size() != units || wf.dim(1) != units + input.size()) {
    throw ConfigError("lstm_step: input of length " + std::to_string(input.size()) + " and state of length " +
                      std::to_string(prev.hidden.size()) + " do not match gate weights " +
                      nn::shape_string(wf.shape()));
  }
  std::vector<double> joint(prev.hidden.data().begin(), prev.hidden.data().end());
  joint.insert(joint.end(), input.data().begin(), input.data().end());
  const std::size_t joint_len = joint.size();
  const Tensor xh({joint_len}, std::move(joint));
  auto gate = [&](const char* g) { return nn::linear(params.at(gate_weight(d, g)), xh, params.at(gate_bias(d, g))); };
  LstmStepResult r;
  r.forget = nn::activate(nn::Activation::logistic, gate("f"));
  r.input = nn::activate(nn::Activation::logistic, gate("i"));
  r.candidate = nn::activate(nn::Activation::tanh, gate("c"));
  r.output_gate = nn::activate(nn::Activation::logistic, gate("o"));
  r.state.cell = Tensor({units});
  r.state.hidden = Tensor({units});
  for (std::size_t u = 0; u < units; ++u) {
    r.state.cell[u] = r.forget[u] * prev.cell[u] + r.input[u] * r.candidate[u];
    r.state.hidden[u] = r.output_gate[u] * std::tanh(r.state.cell[u]);
  }
  return r;
}

Decoding bilstm_decode(const SliceSequence& seq, const DeepLightParams& params) {
  Tape tape(false);
  const auto tr = forward(tape, params, seq);
  Decoding d;
  d.logits = tape.value(tr.logits);
  d.posterior = nn::softmax(d.logits);
  d.predicted = static_cast<std::size_t>(
      std::max_element(d.logits.data().begin(), d.logits.data().end()) - d.logits.data().begin());
  return d;
}

Decoding decode(const Volume3D& volume, const DeepLightParams& params) {
  return bilstm_decode(slice_volume(volume), params);
}

Tensor joint_output(const SliceSequence& seq, const DeepLightParams& params) {
  Tape tape(false);
  const auto tr = forward(tape, params, seq);
  return tape.value(tr.joint_output);
}

}  // namespace deeplight::model
