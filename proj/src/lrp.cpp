#include "deeplight/lrp.hpp"

#include <algorithm>
#include <cmath>

#include "deeplight/error.hpp"
#include "deeplight/kernels.hpp"

namespace deeplight::lrp {

using nn::Tensor;

std::vector<double> lrp_linear_message(const std::vector<double>& z_ij, double z_j, double r_j, double eps) {
  const double denom = stabilized(z_j, eps);
  std::vector<double> out(z_ij.size());
  for (std::size_t i = 0; i < z_ij.size(); ++i) out[i] = r_j == 0.0 ? 0.0 : z_ij[i] / denom * r_j;
  return out;
}

namespace {

Tensor ratio(const Tensor& r, const Tensor& z, double eps) {
  Tensor s(r.shape());
  for (std::size_t j = 0; j < r.size(); ++j) s[j] = r[j] == 0.0 ? 0.0 : r[j] / stabilized(z[j], eps);
  return s;
}

Tensor times(const Tensor& a, const Tensor& c) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * c[i];
  return out;
}

}  // namespace

Tensor lrp_dense(const Tensor& weights, const Tensor& a, const Tensor& bias, const Tensor& r_out, double eps) {
  const Tensor z = nn::linear(weights, a, bias);
  return times(a, nn::linear_transpose(weights, ratio(r_out, z, eps)));
}

Tensor lrp_conv(const Tensor& input, const Tensor& kernels, const Tensor& preactivation, const Tensor& r_out,
                std::size_t stride, double eps) {
  const Tensor c = nn::conv2d_backward_input(ratio(r_out, preactivation, eps), kernels, input.shape(), stride);
  return times(input, c);
}

RelevanceVolume relevance_for(const model::DeepLightParams& params, const model::SliceSequence& seq,
                              std::size_t target, const LrpConfig& config, double voxel_mm) {
  const auto& arch = params.arch;
  if (target >= arch.classes) throw InputError("target state out of range");
  if (!(config.epsilon >= 0.0)) throw ConfigError("lrp.epsilon must be non-negative");
  const double eps = config.epsilon;
  const auto& ps = params.params;

  nn::Tape tape(false);
  const auto tr = model::forward(tape, params, seq);
  const Tensor& logits = tape.value(tr.logits);

  RelevanceVolume out;
  out.target = target;
  out.predicted = static_cast<std::size_t>(std::max_element(logits.data().begin(), logits.data().end()) -
                                           logits.data().begin());
  out.fa = logits[target];
  out.correct = out.predicted == target;
  out.nonpositive_evidence = out.correct && out.fa <= 0.0;

  Tensor r_logits({arch.classes});
  r_logits[target] = out.fa;
  const Tensor r_joint = lrp_dense(ps.at("out.w"), tape.value(tr.joint_output), ps.at("out.b"), r_logits, eps);

  const std::size_t units = arch.lstm_units;
  const std::size_t z = seq.length();
  const std::size_t dim = arch.feature_dim();
  Tensor r_features({z, dim});
  double gate_total = 0.0;
  for (model::Direction d : {model::Direction::forward, model::Direction::backward}) {
    const auto& steps = d == model::Direction::forward ? tr.forward_steps : tr.backward_steps;
    const std::size_t off = d == model::Direction::forward ? 0 : units;
    const std::string prefix = model::param_prefix(d);
    const Tensor& wc = ps.at(prefix + ".W_c");
    const Tensor& bc = ps.at(prefix + ".b_c");
    Tensor r_h({units});
    for (std::size_t u = 0; u < units; ++u) r_h[u] = r_joint[off + u];
    Tensor r_c({units});
    for (std::size_t n = steps.size(); n-- > 0;) {
      const auto& st = steps[n];
      const Tensor& f = tape.value(st.forget);
      const Tensor& i = tape.value(st.input);
      const Tensor& cand = tape.value(st.candidate);
      const Tensor& cprev = tape.value(st.cell_prev);
      const Tensor& cell = tape.value(st.cell);
      Tensor r_cand({units});
      Tensor r_cprev({units});
      for (std::size_t u = 0; u < units; ++u) {
        // h = o * tanh(C); tanh passes relevance unchanged.
        const GateSplit out_gate = lrp_multiplicative(r_h[u]);
        const double rc = r_c[u] + out_gate.source;
        // C = f*C_prev + i*C', split in proportion to the two addends.
        const auto parts = lrp_linear_message({f[u] * cprev[u], i[u] * cand[u]}, cell[u], rc, eps);
        const GateSplit keep = lrp_multiplicative(parts[0]);
        const GateSplit write = lrp_multiplicative(parts[1]);
        r_cprev[u] = keep.source;
        r_cand[u] = write.source;
        gate_total += std::abs(out_gate.gate) + std::abs(keep.gate) + std::abs(write.gate);
      }
      const Tensor r_in = lrp_dense(wc, tape.value(st.joint), bc, r_cand, eps);
      for (std::size_t u = 0; u < units; ++u) r_h[u] = r_in[u];
      double* row = r_features.raw() + st.slice * dim;
      for (std::size_t k = 0; k < dim; ++k) row[k] += r_in[units + k];
      r_c = std::move(r_cprev);
    }
  }
  out.gate_relevance = gate_total;
  for (double v : r_features.data()) out.feature_relevance += v;

  Tensor r = r_features.reshaped(tape.value(tr.conv.back().output).shape());
  for (std::size_t l = arch.conv.size(); l-- > 0;) {
    const auto& layer = tr.conv[l];
    r = lrp_conv(tape.value(layer.input), ps.at("conv" + std::to_string(l + 1) + ".w"),
                 tape.value(layer.preactivation), r, arch.conv[l].stride, eps);
  }
  out.relevance = model::restack({std::move(r)}, voxel_mm);
  const GridShape g = out.relevance.shape;
  out.slice_relevance.assign(g.z, 0.0);
  for (std::size_t k = 0; k < g.z; ++k)
    for (std::size_t j = 0; j < g.y; ++j)
      for (std::size_t x = 0; x < g.x; ++x) out.slice_relevance[k] += out.relevance.at(x, j, k);
  out.status = Status::decomposed;
  return out;
}

RelevanceVolume lrp_decompose(const model::DeepLightParams& params, const model::SliceSequence& seq,
                              std::size_t true_state, const LrpConfig& config, double voxel_mm) {
  if (true_state >= params.arch.classes) throw InputError("target state out of range");
  const auto d = model::bilstm_decode(seq, params);
  if (d.predicted != true_state) {
    RelevanceVolume out;
    out.status = Status::not_decomposed;
    out.target = true_state;
    out.predicted = d.predicted;
    out.fa = d.logits[true_state];
    return out;
  }
  return relevance_for(params, seq, true_state, config, voxel_mm);
}

bool in_window(int block_offset, double tr_s, double lo_s, double hi_s) {
  if (block_offset < 0) return false;
  const double t = static_cast<double>(block_offset) * tr_s;
  return t >= lo_s - 1e-9 && t <= hi_s + 1e-9;
}

std::vector<std::size_t> select_window(const train::Dataset& data, double lo_s, double hi_s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    if (s.label >= 0 && in_window(s.block_offset, data.tr_s, lo_s, hi_s)) out.push_back(i);
  }
  return out;
}

}  // namespace deeplight::lrp
