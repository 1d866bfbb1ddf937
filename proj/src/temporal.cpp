#include "onedf/temporal.hpp"

#include <cmath>

namespace onedf {

namespace {

template <typename S>
TensorPtrT<S> add_glorot(ParamRegistryT<S>& reg, const std::string& name,
                         std::vector<int> dims, int fan_in, int fan_out, Rng& rng) {
  auto t = reg.add(name, std::move(dims));
  glorot_init(*t, fan_in, fan_out, rng);
  return t;
}

// Residual-branch output layers start near zero so each block begins close
// to the identity; the stacked model then trains at the pace of the shallow
// baseline instead of having to un-scramble random mixing first.
template <typename S>
TensorPtrT<S> add_residual_out(ParamRegistryT<S>& reg, const std::string& name,
                               std::vector<int> dims, int fan_in, int fan_out, Rng& rng) {
  auto t = reg.add(name, std::move(dims));
  glorot_init(*t, fan_in, fan_out, rng);
  t->data *= S(0.02);
  return t;
}

template <typename S>
TensorPtrT<S> add_ones(ParamRegistryT<S>& reg, const std::string& name, int len) {
  auto t = reg.add(name, {1, len});
  t->data.setConstant(S(1));
  return t;
}

}  // namespace

template <typename S>
VarT<S> fuse_stack(const VarT<S>& mixed, const VarT<S>& residual,
                   const FuseStackParamsT<S>& p) {
  TapeT<S>& tape = *mixed.tape();
  VarT<S> o1 = layer_norm(add(mixed, residual), tape.use(p.ln1_g), tape.use(p.ln1_b));
  VarT<S> hidden = relu(linear(o1, tape.use(p.ffn_w1), tape.use(p.ffn_b1)));
  VarT<S> ffn = linear(hidden, tape.use(p.ffn_w2), tape.use(p.ffn_b2));
  return layer_norm(add(ffn, o1), tape.use(p.ln2_g), tape.use(p.ln2_b));
}

template <typename S>
VarT<S> attend(const VarT<S>& query, const VarT<S>& window, const VarT<S>& conf,
               const AttentionParamsT<S>& p, int heads,
               std::vector<ArrayT<S>>* weights_out) {
  TapeT<S>& tape = *query.tape();
  const int wlen = window.t().rows();
  if (wlen < 1) throw ContractError("attend: empty window");
  if (conf) {
    if (conf.t().dims != std::vector<int>{1, wlen})
      throw ShapeError("attend: confidence " + dims_str(conf.t().dims) + " vs window " +
                       dims_str(window.t().dims));
  }
  const int d_h = int(p.wq.at(0)->dim(0));
  const S inv_sqrt_dh = S(1) / std::sqrt(S(d_h));

  std::vector<VarT<S>> head_outs;
  head_outs.reserve(size_t(heads));
  for (int h = 0; h < heads; ++h) {
    VarT<S> q = matmul_nt(query, tape.use(p.wq[size_t(h)]));   // [1 x d_h]
    VarT<S> k = matmul_nt(window, tape.use(p.wk[size_t(h)]));  // [W' x d_h]
    VarT<S> v = matmul_nt(window, tape.use(p.wv[size_t(h)]));  // [W' x d_h]
    VarT<S> logits = scale(matmul_nt(q, k), inv_sqrt_dh);      // [1 x W']
    if (conf) logits = mul(logits, conf);
    VarT<S> a = softmax(logits);
    if (weights_out) weights_out->push_back(a.t().data);
    head_outs.push_back(matmul(a, v));  // [1 x d_h]
  }
  VarT<S> joined = concat_cols(std::span<const VarT<S>>(head_outs));  // [1 x L]
  return matmul_nt(joined, tape.use(p.wo));
}

template <typename S>
VarT<S> ce_mha(const VarT<S>& window, const VarT<S>& conf, const AttentionParamsT<S>& p,
               int heads, std::vector<ArrayT<S>>* weights_out) {
  VarT<S> query = slice_row(window, 0);
  VarT<S> o = attend(query, window, conf, p, heads, weights_out);
  return fuse_stack(o, query, p.fuse);
}

template <typename S>
VarT<S> confidence_score(const VarT<S>& s, const ConfidenceParamsT<S>& p) {
  TapeT<S>& tape = *s.tape();
  VarT<S> hidden = relu(linear(s, tape.use(p.w1), tape.use(p.b1)));
  return sigmoid(linear(hidden, tape.use(p.w2), tape.use(p.b2)));
}

template <typename S>
TemporalStepResult<S> temporal_refine_step(const VarT<S>& s_raw, const VarT<S>& conf_raw,
                                           int landmark, int time, WindowBufferT<S>& buffer,
                                           const TemporalAxisParamsT<S>& p,
                                           const ModelConfig& cfg,
                                           std::vector<ArrayT<S>>* weights_out) {
  TapeT<S>& tape = *s_raw.tape();
  for (const auto& e : buffer.entries())
    if (e.time >= time)
      throw ContractError("temporal_refine_step: buffer holds an entry from time " +
                          std::to_string(e.time) + " >= current time " +
                          std::to_string(time));

  // window rows: current raw feature, then buffered entries newest-first
  std::vector<VarT<S>> rows;
  rows.reserve(size_t(buffer.size()) + 1);
  rows.push_back(s_raw);
  std::vector<VarT<S>> confs;
  confs.push_back(conf_raw);
  for (const auto& e : buffer.entries()) {
    rows.push_back(e.feat);
    confs.push_back(e.conf);
  }
  VarT<S> window = concat_rows(std::span<const VarT<S>>(rows));
  VarT<S> embedded = apply_alp(window, tape.use(p.alp), landmark);

  VarT<S> conf_vec;  // [1 x W'] when the confidence branch is active
  if (conf_raw) {
    std::vector<VarT<S>> cs;
    for (const VarT<S>& c : confs) {
      if (!c) throw ContractError("temporal_refine_step: missing buffered confidence");
      cs.push_back(c);
    }
    conf_vec = concat_cols(std::span<const VarT<S>>(cs));
  }

  VarT<S> refined;
  if (cfg.temporal == TemporalMode::kSimpleMix) {
    // token mixing without attention: current feature plus the window mean
    VarT<S> mixed = mean_rows(embedded);
    refined = fuse_stack(mixed, slice_row(embedded, 0), p.attn.fuse);
  } else if (cfg.temporal_mixer == Mixer::kConv) {
    // temporal 1D convolution over window positions, feature channels mixed
    VarT<S> channels = transpose(embedded);  // [L x W']
    VarT<S> mixedc = conv1d(channels, tape.use(p.mix_k), tape.use(p.mix_b), 1, 1);
    VarT<S> mixed = transpose(slice_cols(mixedc, 0, 1));  // position of the current frame
    refined = fuse_stack(mixed, slice_row(embedded, 0), p.attn.fuse);
  } else {
    refined = ce_mha(embedded, conf_vec, p.attn, cfg.heads, weights_out);
  }

  if (cfg.window > 1) {
    // recurrence delivers refined features into later windows; without it the
    // buffer holds raw inputs of the current window chunk only
    buffer.push(BufferEntryT<S>{cfg.recurrence ? refined : s_raw, conf_raw, time});
  }
  return TemporalStepResult<S>{refined, conf_raw};
}

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

template <typename S>
AttentionParamsT<S> init_attention(const ModelConfig& cfg, const std::string& prefix,
                                   Rng& rng, ParamRegistryT<S>& reg, bool with_projections) {
  const int l = cfg.feature_len, d_h = cfg.head_dim();
  AttentionParamsT<S> p;
  if (with_projections) {
    for (int h = 1; h <= cfg.heads; ++h) {
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      // damped start: near-uniform logits and a quiet value path keep the
      // recurrent windows from injecting random mixing before the content
      // projections have learned anything
      p.wq.push_back(add_glorot(reg, hp + "wq", {d_h, l}, l, d_h, rng));
      p.wq.back()->data *= S(0.2);
      p.wk.push_back(add_glorot(reg, hp + "wk", {d_h, l}, l, d_h, rng));
      p.wk.back()->data *= S(0.2);
      p.wv.push_back(add_glorot(reg, hp + "wv", {d_h, l}, l, d_h, rng));
      p.wv.back()->data *= S(0.3);
    }
    p.wo = add_residual_out(reg, prefix + "wo", {l, l}, l, l, rng);
  }
  p.fuse.ln1_g = add_ones(reg, prefix + "ln1.gain", l);
  p.fuse.ln1_b = reg.add(prefix + "ln1.bias", {1, l});
  p.fuse.ffn_w1 = add_glorot(reg, prefix + "ffn.w1", {4 * l, l}, l, 4 * l, rng);
  p.fuse.ffn_w1->data *= S(0.3);
  p.fuse.ffn_b1 = reg.add(prefix + "ffn.b1", {1, 4 * l});
  p.fuse.ffn_w2 = add_residual_out(reg, prefix + "ffn.w2", {l, 4 * l}, 4 * l, l, rng);
  p.fuse.ffn_b2 = reg.add(prefix + "ffn.b2", {1, l});
  p.fuse.ln2_g = add_ones(reg, prefix + "ln2.gain", l);
  p.fuse.ln2_b = reg.add(prefix + "ln2.bias", {1, l});
  return p;
}

template <typename S>
ConfidenceParamsT<S> init_confidence(const ModelConfig& cfg, const std::string& axis,
                                     Rng& rng, ParamRegistryT<S>& reg) {
  const int l = cfg.feature_len, half = l / 2;
  const std::string base = "confidence." + axis + ".";
  ConfidenceParamsT<S> p;
  p.w1 = add_glorot(reg, base + "w1", {half, l}, l, half, rng);
  p.b1 = reg.add(base + "b1", {1, half});
  p.w2 = add_glorot(reg, base + "w2", {1, half}, half, 1, rng);
  p.b2 = reg.add(base + "b2", {1, 1});
  return p;
}

template <typename S>
TemporalBlockParamsT<S> init_temporal_block(const ModelConfig& cfg, int block_index,
                                            Rng& rng, ParamRegistryT<S>& reg) {
  const int n = cfg.landmarks, l = cfg.feature_len, w = cfg.window;
  TemporalBlockParamsT<S> p;
  auto init_axis = [&](TemporalAxisParamsT<S>& a, const std::string& axis) {
    const std::string base =
        "temporal.block" + std::to_string(block_index) + "." + axis + ".";
    a.alp = reg.add(base + "alp", {n, w, l});
    uniform_init(*a.alp, -0.02f, 0.02f, rng);
    const bool attn_proj =
        cfg.temporal == TemporalMode::kAttention && cfg.temporal_mixer == Mixer::kAttention;
    a.attn = init_attention(cfg, base, rng, reg, attn_proj);
    if (cfg.temporal == TemporalMode::kAttention && cfg.temporal_mixer == Mixer::kConv) {
      a.mix_k = add_residual_out(reg, base + "mix.weight", {l, l, 3}, 3 * l, 3 * l, rng);
      a.mix_b = reg.add(base + "mix.bias", {1, l});
    }
  };
  init_axis(p.x, "x");
  init_axis(p.y, "y");
  return p;
}

#define ONEDF_INSTANTIATE_TEMPORAL(S)                                                  \
  template struct TemporalBlockParamsT<S>;                                             \
  template class WindowBufferT<S>;                                                     \
  template VarT<S> fuse_stack(const VarT<S>&, const VarT<S>&, const FuseStackParamsT<S>&); \
  template VarT<S> attend(const VarT<S>&, const VarT<S>&, const VarT<S>&,              \
                          const AttentionParamsT<S>&, int, std::vector<ArrayT<S>>*);   \
  template VarT<S> ce_mha(const VarT<S>&, const VarT<S>&, const AttentionParamsT<S>&,  \
                          int, std::vector<ArrayT<S>>*);                               \
  template VarT<S> confidence_score(const VarT<S>&, const ConfidenceParamsT<S>&);      \
  template TemporalStepResult<S> temporal_refine_step(                                 \
      const VarT<S>&, const VarT<S>&, int, int, WindowBufferT<S>&,                     \
      const TemporalAxisParamsT<S>&, const ModelConfig&, std::vector<ArrayT<S>>*);     \
  template TemporalBlockParamsT<S> init_temporal_block(const ModelConfig&, int, Rng&,  \
                                                       ParamRegistryT<S>&);            \
  template ConfidenceParamsT<S> init_confidence(const ModelConfig&, const std::string&, \
                                                Rng&, ParamRegistryT<S>&);             \
  template AttentionParamsT<S> init_attention(const ModelConfig&, const std::string&,  \
                                              Rng&, ParamRegistryT<S>&, bool);

ONEDF_INSTANTIATE_TEMPORAL(float)
ONEDF_INSTANTIATE_TEMPORAL(double)
#undef ONEDF_INSTANTIATE_TEMPORAL

}  // namespace onedf
