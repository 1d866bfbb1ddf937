#include "onedf/structural.hpp"

namespace onedf {

namespace {

template <typename S>
TensorPtrT<S> add_glorot(ParamRegistryT<S>& reg, const std::string& name,
                         std::vector<int> dims, int fan_in, int fan_out, Rng& rng) {
  auto t = reg.add(name, std::move(dims));
  glorot_init(*t, fan_in, fan_out, rng);
  return t;
}

// near-identity start for the residual channel mixers (see temporal.cpp)
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

// Per-token self-attention over a stack of landmark rows, without confidence
// modulation; each row queries the whole stack through the shared stack.
template <typename S>
VarT<S> spatial_attention(const VarT<S>& feats, const AttentionParamsT<S>& p,
                          const ModelConfig& cfg) {
  const int rows = feats.t().rows();
  std::vector<VarT<S>> outs;
  outs.reserve(size_t(rows));
  for (int j = 0; j < rows; ++j) {
    VarT<S> q = slice_row(feats, j);
    VarT<S> o = attend(q, feats, VarT<S>(), p, cfg.heads);
    outs.push_back(fuse_stack(o, q, p.fuse));
  }
  return concat_rows(std::span<const VarT<S>>(outs));
}

}  // namespace

template <typename S>
VarT<S> intra_group_encode(const VarT<S>& feats, const GroupPartition& partition,
                           const StructuralAxisParamsT<S>& p, const ModelConfig& cfg) {
  TapeT<S>& tape = *feats.tape();
  const int n = feats.t().rows();
  if (partition.landmark_count() != n)
    throw ConfigError("intra_group_encode: partition covers " +
                      std::to_string(partition.landmark_count()) + " landmarks, features " +
                      dims_str(feats.t().dims));

  std::vector<VarT<S>> out_rows{size_t(n), VarT<S>{}};
  for (size_t k = 0; k < partition.groups.size(); ++k) {
    const auto& group = partition.groups[k];
    std::vector<VarT<S>> rows;
    rows.reserve(group.size());
    for (int idx : group) rows.push_back(slice_row(feats, idx));
    VarT<S> stacked = concat_rows(std::span<const VarT<S>>(rows));
    VarT<S> refined;
    if (cfg.spatial_mixer == Mixer::kConv) {
      VarT<S> conv =
          conv1d(stacked, tape.use(p.intra_k[k]), tape.use(p.intra_b[k]), 1, 1);
      refined = layer_norm(add(conv, stacked), tape.use(p.intra_ln_g),
                           tape.use(p.intra_ln_b));
    } else {
      refined = spatial_attention(stacked, p.intra_attn, cfg);
    }
    for (size_t j = 0; j < group.size(); ++j)
      out_rows[size_t(group[j])] = slice_row(refined, int(j));
  }
  return concat_rows(std::span<const VarT<S>>(out_rows));
}

template <typename S>
VarT<S> inter_group_encode(const VarT<S>& feats, const StructuralAxisParamsT<S>& p,
                           const ModelConfig& cfg) {
  TapeT<S>& tape = *feats.tape();
  if (cfg.spatial_mixer == Mixer::kAttention)
    return spatial_attention(feats, p.inter_attn, cfg);
  if (feats.t().rows() != p.inter_k->dim(0))
    throw ShapeError("inter_group_encode: features " + dims_str(feats.t().dims) +
                     " vs kernels " + dims_str(p.inter_k->dims));
  VarT<S> conv = conv1d(feats, tape.use(p.inter_k), tape.use(p.inter_b), 1, 1);
  return layer_norm(add(conv, feats), tape.use(p.inter_ln_g), tape.use(p.inter_ln_b));
}

template <typename S>
StructuralBlockParamsT<S> init_structural_block(const ModelConfig& cfg,
                                                const GroupPartition& partition,
                                                int block_index, Rng& rng,
                                                ParamRegistryT<S>& reg) {
  const int n = cfg.landmarks, l = cfg.feature_len;
  StructuralBlockParamsT<S> p;
  auto init_axis = [&](StructuralAxisParamsT<S>& a, const std::string& axis) {
    const std::string base =
        "structural.block" + std::to_string(block_index) + "." + axis + ".";
    if (cfg.spatial_mixer == Mixer::kConv) {
      if (cfg.intra_group) {
        for (size_t k = 0; k < partition.groups.size(); ++k) {
          const int nk = int(partition.groups[k].size());
          const std::string gp = base + "intra.group" + std::to_string(k + 1) + ".";
          a.intra_k.push_back(
              add_residual_out(reg, gp + "weight", {nk, nk, 3}, 3 * nk, 3 * nk, rng));
          a.intra_b.push_back(reg.add(gp + "bias", {1, nk}));
        }
        a.intra_ln_g = add_ones(reg, base + "intra.ln.gain", l);
        a.intra_ln_b = reg.add(base + "intra.ln.bias", {1, l});
      }
      if (cfg.inter_group) {
        a.inter_k = add_residual_out(reg, base + "inter.weight", {n, n, 3}, 3 * n, 3 * n, rng);
        a.inter_b = reg.add(base + "inter.bias", {1, n});
        a.inter_ln_g = add_ones(reg, base + "inter.ln.gain", l);
        a.inter_ln_b = reg.add(base + "inter.ln.bias", {1, l});
      }
    } else {
      if (cfg.intra_group)
        a.intra_attn = init_attention(cfg, base + "intra_attn.", rng, reg, true);
      if (cfg.inter_group)
        a.inter_attn = init_attention(cfg, base + "inter_attn.", rng, reg, true);
    }
  };
  init_axis(p.x, "x");
  init_axis(p.y, "y");
  return p;
}

#define ONEDF_INSTANTIATE_STRUCTURAL(S)                                             \
  template struct StructuralBlockParamsT<S>;                                        \
  template VarT<S> intra_group_encode(const VarT<S>&, const GroupPartition&,        \
                                      const StructuralAxisParamsT<S>&,              \
                                      const ModelConfig&);                          \
  template VarT<S> inter_group_encode(const VarT<S>&, const StructuralAxisParamsT<S>&, \
                                      const ModelConfig&);                          \
  template StructuralBlockParamsT<S> init_structural_block(                         \
      const ModelConfig&, const GroupPartition&, int, Rng&, ParamRegistryT<S>&);

ONEDF_INSTANTIATE_STRUCTURAL(float)
ONEDF_INSTANTIATE_STRUCTURAL(double)
#undef ONEDF_INSTANTIATE_STRUCTURAL

}  // namespace onedf
