#pragma once

#include "onedf/autodiff.hpp"
#include "onedf/config.hpp"
#include "onedf/params.hpp"
#include "onedf/partition.hpp"
#include "onedf/temporal.hpp"

namespace onedf {

/// Per-axis structural parameters: one channel-mixing 1D convolution per
/// group (intra) and one over all landmarks (inter), each with a residual
/// connection and layer normalization over L. When the spatial mixer is
/// attention, the conv kernels are replaced by attention stacks shared
/// across groups.
template <typename S>
struct StructuralAxisParamsT {
  std::vector<TensorPtrT<S>> intra_k, intra_b;  // per group [Nk x Nk x 3], [1 x Nk]
  TensorPtrT<S> intra_ln_g, intra_ln_b;
  TensorPtrT<S> inter_k, inter_b;               // [N x N x 3], [1 x N]
  TensorPtrT<S> inter_ln_g, inter_ln_b;
  AttentionParamsT<S> intra_attn, inter_attn;   // spatial_mixer == attention
};

template <typename S>
struct StructuralBlockParamsT {
  StructuralAxisParamsT<S> x, y;
};

/// Eq-style intra-group stage: rows of each group stacked as channels,
/// convolved with same padding, added residually, layer-normalized per row,
/// then scattered back to their original indices.
template <typename S>
VarT<S> intra_group_encode(const VarT<S>& feats, const GroupPartition& partition,
                           const StructuralAxisParamsT<S>& p, const ModelConfig& cfg);

/// Inter-group stage over all N landmark channels.
template <typename S>
VarT<S> inter_group_encode(const VarT<S>& feats, const StructuralAxisParamsT<S>& p,
                           const ModelConfig& cfg);

template <typename S>
StructuralBlockParamsT<S> init_structural_block(const ModelConfig& cfg,
                                                const GroupPartition& partition,
                                                int block_index, Rng& rng,
                                                ParamRegistryT<S>& reg);

#define ONEDF_EXTERN_STRUCTURAL(S)                                                       \
  extern template struct StructuralBlockParamsT<S>;                                      \
  extern template VarT<S> intra_group_encode(const VarT<S>&, const GroupPartition&,      \
                                             const StructuralAxisParamsT<S>&,            \
                                             const ModelConfig&);                        \
  extern template VarT<S> inter_group_encode(const VarT<S>&,                             \
                                             const StructuralAxisParamsT<S>&,            \
                                             const ModelConfig&);                        \
  extern template StructuralBlockParamsT<S> init_structural_block(                       \
      const ModelConfig&, const GroupPartition&, int, Rng&, ParamRegistryT<S>&);

ONEDF_EXTERN_STRUCTURAL(float)
ONEDF_EXTERN_STRUCTURAL(double)
#undef ONEDF_EXTERN_STRUCTURAL

}  // namespace onedf
