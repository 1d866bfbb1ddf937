#pragma once

#include <span>

#include "onedf/autodiff.hpp"
#include "onedf/config.hpp"
#include "onedf/params.hpp"

namespace onedf {

/// Fully connected 1D heatmap decoder for one axis: L -> L (relu) -> D,
/// unnormalized output (targets are peak-normalized Gaussians).
template <typename S>
struct DecoderAxisParamsT {
  TensorPtrT<S> w1, b1, w2, b2;
};

template <typename S>
DecoderAxisParamsT<S> init_decoder(const ModelConfig& cfg, const std::string& axis, Rng& rng,
                                   ParamRegistryT<S>& reg);

template <typename S>
VarT<S> decode(const VarT<S>& f, const DecoderAxisParamsT<S>& p);

/// Peak position under the bin-centre convention: (argmax + 0.5) * S / D,
/// ties broken toward the lower index.
template <typename S>
double extract_coord(std::span<const S> heatmap, int image_size);

/// Sum over given pairs of ||pred - label||^2 (squared L2, summed not
/// averaged). preds and labels are matched element-wise.
template <typename S>
VarT<S> loss_heatmap(std::span<const VarT<S>> preds, std::span<const VarT<S>> labels);

/// Same reduction for scalar confidence scores.
template <typename S>
VarT<S> loss_confidence(std::span<const VarT<S>> preds, std::span<const VarT<S>> labels);

/// Two-phase schedule: epoch <= E/2 blends lambda_h*L_h + lambda_c*L_c,
/// afterwards the loss is L_h alone (the confidence branch keeps training
/// through the attention path). epoch is 1-based.
template <typename S>
VarT<S> total_loss(const VarT<S>& l_h, const VarT<S>& l_c, const TrainConfig& cfg, int epoch);

/// First-moment/second-moment state per parameter, in registry order.
template <typename S>
struct AdamStateT {
  std::vector<ArrayT<S>> m, v;
  int64_t step = 0;
};

template <typename S>
void init_adam_state(const ParamRegistryT<S>& params, AdamStateT<S>& state);

/// One bias-corrected Adam update from the gradients accumulated in the
/// registry; gradients are cleared afterwards. A non-finite gradient aborts
/// the step with a diagnostic naming the parameter.
template <typename S>
void adam_step(ParamRegistryT<S>& params, AdamStateT<S>& state, const TrainConfig& cfg);

#define ONEDF_EXTERN_DECODER(S)                                                           \
  extern template struct DecoderAxisParamsT<S>;                                           \
  extern template DecoderAxisParamsT<S> init_decoder(const ModelConfig&, const std::string&, \
                                                     Rng&, ParamRegistryT<S>&);           \
  extern template VarT<S> decode(const VarT<S>&, const DecoderAxisParamsT<S>&);           \
  extern template double extract_coord(std::span<const S>, int);                          \
  extern template VarT<S> loss_heatmap(std::span<const VarT<S>>, std::span<const VarT<S>>); \
  extern template VarT<S> loss_confidence(std::span<const VarT<S>>,                       \
                                          std::span<const VarT<S>>);                      \
  extern template VarT<S> total_loss(const VarT<S>&, const VarT<S>&, const TrainConfig&,  \
                                     int);                                                \
  extern template struct AdamStateT<S>;                                                   \
  extern template void init_adam_state(const ParamRegistryT<S>&, AdamStateT<S>&);         \
  extern template void adam_step(ParamRegistryT<S>&, AdamStateT<S>&, const TrainConfig&);

ONEDF_EXTERN_DECODER(float)
ONEDF_EXTERN_DECODER(double)
#undef ONEDF_EXTERN_DECODER

}  // namespace onedf
