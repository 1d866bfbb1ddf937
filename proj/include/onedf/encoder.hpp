#pragma once

#include <utility>
#include <vector>

#include "onedf/autodiff.hpp"
#include "onedf/config.hpp"
#include "onedf/params.hpp"

namespace onedf {

/// Backbone 1D representation encoder: a shared strided 2D trunk, per-axis
/// marginalizers that collapse the orthogonal spatial axis, and per-landmark
/// linear heads emitting one 1xL feature row per landmark per axis.
template <typename S>
struct EncoderParamsT {
  TensorPtrT<S> trunk_k1, trunk_b1;  // [8 x 1 x 3 x 3], [1 x 8]
  TensorPtrT<S> trunk_k2, trunk_b2;  // [16 x 8 x 3 x 3], [1 x 16]
  struct Axis {
    TensorPtrT<S> marg_k1, marg_b1;  // [32 x 16 x 3], [1 x 32]
    TensorPtrT<S> marg_k2, marg_b2;  // [32 x 32 x 3], [1 x 32]
    TensorPtrT<S> head_w, head_b;    // [N*L x F], [1 x N*L]
    TensorPtrT<S> ln_g, ln_b;        // feature normalization closing the backbone
  } x, y;
};

template <typename S>
EncoderParamsT<S> init_encoder(const ModelConfig& cfg, Rng& rng, ParamRegistryT<S>& reg);

/// image [1 x S x S] -> (Sx, Sy), each [N x L]. Stateless and differentiable.
template <typename S>
std::pair<VarT<S>, VarT<S>> encode_frame(const VarT<S>& image, const EncoderParamsT<S>& p,
                                         const ModelConfig& cfg);

/// Per-frame map of encode_frame; errors are annotated with the frame index.
template <typename S>
std::pair<std::vector<VarT<S>>, std::vector<VarT<S>>> encode_sequence(
    TapeT<S>& tape, const std::vector<TensorPtrT<S>>& frames, const EncoderParamsT<S>& p,
    const ModelConfig& cfg);

extern template struct EncoderParamsT<float>;
extern template struct EncoderParamsT<double>;
extern template EncoderParamsT<float> init_encoder(const ModelConfig&, Rng&,
                                                   ParamRegistryT<float>&);
extern template EncoderParamsT<double> init_encoder(const ModelConfig&, Rng&,
                                                    ParamRegistryT<double>&);
extern template std::pair<VarT<float>, VarT<float>> encode_frame(
    const VarT<float>&, const EncoderParamsT<float>&, const ModelConfig&);
extern template std::pair<VarT<double>, VarT<double>> encode_frame(
    const VarT<double>&, const EncoderParamsT<double>&, const ModelConfig&);
extern template std::pair<std::vector<VarT<float>>, std::vector<VarT<float>>> encode_sequence(
    TapeT<float>&, const std::vector<TensorPtrT<float>>&, const EncoderParamsT<float>&,
    const ModelConfig&);
extern template std::pair<std::vector<VarT<double>>, std::vector<VarT<double>>> encode_sequence(
    TapeT<double>&, const std::vector<TensorPtrT<double>>&, const EncoderParamsT<double>&,
    const ModelConfig&);

}  // namespace onedf
