#pragma once

#include <memory>
#include <vector>

#include "onedf/config.hpp"
#include "onedf/decoder.hpp"
#include "onedf/encoder.hpp"
#include "onedf/structural.hpp"
#include "onedf/temporal.hpp"

namespace onedf {

template <typename S>
struct BlockParamsT {
  TemporalBlockParamsT<S> temporal;
  StructuralBlockParamsT<S> structural;
};

/// The full tracker: backbone encoder, M blocks of temporal refinement plus
/// intra/inter-group structural encoding, per-axis confidence branches and
/// heatmap decoders. All learnable tensors live in the registry under
/// canonical dotted names; initialization is a pure function of
/// (config, seed).
template <typename S>
struct ModelT {
  ModelConfig cfg;
  GroupPartition partition;  // empty groups list when structural inactive
  ParamRegistryT<S> params;
  EncoderParamsT<S> encoder;
  ConfidenceParamsT<S> conf_x, conf_y;
  std::vector<BlockParamsT<S>> blocks;
  DecoderAxisParamsT<S> dec_x, dec_y;
};

template <typename S>
ModelT<S> init_model(const ModelConfig& cfg, uint64_t seed);

template <typename S>
struct FrameResultT {
  std::vector<VarT<S>> hx, hy;          // N predicted heatmaps, each [1 x D]
  std::vector<VarT<S>> conf_x, conf_y;  // block-1 confidence scores (may be empty)
  VarT<S> feat_x, feat_y;               // final representations [N x L]
};

/// Streams a sequence through the tracker one frame at a time, holding the
/// recurrent window buffers. One runner per sequence per tape; time steps
/// are strictly sequential.
template <typename S>
class SequenceRunnerT {
 public:
  SequenceRunnerT(const ModelT<S>& model, TapeT<S>& tape);

  /// Consumes the next frame (S*S row-major pixels).
  FrameResultT<S> step(const float* pixels);
  FrameResultT<S> step(const VarT<S>& image);

  /// Moves the recurrent state onto a fresh tape, detaching it from the old
  /// record (gradient truncation point for segmented training). The old tape
  /// may be destroyed afterwards.
  void rebind(TapeT<S>& fresh);

  int time() const { return time_; }

 private:
  const ModelT<S>& model_;
  TapeT<S>* tape_;
  int time_ = 0;  // frames consumed so far
  // buffers[block][axis][landmark]
  std::vector<std::vector<std::vector<WindowBufferT<S>>>> buffers_;
};

using Model = ModelT<float>;
using SequenceRunner = SequenceRunnerT<float>;

extern template struct ModelT<float>;
extern template struct ModelT<double>;
extern template ModelT<float> init_model(const ModelConfig&, uint64_t);
extern template ModelT<double> init_model(const ModelConfig&, uint64_t);
extern template class SequenceRunnerT<float>;
extern template class SequenceRunnerT<double>;

}  // namespace onedf
