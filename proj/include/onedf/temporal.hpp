#pragma once

#include <deque>
#include <vector>

#include "onedf/autodiff.hpp"
#include "onedf/config.hpp"
#include "onedf/params.hpp"

namespace onedf {

/// Residual fusion stack shared by every temporal mixer variant:
/// o' = LN(mixed + residual); out = LN(FFN(o') + o') with a 4L relu FFN.
template <typename S>
struct FuseStackParamsT {
  TensorPtrT<S> ln1_g, ln1_b, ln2_g, ln2_b;       // [1 x L]
  TensorPtrT<S> ffn_w1, ffn_b1, ffn_w2, ffn_b2;   // L -> 4L -> L
};

template <typename S>
struct AttentionParamsT {
  std::vector<TensorPtrT<S>> wq, wk, wv;  // per head, [d_h x L]
  TensorPtrT<S> wo;                       // [L x L]
  FuseStackParamsT<S> fuse;
};

/// Two-layer confidence branch L -> L/2 (relu) -> 1 (sigmoid); input is the
/// pre-refinement feature of its frame.
template <typename S>
struct ConfidenceParamsT {
  TensorPtrT<S> w1, b1, w2, b2;
};

/// Per-axis temporal parameters of one block. Which members are allocated
/// depends on the configured mixer.
template <typename S>
struct TemporalAxisParamsT {
  TensorPtrT<S> alp;            // [N x W x L] axis-landmark-positional table
  AttentionParamsT<S> attn;     // attention mixer (fuse stack always present)
  TensorPtrT<S> mix_k, mix_b;   // conv mixer: [L x L x 3], [1 x L]
};

template <typename S>
struct TemporalBlockParamsT {
  TemporalAxisParamsT<S> x, y;
};

template <typename S>
struct BufferEntryT {
  VarT<S> feat;  // refined feature (raw backbone feature when recurrence off)
  VarT<S> conf;  // cached confidence of this entry's frame; may be empty
  int time;
};

/// Rolling store of the last W-1 entries for one (block, axis, landmark),
/// newest first. Entry w of a window built at time t was produced at t-1-w.
template <typename S>
class WindowBufferT {
 public:
  explicit WindowBufferT(int capacity) : capacity_(capacity) {}

  void push(BufferEntryT<S> e) {
    entries_.push_front(std::move(e));
    while (int(entries_.size()) > capacity_) entries_.pop_back();
  }
  void clear() { entries_.clear(); }
  const std::deque<BufferEntryT<S>>& entries() const { return entries_; }
  int size() const { return int(entries_.size()); }

 private:
  int capacity_;
  std::deque<BufferEntryT<S>> entries_;
};

template <typename S>
VarT<S> fuse_stack(const VarT<S>& mixed, const VarT<S>& residual,
                   const FuseStackParamsT<S>& p);

/// Scaled dot-product attention with a single query row. Raw logits are
/// multiplied elementwise by the confidence vector (when given) before the
/// softmax; the same confidence vector modulates every head. Per-head weight
/// vectors are appended to weights_out when provided.
template <typename S>
VarT<S> attend(const VarT<S>& query, const VarT<S>& window, const VarT<S>& conf,
               const AttentionParamsT<S>& p, int heads,
               std::vector<ArrayT<S>>* weights_out = nullptr);

/// Confidence-enhanced multi-head attention over an embedded window whose
/// row 0 is the current frame (the query), followed by the fusion stack.
/// conf holds one score per window row, row 0 first; pass an empty Var to
/// disable modulation.
template <typename S>
VarT<S> ce_mha(const VarT<S>& window, const VarT<S>& conf, const AttentionParamsT<S>& p,
               int heads, std::vector<ArrayT<S>>* weights_out = nullptr);

template <typename S>
VarT<S> confidence_score(const VarT<S>& s, const ConfidenceParamsT<S>& p);

template <typename S>
struct TemporalStepResult {
  VarT<S> refined;
  VarT<S> confidence;  // empty when the confidence branch is inactive
};

/// One recurrent token-mixing step for one (axis, landmark): builds the
/// window [current; buffered newest-first], adds alp embeddings (current row
/// gets position 1), mixes per the configured mixer, and pushes the result
/// (or the raw input when recurrence is off) back into the buffer.
/// An empty conf Var disables confidence modulation. Buffers must hold only
/// entries from times < t.
template <typename S>
TemporalStepResult<S> temporal_refine_step(const VarT<S>& s_raw, const VarT<S>& conf_raw,
                                           int landmark, int time, WindowBufferT<S>& buffer,
                                           const TemporalAxisParamsT<S>& p,
                                           const ModelConfig& cfg,
                                           std::vector<ArrayT<S>>* weights_out = nullptr);

template <typename S>
TemporalBlockParamsT<S> init_temporal_block(const ModelConfig& cfg, int block_index,
                                            Rng& rng, ParamRegistryT<S>& reg);
template <typename S>
ConfidenceParamsT<S> init_confidence(const ModelConfig& cfg, const std::string& axis,
                                     Rng& rng, ParamRegistryT<S>& reg);
template <typename S>
AttentionParamsT<S> init_attention(const ModelConfig& cfg, const std::string& prefix,
                                   Rng& rng, ParamRegistryT<S>& reg, bool with_projections);

#define ONEDF_EXTERN_TEMPORAL(S)                                                           \
  extern template struct TemporalBlockParamsT<S>;                                          \
  extern template class WindowBufferT<S>;                                                  \
  extern template VarT<S> fuse_stack(const VarT<S>&, const VarT<S>&,                       \
                                     const FuseStackParamsT<S>&);                          \
  extern template VarT<S> attend(const VarT<S>&, const VarT<S>&, const VarT<S>&,           \
                                 const AttentionParamsT<S>&, int, std::vector<ArrayT<S>>*);\
  extern template VarT<S> ce_mha(const VarT<S>&, const VarT<S>&, const AttentionParamsT<S>&, \
                                 int, std::vector<ArrayT<S>>*);                            \
  extern template VarT<S> confidence_score(const VarT<S>&, const ConfidenceParamsT<S>&);   \
  extern template TemporalStepResult<S> temporal_refine_step(                              \
      const VarT<S>&, const VarT<S>&, int, int, WindowBufferT<S>&,                         \
      const TemporalAxisParamsT<S>&, const ModelConfig&, std::vector<ArrayT<S>>*);         \
  extern template TemporalBlockParamsT<S> init_temporal_block(const ModelConfig&, int,     \
                                                              Rng&, ParamRegistryT<S>&);   \
  extern template ConfidenceParamsT<S> init_confidence(const ModelConfig&,                 \
                                                       const std::string&, Rng&,           \
                                                       ParamRegistryT<S>&);                \
  extern template AttentionParamsT<S> init_attention(const ModelConfig&, const std::string&, \
                                                     Rng&, ParamRegistryT<S>&, bool);

ONEDF_EXTERN_TEMPORAL(float)
ONEDF_EXTERN_TEMPORAL(double)
#undef ONEDF_EXTERN_TEMPORAL

}  // namespace onedf
