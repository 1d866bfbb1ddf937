#include "onedf/model.hpp"

namespace onedf {

template <typename S>
ModelT<S> init_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelT<S> m;
  m.cfg = cfg;
  if (cfg.structural_active())
    m.partition = GroupPartition::default_partition(cfg.landmarks);
  Rng rng(derive_seed(seed, 0x0d01));
  m.encoder = init_encoder(cfg, rng, m.params);
  if (cfg.confidence_active()) {
    m.conf_x = init_confidence(cfg, "x", rng, m.params);
    m.conf_y = init_confidence(cfg, "y", rng, m.params);
  }
  for (int b = 1; b <= cfg.blocks; ++b) {
    BlockParamsT<S> block;
    if (cfg.temporal_active())
      block.temporal = init_temporal_block(cfg, b, rng, m.params);
    if (cfg.structural_active())
      block.structural = init_structural_block(cfg, m.partition, b, rng, m.params);
    m.blocks.push_back(std::move(block));
  }
  m.dec_x = init_decoder(cfg, "x", rng, m.params);
  m.dec_y = init_decoder(cfg, "y", rng, m.params);
  return m;
}

template <typename S>
SequenceRunnerT<S>::SequenceRunnerT(const ModelT<S>& model, TapeT<S>& tape)
    : model_(model), tape_(&tape) {
  const ModelConfig& cfg = model.cfg;
  if (cfg.temporal_active()) {
    buffers_.resize(size_t(cfg.blocks));
    for (auto& block : buffers_) {
      block.resize(2);
      for (auto& axis : block)
        axis.assign(size_t(cfg.landmarks), WindowBufferT<S>(cfg.window - 1));
    }
  }
}

template <typename S>
FrameResultT<S> SequenceRunnerT<S>::step(const float* pixels) {
  const int s = model_.cfg.image_size;
  VarT<S> image = tape_->input({1, s, s});
  for (int64_t i = 0; i < int64_t(s) * s; ++i) image.t().data[i] = S(pixels[i]);
  return step(image);
}

template <typename S>
void SequenceRunnerT<S>::rebind(TapeT<S>& fresh) {
  for (auto& block : buffers_)
    for (auto& axis : block)
      for (auto& buf : axis) {
        std::deque<BufferEntryT<S>> moved;
        for (const auto& e : buf.entries()) {
          BufferEntryT<S> copy;
          auto feat = make_tensor<S>(e.feat.t().dims);
          feat->data = e.feat.t().data;
          copy.feat = fresh.use(feat);
          if (e.conf) {
            auto conf = make_tensor<S>(e.conf.t().dims);
            conf->data = e.conf.t().data;
            copy.conf = fresh.use(conf);
          }
          copy.time = e.time;
          moved.push_back(std::move(copy));
        }
        buf.clear();
        for (auto it = moved.rbegin(); it != moved.rend(); ++it) buf.push(*it);
      }
  tape_ = &fresh;
}

template <typename S>
FrameResultT<S> SequenceRunnerT<S>::step(const VarT<S>& image) {
  const ModelConfig& cfg = model_.cfg;
  time_ += 1;
  const int t = time_;

  // window-chunked attention: without recurrence the buffers are cleared at
  // every chunk boundary, isolating windows of at most W frames
  if (cfg.temporal_active() && !cfg.recurrence && (t - 1) % cfg.window == 0)
    for (auto& block : buffers_)
      for (auto& axis : block)
        for (auto& buf : axis) buf.clear();

  FrameResultT<S> out;
  auto [sx, sy] = encode_frame(image, model_.encoder, cfg);
  VarT<S> feats[2] = {sx, sy};

  for (int b = 0; b < cfg.blocks; ++b) {
    const BlockParamsT<S>& block = model_.blocks[size_t(b)];
    if (cfg.temporal_active()) {
      for (int axis = 0; axis < 2; ++axis) {
        const TemporalAxisParamsT<S>& tp =
            axis == 0 ? block.temporal.x : block.temporal.y;
        const ConfidenceParamsT<S>& cp = axis == 0 ? model_.conf_x : model_.conf_y;
        std::vector<VarT<S>> refined;
        refined.reserve(size_t(cfg.landmarks));
        for (int n = 0; n < cfg.landmarks; ++n) {
          VarT<S> raw = slice_row(feats[axis], n);
          VarT<S> conf;
          if (cfg.confidence_active()) conf = confidence_score(raw, cp);
          auto res = temporal_refine_step(
              raw, conf, n, t, buffers_[size_t(b)][size_t(axis)][size_t(n)], tp, cfg);
          refined.push_back(res.refined);
          if (b == 0 && res.confidence) {
            // the label loss guides the branch itself; the backbone trains
            // through the attention path, not through the label loss
            VarT<S> guided = confidence_score(detach(raw), cp);
            (axis == 0 ? out.conf_x : out.conf_y).push_back(guided);
          }
        }
        feats[axis] = concat_rows(std::span<const VarT<S>>(refined));
      }
    }
    for (int axis = 0; axis < 2; ++axis) {
      const StructuralAxisParamsT<S>& sp =
          axis == 0 ? block.structural.x : block.structural.y;
      if (cfg.intra_group)
        feats[axis] = intra_group_encode(feats[axis], model_.partition, sp, cfg);
      if (cfg.inter_group) feats[axis] = inter_group_encode(feats[axis], sp, cfg);
    }
  }

  out.feat_x = feats[0];
  out.feat_y = feats[1];
  out.hx.reserve(size_t(cfg.landmarks));
  out.hy.reserve(size_t(cfg.landmarks));
  for (int n = 0; n < cfg.landmarks; ++n) {
    out.hx.push_back(decode(slice_row(feats[0], n), model_.dec_x));
    out.hy.push_back(decode(slice_row(feats[1], n), model_.dec_y));
  }
  return out;
}

template struct ModelT<float>;
template struct ModelT<double>;
template ModelT<float> init_model(const ModelConfig&, uint64_t);
template ModelT<double> init_model(const ModelConfig&, uint64_t);
template class SequenceRunnerT<float>;
template class SequenceRunnerT<double>;

}  // namespace onedf
