#include "onedf/decoder.hpp"

#include <cmath>

namespace onedf {

template <typename S>
DecoderAxisParamsT<S> init_decoder(const ModelConfig& cfg, const std::string& axis, Rng& rng,
                                   ParamRegistryT<S>& reg) {
  const int l = cfg.feature_len, d = cfg.heatmap_bins;
  const std::string base = "decoder." + axis + ".";
  DecoderAxisParamsT<S> p;
  p.w1 = reg.add(base + "w1", {l, l});
  glorot_init(*p.w1, l, l, rng);
  p.b1 = reg.add(base + "b1", {1, l});
  p.w2 = reg.add(base + "w2", {d, l});
  glorot_init(*p.w2, l, d, rng);
  p.b2 = reg.add(base + "b2", {1, d});
  return p;
}

template <typename S>
VarT<S> decode(const VarT<S>& f, const DecoderAxisParamsT<S>& p) {
  TapeT<S>& tape = *f.tape();
  VarT<S> hidden = relu(linear(f, tape.use(p.w1), tape.use(p.b1)));
  return linear(hidden, tape.use(p.w2), tape.use(p.b2));
}

template <typename S>
double extract_coord(std::span<const S> heatmap, int image_size) {
  const int d = int(heatmap.size());
  if (d < 2) throw ShapeError("extract_coord: need at least 2 bins");
  int best = 0;
  for (int i = 1; i < d; ++i)
    if (heatmap[size_t(i)] > heatmap[size_t(best)]) best = i;
  return (double(best) + 0.5) * double(image_size) / double(d);
}

namespace {

template <typename S>
VarT<S> summed_squared_error(std::span<const VarT<S>> preds, std::span<const VarT<S>> labels,
                             const char* what) {
  if (preds.size() != labels.size())
    throw ShapeError(std::string(what) + ": " + std::to_string(preds.size()) +
                     " predictions vs " + std::to_string(labels.size()) + " labels");
  if (preds.empty()) throw ShapeError(std::string(what) + ": empty input");
  VarT<S> total;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].t().dims != labels[i].t().dims)
      throw ShapeError(std::string(what) + ": extent mismatch at pair " + std::to_string(i) +
                       ": " + dims_str(preds[i].t().dims) + " vs " +
                       dims_str(labels[i].t().dims));
    VarT<S> term = sum_sq(sub(preds[i], labels[i]));
    total = total ? add(total, term) : term;
  }
  return total;
}

}  // namespace

template <typename S>
VarT<S> loss_heatmap(std::span<const VarT<S>> preds, std::span<const VarT<S>> labels) {
  return summed_squared_error(preds, labels, "loss_heatmap");
}

template <typename S>
VarT<S> loss_confidence(std::span<const VarT<S>> preds, std::span<const VarT<S>> labels) {
  return summed_squared_error(preds, labels, "loss_confidence");
}

template <typename S>
VarT<S> total_loss(const VarT<S>& l_h, const VarT<S>& l_c, const TrainConfig& cfg, int epoch) {
  if (epoch < 1 || epoch > cfg.epochs)
    throw ContractError("total_loss: epoch " + std::to_string(epoch) + " outside [1, " +
                        std::to_string(cfg.epochs) + "]");
  if (epoch <= cfg.epochs / 2) {
    VarT<S> blended = scale(l_h, S(cfg.lambda_h));
    if (l_c) blended = add(blended, scale(l_c, S(cfg.lambda_c)));
    return blended;
  }
  return l_h;
}

template <typename S>
void init_adam_state(const ParamRegistryT<S>& params, AdamStateT<S>& state) {
  state.m.clear();
  state.v.clear();
  state.step = 0;
  for (const auto& [name, t] : params.items()) {
    state.m.push_back(ArrayT<S>::Zero(t->size()));
    state.v.push_back(ArrayT<S>::Zero(t->size()));
  }
}

template <typename S>
void adam_step(ParamRegistryT<S>& params, AdamStateT<S>& state, const TrainConfig& cfg) {
  if (state.m.size() != params.items().size())
    throw ContractError("adam_step: state shaped for " + std::to_string(state.m.size()) +
                        " parameters, registry has " +
                        std::to_string(params.items().size()));
  for (size_t i = 0; i < params.items().size(); ++i) {
    const auto& [name, t] = params.items()[i];
    if (!t->grad_finite())
      throw ContractError("adam_step: non-finite gradient for parameter '" + name + "'");
    if (state.m[i].size() != t->size())
      throw ContractError("adam_step: moment extent mismatch for parameter '" + name + "'");
  }
  state.step += 1;
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const S corr1 = S(1) - S(std::pow(double(cfg.beta1), double(state.step)));
  const S corr2 = S(1) - S(std::pow(double(cfg.beta2), double(state.step)));
  const S lr = S(cfg.learning_rate), eps = S(cfg.epsilon);
  for (size_t i = 0; i < params.items().size(); ++i) {
    auto& t = *params.items()[i].second;
    ArrayT<S>& m = state.m[i];
    ArrayT<S>& v = state.v[i];
    if (t.has_grad()) {
      m = b1 * m + (S(1) - b1) * t.grad;
      v = b2 * v + (S(1) - b2) * t.grad.square();
    } else {
      m *= b1;
      v *= b2;
    }
    t.data -= lr * (m / corr1) / ((v / corr2).sqrt() + eps);
    t.zero_grad();
  }
}

#define ONEDF_INSTANTIATE_DECODER(S)                                                  \
  template struct DecoderAxisParamsT<S>;                                              \
  template DecoderAxisParamsT<S> init_decoder(const ModelConfig&, const std::string&, \
                                              Rng&, ParamRegistryT<S>&);              \
  template VarT<S> decode(const VarT<S>&, const DecoderAxisParamsT<S>&);              \
  template double extract_coord(std::span<const S>, int);                             \
  template VarT<S> loss_heatmap(std::span<const VarT<S>>, std::span<const VarT<S>>);  \
  template VarT<S> loss_confidence(std::span<const VarT<S>>, std::span<const VarT<S>>); \
  template VarT<S> total_loss(const VarT<S>&, const VarT<S>&, const TrainConfig&, int); \
  template struct AdamStateT<S>;                                                      \
  template void init_adam_state(const ParamRegistryT<S>&, AdamStateT<S>&);            \
  template void adam_step(ParamRegistryT<S>&, AdamStateT<S>&, const TrainConfig&);

ONEDF_INSTANTIATE_DECODER(float)
ONEDF_INSTANTIATE_DECODER(double)
#undef ONEDF_INSTANTIATE_DECODER

}  // namespace onedf
