#include "onedf/encoder.hpp"

namespace onedf {

namespace {

template <typename S>
TensorPtrT<S> add_glorot(ParamRegistryT<S>& reg, const std::string& name,
                         std::vector<int> dims, int fan_in, int fan_out, Rng& rng) {
  auto t = reg.add(name, std::move(dims));
  glorot_init(*t, fan_in, fan_out, rng);
  return t;
}

}  // namespace

template <typename S>
EncoderParamsT<S> init_encoder(const ModelConfig& cfg, Rng& rng, ParamRegistryT<S>& reg) {
  const int n = cfg.landmarks, l = cfg.feature_len, f = cfg.marginal_feature_len();
  EncoderParamsT<S> p;
  p.trunk_k1 = add_glorot(reg, "encoder.trunk.conv1.weight", {8, 1, 3, 3}, 9, 72, rng);
  p.trunk_b1 = reg.add("encoder.trunk.conv1.bias", {1, 8});
  p.trunk_k2 = add_glorot(reg, "encoder.trunk.conv2.weight", {16, 8, 3, 3}, 72, 144, rng);
  p.trunk_b2 = reg.add("encoder.trunk.conv2.bias", {1, 16});
  auto init_axis = [&](typename EncoderParamsT<S>::Axis& a, const std::string& axis) {
    const std::string base = "encoder." + axis + ".";
    a.marg_k1 = add_glorot(reg, base + "marg1.weight", {32, 16, 3}, 48, 96, rng);
    a.marg_b1 = reg.add(base + "marg1.bias", {1, 32});
    a.marg_k2 = add_glorot(reg, base + "marg2.weight", {32, 32, 3}, 96, 96, rng);
    a.marg_b2 = reg.add(base + "marg2.bias", {1, 32});
    a.head_w = add_glorot(reg, base + "heads.weight", {n * l, f}, f, l, rng);
    a.head_b = reg.add(base + "heads.bias", {1, n * l});
    a.ln_g = reg.add(base + "ln.gain", {1, l});
    a.ln_g->data.setConstant(S(1));
    a.ln_b = reg.add(base + "ln.bias", {1, l});
  };
  init_axis(p.x, "x");
  init_axis(p.y, "y");
  return p;
}

template <typename S>
std::pair<VarT<S>, VarT<S>> encode_frame(const VarT<S>& image, const EncoderParamsT<S>& p,
                                         const ModelConfig& cfg) {
  const int s = cfg.image_size, n = cfg.landmarks, l = cfg.feature_len;
  if (image.t().dims != std::vector<int>{1, s, s})
    throw ShapeError("encode_frame: image " + dims_str(image.t().dims) + ", expected [1x" +
                     std::to_string(s) + "x" + std::to_string(s) + "]");
  TapeT<S>& tape = *image.tape();

  // shared trunk: two strided 3x3 stages, S -> S/2 -> S/4
  VarT<S> h = relu(conv2d(image, tape.use(p.trunk_k1), tape.use(p.trunk_b1), 2, 1));
  h = relu(conv2d(h, tape.use(p.trunk_k2), tape.use(p.trunk_b2), 2, 1));

  auto marginal = [&](const typename EncoderParamsT<S>::Axis& a, bool along_x) {
    // collapse the orthogonal spatial axis, then two strided 1D stages
    VarT<S> m = along_x ? mean_axis1(h) : mean_axis2(h);  // [16 x S/4]
    m = relu(conv1d(m, tape.use(a.marg_k1), tape.use(a.marg_b1), 2, 1));
    m = relu(conv1d(m, tape.use(a.marg_k2), tape.use(a.marg_b2), 1, 1));  // [32 x S/8]
    VarT<S> flat = reshape(m, {1, int(m.t().size())});
    VarT<S> rows = linear(flat, tape.use(a.head_w), tape.use(a.head_b));  // [1 x N*L]
    return layer_norm(reshape(rows, {n, l}), tape.use(a.ln_g), tape.use(a.ln_b));
  };
  return {marginal(p.x, true), marginal(p.y, false)};
}

template <typename S>
std::pair<std::vector<VarT<S>>, std::vector<VarT<S>>> encode_sequence(
    TapeT<S>& tape, const std::vector<TensorPtrT<S>>& frames, const EncoderParamsT<S>& p,
    const ModelConfig& cfg) {
  std::vector<VarT<S>> xs, ys;
  xs.reserve(frames.size());
  ys.reserve(frames.size());
  for (size_t t = 0; t < frames.size(); ++t) {
    try {
      auto [sx, sy] = encode_frame(tape.use(frames[t]), p, cfg);
      xs.push_back(sx);
      ys.push_back(sy);
    } catch (const ShapeError& e) {
      throw ShapeError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return {std::move(xs), std::move(ys)};
}

template struct EncoderParamsT<float>;
template struct EncoderParamsT<double>;
template EncoderParamsT<float> init_encoder(const ModelConfig&, Rng&, ParamRegistryT<float>&);
template EncoderParamsT<double> init_encoder(const ModelConfig&, Rng&,
                                             ParamRegistryT<double>&);
template std::pair<VarT<float>, VarT<float>> encode_frame(const VarT<float>&,
                                                          const EncoderParamsT<float>&,
                                                          const ModelConfig&);
template std::pair<VarT<double>, VarT<double>> encode_frame(const VarT<double>&,
                                                            const EncoderParamsT<double>&,
                                                            const ModelConfig&);
template std::pair<std::vector<VarT<float>>, std::vector<VarT<float>>> encode_sequence(
    TapeT<float>&, const std::vector<TensorPtrT<float>>&, const EncoderParamsT<float>&,
    const ModelConfig&);
template std::pair<std::vector<VarT<double>>, std::vector<VarT<double>>> encode_sequence(
    TapeT<double>&, const std::vector<TensorPtrT<double>>&, const EncoderParamsT<double>&,
    const ModelConfig&);

}  // namespace onedf
