#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "onedf/encoder.hpp"
#include "onedf/gradcheck.hpp"

using namespace onedf;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.landmarks = 3;
  cfg.feature_len = 8;
  cfg.heatmap_bins = 16;
  cfg.window = 3;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.image_size = 32;
  cfg.intra_group = false;
  cfg.inter_group = false;
  return cfg;
}

template <typename S>
TensorPtrT<S> random_image(int s, Rng& rng) {
  auto img = make_tensor<S>({1, s, s});
  uniform_init(*img, 0.f, 1.f, rng);
  return img;
}

}  // namespace

TEST_CASE("zero image with zero biases maps to all-zero features") {
  ModelConfig cfg = tiny_config();
  Rng rng(3);
  ParamRegistry reg;
  auto enc = init_encoder(cfg, rng, reg);  // biases start at zero
  Tape tape;
  Var img = tape.input({1, cfg.image_size, cfg.image_size});
  auto [sx, sy] = encode_frame(img, enc, cfg);
  CHECK((sx.t().data == 0.f).all());
  CHECK((sy.t().data == 0.f).all());
}

TEST_CASE("feature shape law holds for several configurations") {
  for (auto [n, l, s] : {std::tuple{3, 8, 32}, {7, 16, 48}, {14, 32, 64}}) {
    ModelConfig cfg = tiny_config();
    cfg.landmarks = n;
    cfg.feature_len = l;
    cfg.heads = 2;
    cfg.image_size = s;
    Rng rng(9);
    ParamRegistry reg;
    auto enc = init_encoder(cfg, rng, reg);
    Tape tape;
    Rng irng(4);
    Var img = tape.use(random_image<float>(s, irng));
    auto [sx, sy] = encode_frame(img, enc, cfg);
    CHECK(sx.t().dims == std::vector<int>{n, l});
    CHECK(sy.t().dims == std::vector<int>{n, l});
    CHECK(sx.t().all_finite());
  }
}

TEST_CASE("statelessness: output depends only on image and parameters") {
  ModelConfig cfg = tiny_config();
  Rng rng(5);
  ParamRegistry reg;
  auto enc = init_encoder(cfg, rng, reg);
  Rng irng(6);
  auto img = random_image<float>(cfg.image_size, irng);
  Tape t1, t2;
  auto [a, ay] = encode_frame(t1.use(img), enc, cfg);
  auto [b, by] = encode_frame(t2.use(img), enc, cfg);
  CHECK((a.t().data == b.t().data).all());
  CHECK((ay.t().data == by.t().data).all());
}

TEST_CASE("sensitivity: patch-level image change alters the features") {
  ModelConfig cfg = tiny_config();
  Rng rng(5);
  ParamRegistry reg;
  auto enc = init_encoder(cfg, rng, reg);
  Rng irng(8);
  auto img = random_image<float>(cfg.image_size, irng);
  auto img2 = clone_tensor(img);
  // overwrite a 6x6 patch
  for (int y = 10; y < 16; ++y)
    for (int x = 10; x < 16; ++x) img2->data[y * cfg.image_size + x] = 0.93f;
  Tape tape;
  auto [a, ay] = encode_frame(tape.use(img), enc, cfg);
  auto [b, by] = encode_frame(tape.use(img2), enc, cfg);
  CHECK(((a.t().data - b.t().data).abs() > 0).any());
  CHECK(((ay.t().data - by.t().data).abs() > 0).any());
}

TEST_CASE("encoder gradient w.r.t. the image matches finite differences") {
  ModelConfig cfg = tiny_config();
  Rng rng(11);
  ParamRegistryT<double> reg;
  auto enc = init_encoder(cfg, rng, reg);
  Rng irng(12);
  auto img = random_image<double>(cfg.image_size, irng);
  GraphFnT<double> fn = [&](TapeD&, const VarD& v) {
    auto [sx, sy] = encode_frame(v, enc, cfg);
    return add(sum_sq(sx), sum_sq(sy));
  };
  CHECK(check_gradient_max_error<double>(fn, img, 1e-3) < 1e-3);
}

TEST_CASE("encode_sequence maps per frame, preserving order") {
  ModelConfig cfg = tiny_config();
  Rng rng(5);
  ParamRegistry reg;
  auto enc = init_encoder(cfg, rng, reg);
  Rng irng(31);
  std::vector<TensorPtr> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(random_image<float>(cfg.image_size, irng));

  Tape tape;
  auto [xs, ys] = encode_sequence(tape, frames, enc, cfg);
  REQUIRE(xs.size() == 3);

  // T=1 reduces to encode_frame
  auto [one_x, one_y] = encode_frame(tape.use(frames[0]), enc, cfg);
  CHECK((xs[0].t().data == one_x.t().data).all());

  // identical frames give identical outputs
  std::vector<TensorPtr> same{frames[1], frames[1]};
  auto [sx, sy] = encode_sequence(tape, same, enc, cfg);
  CHECK((sx[0].t().data == sx[1].t().data).all());

  // permuting frames permutes outputs
  std::vector<TensorPtr> rev{frames[2], frames[1], frames[0]};
  auto [rx, ry] = encode_sequence(tape, rev, enc, cfg);
  CHECK((rx[0].t().data == xs[2].t().data).all());
  CHECK((rx[2].t().data == xs[0].t().data).all());

  // extent mismatch is reported with the frame index
  std::vector<TensorPtr> bad{frames[0], make_tensor({1, 16, 16})};
  CHECK_THROWS_WITH_AS(encode_sequence(tape, bad, enc, cfg), doctest::Contains("frame 1"),
                       ShapeError);
}
