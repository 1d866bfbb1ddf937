#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "onedf/autodiff.hpp"
#include "onedf/gradcheck.hpp"

using namespace onedf;

namespace {

template <typename S>
TensorPtrT<S> random_tensor(std::vector<int> dims, Rng& rng, float lo = -1.f, float hi = 1.f) {
  auto t = make_tensor<S>(std::move(dims));
  uniform_init(*t, lo, hi, rng);
  return t;
}

}  // namespace

TEST_CASE("matmul: identity and hand-evaluated products") {
  Tape tape;
  Var eye = tape.constant({2, 2}, {1, 0, 0, 1});
  Var m = tape.constant({2, 2}, {1, 2, 3, 4});
  Var out = matmul(eye, m);
  CHECK(out.t().data[0] == 1.f);
  CHECK(out.t().data[1] == 2.f);
  CHECK(out.t().data[2] == 3.f);
  CHECK(out.t().data[3] == 4.f);

  Var a = tape.constant({2, 2}, {1, 0, 0, 0});
  Var b = tape.constant({2, 2}, {5, 6, 7, 8});
  Var p = matmul(a, b);
  CHECK(p.t().data[0] == 5.f);
  CHECK(p.t().data[1] == 6.f);
  CHECK(p.t().data[2] == 0.f);
  CHECK(p.t().data[3] == 0.f);
}

TEST_CASE("matmul: extent mismatch reports both dim lists") {
  Tape tape;
  Var a = tape.input({2, 3});
  Var b = tape.input({2, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul: gradient of sum(a.b) w.r.t. a matches central differences") {
  Rng rng(7);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({4, 2}, rng);
  GraphFnT<double> fn = [&](TapeD& t, const VarD& x) {
    VarD prod = matmul(x, t.use(b));
    return mean_all(scale(prod, double(prod.t().size())));  // == sum(prod)
  };
  auto res = check_gradient<double>(fn, a, 1e-3);
  CHECK(res.max_error < 1e-4);
  // dL/da with L = sum(a.b) equals the row sums of b broadcast over a's rows
  {
    TapeD tape;
    a->requires_grad = true;
    VarD prod = matmul(tape.use(a), tape.use(b));
    VarD loss = mean_all(scale(prod, double(prod.t().size())));
    tape.backward(loss);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        double expect = b->data.segment(2 * j, 2).sum();
        CHECK(a->grad[4 * i + j] == doctest::Approx(expect).epsilon(1e-9));
      }
    a->requires_grad = false;
    a->grad.resize(0);
  }
}

TEST_CASE("softmax: symmetry, hand values, shift invariance") {
  Tape tape;
  Var z = tape.constant({1, 2}, {0, 0});
  Var s = softmax(z);
  CHECK(s.t().data[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(s.t().data[1] == doctest::Approx(0.5).epsilon(1e-7));

  Var x = tape.constant({1, 3}, {1, 2, 3});
  Var y = softmax(x);
  CHECK(y.t().data[0] == doctest::Approx(0.09003057).epsilon(1e-5));
  CHECK(y.t().data[1] == doctest::Approx(0.24472847).epsilon(1e-5));
  CHECK(y.t().data[2] == doctest::Approx(0.66524096).epsilon(1e-5));

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = rng.uniform_int(1, 9);
    auto base = random_tensor<float>({1, n}, rng, -4.f, 4.f);
    const float c = rng.uniform(-10.f, 10.f);
    Tape t2;
    Var a = softmax(t2.use(base));
    auto shifted = clone_tensor(base);
    shifted->data += c;
    Var b = softmax(t2.use(shifted));
    for (int i = 0; i < n; ++i)
      CHECK(a.t().data[i] == doctest::Approx(b.t().data[i]).epsilon(1e-5));
    // each slice sums to 1 and is positive
    CHECK(std::abs(a.t().data.sum() - 1.f) < 1e-6);
    CHECK((a.t().data > 0.f).all());
  }
}

TEST_CASE("layer_norm: constant slice, hand values, zero gain") {
  Tape tape;
  Var gain = tape.constant({1, 4}, {1, 1, 1, 1});
  Var bias = tape.constant({1, 4}, {0, 0, 0, 0});
  Var c = tape.constant({1, 4}, {3.7f, 3.7f, 3.7f, 3.7f});
  Var out = layer_norm(c, gain, bias);
  for (int i = 0; i < 4; ++i) CHECK(out.t().data[i] == doctest::Approx(0.f));

  Var g2 = tape.constant({1, 2}, {1, 1});
  Var b2 = tape.constant({1, 2}, {0, 0});
  Var x = tape.constant({1, 2}, {1, 3});
  Var y = layer_norm(x, g2, b2);
  CHECK(y.t().data[0] == doctest::Approx(-1.0).epsilon(1e-3));
  CHECK(y.t().data[1] == doctest::Approx(1.0).epsilon(1e-3));

  Var gz = tape.constant({1, 2}, {0, 0});
  Var bz = tape.constant({1, 2}, {0.25f, -0.5f});
  Var yz = layer_norm(x, gz, bz);
  CHECK(yz.t().data[0] == 0.25f);
  CHECK(yz.t().data[1] == -0.5f);

  Var tiny = tape.input({1, 1});
  CHECK_THROWS_AS(layer_norm(tiny, tiny, tiny), ConfigError);
}

TEST_CASE("layer_norm: pre-affine slice statistics") {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const int c = rng.uniform_int(4, 24);
    auto x = random_tensor<float>({2, c}, rng);  // variance around 1/3
    Tape tape;
    Var gain = tape.use(make_tensor({1, c}, std::vector<float>(size_t(c), 1.f)));
    Var bias = tape.use(make_tensor({1, c}, std::vector<float>(size_t(c), 0.f)));
    Var y = layer_norm(tape.use(x), gain, bias);
    for (int i = 0; i < 2; ++i) {
      auto row = y.t().data.segment(i * c, c);
      const double mu = double(row.mean());
      const double var = double((row - float(mu)).square().mean());
      CHECK(std::abs(mu) < 1e-5);
      const double in_var =
          double((x->data.segment(i * c, c) - x->data.segment(i * c, c).mean()).square().mean());
      if (in_var >= 0.1) CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("conv1d: identity kernel, hand evaluation, stride shape law") {
  Tape tape;
  // single channel identity kernel [0,1,0], same padding
  Var x = tape.constant({1, 5}, {0.5f, -1.25f, 2.f, 0.f, 3.5f});
  Var k = tape.constant({1, 1, 3}, {0, 1, 0});
  Var b = tape.constant({1, 1}, {0});
  Var y = conv1d(x, k, b, 1, 1);
  REQUIRE(y.t().dims == std::vector<int>{1, 5});
  for (int i = 0; i < 5; ++i) CHECK(y.t().data[i] == x.t().data[i]);

  Var x2 = tape.constant({1, 4}, {1, 2, 3, 4});
  Var k2 = tape.constant({1, 1, 3}, {1, 1, 1});
  Var y2 = conv1d(x2, k2, b, 1, 1);
  CHECK(y2.t().data[0] == 3.f);
  CHECK(y2.t().data[1] == 6.f);
  CHECK(y2.t().data[2] == 9.f);
  CHECK(y2.t().data[3] == 7.f);

  Rng rng(5);
  for (int len = 4; len <= 32; len += 2) {
    auto xs = random_tensor<float>({2, len}, rng);
    auto ks = random_tensor<float>({3, 2, 3}, rng);
    Tape t2;
    Var bs = t2.input({1, 3});
    Var ys = conv1d(t2.use(xs), t2.use(ks), bs, 2, 1);
    CHECK(ys.t().dims == std::vector<int>{3, len / 2});
  }

  // multi-channel identity map is exact
  Var xm = tape.constant({2, 3}, {1.5f, -2.f, 0.25f, 4.f, 5.f, -6.f});
  Var km = tape.constant({2, 2, 3}, {0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0});
  Var bm = tape.constant({1, 2}, {0, 0});
  Var ym = conv1d(xm, km, bm, 1, 1);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(ym.t().data[i] - xm.t().data[i]) < 1e-6f);
}

TEST_CASE("conv1d: empty output is a shape error") {
  Tape tape;
  Var x = tape.input({1, 2});
  Var k = tape.input({1, 1, 5});
  Var b = tape.input({1, 1});
  CHECK_THROWS_AS(conv1d(x, k, b, 1, 0), ShapeError);
}

TEST_CASE("elementwise: relu, sigmoid, sum_sq oracles") {
  Tape tape;
  Var x = tape.constant({1, 2}, {-1, 2});
  Var r = relu(x);
  CHECK(r.t().data[0] == 0.f);
  CHECK(r.t().data[1] == 2.f);

  Var z = tape.constant({1, 1}, {0});
  CHECK(sigmoid(z).t().data[0] == doctest::Approx(0.5).epsilon(1e-7));

  Var v = tape.constant({1, 2}, {3, 4});
  CHECK(sum_sq(v).t().data[0] == 25.f);

  Var a = tape.input({2, 2});
  Var bad = tape.input({2, 3});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
  CHECK_THROWS_AS(mul(a, bad), ShapeError);
}

TEST_CASE("check_gradient: quadratic, constant, and step-range cases") {
  Rng rng(13);
  auto x = random_tensor<double>({3, 3}, rng);
  GraphFnT<double> quad = [](TapeD&, const VarD& v) { return sum_sq(v); };
  CHECK(check_gradient_max_error<double>(quad, x, 1e-3) < 1e-4);

  GraphFnT<double> constant_fn = [](TapeD& t, const VarD& v) {
    VarD c = t.constant({1, 1}, {2.5f});
    (void)v;
    return c;
  };
  auto res = check_gradient<double>(constant_fn, x, 1e-3);
  CHECK(res.max_error == 0.0);

  CHECK_THROWS_AS(check_gradient<double>(quad, x, 0.5), ContractError);
}

// Reverse-mode gradients match central differences on random instances for
// every operation in the suite.
TEST_CASE("property: gradients of the op suite vs central differences") {
  Rng rng(101);
  int instances = 0;
  auto expect_ok = [&](const GraphFnT<double>& fn, const TensorPtrT<double>& t) {
    CHECK(check_gradient_max_error<double>(fn, t, 1e-3) < 1e-3);
    ++instances;
  };
  using T = TapeD;
  using V = VarD;

  for (int rep = 0; rep < 12; ++rep) {
    const int r = rng.uniform_int(1, 4), c = rng.uniform_int(2, 5);
    auto a = random_tensor<double>({r, c}, rng);
    auto b = random_tensor<double>({r, c}, rng);

    expect_ok([&](T& t, const V& v) { return sum_sq(add(v, t.use(b))); }, a);
    expect_ok([&](T& t, const V& v) { return sum_sq(sub(t.use(b), v)); }, a);
    expect_ok([&](T& t, const V& v) { return sum_sq(mul(v, t.use(b))); }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(scale(v, -1.7)); }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(sigmoid(v)); }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(softmax(v)); }, a);
    expect_ok([&](T&, const V& v) { return mean_all(v); }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(transpose(v)); }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(mean_rows(v)); }, a);
    // relu has a kink at 0; keep inputs away from it
    auto pos = random_tensor<double>({r, c}, rng, 0.2f, 1.f);
    auto neg = random_tensor<double>({r, c}, rng, -1.f, -0.2f);
    expect_ok([&](T&, const V& v) { return sum_sq(relu(v)); }, pos);
    expect_ok([&](T&, const V& v) { return sum_sq(relu(v)); }, neg);

    const int k = rng.uniform_int(2, 4);
    auto m1 = random_tensor<double>({r, k}, rng);
    auto m2 = random_tensor<double>({k, c}, rng);
    expect_ok([&](T& t, const V& v) { return sum_sq(matmul(v, t.use(m2))); }, m1);
    expect_ok([&](T& t, const V& v) { return sum_sq(matmul(t.use(m1), v)); }, m2);
    auto m3 = random_tensor<double>({c, k}, rng);
    expect_ok([&](T& t, const V& v) { return sum_sq(matmul_nt(t.use(m1), v)); }, m3);

    auto w = random_tensor<double>({c, k}, rng);
    auto bias = random_tensor<double>({1, c}, rng);
    auto xin = random_tensor<double>({r, k}, rng);
    expect_ok([&](T& t, const V& v) { return sum_sq(linear(v, t.use(w), t.use(bias))); }, xin);
    expect_ok([&](T& t, const V& v) { return sum_sq(linear(t.use(xin), v, t.use(bias))); }, w);
    expect_ok([&](T& t, const V& v) { return sum_sq(linear(t.use(xin), t.use(w), v)); }, bias);

    auto gain = random_tensor<double>({1, c}, rng, 0.5f, 1.5f);
    auto lbias = random_tensor<double>({1, c}, rng);
    expect_ok(
        [&](T& t, const V& v) { return sum_sq(layer_norm(v, t.use(gain), t.use(lbias))); }, a);
    expect_ok(
        [&](T& t, const V& v) { return sum_sq(layer_norm(t.use(a), v, t.use(lbias))); }, gain);

    // conv1d, all three operands
    const int ci = rng.uniform_int(1, 3), co = rng.uniform_int(1, 3);
    const int len = rng.uniform_int(4, 8);
    auto cx = random_tensor<double>({ci, len}, rng);
    auto ck = random_tensor<double>({co, ci, 3}, rng);
    auto cb = random_tensor<double>({1, co}, rng);
    const int stride = rng.uniform_int(1, 2);
    expect_ok([&](T& t, const V& v) {
      return sum_sq(conv1d(v, t.use(ck), t.use(cb), stride, 1));
    }, cx);
    expect_ok([&](T& t, const V& v) {
      return sum_sq(conv1d(t.use(cx), v, t.use(cb), stride, 1));
    }, ck);
    expect_ok([&](T& t, const V& v) {
      return sum_sq(conv1d(t.use(cx), t.use(ck), v, stride, 1));
    }, cb);

    // conv2d
    auto ix = random_tensor<double>({ci, 6, 6}, rng);
    auto ik = random_tensor<double>({co, ci, 3, 3}, rng);
    expect_ok([&](T& t, const V& v) {
      return sum_sq(conv2d(v, t.use(ik), t.use(cb), 2, 1));
    }, ix);
    expect_ok([&](T& t, const V& v) {
      return sum_sq(conv2d(t.use(ix), v, t.use(cb), 2, 1));
    }, ik);

    // slicing / stacking / reshape
    expect_ok([&](T&, const V& v) {
      std::vector<V> parts{slice_row(v, 0), slice_row(v, r - 1)};
      return sum_sq(concat_rows(std::span<const V>(parts)));
    }, a);
    expect_ok([&](T&, const V& v) {
      std::vector<V> parts{slice_cols(slice_row(v, 0), 0, c - 1),
                           slice_cols(slice_row(v, 0), 1, c - 1)};
      return sum_sq(concat_cols(std::span<const V>(parts)));
    }, a);
    expect_ok([&](T&, const V& v) { return sum_sq(reshape(v, {c, r})); }, a);

    auto r3 = random_tensor<double>({2, 3, c}, rng);
    expect_ok([&](T&, const V& v) { return sum_sq(row3(v, 1, 2)); }, r3);
    expect_ok([&](T&, const V& v) { return sum_sq(mean_axis1(v)); }, r3);
    expect_ok([&](T&, const V& v) { return sum_sq(mean_axis2(v)); }, r3);

    // alp application, both operands
    auto win = random_tensor<double>({2, c}, rng);
    auto table = random_tensor<double>({3, 4, c}, rng);
    expect_ok([&](T& t, const V& v) { return sum_sq(apply_alp(v, t.use(table), 1)); }, win);
    expect_ok([&](T& t, const V& v) { return sum_sq(apply_alp(t.use(win), v, 2)); }, table);
  }
  CHECK(instances >= 100);
}

TEST_CASE("forward passes are bit-deterministic") {
  Rng rng(21);
  auto x = random_tensor<float>({4, 6}, rng);
  auto w = random_tensor<float>({6, 6}, rng);
  auto gain = random_tensor<float>({1, 6}, rng, 0.5f, 1.5f);
  auto bias = random_tensor<float>({1, 6}, rng);
  auto run = [&]() {
    Tape tape;
    Var h = matmul(tape.use(x), tape.use(w));
    Var n = layer_norm(h, tape.use(gain), tape.use(bias));
    Var s = softmax(n);
    return ArrayX(s.t().data);
  };
  ArrayX a = run(), b = run();
  for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("backward visits nodes in reverse execution order") {
  // A diamond: y = f(x) used twice; gradient accumulates once per use and the
  // downstream node must run before its producers.
  auto x = make_tensor({1, 2}, {1.f, 2.f});
  x->requires_grad = true;
  Tape tape;
  Var v = tape.use(x);
  Var y = scale(v, 2.f);
  Var z = add(mul(y, y), y);  // z = 4x^2 + 2x, dz/dx = 8x + 2
  Var loss = mean_all(scale(z, float(z.t().size())));
  tape.backward(loss);
  CHECK(x->grad[0] == doctest::Approx(10.f));
  CHECK(x->grad[1] == doctest::Approx(18.f));
  x->requires_grad = false;
}

TEST_CASE("tape reports the node holding a non-finite value") {
  auto x = make_tensor({1, 2}, {1e30f, 1e30f});
  Tape tape;
  Var v = tape.use(x);
  x->requires_grad = true;
  Var y = mul(v, v);  // overflows to inf
  (void)y;
  CHECK_THROWS_WITH_AS(tape.check_finite(), doctest::Contains("mul"), ContractError);
  x->requires_grad = false;
}

TEST_CASE("float and double instantiations initialize identically") {
  Rng r1(42), r2(42);
  auto f = make_tensor<float>({3, 5});
  auto d = make_tensor<double>({3, 5});
  glorot_init(*f, 5, 3, r1);
  glorot_init(*d, 5, 3, r2);
  for (int64_t i = 0; i < f->size(); ++i) CHECK(double(f->data[i]) == d->data[i]);
}
