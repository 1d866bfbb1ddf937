#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "onedf/metrics.hpp"

using namespace onedf;

namespace {

TrackResult single_pair(double px, double py, double gx, double gy, double norm) {
  TrackResult r;
  r.frames = 1;
  r.landmarks = 1;
  r.pred = {px, py};
  r.gt = {gx, gy};
  r.normalizer = {norm};
  return r;
}

}  // namespace

TEST_CASE("nrmse: exact prediction, hand value, scale invariance") {
  TrackResult r = single_pair(10, 20, 10, 20, 50);
  CHECK(nrmse(r) == 0.0);

  TrackResult o = single_pair(10.6, 20.8, 10.0, 20.0, 100.0);
  CHECK(std::abs(nrmse(o) - 1.0) < 1e-9);  // ||(0.6, 0.8)|| = 1, /100, *100%

  TrackResult s = o;
  for (auto& v : s.pred) v *= 2;
  for (auto& v : s.gt) v *= 2;
  for (auto& v : s.normalizer) v *= 2;
  CHECK(std::abs(nrmse(s) - nrmse(o)) < 1e-9);

  TrackResult bad = o;
  bad.normalizer = {0.0};
  CHECK_THROWS_AS(nrmse(bad), ShapeError);
}

TEST_CASE("stability: constant offset cancels, hand value at T=2") {
  TrackResult r;
  r.frames = 3;
  r.landmarks = 2;
  r.gt = {1, 1, 5, 5, 2, 1, 6, 5, 2, 3, 6, 7};
  r.pred = r.gt;
  for (size_t i = 0; i < r.pred.size(); i += 2) {
    r.pred[i] += 3.0;  // constant offset
    r.pred[i + 1] -= 2.0;
  }
  r.normalizer = {10, 10, 10};
  CHECK(nrmse(r) > 0.0);
  CHECK(std::abs(stability_error(r)) < 1e-12);
  r.pred = r.gt;
  CHECK(stability_error(r) == 0.0);

  TrackResult t2;
  t2.frames = 2;
  t2.landmarks = 1;
  t2.gt = {0, 0, 0, 0};        // gt displacement (0, 0)
  t2.pred = {0, 0, 3, 4};      // pred displacement (3, 4)
  t2.normalizer = {10, 10};
  CHECK(std::abs(stability_error(t2) - 50.0) < 1e-9);

  TrackResult one = single_pair(0, 0, 0, 0, 1);
  CHECK_THROWS_AS(stability_error(one), ShapeError);
}

TEST_CASE("face normalizer: box diagonal with degenerate fallback") {
  std::vector<double> coords{0, 0, 3, 4};
  CHECK(face_normalizer(coords, 90.5) == doctest::Approx(5.0).epsilon(1e-12));

  std::vector<double> coincident{7, 7, 7, 7, 7, 7};
  CHECK(face_normalizer(coincident, 90.5) == 90.5);

  // translation invariance
  std::vector<double> shifted{10, 20, 13, 24};
  CHECK(face_normalizer(shifted, 90.5) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under consistent landmark relabeling") {
  TrackResult r;
  r.frames = 2;
  r.landmarks = 3;
  r.gt = {1, 2, 3, 4, 5, 6, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5};
  r.pred = {1.1, 2.2, 2.9, 4.1, 5.3, 5.8, 1.4, 2.7, 3.6, 4.4, 5.2, 6.9};
  r.normalizer = {7, 7};

  TrackResult perm = r;
  const int order[3] = {2, 0, 1};
  for (int t = 0; t < 2; ++t)
    for (int n = 0; n < 3; ++n)
      for (int a = 0; a < 2; ++a) {
        perm.pred[size_t((t * 3 + n) * 2 + a)] = r.p(t, order[n], a);
        perm.gt[size_t((t * 3 + n) * 2 + a)] = r.g(t, order[n], a);
      }
  CHECK(std::abs(nrmse(perm) - nrmse(r)) < 1e-12);
  CHECK(std::abs(stability_error(perm) - stability_error(r)) < 1e-12);
}

TEST_CASE("occluded-subset restriction") {
  TrackResult r;
  r.frames = 2;
  r.landmarks = 2;
  r.gt = {0, 0, 10, 10, 0, 0, 10, 10};
  r.pred = {1, 0, 10, 10, 0, 0, 10, 13};
  r.normalizer = {10, 10};
  const std::vector<uint8_t> keep{1, 0, 0, 1};  // (0,0) err 1px and (1,1) err 3px
  CHECK(std::abs(nrmse_subset(r, keep) - 100.0 * (0.1 + 0.3) / 2.0) < 1e-9);
  const std::vector<uint8_t> none{0, 0, 0, 0};
  CHECK(nrmse_subset(r, none) == -1.0);
}
