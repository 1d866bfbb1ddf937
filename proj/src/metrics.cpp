#include "onedf/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace onedf {

void TrackResult::validate() const {
  const size_t want = size_t(int64_t(frames) * landmarks * 2);
  if (frames < 1 || landmarks < 1)
    throw ShapeError("track result: need at least one frame and landmark");
  if (pred.size() != want || gt.size() != want)
    throw ShapeError("track result: coordinate extent mismatch");
  if (normalizer.size() != size_t(frames))
    throw ShapeError("track result: one normalizer per frame required");
  for (double n : normalizer)
    if (!(n > 0)) throw ShapeError("track result: normalizer must be > 0");
}

double nrmse(const TrackResult& r) {
  r.validate();
  double acc = 0;
  for (int t = 0; t < r.frames; ++t)
    for (int n = 0; n < r.landmarks; ++n)
      acc += std::hypot(r.p(t, n, 0) - r.g(t, n, 0), r.p(t, n, 1) - r.g(t, n, 1)) /
             r.normalizer[size_t(t)];
  return 100.0 * acc / (double(r.frames) * double(r.landmarks));
}

double nrmse_subset(const TrackResult& r, std::span<const uint8_t> keep) {
  r.validate();
  if (keep.size() != size_t(int64_t(r.frames) * r.landmarks))
    throw ShapeError("nrmse_subset: mask extent mismatch");
  double acc = 0;
  int64_t count = 0;
  for (int t = 0; t < r.frames; ++t)
    for (int n = 0; n < r.landmarks; ++n) {
      if (!keep[size_t(int64_t(t) * r.landmarks + n)]) continue;
      acc += std::hypot(r.p(t, n, 0) - r.g(t, n, 0), r.p(t, n, 1) - r.g(t, n, 1)) /
             r.normalizer[size_t(t)];
      ++count;
    }
  return count == 0 ? -1.0 : 100.0 * acc / double(count);
}

double stability_error(const TrackResult& r) {
  r.validate();
  if (r.frames < 2) throw ShapeError("stability_error: need at least 2 frames");
  double acc = 0;
  for (int t = 1; t < r.frames; ++t)
    for (int n = 0; n < r.landmarks; ++n) {
      const double dx =
          (r.p(t, n, 0) - r.p(t - 1, n, 0)) - (r.g(t, n, 0) - r.g(t - 1, n, 0));
      const double dy =
          (r.p(t, n, 1) - r.p(t - 1, n, 1)) - (r.g(t, n, 1) - r.g(t - 1, n, 1));
      acc += std::hypot(dx, dy) / r.normalizer[size_t(t)];
    }
  return 100.0 * acc / (double(r.frames - 1) * double(r.landmarks));
}

double face_normalizer(std::span<const double> frame_coords, double image_diag) {
  if (frame_coords.size() < 4 || frame_coords.size() % 2 != 0)
    throw ShapeError("face_normalizer: need at least 2 landmarks");
  double xmin = frame_coords[0], xmax = frame_coords[0];
  double ymin = frame_coords[1], ymax = frame_coords[1];
  for (size_t i = 0; i < frame_coords.size(); i += 2) {
    xmin = std::min(xmin, frame_coords[i]);
    xmax = std::max(xmax, frame_coords[i]);
    ymin = std::min(ymin, frame_coords[i + 1]);
    ymax = std::max(ymax, frame_coords[i + 1]);
  }
  const double w = xmax - xmin, h = ymax - ymin;
  if (w <= 0 || h <= 0) return image_diag;  // degenerate box
  return std::hypot(w, h);
}

}  // namespace onedf
