#pragma once

#include <span>
#include <vector>

#include "onedf/common.hpp"
#include "onedf/partition.hpp"

namespace onedf {

/// Predicted and ground-truth coordinates for one tracked sequence, with a
/// per-frame normalizer (px). Layout: [t][n][axis], axis 0 = x.
struct TrackResult {
  int frames = 0;
  int landmarks = 0;
  std::vector<double> pred;        // T*N*2
  std::vector<double> gt;          // T*N*2
  std::vector<double> normalizer;  // T, all > 0

  double p(int t, int n, int a) const { return pred[size_t((int64_t(t) * landmarks + n) * 2 + a)]; }
  double g(int t, int n, int a) const { return gt[size_t((int64_t(t) * landmarks + n) * 2 + a)]; }
  void validate() const;
};

/// Mean normalized point-to-point error, percent:
/// 100 * mean_{t,n} ||p_tn - g_tn|| / normalizer_t.
double nrmse(const TrackResult& r);

/// Same mean restricted to (t, n) pairs where keep[t*N + n] is true.
/// Returns -1 when the subset is empty.
double nrmse_subset(const TrackResult& r, std::span<const uint8_t> keep);

/// Stability: mean discrepancy between predicted and ground-truth per-frame
/// displacements, percent. Zero for any constant-offset prediction.
double stability_error(const TrackResult& r);

/// Diagonal of the tight bounding box of one frame's ground-truth landmarks
/// (N*2 values); falls back to the image diagonal for a degenerate box.
double face_normalizer(std::span<const double> frame_coords, double image_diag);

}  // namespace onedf
