#pragma once

#include <string>
#include <vector>

#include "onedf/common.hpp"

namespace onedf {

/// Seven ordered landmark groups (left eyebrow, right eyebrow, left eye,
/// right eye, nose, mouth, contour), disjoint and covering exactly 0..N-1.
struct GroupPartition {
  static constexpr int kGroupCount = 7;
  static const char* group_name(int k);

  std::vector<std::vector<int>> groups;

  int landmark_count() const;
  void validate(int n) const;  // disjointness and coverage

  /// For N == 68 the standard 68-point markup indices reordered into the
  /// group order above; otherwise seven contiguous near-equal chunks.
  static GroupPartition default_partition(int n);
};

}  // namespace onedf
