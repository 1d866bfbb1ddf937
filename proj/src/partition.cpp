#include "onedf/partition.hpp"

#include <algorithm>

namespace onedf {

const char* GroupPartition::group_name(int k) {
  static const char* names[kGroupCount] = {"left_eyebrow", "right_eyebrow", "left_eye",
                                           "right_eye",    "nose",          "mouth",
                                           "contour"};
  return (k >= 0 && k < kGroupCount) ? names[k] : "?";
}

int GroupPartition::landmark_count() const {
  int n = 0;
  for (const auto& g : groups) n += int(g.size());
  return n;
}

void GroupPartition::validate(int n) const {
  if (int(groups.size()) != kGroupCount)
    throw ConfigError("partition: expected 7 groups, got " + std::to_string(groups.size()));
  std::vector<int> seen(size_t(n), 0);
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("partition: empty group");
    for (int idx : g) {
      if (idx < 0 || idx >= n)
        throw ConfigError("partition: landmark index " + std::to_string(idx) +
                          " out of range for N=" + std::to_string(n));
      if (seen[size_t(idx)]++)
        throw ConfigError("partition: landmark " + std::to_string(idx) +
                          " appears in two groups");
    }
  }
  for (int i = 0; i < n; ++i)
    if (!seen[size_t(i)])
      throw ConfigError("partition: landmark " + std::to_string(i) + " not covered");
}

GroupPartition default_partition_68() {
  auto range = [](int lo, int hi) {  // inclusive, 0-based
    std::vector<int> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
  };
  GroupPartition p;
  // 68-point markup (0-based): contour 0-16, left brow 17-21, right brow
  // 22-26, nose 27-35, left eye 36-41, right eye 42-47, mouth 48-67;
  // reordered into the fixed group order.
  p.groups = {range(17, 21), range(22, 26), range(36, 41), range(42, 47),
              range(27, 35), range(48, 67), range(0, 16)};
  return p;
}

GroupPartition GroupPartition::default_partition(int n) {
  if (n < kGroupCount)
    throw ConfigError("partition: need at least 7 landmarks, got " + std::to_string(n));
  if (n == 68) {
    GroupPartition p = default_partition_68();
    p.validate(n);
    return p;
  }
  GroupPartition p;
  const int base = n / kGroupCount, extra = n % kGroupCount;
  int next = 0;
  for (int k = 0; k < kGroupCount; ++k) {
    const int len = base + (k < extra ? 1 : 0);
    std::vector<int> g;
    for (int i = 0; i < len; ++i) g.push_back(next++);
    p.groups.push_back(std::move(g));
  }
  p.validate(n);
  return p;
}

}  // namespace onedf
