#pragma once

#include <string>
#include <vector>

#include "onedf/tensor.hpp"

namespace onedf {

/// Configuration of the synthetic landmark-video generator. A sequence is a
/// moving deformable point configuration rendered as Gaussian blobs on a
/// grayscale frame, with scripted rectangular occlusion events.
struct SyntheticConfig {
  int num_landmarks = 14;       // N
  int image_size = 64;          // S, square frames
  int sequence_length = 40;     // T
  float translation_amplitude = 1.5f;  // max per-axis centre step, px/frame
  float rotation_amplitude = 0.02f;    // max rotation step, rad/frame
  float jitter_sigma = 2.2f;           // per-landmark smooth jitter scale, px
  float group_deform_sigma = 2.5f;     // per-group smooth deformation scale, px
  float occlusion_rate = 0.35f;        // expected new patches per frame
  int occlusion_min_size = 16;         // px
  int occlusion_max_size = 26;         // px
  int occlusion_min_duration = 5;      // frames
  int occlusion_max_duration = 12;     // frames
  int heatmap_bins = 64;               // D
  float label_sigma = 1.5f;            // bins
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError naming the offending field
};

struct SyntheticSequence {
  int num_landmarks = 0;
  int image_size = 0;
  int sequence_length = 0;
  int heatmap_bins = 0;
  std::vector<ArrayX> frames;            // T arrays of S*S values in [0,1]
  std::vector<float> coords;             // T*N*2, (x, y) px, sub-pixel
  std::vector<float> heatmap_labels;     // T*N*2*D, axis 0 = x
  std::vector<float> confidence_labels;  // T*N*2 in [0.1, 1]
  std::vector<uint8_t> occlusion_masks;  // T*N
  int clamp_count = 0;  // landmarks clamped to the frame border (not persisted)

  float coord(int t, int n, int axis) const {
    return coords[size_t((int64_t(t) * num_landmarks + n) * 2 + axis)];
  }
  const float* heatmap_label(int t, int n, int axis) const {
    return heatmap_labels.data() +
           size_t(((int64_t(t) * num_landmarks + n) * 2 + axis) * heatmap_bins);
  }
  float confidence_label(int t, int n, int axis) const {
    return confidence_labels[size_t((int64_t(t) * num_landmarks + n) * 2 + axis)];
  }
  bool occluded(int t, int n) const {
    return occlusion_masks[size_t(int64_t(t) * num_landmarks + n)] != 0;
  }
};

/// Pure function of the config (including seed): identical configs produce
/// bit-identical sequences.
SyntheticSequence generate_sequence(const SyntheticConfig& cfg);

/// Landmark template in pixel coordinates, centred on the frame: a face-like
/// 68-point layout when N == 68, a ring plus inner cluster otherwise.
std::vector<float> template_layout(int num_landmarks, int image_size);

/// 1D Gaussian label over D bins, peak-normalized to exactly 1. Bin i covers
/// [i*S/D, (i+1)*S/D) and the Gaussian is evaluated at bin centres, matching
/// the bin-centre convention of coordinate extraction.
void make_heatmap_label(float coord_px, int image_size, int bins, float sigma_bins,
                        float* out);

/// max(0.1, 1 - occluded_fraction); the floor keeps attention logits alive
/// under multiplicative confidence weighting.
float make_confidence_label(bool occluded, float occluded_fraction);

/// SYNQ container, little-endian throughout. Round-trips bit-exactly.
void save_sequence(const SyntheticSequence& seq, const std::string& path);
SyntheticSequence load_sequence(const std::string& path);

}  // namespace onedf
