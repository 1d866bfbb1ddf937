#pragma once

#include <cstdint>
#include <string>

#include "onedf/common.hpp"
#include "onedf/synth.hpp"

namespace onedf {

/// Temporal module variants: off (backbone straight to decoder), simple_mix
/// (current feature plus window mean), attention (the full mechanism).
enum class TemporalMode { kOff, kSimpleMix, kAttention };

/// Token-communication choice inside a stage: attention or 1D convolution.
enum class Mixer { kAttention, kConv };

/// Model hyper-parameters and ablation switches. Desk-scale defaults; the
/// reference values searched at full scale (L=256, D=512, W=10, M=2, H=4)
/// are documented in the README.
struct ModelConfig {
  int landmarks = 14;    // N
  int feature_len = 32;  // L
  int heatmap_bins = 64; // D
  int window = 6;        // W
  int blocks = 2;        // M
  int heads = 4;         // H
  int image_size = 64;   // S
  float label_sigma = 1.5f;

  TemporalMode temporal = TemporalMode::kAttention;
  bool recurrence = true;
  bool confidence = true;
  bool intra_group = true;
  bool inter_group = true;
  Mixer spatial_mixer = Mixer::kConv;
  Mixer temporal_mixer = Mixer::kAttention;

  void validate() const;

  bool temporal_active() const { return temporal != TemporalMode::kOff; }
  bool structural_active() const { return intra_group || inter_group; }
  /// Confidence branches exist only under the attention mixer.
  bool confidence_active() const {
    return temporal == TemporalMode::kAttention && confidence &&
           temporal_mixer == Mixer::kAttention;
  }
  int head_dim() const { return feature_len / heads; }
  /// Flattened marginal feature length entering the per-landmark heads:
  /// 32 channels at S/8 positions (trunk /4, one strided marginal stage).
  int marginal_feature_len() const { return 32 * (image_size / 8); }

  bool operator==(const ModelConfig&) const = default;
};

/// Optimization settings (Eq-style two-phase schedule: joint heatmap +
/// confidence loss while epoch <= epochs/2, heatmap-only afterwards).
struct TrainConfig {
  float lambda_h = 0.9f;
  float lambda_c = 0.1f;
  int epochs = 16;
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  int batch = 1;  // sequences per optimizer step; the batch loss is averaged
  // Optimizer steps are taken per this many frames (truncated backpropagation
  // through time); 0 steps once per whole sequence. Requires batch == 1.
  int bptt_span = 10;
  uint64_t seed = 1;

  void validate() const;
};

struct DatasetSpec {
  int train_sequences = 20;
  int val_sequences = 5;
  int test_sequences = 5;
};

struct AblationConfig {
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> settings;  // empty = full default grid
  std::vector<int> window_sweep = {2, 4, 6, 8, 10};
  bool mixer_study = true;
};

/// One parsed configuration file (JSON object with sections model / synth /
/// train / ablate; unknown keys anywhere are hard errors).
struct RunConfig {
  ModelConfig model;
  SyntheticConfig synth;  // N/S/D/label_sigma mirrored from model
  DatasetSpec dataset;
  TrainConfig train;
  AblationConfig ablate;
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

std::string temporal_mode_name(TemporalMode m);
std::string mixer_name(Mixer m);

}  // namespace onedf
