#pragma once

#include <string>
#include <vector>

#include "onedf/config.hpp"
#include "onedf/synth.hpp"
#include "onedf/train.hpp"

namespace onedf {

/// Applies a named ablation setting to a base configuration. Known names:
/// BL, BL+TE-a, BL+TE-r, BL+TE-c, BL+TE, BL+IR, BL+IT, BL+IR+IT, BL+TE+IR,
/// BL+TE+IT, BL+TE+IR+IT, W=<n>, and the four mixer pairings
/// T_Att&S_Conv, T_Att&S_Att, T_Conv&S_Conv, T_Conv&S_Att.
ModelConfig apply_setting(const ModelConfig& base, const std::string& name);

std::vector<std::string> default_ablation_settings();

struct AblationRow {
  std::string setting;
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double nrmse = -1;
  double stability = -1;
  double nrmse_occluded = -1;
  double mean_conf_clean = -1;
  double mean_conf_occluded = -1;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  /// Seed-mean / sample standard deviation of a column over one setting's
  /// successful rows.
  struct Stats {
    double mean = -1, stddev = 0;
    int count = 0;
  };
  Stats stats(const std::string& setting, double AblationRow::*column) const;
};

/// Trains and evaluates every (setting, seed) job; failures are recorded and
/// the grid continues. Artifacts land under out_dir: results.csv, SVG plots,
/// and per-job training logs/checkpoints.
AblationReport run_ablation(const ModelConfig& base, const TrainConfig& tc,
                            const AblationConfig& ac,
                            const std::vector<SyntheticSequence>& train_set,
                            const std::vector<SyntheticSequence>& val_set,
                            const std::vector<SyntheticSequence>& test_set,
                            const std::string& out_dir, int threads);

void write_ablation_csv(const AblationReport& report, const std::string& path);

/// Minimal self-contained SVG writers (bar chart with std whiskers, line
/// chart over a numeric x axis).
void write_svg_bars(const std::string& path, const std::string& title,
                    const std::vector<std::string>& labels, const std::vector<double>& means,
                    const std::vector<double>& stds);
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<double>& means,
                     const std::vector<double>& stds);

}  // namespace onedf
