#pragma once

#include <optional>
#include <string>
#include <vector>

#include "onedf/checkpoint.hpp"
#include "onedf/metrics.hpp"
#include "onedf/model.hpp"
#include "onedf/synth.hpp"

namespace onedf {

/// Heatmap and confidence losses of one sequence on the given tape.
struct SequenceLoss {
  Var loss_h;
  Var loss_c;  // empty when the confidence branch is inactive
};

SequenceLoss sequence_forward_loss(const Model& model, const SyntheticSequence& seq,
                                   Tape& tape);

struct EpochRecord {
  int epoch = 0;
  int phase = 0;  // 1 while epoch <= E/2
  double train_loss = 0;
  double train_loss_h = 0;
  std::optional<double> train_loss_c;  // absent in phase 2
  double val_loss = 0;
  double val_nrmse = 0;
};

std::string epoch_record_json(const EpochRecord& r);

struct TrainOptions {
  std::string out_dir;          // receives final.1df1, best.1df1, train_log.jsonl
  std::string resume_from;      // checkpoint path; optimizer state restored
  int stop_after_epoch = 0;     // 0 = all epochs; used to exercise resume
  bool quiet = true;            // no progress lines on stderr
};

struct TrainResult {
  std::vector<EpochRecord> records;
  std::string final_path, best_path;
  double best_val_nrmse = -1;
  int best_epoch = 0;
};

/// Two-phase training with per-epoch JSONL logging and deterministic
/// shuffling: a pure function of (model seed, train config, data).
TrainResult train_model(Model& model, const std::vector<SyntheticSequence>& train_set,
                        const std::vector<SyntheticSequence>& val_set,
                        const TrainConfig& tc, const TrainOptions& opt);

/// Tracking evaluation of one sequence (forward only).
struct SequenceEval {
  TrackResult track;
  double nrmse = 0;
  double stability = 0;
  double nrmse_occluded = -1;             // -1 when no pair is occluded
  double mean_conf_clean = -1, mean_conf_occluded = -1;
  std::vector<double> group_nrmse;        // per partition group; empty without one
  double loss_h = 0;
};

SequenceEval evaluate_sequence(const Model& model, const SyntheticSequence& seq);

struct EvalReport {
  std::vector<SequenceEval> sequences;
  double nrmse = 0;            // mean of per-sequence values
  double stability = 0;
  double nrmse_occluded = -1;  // mean over sequences that have occluded pairs
  double mean_conf_clean = -1, mean_conf_occluded = -1;
  std::vector<double> group_nrmse;
};

EvalReport evaluate(const Model& model, const std::vector<SyntheticSequence>& test_set,
                    int threads = 1);

/// Dataset directory helpers (files named <split>_NNN.synq).
std::vector<SyntheticSequence> load_split(const std::string& dir, const std::string& split);

}  // namespace onedf
