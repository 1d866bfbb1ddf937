// Command-line front end: dataset generation, training, evaluation, tracking
// export, and the ablation study runner.

#include <CLI11.hpp>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "onedf/ablation.hpp"
#include "onedf/checkpoint.hpp"
#include "onedf/config.hpp"
#include "onedf/model.hpp"
#include "onedf/threads.hpp"
#include "onedf/train.hpp"

namespace fs = std::filesystem;
using namespace onedf;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string data;
  std::string out;
  std::string checkpoint;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_seed_flag(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option_function<uint64_t>(
         "--seed",
         [&args](const uint64_t& v) {
           args.seed = v;
           args.seed_set = true;
         },
         "Override the configured seed");
}

void generate_split(const SyntheticConfig& base, const std::string& dir,
                    const std::string& split, int count, uint64_t split_tag) {
  for (int i = 0; i < count; ++i) {
    SyntheticConfig cfg = base;
    cfg.seed = derive_seed(base.seed, split_tag * 100000 + uint64_t(i));
    char name[64];
    std::snprintf(name, sizeof name, "%s_%03d.synq", split.c_str(), i);
    save_sequence(generate_sequence(cfg), dir + "/" + name);
  }
}

int cmd_generate(const CommonArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (args.seed_set) rc.synth.seed = args.seed;
  fs::create_directories(args.out);
  generate_split(rc.synth, args.out, "train", rc.dataset.train_sequences, 1);
  generate_split(rc.synth, args.out, "val", rc.dataset.val_sequences, 2);
  generate_split(rc.synth, args.out, "test", rc.dataset.test_sequences, 3);
  std::cout << "wrote " << rc.dataset.train_sequences << " train / "
            << rc.dataset.val_sequences << " val / " << rc.dataset.test_sequences
            << " test sequences to " << args.out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (args.seed_set) rc.train.seed = args.seed;
  auto train_set = load_split(args.data, "train");
  auto val_set = load_split(args.data, "val");
  Model model = init_model<float>(rc.model, rc.train.seed);
  TrainOptions opt;
  opt.out_dir = args.out;
  opt.resume_from = args.checkpoint;
  TrainResult res = train_model(model, train_set, val_set, rc.train, opt);
  for (const auto& rec : res.records) std::cout << epoch_record_json(rec) << "\n";
  std::cout << "final checkpoint: " << res.final_path << "\n";
  std::cout << "best checkpoint:  " << res.best_path << " (val NRMSE "
            << res.best_val_nrmse << " at epoch " << res.best_epoch << ")\n";
  return 0;
}

void check_data_matches(const ModelConfig& cfg, const SyntheticSequence& seq) {
  if (seq.num_landmarks != cfg.landmarks || seq.image_size != cfg.image_size ||
      seq.heatmap_bins != cfg.heatmap_bins)
    throw ConfigError(
        "checkpoint/data mismatch: checkpoint expects N=" + std::to_string(cfg.landmarks) +
        " S=" + std::to_string(cfg.image_size) + " D=" + std::to_string(cfg.heatmap_bins) +
        ", dataset holds N=" + std::to_string(seq.num_landmarks) + " S=" +
        std::to_string(seq.image_size) + " D=" + std::to_string(seq.heatmap_bins));
}

std::string eval_record(int index, const SequenceEval& ev) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"sequence\":%d,\"nrmse\":%.9g,\"stability\":%.9g,"
                "\"nrmse_occluded\":%.9g}",
                index, ev.nrmse, ev.stability, ev.nrmse_occluded);
  return buf;
}

int cmd_eval(const CommonArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  Model model = init_model<float>(ckpt.model, 0);
  apply_checkpoint(ckpt, model.params);
  auto test_set = load_split(args.data, "test");
  check_data_matches(model.cfg, test_set.front());
  EvalReport report = evaluate(model, test_set, worker_count());

  std::printf("%-10s %10s %12s %16s\n", "sequence", "NRMSE%", "stability%", "NRMSE% (occl)");
  for (size_t i = 0; i < report.sequences.size(); ++i) {
    const auto& ev = report.sequences[i];
    std::printf("%-10zu %10.4f %12.4f %16.4f\n", i, ev.nrmse, ev.stability,
                ev.nrmse_occluded);
  }
  std::printf("%-10s %10.4f %12.4f %16.4f\n", "mean", report.nrmse, report.stability,
              report.nrmse_occluded);
  if (!report.group_nrmse.empty()) {
    std::printf("\nper-group NRMSE%%:\n");
    for (size_t k = 0; k < report.group_nrmse.size(); ++k)
      std::printf("  %-14s %10.4f\n", GroupPartition::group_name(int(k)),
                  report.group_nrmse[k]);
  }
  if (report.mean_conf_clean >= 0)
    std::printf("\nmean confidence: clean %.4f, occluded %.4f\n", report.mean_conf_clean,
                report.mean_conf_occluded);

  std::string jsonl;
  for (size_t i = 0; i < report.sequences.size(); ++i)
    jsonl += eval_record(int(i), report.sequences[i]) + "\n";
  char agg[256];
  std::snprintf(agg, sizeof agg,
                "{\"aggregate\":true,\"nrmse\":%.9g,\"stability\":%.9g,"
                "\"nrmse_occluded\":%.9g,\"conf_clean\":%.9g,\"conf_occluded\":%.9g}",
                report.nrmse, report.stability, report.nrmse_occluded,
                report.mean_conf_clean, report.mean_conf_occluded);
  jsonl += std::string(agg) + "\n";
  if (!args.out.empty()) {
    std::ofstream f(args.out, std::ios::trunc);
    if (!f) throw IoError("cannot open " + args.out);
    f << jsonl;
  } else {
    std::cout << "\n" << jsonl;
  }
  return 0;
}

// Streams one SYNQ sequence through the tracker, emitting CSV rows causally:
// frame t is written before frame t+1 is read. Memory stays bounded in T.
int cmd_track(const CommonArgs& args) {
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  Model model = init_model<float>(ckpt.model, 0);
  apply_checkpoint(ckpt, model.params);
  const ModelConfig& cfg = model.cfg;

  std::ifstream in(args.data, std::ios::binary);
  if (!in) throw IoError("cannot open sequence " + args.data);
  char magic[4];
  uint32_t head[5];  // version, N, S, T, D
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (!in || std::memcmp(magic, "SYNQ", 4) != 0)
    throw IoError("not a SYNQ sequence: " + args.data);
  const int n = int(head[1]), s = int(head[2]), t_len = int(head[3]), d = int(head[4]);
  if (n != cfg.landmarks || s != cfg.image_size || d != cfg.heatmap_bins)
    throw ConfigError("checkpoint/sequence mismatch: model N=" +
                      std::to_string(cfg.landmarks) + " S=" + std::to_string(cfg.image_size) +
                      " D=" + std::to_string(cfg.heatmap_bins) + ", sequence N=" +
                      std::to_string(n) + " S=" + std::to_string(s) + " D=" +
                      std::to_string(d));

  std::ofstream out(args.out, std::ios::trunc);
  if (!out) throw IoError("cannot open " + args.out);
  out << "frame,landmark,x,y\n";

  Tape tape(false);
  SequenceRunner runner(model, tape);
  std::vector<float> frame(size_t(s) * size_t(s));
  for (int t = 0; t < t_len; ++t) {
    in.read(reinterpret_cast<char*>(frame.data()), std::streamsize(frame.size() * 4));
    if (!in) throw IoError("truncated sequence " + args.data + " at frame " +
                           std::to_string(t));
    auto res = runner.step(frame.data());
    for (int i = 0; i < n; ++i) {
      const auto& hx = res.hx[size_t(i)].t().data;
      const auto& hy = res.hy[size_t(i)].t().data;
      const double x = extract_coord<float>(
          std::span<const float>(hx.data(), size_t(hx.size())), s);
      const double y = extract_coord<float>(
          std::span<const float>(hy.data(), size_t(hy.size())), s);
      char row[96];
      std::snprintf(row, sizeof row, "%d,%d,%.4f,%.4f\n", t, i, x, y);
      out << row;
    }
    out.flush();
  }
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (args.seed_set) rc.ablate.seeds = {args.seed};
  auto train_set = load_split(args.data, "train");
  auto val_set = load_split(args.data, "val");
  auto test_set = load_split(args.data, "test");
  AblationReport report = run_ablation(rc.model, rc.train, rc.ablate, train_set, val_set,
                                       test_set, args.out, worker_count());
  int failures = 0;
  for (const auto& row : report.rows)
    if (!row.ok) {
      ++failures;
      std::cerr << "job failed: " << row.setting << " seed " << row.seed << ": "
                << row.error << "\n";
    }
  std::cout << "ablation grid finished: " << report.rows.size() - size_t(failures) << "/"
            << report.rows.size() << " jobs ok; results in " << args.out << "/results.csv\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1D landmark tracking on synthetic occluded sequences"};
  app.require_subcommand(1);
  CommonArgs args;

  CLI::App* generate = app.add_subcommand("generate", "Write train/val/test SYNQ datasets");
  generate->add_option("--config", args.config_path, "Configuration file (JSON)")
      ->required();
  generate->add_option("--out", args.out, "Output dataset directory")->required();
  add_seed_flag(generate, args);

  CLI::App* train = app.add_subcommand("train", "Train a tracker");
  train->add_option("--config", args.config_path, "Configuration file (JSON)")->required();
  train->add_option("--data", args.data, "Dataset directory")->required();
  train->add_option("--out", args.out, "Output directory for logs and checkpoints")
      ->required();
  train->add_option("--checkpoint", args.checkpoint, "Resume from this checkpoint");
  add_seed_flag(train, args);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  eval->add_option("--checkpoint", args.checkpoint, "Checkpoint path")->required();
  eval->add_option("--data", args.data, "Dataset directory")->required();
  eval->add_option("--out", args.out, "JSONL report path (stdout when omitted)");

  CLI::App* track = app.add_subcommand("track", "Track one sequence, write CSV coordinates");
  track->add_option("--checkpoint", args.checkpoint, "Checkpoint path")->required();
  track->add_option("--data", args.data, "SYNQ sequence file")->required();
  track->add_option("--out", args.out, "Output CSV path")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation/window/mixer grid");
  ablate->add_option("--config", args.config_path, "Configuration file (JSON)")->required();
  ablate->add_option("--data", args.data, "Dataset directory")->required();
  ablate->add_option("--out", args.out, "Output directory")->required();
  add_seed_flag(ablate, args);

  CLI11_PARSE(app, argc, argv);
  try {
    if (generate->parsed()) return cmd_generate(args);
    if (train->parsed()) return cmd_train(args);
    if (eval->parsed()) return cmd_eval(args);
    if (track->parsed()) return cmd_track(args);
    if (ablate->parsed()) return cmd_ablate(args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
