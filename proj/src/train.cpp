#include "onedf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include "onedf/decoder.hpp"
#include "onedf/threads.hpp"

namespace onedf {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Mirrors the per-frame occlusion state into per-axis confidence label Vars.
Var label_var(Tape& tape, const float* data, int len) {
  Var v = tape.input({1, len});
  for (int i = 0; i < len; ++i) v.t().data[i] = data[i];
  return v;
}

}  // namespace

SequenceLoss sequence_forward_loss(const Model& model, const SyntheticSequence& seq,
                                   Tape& tape) {
  const ModelConfig& cfg = model.cfg;
  if (seq.num_landmarks != cfg.landmarks || seq.image_size != cfg.image_size ||
      seq.heatmap_bins != cfg.heatmap_bins)
    throw ConfigError("sequence/model mismatch: sequence N=" +
                      std::to_string(seq.num_landmarks) + " S=" +
                      std::to_string(seq.image_size) + " D=" +
                      std::to_string(seq.heatmap_bins) + ", model N=" +
                      std::to_string(cfg.landmarks) + " S=" +
                      std::to_string(cfg.image_size) + " D=" +
                      std::to_string(cfg.heatmap_bins));
  SequenceRunner runner(model, tape);
  std::vector<Var> h_preds, h_labels, c_preds, c_labels;
  h_preds.reserve(size_t(seq.sequence_length) * cfg.landmarks * 2);
  for (int t = 0; t < seq.sequence_length; ++t) {
    auto out = runner.step(seq.frames[size_t(t)].data());
    for (int n = 0; n < cfg.landmarks; ++n) {
      h_preds.push_back(out.hx[size_t(n)]);
      h_labels.push_back(label_var(tape, seq.heatmap_label(t, n, 0), cfg.heatmap_bins));
      h_preds.push_back(out.hy[size_t(n)]);
      h_labels.push_back(label_var(tape, seq.heatmap_label(t, n, 1), cfg.heatmap_bins));
      if (!out.conf_x.empty()) {
        const float cx = seq.confidence_label(t, n, 0);
        const float cy = seq.confidence_label(t, n, 1);
        c_preds.push_back(out.conf_x[size_t(n)]);
        c_labels.push_back(label_var(tape, &cx, 1));
        c_preds.push_back(out.conf_y[size_t(n)]);
        c_labels.push_back(label_var(tape, &cy, 1));
      }
    }
  }
  SequenceLoss loss;
  loss.loss_h = loss_heatmap(std::span<const Var>(h_preds), std::span<const Var>(h_labels));
  if (!c_preds.empty())
    loss.loss_c =
        loss_confidence(std::span<const Var>(c_preds), std::span<const Var>(c_labels));
  return loss;
}

std::string epoch_record_json(const EpochRecord& r) {
  std::string s = "{\"epoch\":" + std::to_string(r.epoch) +
                  ",\"phase\":" + std::to_string(r.phase) +
                  ",\"train_loss\":" + fmt_double(r.train_loss) +
                  ",\"train_loss_h\":" + fmt_double(r.train_loss_h);
  if (r.train_loss_c) s += ",\"train_loss_c\":" + fmt_double(*r.train_loss_c);
  s += ",\"val_loss\":" + fmt_double(r.val_loss) +
       ",\"val_nrmse\":" + fmt_double(r.val_nrmse) + "}";
  return s;
}

namespace {

Checkpoint snapshot(const Model& model, const AdamStateT<float>& adam, int epoch,
                    double best_val, int best_epoch) {
  Checkpoint ckpt;
  ckpt.model = model.cfg;
  ckpt.epoch = epoch;
  ckpt.best_val_nrmse = best_val;
  ckpt.best_epoch = best_epoch;
  for (const auto& [name, t] : model.params.items())
    ckpt.tensors.emplace_back(name, clone_tensor(t));
  for (size_t i = 0; i < model.params.items().size(); ++i) {
    const std::string& name = model.params.items()[i].first;
    auto m = make_tensor(model.params.items()[i].second->dims);
    m->data = adam.m[i];
    auto v = make_tensor(model.params.items()[i].second->dims);
    v->data = adam.v[i];
    ckpt.tensors.emplace_back("optim.m." + name, std::move(m));
    ckpt.tensors.emplace_back("optim.v." + name, std::move(v));
  }
  auto step = make_tensor({1, 1});
  step->data[0] = float(adam.step);
  ckpt.tensors.emplace_back("optim.step", std::move(step));
  return ckpt;
}

void restore_adam(const Checkpoint& ckpt, const Model& model, AdamStateT<float>& adam) {
  for (size_t i = 0; i < model.params.items().size(); ++i) {
    const std::string& name = model.params.items()[i].first;
    TensorPtr m = ckpt.find("optim.m." + name);
    TensorPtr v = ckpt.find("optim.v." + name);
    if (!m || !v)
      throw IoError("checkpoint lacks optimizer state for parameter '" + name +
                    "'; cannot resume");
    adam.m[i] = m->data;
    adam.v[i] = v->data;
  }
  TensorPtr step = ckpt.find("optim.step");
  if (!step) throw IoError("checkpoint lacks optim.step; cannot resume");
  adam.step = int64_t(std::llround(double(step->data[0])));
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<SyntheticSequence>& train_set,
                        const std::vector<SyntheticSequence>& val_set,
                        const TrainConfig& tc, const TrainOptions& opt) {
  tc.validate();
  if (train_set.empty()) throw ConfigError("train_model: empty training set");
  std::filesystem::create_directories(opt.out_dir);
  const std::string log_path = opt.out_dir + "/train_log.jsonl";
  const std::string final_path = opt.out_dir + "/final.1df1";
  const std::string best_path = opt.out_dir + "/best.1df1";

  AdamStateT<float> adam;
  init_adam_state(model.params, adam);
  int start_epoch = 1;
  double best_val = -1;
  int best_epoch = 0;

  std::ofstream log;
  if (!opt.resume_from.empty()) {
    Checkpoint ckpt = load_checkpoint(opt.resume_from);
    if (!(ckpt.model == model.cfg))
      throw ConfigError("resume: checkpoint model configuration differs from the requested one");
    apply_checkpoint(ckpt, model.params);
    restore_adam(ckpt, model, adam);
    start_epoch = ckpt.epoch + 1;
    best_val = ckpt.best_val_nrmse;
    best_epoch = ckpt.best_epoch;
    log.open(log_path, std::ios::app);
  } else {
    log.open(log_path, std::ios::trunc);
  }
  if (!log) throw IoError("cannot open " + log_path);

  TrainResult result;
  const int last_epoch =
      opt.stop_after_epoch > 0 ? std::min(opt.stop_after_epoch, tc.epochs) : tc.epochs;

  for (int epoch = start_epoch; epoch <= last_epoch; ++epoch) {
    const int phase = epoch <= tc.epochs / 2 ? 1 : 2;

    // deterministic per-epoch shuffle
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng erng(derive_seed(tc.seed, 0xe000 + uint64_t(epoch)));
    for (int i = int(order.size()) - 1; i > 0; --i)
      std::swap(order[size_t(i)], order[size_t(erng.uniform_int(0, i))]);

    double sum_loss = 0, sum_lh = 0, sum_lc = 0;
    bool saw_lc = false;
    size_t cursor = 0;
    int step_index = 0;
    if (tc.bptt_span > 0) {
      // truncated backpropagation through time: one optimizer step per
      // bptt_span frames, recurrent state detached at segment boundaries
      for (int idx : order) {
        const SyntheticSequence& seq = train_set[size_t(idx)];
        const ModelConfig& mc = model.cfg;
        auto tape = std::make_unique<Tape>(true);
        SequenceRunner runner(model, *tape);
        std::vector<Var> h_preds, h_labels, c_preds, c_labels;
        for (int t = 0; t < seq.sequence_length; ++t) {
          auto out = runner.step(seq.frames[size_t(t)].data());
          for (int n = 0; n < mc.landmarks; ++n) {
            h_preds.push_back(out.hx[size_t(n)]);
            h_labels.push_back(
                label_var(*tape, seq.heatmap_label(t, n, 0), mc.heatmap_bins));
            h_preds.push_back(out.hy[size_t(n)]);
            h_labels.push_back(
                label_var(*tape, seq.heatmap_label(t, n, 1), mc.heatmap_bins));
            if (!out.conf_x.empty()) {
              const float cx = seq.confidence_label(t, n, 0);
              const float cy = seq.confidence_label(t, n, 1);
              c_preds.push_back(out.conf_x[size_t(n)]);
              c_labels.push_back(label_var(*tape, &cx, 1));
              c_preds.push_back(out.conf_y[size_t(n)]);
              c_labels.push_back(label_var(*tape, &cy, 1));
            }
          }
          if ((t + 1) % tc.bptt_span == 0 || t + 1 == seq.sequence_length) {
            Var lh = loss_heatmap(std::span<const Var>(h_preds),
                                  std::span<const Var>(h_labels));
            Var lc;
            if (!c_preds.empty())
              lc = loss_confidence(std::span<const Var>(c_preds),
                                   std::span<const Var>(c_labels));
            Var loss = total_loss(lh, lc, tc, epoch);
            const float lv = loss.t().data[0];
            if (!std::isfinite(lv))
              throw ContractError("non-finite loss at epoch " + std::to_string(epoch) +
                                  ", step " + std::to_string(step_index) + ", sequence " +
                                  std::to_string(idx));
            sum_loss += double(lv);
            sum_lh += double(lh.t().data[0]);
            if (lc && phase == 1) {
              sum_lc += double(lc.t().data[0]);
              saw_lc = true;
            }
            tape->backward(loss);
            adam_step(model.params, adam, tc);
            ++step_index;
            h_preds.clear();
            h_labels.clear();
            c_preds.clear();
            c_labels.clear();
            auto fresh = std::make_unique<Tape>(true);
            runner.rebind(*fresh);
            tape = std::move(fresh);
          }
        }
      }
    } else {
      while (cursor < order.size()) {
        const size_t take = std::min<size_t>(size_t(tc.batch), order.size() - cursor);
        for (size_t b = 0; b < take; ++b) {
          const SyntheticSequence& seq = train_set[size_t(order[cursor + b])];
          Tape tape(true);
          SequenceLoss sl = sequence_forward_loss(model, seq, tape);
          Var loss = total_loss(sl.loss_h, sl.loss_c, tc, epoch);
          const float lv = loss.t().data[0];
          if (!std::isfinite(lv))
            throw ContractError("non-finite loss at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step_index) + ", sequence " +
                                std::to_string(order[cursor + b]));
          sum_loss += double(lv);
          sum_lh += double(sl.loss_h.t().data[0]);
          if (sl.loss_c && phase == 1) {
            sum_lc += double(sl.loss_c.t().data[0]);
            saw_lc = true;
          }
          tape.backward(loss, 1.f / float(take));  // batch-mean gradients
        }
        adam_step(model.params, adam, tc);
        cursor += take;
        ++step_index;
      }
    }

    // validation: loss under the current phase rule plus tracking NRMSE
    double val_loss = 0, val_nrmse = 0;
    for (const SyntheticSequence& seq : val_set) {
      Tape tape(false);
      SequenceLoss sl = sequence_forward_loss(model, seq, tape);
      val_loss += double(total_loss(sl.loss_h, sl.loss_c, tc, epoch).t().data[0]);
      val_nrmse += evaluate_sequence(model, seq).nrmse;
    }
    if (!val_set.empty()) {
      val_loss /= double(val_set.size());
      val_nrmse /= double(val_set.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase;
    rec.train_loss = sum_loss / double(train_set.size());
    rec.train_loss_h = sum_lh / double(train_set.size());
    if (saw_lc) rec.train_loss_c = sum_lc / double(train_set.size());
    rec.val_loss = val_loss;
    rec.val_nrmse = val_nrmse;
    result.records.push_back(rec);
    log << epoch_record_json(rec) << "\n";
    log.flush();

    if (!val_set.empty() && (best_val < 0 || val_nrmse < best_val)) {
      best_val = val_nrmse;
      best_epoch = epoch;
      save_checkpoint(best_path, snapshot(model, adam, epoch, best_val, best_epoch));
    }
    save_checkpoint(final_path, snapshot(model, adam, epoch, best_val, best_epoch));
  }

  result.final_path = final_path;
  result.best_path = best_path;
  result.best_val_nrmse = best_val;
  result.best_epoch = best_epoch;
  return result;
}

SequenceEval evaluate_sequence(const Model& model, const SyntheticSequence& seq) {
  const ModelConfig& cfg = model.cfg;
  Tape tape(false);
  SequenceRunner runner(model, tape);

  SequenceEval ev;
  ev.track.frames = seq.sequence_length;
  ev.track.landmarks = cfg.landmarks;
  ev.track.pred.resize(size_t(seq.sequence_length) * cfg.landmarks * 2);
  ev.track.gt.resize(ev.track.pred.size());
  ev.track.normalizer.resize(size_t(seq.sequence_length));
  const double img_diag = std::hypot(double(cfg.image_size), double(cfg.image_size));

  double conf_clean = 0, conf_occ = 0;
  int64_t clean_n = 0, occ_n = 0;
  double lh = 0;
  for (int t = 0; t < seq.sequence_length; ++t) {
    auto out = runner.step(seq.frames[size_t(t)].data());
    std::vector<double> gt_frame(size_t(cfg.landmarks) * 2);
    for (int n = 0; n < cfg.landmarks; ++n) {
      const auto& hx = out.hx[size_t(n)].t().data;
      const auto& hy = out.hy[size_t(n)].t().data;
      const double px = extract_coord<float>(
          std::span<const float>(hx.data(), size_t(hx.size())), cfg.image_size);
      const double py = extract_coord<float>(
          std::span<const float>(hy.data(), size_t(hy.size())), cfg.image_size);
      const size_t base = size_t((int64_t(t) * cfg.landmarks + n) * 2);
      ev.track.pred[base] = px;
      ev.track.pred[base + 1] = py;
      ev.track.gt[base] = double(seq.coord(t, n, 0));
      ev.track.gt[base + 1] = double(seq.coord(t, n, 1));
      gt_frame[size_t(n) * 2] = ev.track.gt[base];
      gt_frame[size_t(n) * 2 + 1] = ev.track.gt[base + 1];

      for (int axis = 0; axis < 2; ++axis) {
        const auto& h = axis == 0 ? hx : hy;
        const float* lab = seq.heatmap_label(t, n, axis);
        for (int i = 0; i < cfg.heatmap_bins; ++i) {
          const double dlt = double(h[i]) - double(lab[i]);
          lh += dlt * dlt;
        }
      }
      if (!out.conf_x.empty()) {
        const double c = 0.5 * (double(out.conf_x[size_t(n)].t().data[0]) +
                                double(out.conf_y[size_t(n)].t().data[0]));
        if (seq.occluded(t, n)) {
          conf_occ += c;
          ++occ_n;
        } else {
          conf_clean += c;
          ++clean_n;
        }
      }
    }
    ev.track.normalizer[size_t(t)] =
        face_normalizer(std::span<const double>(gt_frame), img_diag);
  }
  ev.loss_h = lh;
  ev.nrmse = nrmse(ev.track);
  ev.stability = stability_error(ev.track);
  ev.nrmse_occluded =
      nrmse_subset(ev.track, std::span<const uint8_t>(seq.occlusion_masks.data(),
                                                      seq.occlusion_masks.size()));
  if (clean_n) ev.mean_conf_clean = conf_clean / double(clean_n);
  if (occ_n) ev.mean_conf_occluded = conf_occ / double(occ_n);

  if (cfg.structural_active()) {
    ev.group_nrmse.resize(model.partition.groups.size());
    std::vector<uint8_t> keep(size_t(seq.sequence_length) * cfg.landmarks);
    for (size_t k = 0; k < model.partition.groups.size(); ++k) {
      std::fill(keep.begin(), keep.end(), 0);
      for (int t = 0; t < seq.sequence_length; ++t)
        for (int idx : model.partition.groups[k])
          keep[size_t(int64_t(t) * cfg.landmarks + idx)] = 1;
      ev.group_nrmse[k] = nrmse_subset(ev.track, std::span<const uint8_t>(keep));
    }
  }
  return ev;
}

EvalReport evaluate(const Model& model, const std::vector<SyntheticSequence>& test_set,
                    int threads) {
  EvalReport report;
  report.sequences.resize(test_set.size());
  parallel_for(int(test_set.size()), threads, [&](int i) {
    report.sequences[size_t(i)] = evaluate_sequence(model, test_set[size_t(i)]);
  });

  double occ_sum = 0, cc = 0, co = 0;
  int occ_n = 0, cc_n = 0, co_n = 0;
  std::vector<double> group_sum;
  std::vector<int> group_n;
  for (const auto& ev : report.sequences) {
    report.nrmse += ev.nrmse;
    report.stability += ev.stability;
    if (ev.nrmse_occluded >= 0) {
      occ_sum += ev.nrmse_occluded;
      ++occ_n;
    }
    if (ev.mean_conf_clean >= 0) {
      cc += ev.mean_conf_clean;
      ++cc_n;
    }
    if (ev.mean_conf_occluded >= 0) {
      co += ev.mean_conf_occluded;
      ++co_n;
    }
    if (!ev.group_nrmse.empty()) {
      group_sum.resize(ev.group_nrmse.size(), 0.0);
      group_n.resize(ev.group_nrmse.size(), 0);
      for (size_t k = 0; k < ev.group_nrmse.size(); ++k)
        if (ev.group_nrmse[k] >= 0) {
          group_sum[k] += ev.group_nrmse[k];
          ++group_n[k];
        }
    }
  }
  const double m = double(std::max<size_t>(1, report.sequences.size()));
  report.nrmse /= m;
  report.stability /= m;
  if (occ_n) report.nrmse_occluded = occ_sum / occ_n;
  if (cc_n) report.mean_conf_clean = cc / cc_n;
  if (co_n) report.mean_conf_occluded = co / co_n;
  for (size_t k = 0; k < group_sum.size(); ++k)
    report.group_nrmse.push_back(group_n[k] ? group_sum[k] / group_n[k] : -1.0);
  return report;
}

std::vector<SyntheticSequence> load_split(const std::string& dir, const std::string& split) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(split + "_", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".synq")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw IoError("no " + split + "_*.synq sequences found in " + dir);
  std::vector<SyntheticSequence> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_sequence(f));
  return out;
}

}  // namespace onedf
