#include "onedf/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "onedf/model.hpp"
#include "onedf/threads.hpp"

namespace onedf {

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(uint8_t(c)) ? c : '_');
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

ModelConfig apply_setting(const ModelConfig& base, const std::string& name) {
  ModelConfig cfg = base;
  // every named setting starts from the baseline and switches pieces back on
  cfg.temporal = TemporalMode::kOff;
  cfg.recurrence = true;
  cfg.confidence = true;
  cfg.intra_group = false;
  cfg.inter_group = false;
  cfg.spatial_mixer = Mixer::kConv;
  cfg.temporal_mixer = Mixer::kAttention;

  auto full = [&] {
    cfg.temporal = TemporalMode::kAttention;
    cfg.intra_group = true;
    cfg.inter_group = true;
  };

  if (name == "BL") {
  } else if (name == "BL+TE-a") {
    cfg.temporal = TemporalMode::kSimpleMix;
  } else if (name == "BL+TE-r") {
    cfg.temporal = TemporalMode::kAttention;
    cfg.recurrence = false;
  } else if (name == "BL+TE-c") {
    cfg.temporal = TemporalMode::kAttention;
    cfg.confidence = false;
  } else if (name == "BL+TE") {
    cfg.temporal = TemporalMode::kAttention;
  } else if (name == "BL+IR") {
    cfg.intra_group = true;
  } else if (name == "BL+IT") {
    cfg.inter_group = true;
  } else if (name == "BL+IR+IT") {
    cfg.intra_group = true;
    cfg.inter_group = true;
  } else if (name == "BL+TE+IR") {
    cfg.temporal = TemporalMode::kAttention;
    cfg.intra_group = true;
  } else if (name == "BL+TE+IT") {
    cfg.temporal = TemporalMode::kAttention;
    cfg.inter_group = true;
  } else if (name == "BL+TE+IR+IT") {
    full();
  } else if (name.rfind("W=", 0) == 0) {
    full();
    cfg.window = std::stoi(name.substr(2));
  } else if (name == "T_Att&S_Conv") {
    full();
  } else if (name == "T_Att&S_Att") {
    full();
    cfg.spatial_mixer = Mixer::kAttention;
  } else if (name == "T_Conv&S_Conv") {
    full();
    cfg.temporal_mixer = Mixer::kConv;
  } else if (name == "T_Conv&S_Att") {
    full();
    cfg.temporal_mixer = Mixer::kConv;
    cfg.spatial_mixer = Mixer::kAttention;
  } else {
    throw ConfigError("unknown ablation setting '" + name + "'");
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> default_ablation_settings() {
  return {"BL",    "BL+TE-a",  "BL+TE-r",  "BL+TE-c",   "BL+TE",    "BL+IR",
          "BL+IT", "BL+IR+IT", "BL+TE+IR", "BL+TE+IT",  "BL+TE+IR+IT"};
}

AblationReport::Stats AblationReport::stats(const std::string& setting,
                                            double AblationRow::*column) const {
  Stats s;
  double sum = 0;
  std::vector<double> vals;
  for (const auto& row : rows)
    if (row.setting == setting && row.ok && row.*column >= 0) {
      vals.push_back(row.*column);
      sum += row.*column;
    }
  s.count = int(vals.size());
  if (vals.empty()) return s;
  s.mean = sum / double(vals.size());
  if (vals.size() > 1) {
    double acc = 0;
    for (double v : vals) acc += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(acc / double(vals.size() - 1));
  }
  return s;
}

AblationReport run_ablation(const ModelConfig& base, const TrainConfig& tc,
                            const AblationConfig& ac,
                            const std::vector<SyntheticSequence>& train_set,
                            const std::vector<SyntheticSequence>& val_set,
                            const std::vector<SyntheticSequence>& test_set,
                            const std::string& out_dir, int threads) {
  std::filesystem::create_directories(out_dir);

  std::vector<std::string> settings =
      ac.settings.empty() ? default_ablation_settings() : ac.settings;
  for (int w : ac.window_sweep) settings.push_back("W=" + std::to_string(w));
  if (ac.mixer_study)
    for (const char* m : {"T_Att&S_Conv", "T_Att&S_Att", "T_Conv&S_Conv", "T_Conv&S_Att"})
      settings.push_back(m);

  AblationReport report;
  for (const auto& setting : settings)
    for (uint64_t seed : ac.seeds) {
      AblationRow row;
      row.setting = setting;
      row.seed = seed;
      report.rows.push_back(row);
    }

  parallel_for(int(report.rows.size()), threads, [&](int i) {
    AblationRow& row = report.rows[size_t(i)];
    try {
      ModelConfig cfg = apply_setting(base, row.setting);
      Model model = init_model<float>(cfg, row.seed);
      TrainConfig jtc = tc;
      jtc.seed = row.seed;
      TrainOptions opt;
      opt.out_dir = out_dir + "/jobs/" + sanitize(row.setting) + "_seed" +
                    std::to_string(row.seed);
      train_model(model, train_set, val_set, jtc, opt);
      EvalReport ev = evaluate(model, test_set, 1);
      row.nrmse = ev.nrmse;
      row.stability = ev.stability;
      row.nrmse_occluded = ev.nrmse_occluded;
      row.mean_conf_clean = ev.mean_conf_clean;
      row.mean_conf_occluded = ev.mean_conf_occluded;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  });

  write_ablation_csv(report, out_dir + "/results.csv");

  // plots over the named settings (excluding the sweep) and over W
  std::vector<std::string> named =
      ac.settings.empty() ? default_ablation_settings() : ac.settings;
  std::vector<std::string> labels;
  std::vector<double> nrmse_means, nrmse_stds, stab_means, stab_stds;
  for (const auto& s : named) {
    auto n = report.stats(s, &AblationRow::nrmse);
    auto st = report.stats(s, &AblationRow::stability);
    if (n.count == 0) continue;
    labels.push_back(s);
    nrmse_means.push_back(n.mean);
    nrmse_stds.push_back(n.stddev);
    stab_means.push_back(st.mean);
    stab_stds.push_back(st.stddev);
  }
  if (!labels.empty()) {
    write_svg_bars(out_dir + "/nrmse_settings.svg", "test NRMSE (%) by setting", labels,
                   nrmse_means, nrmse_stds);
    write_svg_bars(out_dir + "/stability_settings.svg", "stability error (%) by setting",
                   labels, stab_means, stab_stds);
  }
  std::vector<double> ws, wn_means, wn_stds, ws_means, ws_stds;
  for (int w : ac.window_sweep) {
    auto n = report.stats("W=" + std::to_string(w), &AblationRow::nrmse);
    auto st = report.stats("W=" + std::to_string(w), &AblationRow::stability);
    if (n.count == 0) continue;
    ws.push_back(w);
    wn_means.push_back(n.mean);
    wn_stds.push_back(n.stddev);
    ws_means.push_back(st.mean);
    ws_stds.push_back(st.stddev);
  }
  if (!ws.empty()) {
    write_svg_lines(out_dir + "/nrmse_vs_w.svg", "test NRMSE (%) vs window length", ws,
                    wn_means, wn_stds);
    write_svg_lines(out_dir + "/stability_vs_w.svg", "stability error (%) vs window length",
                    ws, ws_means, ws_stds);
  }
  return report;
}

void write_ablation_csv(const AblationReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  out << "setting,seed,status,nrmse,stability,nrmse_occluded,conf_clean,conf_occluded,error\n";
  for (const auto& r : report.rows) {
    out << r.setting << "," << r.seed << "," << (r.ok ? "ok" : "failed") << ","
        << fmt(r.nrmse) << "," << fmt(r.stability) << "," << fmt(r.nrmse_occluded) << ","
        << fmt(r.mean_conf_clean) << "," << fmt(r.mean_conf_occluded) << ",";
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << msg << "\n";
  }
  // aggregate rows: seed mean and sample std per setting
  std::vector<std::string> seen;
  for (const auto& r : report.rows)
    if (std::find(seen.begin(), seen.end(), r.setting) == seen.end())
      seen.push_back(r.setting);
  for (const auto& s : seen) {
    auto n = report.stats(s, &AblationRow::nrmse);
    auto st = report.stats(s, &AblationRow::stability);
    auto occ = report.stats(s, &AblationRow::nrmse_occluded);
    if (n.count == 0) continue;
    out << s << ",mean," << n.count << " seeds," << fmt(n.mean) << "," << fmt(st.mean) << ","
        << fmt(occ.mean) << ",,,\n";
    out << s << ",std,," << fmt(n.stddev) << "," << fmt(st.stddev) << "," << fmt(occ.stddev)
        << ",,,\n";
  }
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

namespace {

constexpr int kW = 860, kH = 420, kL = 70, kB = 110, kT = 40, kR = 20;

double nice_max(const std::vector<double>& means, const std::vector<double>& stds) {
  double top = 0;
  for (size_t i = 0; i < means.size(); ++i) top = std::max(top, means[i] + stds[i]);
  return top <= 0 ? 1.0 : top * 1.15;
}

void svg_header(std::ofstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kH - kB << "\" x2=\"" << kW - kR << "\" y2=\""
      << kH - kB << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kL << "\" y1=\"" << kT << "\" x2=\"" << kL << "\" y2=\""
      << kH - kB << "\" stroke=\"black\"/>\n";
}

void svg_y_ticks(std::ofstream& out, double top) {
  for (int i = 0; i <= 5; ++i) {
    const double v = top * i / 5.0;
    const double y = (kH - kB) - (kH - kB - kT) * i / 5.0;
    out << "<text x=\"" << kL - 6 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    out << "<line x1=\"" << kL - 3 << "\" y1=\"" << y << "\" x2=\"" << kL << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
  }
}

}  // namespace

void write_svg_bars(const std::string& path, const std::string& title,
                    const std::vector<std::string>& labels, const std::vector<double>& means,
                    const std::vector<double>& stds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  const double top = nice_max(means, stds);
  svg_header(out, title);
  svg_y_ticks(out, top);
  const double span = double(kW - kL - kR);
  const double slot = span / double(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    const double x = kL + slot * double(i) + slot * 0.15;
    const double w = slot * 0.7;
    const double h = (kH - kB - kT) * means[i] / top;
    const double y = (kH - kB) - h;
    out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"#4878a8\"/>\n";
    if (stds[i] > 0) {
      const double cx = x + w / 2;
      const double e = (kH - kB - kT) * stds[i] / top;
      out << "<line x1=\"" << cx << "\" y1=\"" << y - e << "\" x2=\"" << cx << "\" y2=\""
          << std::min(double(kH - kB), y + e) << "\" stroke=\"black\"/>\n";
    }
    out << "<text x=\"" << x + w / 2 << "\" y=\"" << kH - kB + 14
        << "\" text-anchor=\"end\" transform=\"rotate(-40 " << x + w / 2 << " "
        << kH - kB + 14 << ")\">" << labels[i] << "</text>\n";
    out << "<text x=\"" << x + w / 2 << "\" y=\"" << y - 4 - (stds[i] > 0 ? (kH - kB - kT) * stds[i] / top : 0)
        << "\" text-anchor=\"middle\">" << fmt(means[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::vector<double>& xs, const std::vector<double>& means,
                     const std::vector<double>& stds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  const double top = nice_max(means, stds);
  double xmin = xs.front(), xmax = xs.back();
  if (xmax <= xmin) xmax = xmin + 1;
  svg_header(out, title);
  svg_y_ticks(out, top);
  auto px = [&](double x) {
    return kL + (kW - kL - kR) * (x - xmin) / (xmax - xmin);
  };
  auto py = [&](double v) { return (kH - kB) - (kH - kB - kT) * v / top; };
  out << "<polyline fill=\"none\" stroke=\"#a84848\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) out << px(xs[i]) << "," << py(means[i]) << " ";
  out << "\"/>\n";
  for (size_t i = 0; i < xs.size(); ++i) {
    out << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(means[i])
        << "\" r=\"3\" fill=\"#a84848\"/>\n";
    if (stds[i] > 0)
      out << "<line x1=\"" << px(xs[i]) << "\" y1=\"" << py(means[i] + stds[i]) << "\" x2=\""
          << px(xs[i]) << "\" y2=\"" << py(std::max(0.0, means[i] - stds[i]))
          << "\" stroke=\"#a84848\"/>\n";
    out << "<text x=\"" << px(xs[i]) << "\" y=\"" << kH - kB + 16
        << "\" text-anchor=\"middle\">" << fmt(xs[i]) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace onedf
