#include "onedf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace onedf {

using nlohmann::json;

void ModelConfig::validate() const {
  if (landmarks < 2) throw ConfigError("model.landmarks must be >= 2");
  if (feature_len < 4 || feature_len % 2 != 0)
    throw ConfigError("model.feature_len must be even and >= 4");
  if (heatmap_bins < 8) throw ConfigError("model.heatmap_bins must be >= 8");
  if (window < 1) throw ConfigError("model.window must be >= 1");
  if (blocks < 1) throw ConfigError("model.blocks must be >= 1");
  if (heads < 1 || feature_len % heads != 0)
    throw ConfigError("model.heads must divide model.feature_len");
  if (image_size < 32 || image_size % 16 != 0)
    throw ConfigError("model.image_size must be >= 32 and divisible by 16");
  if (!(label_sigma > 0)) throw ConfigError("model.label_sigma must be > 0");
  if (structural_active() && landmarks < 7)
    throw ConfigError("model.landmarks must be >= 7 when structural encoding is on");
}

void TrainConfig::validate() const {
  if (lambda_h < 0 || lambda_c < 0)
    throw ConfigError("train.lambda_h and train.lambda_c must be >= 0");
  if (epochs < 2 || epochs % 2 != 0)
    throw ConfigError("train.epochs must be even and >= 2");
  if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (bptt_span < 0) throw ConfigError("train.bptt_span must be >= 0");
  if (bptt_span > 0 && batch != 1)
    throw ConfigError("train.bptt_span requires train.batch == 1");
}

std::string temporal_mode_name(TemporalMode m) {
  switch (m) {
    case TemporalMode::kOff: return "off";
    case TemporalMode::kSimpleMix: return "simple_mix";
    case TemporalMode::kAttention: return "attention";
  }
  return "?";
}

std::string mixer_name(Mixer m) {
  return m == Mixer::kAttention ? "attention" : "conv";
}

namespace {

TemporalMode temporal_mode_from(const std::string& s) {
  if (s == "off") return TemporalMode::kOff;
  if (s == "simple_mix") return TemporalMode::kSimpleMix;
  if (s == "attention") return TemporalMode::kAttention;
  throw ConfigError("model.temporal: unknown value '" + s + "'");
}

Mixer mixer_from(const std::string& key, const std::string& s) {
  if (s == "attention") return Mixer::kAttention;
  if (s == "conv") return Mixer::kConv;
  throw ConfigError(key + ": unknown value '" + s + "'");
}

bool onoff_from(const std::string& key, const std::string& s) {
  if (s == "on") return true;
  if (s == "off") return false;
  throw ConfigError(key + ": expected 'on' or 'off', got '" + s + "'");
}

void reject_unknown(const json& obj, const std::string& scope,
                    const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + scope + it.key() + "' in configuration");
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

json model_to_json_obj(const ModelConfig& m) {
  return json{{"landmarks", m.landmarks},
              {"feature_len", m.feature_len},
              {"heatmap_bins", m.heatmap_bins},
              {"window", m.window},
              {"blocks", m.blocks},
              {"heads", m.heads},
              {"image_size", m.image_size},
              {"label_sigma", m.label_sigma},
              {"temporal", temporal_mode_name(m.temporal)},
              {"recurrence", m.recurrence ? "on" : "off"},
              {"confidence", m.confidence ? "on" : "off"},
              {"intra_group", m.intra_group ? "on" : "off"},
              {"inter_group", m.inter_group ? "on" : "off"},
              {"spatial_mixer", mixer_name(m.spatial_mixer)},
              {"temporal_mixer", mixer_name(m.temporal_mixer)}};
}

ModelConfig model_from_json_obj(const json& obj) {
  reject_unknown(obj, "model.",
                 {"landmarks", "feature_len", "heatmap_bins", "window", "blocks", "heads",
                  "image_size", "label_sigma", "temporal", "recurrence", "confidence",
                  "intra_group", "inter_group", "spatial_mixer", "temporal_mixer"});
  ModelConfig m;
  read(obj, "landmarks", m.landmarks);
  read(obj, "feature_len", m.feature_len);
  read(obj, "heatmap_bins", m.heatmap_bins);
  read(obj, "window", m.window);
  read(obj, "blocks", m.blocks);
  read(obj, "heads", m.heads);
  read(obj, "image_size", m.image_size);
  read(obj, "label_sigma", m.label_sigma);
  if (obj.contains("temporal")) m.temporal = temporal_mode_from(obj.at("temporal"));
  if (obj.contains("recurrence"))
    m.recurrence = onoff_from("model.recurrence", obj.at("recurrence"));
  if (obj.contains("confidence"))
    m.confidence = onoff_from("model.confidence", obj.at("confidence"));
  if (obj.contains("intra_group"))
    m.intra_group = onoff_from("model.intra_group", obj.at("intra_group"));
  if (obj.contains("inter_group"))
    m.inter_group = onoff_from("model.inter_group", obj.at("inter_group"));
  if (obj.contains("spatial_mixer"))
    m.spatial_mixer = mixer_from("model.spatial_mixer", obj.at("spatial_mixer"));
  if (obj.contains("temporal_mixer"))
    m.temporal_mixer = mixer_from("model.temporal_mixer", obj.at("temporal_mixer"));
  m.validate();
  return m;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) {
  return model_to_json_obj(cfg).dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json obj = json::parse(text);
  return model_from_json_obj(obj);
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  reject_unknown(root, "", {"model", "synth", "train", "ablate"});

  RunConfig rc;
  if (root.contains("model")) rc.model = model_from_json_obj(root.at("model"));
  rc.model.validate();

  if (root.contains("synth")) {
    const json& s = root.at("synth");
    reject_unknown(s, "synth.",
                   {"sequence_length", "translation_amplitude", "rotation_amplitude",
                    "jitter_sigma", "group_deform_sigma", "occlusion_rate", "occlusion_min_size",
                    "occlusion_max_size", "occlusion_min_duration", "occlusion_max_duration",
                    "seed", "train_sequences", "val_sequences", "test_sequences"});
    read(s, "sequence_length", rc.synth.sequence_length);
    read(s, "translation_amplitude", rc.synth.translation_amplitude);
    read(s, "rotation_amplitude", rc.synth.rotation_amplitude);
    read(s, "jitter_sigma", rc.synth.jitter_sigma);
    read(s, "group_deform_sigma", rc.synth.group_deform_sigma);
    read(s, "occlusion_rate", rc.synth.occlusion_rate);
    read(s, "occlusion_min_size", rc.synth.occlusion_min_size);
    read(s, "occlusion_max_size", rc.synth.occlusion_max_size);
    read(s, "occlusion_min_duration", rc.synth.occlusion_min_duration);
    read(s, "occlusion_max_duration", rc.synth.occlusion_max_duration);
    read(s, "seed", rc.synth.seed);
    read(s, "train_sequences", rc.dataset.train_sequences);
    read(s, "val_sequences", rc.dataset.val_sequences);
    read(s, "test_sequences", rc.dataset.test_sequences);
  }
  // geometry fields of the generator mirror the model config
  rc.synth.num_landmarks = rc.model.landmarks;
  rc.synth.image_size = rc.model.image_size;
  rc.synth.heatmap_bins = rc.model.heatmap_bins;
  rc.synth.label_sigma = rc.model.label_sigma;
  rc.synth.validate();
  if (rc.dataset.train_sequences < 1 || rc.dataset.val_sequences < 1 ||
      rc.dataset.test_sequences < 1)
    throw ConfigError("synth.*_sequences must be >= 1");

  if (root.contains("train")) {
    const json& t = root.at("train");
    reject_unknown(t, "train.",
                   {"lambda_h", "lambda_c", "epochs", "learning_rate", "beta1", "beta2",
                    "epsilon", "batch", "bptt_span", "seed"});
    read(t, "lambda_h", rc.train.lambda_h);
    read(t, "lambda_c", rc.train.lambda_c);
    read(t, "epochs", rc.train.epochs);
    read(t, "learning_rate", rc.train.learning_rate);
    read(t, "beta1", rc.train.beta1);
    read(t, "beta2", rc.train.beta2);
    read(t, "epsilon", rc.train.epsilon);
    read(t, "batch", rc.train.batch);
    read(t, "bptt_span", rc.train.bptt_span);
    read(t, "seed", rc.train.seed);
  }
  rc.train.validate();

  if (root.contains("ablate")) {
    const json& a = root.at("ablate");
    reject_unknown(a, "ablate.", {"seeds", "settings", "window_sweep", "mixer_study"});
    read(a, "seeds", rc.ablate.seeds);
    read(a, "settings", rc.ablate.settings);
    read(a, "window_sweep", rc.ablate.window_sweep);
    read(a, "mixer_study", rc.ablate.mixer_study);
    if (rc.ablate.seeds.empty()) throw ConfigError("ablate.seeds must not be empty");
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open configuration file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace onedf
