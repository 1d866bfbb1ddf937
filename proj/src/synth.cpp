#include "onedf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "onedf/partition.hpp"

namespace onedf {

namespace {

constexpr float kBlobSigmaPx = 2.f;
constexpr float kConfidenceFloor = 0.1f;

void fail_config(const std::string& field, const std::string& why) {
  throw ConfigError("synthetic config: " + field + " " + why);
}

struct Patch {
  int x0, y0, w, h;
  int remaining;
};

}  // namespace

void SyntheticConfig::validate() const {
  if (num_landmarks < 2) fail_config("num_landmarks", "must be >= 2");
  if (image_size < 32) fail_config("image_size", "must be >= 32");
  if (sequence_length < 2) fail_config("sequence_length", "must be >= 2");
  if (heatmap_bins < 8) fail_config("heatmap_bins", "must be >= 8");
  if (!(label_sigma > 0)) fail_config("label_sigma", "must be > 0");
  if (translation_amplitude < 0) fail_config("translation_amplitude", "must be >= 0");
  if (rotation_amplitude < 0) fail_config("rotation_amplitude", "must be >= 0");
  if (jitter_sigma < 0) fail_config("jitter_sigma", "must be >= 0");
  if (group_deform_sigma < 0) fail_config("group_deform_sigma", "must be >= 0");
  if (occlusion_rate < 0) fail_config("occlusion_rate", "must be >= 0");
  if (occlusion_min_size < 1 || occlusion_max_size < occlusion_min_size)
    fail_config("occlusion size range", "must satisfy 1 <= min <= max");
  if (occlusion_min_duration < 1 || occlusion_max_duration < occlusion_min_duration)
    fail_config("occlusion duration range", "must satisfy 1 <= min <= max");
}

std::vector<float> template_layout(int n, int s) {
  std::vector<float> pts(size_t(n) * 2);
  const float cx = s * 0.5f, cy = s * 0.5f;
  auto set = [&](int i, float ux, float uy) {
    // unit face box [-1, 1]^2 scaled to 70% of the frame
    pts[size_t(i) * 2 + 0] = cx + ux * 0.35f * float(s);
    pts[size_t(i) * 2 + 1] = cy + uy * 0.35f * float(s);
  };
  if (n == 68) {
    // 68-point markup: 0-16 contour, 17-21 left brow, 22-26 right brow,
    // 27-35 nose, 36-41 left eye, 42-47 right eye, 48-67 mouth
    for (int i = 0; i < 17; ++i) {
      const float t = float(M_PI) * float(i) / 16.f;
      set(i, -std::cos(t), 0.1f + 0.9f * std::sin(t));
    }
    for (int j = 0; j < 5; ++j) {
      const float x = -0.65f + 0.125f * float(j);
      set(17 + j, x, -0.55f - 0.08f * std::sin(float(M_PI) * float(j) / 4.f));
    }
    for (int j = 0; j < 5; ++j) {
      const float x = 0.15f + 0.125f * float(j);
      set(22 + j, x, -0.55f - 0.08f * std::sin(float(M_PI) * float(j) / 4.f));
    }
    for (int j = 0; j < 4; ++j) set(27 + j, 0.f, -0.35f + 0.15f * float(j));
    for (int j = 0; j < 5; ++j)
      set(31 + j, -0.15f + 0.075f * float(j), 0.2f + 0.05f * std::sin(float(M_PI) * float(j) / 4.f));
    for (int j = 0; j < 6; ++j) {
      const float a = float(M_PI) + float(j) * float(M_PI) / 3.f;
      set(36 + j, -0.4f + 0.12f * std::cos(a), -0.35f + 0.07f * std::sin(a));
      set(42 + j, 0.4f + 0.12f * std::cos(a), -0.35f + 0.07f * std::sin(a));
    }
    for (int j = 0; j < 12; ++j) {
      const float a = float(M_PI) + float(j) * 2.f * float(M_PI) / 12.f;
      set(48 + j, 0.35f * std::cos(a), 0.55f + 0.18f * std::sin(a));
    }
    for (int j = 0; j < 8; ++j) {
      const float a = float(M_PI) + float(j) * 2.f * float(M_PI) / 8.f;
      set(60 + j, 0.2f * std::cos(a), 0.55f + 0.08f * std::sin(a));
    }
    return pts;
  }
  // generic layout: outer ring plus inner cluster
  const int n_ring = (n + 1) / 2;
  const int n_cluster = n - n_ring;
  for (int i = 0; i < n_ring; ++i) {
    const float a = 2.f * float(M_PI) * float(i) / float(n_ring);
    set(i, std::cos(a), std::sin(a));
  }
  for (int i = 0; i < n_cluster; ++i) {
    const float a = 2.f * float(M_PI) * float(i) / float(n_cluster) + 0.5f;
    set(n_ring + i, 0.4f * std::cos(a), 0.4f * std::sin(a));
  }
  return pts;
}

void make_heatmap_label(float coord_px, int image_size, int bins, float sigma_bins,
                        float* out) {
  const float mu = coord_px * float(bins) / float(image_size);
  float peak = 0.f;
  for (int i = 0; i < bins; ++i) {
    const float d = (float(i) + 0.5f) - mu;
    out[i] = std::exp(-d * d / (2.f * sigma_bins * sigma_bins));
    peak = std::max(peak, out[i]);
  }
  for (int i = 0; i < bins; ++i) out[i] /= peak;  // peak becomes exactly 1
}

float make_confidence_label(bool occluded, float occluded_fraction) {
  if (!occluded) return 1.f;
  return std::max(kConfidenceFloor, 1.f - occluded_fraction);
}

SyntheticSequence generate_sequence(const SyntheticConfig& cfg) {
  cfg.validate();
  const int n = cfg.num_landmarks, s = cfg.image_size, t_len = cfg.sequence_length;
  const int d = cfg.heatmap_bins;
  Rng rng(cfg.seed);

  SyntheticSequence seq;
  seq.num_landmarks = n;
  seq.image_size = s;
  seq.sequence_length = t_len;
  seq.heatmap_bins = d;
  seq.frames.reserve(size_t(t_len));
  seq.coords.resize(size_t(t_len) * n * 2);
  seq.heatmap_labels.resize(size_t(t_len) * n * 2 * d);
  seq.confidence_labels.resize(size_t(t_len) * n * 2);
  seq.occlusion_masks.assign(size_t(t_len) * n, 0);

  const std::vector<float> base = template_layout(n, s);
  std::vector<float> offs(size_t(n) * 2);
  for (int i = 0; i < n; ++i) {
    offs[size_t(i) * 2 + 0] = base[size_t(i) * 2 + 0] - s * 0.5f;
    offs[size_t(i) * 2 + 1] = base[size_t(i) * 2 + 1] - s * 0.5f;
  }

  // smooth per-landmark jitter: sigma * sin(omega t + phase) per axis
  std::vector<float> jit_omega(size_t(n) * 2), jit_phase(size_t(n) * 2);
  for (size_t i = 0; i < jit_omega.size(); ++i) {
    jit_omega[i] = rng.uniform(0.1f, 0.5f);
    jit_phase[i] = rng.uniform(0.f, 2.f * float(M_PI));
  }

  // smooth per-group deformation: landmarks of one structural group share a
  // slow sinusoidal offset, so a hidden landmark stays predictable from its
  // group mates and from its own recent trajectory
  std::vector<std::vector<int>> groups;
  if (n >= GroupPartition::kGroupCount) {
    groups = GroupPartition::default_partition(n).groups;
  } else {
    groups.emplace_back();
    for (int i = 0; i < n; ++i) groups.back().push_back(i);
  }
  std::vector<int> group_of(size_t(n), 0);
  for (size_t g = 0; g < groups.size(); ++g)
    for (int idx : groups[g]) group_of[size_t(idx)] = int(g);
  std::vector<float> grp_omega(groups.size() * 2), grp_phase(groups.size() * 2);
  for (size_t i = 0; i < grp_omega.size(); ++i) {
    grp_omega[i] = rng.uniform(0.1f, 0.4f);
    grp_phase[i] = rng.uniform(0.f, 2.f * float(M_PI));
  }

  float cx = s * 0.5f, cy = s * 0.5f, angle = 0.f;
  std::vector<Patch> patches;
  const float coord_hi = float(s) - 1e-3f;

  for (int t = 0; t < t_len; ++t) {
    if (t > 0) {
      cx += rng.uniform(-cfg.translation_amplitude, cfg.translation_amplitude);
      cy += rng.uniform(-cfg.translation_amplitude, cfg.translation_amplitude);
      angle += rng.uniform(-cfg.rotation_amplitude, cfg.rotation_amplitude);
    }
    const float ca = std::cos(angle), sa = std::sin(angle);
    for (int i = 0; i < n; ++i) {
      const float ox = offs[size_t(i) * 2 + 0], oy = offs[size_t(i) * 2 + 1];
      const float jx = cfg.jitter_sigma * std::sin(jit_omega[size_t(i) * 2 + 0] * float(t) +
                                                   jit_phase[size_t(i) * 2 + 0]);
      const float jy = cfg.jitter_sigma * std::sin(jit_omega[size_t(i) * 2 + 1] * float(t) +
                                                   jit_phase[size_t(i) * 2 + 1]);
      const size_t g = size_t(group_of[size_t(i)]) * 2;
      const float gx =
          cfg.group_deform_sigma * std::sin(grp_omega[g] * float(t) + grp_phase[g]);
      const float gy =
          cfg.group_deform_sigma * std::sin(grp_omega[g + 1] * float(t) + grp_phase[g + 1]);
      float x = cx + ca * ox - sa * oy + jx + gx;
      float y = cy + sa * ox + ca * oy + jy + gy;
      if (x < 0.f || x > coord_hi) {
        x = std::clamp(x, 0.f, coord_hi);
        ++seq.clamp_count;
      }
      if (y < 0.f || y > coord_hi) {
        y = std::clamp(y, 0.f, coord_hi);
        ++seq.clamp_count;
      }
      seq.coords[size_t((int64_t(t) * n + i) * 2 + 0)] = x;
      seq.coords[size_t((int64_t(t) * n + i) * 2 + 1)] = y;
    }

    // spawn occlusion events
    int spawn = int(cfg.occlusion_rate);
    if (rng.next_double() < double(cfg.occlusion_rate - float(spawn))) ++spawn;
    for (int e = 0; e < spawn; ++e) {
      Patch p;
      p.w = std::min(s, rng.uniform_int(cfg.occlusion_min_size, cfg.occlusion_max_size));
      p.h = std::min(s, rng.uniform_int(cfg.occlusion_min_size, cfg.occlusion_max_size));
      p.x0 = rng.uniform_int(0, s - p.w);
      p.y0 = rng.uniform_int(0, s - p.h);
      p.remaining = rng.uniform_int(cfg.occlusion_min_duration, cfg.occlusion_max_duration);
      patches.push_back(p);
    }

    // masks: centre inside any active patch
    for (int i = 0; i < n; ++i) {
      const float x = seq.coord(t, i, 0), y = seq.coord(t, i, 1);
      bool hit = false;
      for (const Patch& p : patches)
        if (x >= float(p.x0) && x < float(p.x0 + p.w) && y >= float(p.y0) &&
            y < float(p.y0 + p.h)) {
          hit = true;
          break;
        }
      seq.occlusion_masks[size_t(int64_t(t) * n + i)] = hit ? 1 : 0;
    }

    // render: additive Gaussian blobs, clamped to [0,1], then noise patches
    ArrayX frame = ArrayX::Zero(int64_t(s) * s);
    const float inv2s2 = 1.f / (2.f * kBlobSigmaPx * kBlobSigmaPx);
    const int reach = int(4.f * kBlobSigmaPx);
    for (int i = 0; i < n; ++i) {
      const float x = seq.coord(t, i, 0), y = seq.coord(t, i, 1);
      const int px0 = std::max(0, int(std::floor(x)) - reach);
      const int px1 = std::min(s - 1, int(std::ceil(x)) + reach);
      const int py0 = std::max(0, int(std::floor(y)) - reach);
      const int py1 = std::min(s - 1, int(std::ceil(y)) + reach);
      for (int py = py0; py <= py1; ++py)
        for (int px = px0; px <= px1; ++px) {
          const float dx = float(px) - x, dy = float(py) - y;
          frame[int64_t(py) * s + px] += std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    }
    frame = frame.min(1.f);
    for (const Patch& p : patches)
      for (int py = p.y0; py < p.y0 + p.h; ++py)
        for (int px = p.x0; px < p.x0 + p.w; ++px)
          frame[int64_t(py) * s + px] = float(rng.next_double());
    seq.frames.push_back(std::move(frame));

    // labels
    for (int i = 0; i < n; ++i) {
      const bool occ = seq.occluded(t, i);
      for (int axis = 0; axis < 2; ++axis) {
        make_heatmap_label(seq.coord(t, i, axis), s, d, cfg.label_sigma,
                           seq.heatmap_labels.data() +
                               size_t(((int64_t(t) * n + i) * 2 + axis) * d));
        seq.confidence_labels[size_t((int64_t(t) * n + i) * 2 + axis)] =
            make_confidence_label(occ, occ ? 1.f : 0.f);
      }
    }

    for (Patch& p : patches) --p.remaining;
    std::erase_if(patches, [](const Patch& p) { return p.remaining <= 0; });
  }
  return seq;
}

// ---------------------------------------------------------------------------
// SYNQ container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'Y', 'N', 'Q'};
constexpr uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(uint8_t(v & 0xff));
  buf.push_back(uint8_t((v >> 8) & 0xff));
  buf.push_back(uint8_t((v >> 16) & 0xff));
  buf.push_back(uint8_t((v >> 24) & 0xff));
}

void put_f32(std::vector<unsigned char>& buf, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(buf, v);
}

struct Reader {
  const std::vector<unsigned char>& buf;
  size_t off = 0;

  void need(size_t bytes, const char* what) const {
    if (off + bytes > buf.size())
      throw IoError("SYNQ: truncated while reading " + std::string(what) + " at byte " +
                    std::to_string(off) + " (need " + std::to_string(bytes) + ", have " +
                    std::to_string(buf.size() - off) + ")");
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(buf[off]) | uint32_t(buf[off + 1]) << 8 |
                 uint32_t(buf[off + 2]) << 16 | uint32_t(buf[off + 3]) << 24;
    off += 4;
    return v;
  }
  float f32(const char* what) {
    uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
};

}  // namespace

void save_sequence(const SyntheticSequence& seq, const std::string& path) {
  std::vector<unsigned char> buf;
  const int64_t n = seq.num_landmarks, s = seq.image_size, t = seq.sequence_length,
                d = seq.heatmap_bins;
  buf.reserve(size_t(24 + 4 * (t * s * s + t * n * 2 + t * n * 2 * d + t * n * 2) + t * n));
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, uint32_t(n));
  put_u32(buf, uint32_t(s));
  put_u32(buf, uint32_t(t));
  put_u32(buf, uint32_t(d));
  for (const ArrayX& frame : seq.frames)
    for (int64_t i = 0; i < frame.size(); ++i) put_f32(buf, frame[i]);
  for (float v : seq.coords) put_f32(buf, v);
  for (float v : seq.heatmap_labels) put_f32(buf, v);
  for (float v : seq.confidence_labels) put_f32(buf, v);
  buf.insert(buf.end(), seq.occlusion_masks.begin(), seq.occlusion_masks.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw IoError("short write to " + path);
}

SyntheticSequence load_sequence(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<size_t>(size), 0);
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("short read from " + path);

  Reader r{buf};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw IoError("SYNQ: bad magic in " + path);
  r.off = 4;
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    throw IoError("SYNQ: unsupported version " + std::to_string(version));
  SyntheticSequence seq;
  seq.num_landmarks = int(r.u32("landmark count"));
  seq.image_size = int(r.u32("image size"));
  seq.sequence_length = int(r.u32("sequence length"));
  seq.heatmap_bins = int(r.u32("heatmap bins"));
  if (seq.num_landmarks <= 0 || seq.image_size <= 0 || seq.sequence_length <= 0 ||
      seq.heatmap_bins <= 0)
    throw IoError("SYNQ: corrupt header in " + path);

  const int64_t n = seq.num_landmarks, s = seq.image_size, t = seq.sequence_length,
                d = seq.heatmap_bins;
  const size_t expected = 24 + size_t(4 * (t * s * s + t * n * 2 + t * n * 2 * d + t * n * 2) +
                                      t * n);
  if (buf.size() != expected)
    throw IoError("SYNQ: payload length mismatch in " + path + ": expected " +
                  std::to_string(expected) + " bytes, found " + std::to_string(buf.size()));

  seq.frames.reserve(size_t(t));
  for (int64_t ti = 0; ti < t; ++ti) {
    ArrayX frame(s * s);
    for (int64_t i = 0; i < s * s; ++i) frame[i] = r.f32("frames");
    seq.frames.push_back(std::move(frame));
  }
  seq.coords.resize(size_t(t * n * 2));
  for (float& v : seq.coords) v = r.f32("coords");
  seq.heatmap_labels.resize(size_t(t * n * 2 * d));
  for (float& v : seq.heatmap_labels) v = r.f32("heatmap labels");
  seq.confidence_labels.resize(size_t(t * n * 2));
  for (float& v : seq.confidence_labels) v = r.f32("confidence labels");
  seq.occlusion_masks.resize(size_t(t * n));
  for (uint8_t& v : seq.occlusion_masks) {
    r.need(1, "occlusion masks");
    v = buf[r.off++];
  }
  return seq;
}

}  // namespace onedf
