#include "onedf/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace onedf {

namespace {

constexpr char kMagic[4] = {'1', 'D', 'F', '1'};
constexpr uint32_t kVersion = 1;

void put_u16(std::vector<unsigned char>& buf, uint16_t v) {
  buf.push_back(uint8_t(v & 0xff));
  buf.push_back(uint8_t((v >> 8) & 0xff));
}

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
  const std::string& path;

  void need(size_t bytes, const char* what) const {
    if (off + bytes > buf.size())
      throw IoError("checkpoint " + path + ": truncated while reading " + what +
                    " at byte " + std::to_string(off));
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(buf[off]) | uint16_t(uint16_t(buf[off + 1]) << 8);
    off += 2;
    return v;
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

TensorPtr Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, uint32_t(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff)
      throw ContractError("checkpoint: tensor name too long: " + name);
    put_u16(buf, uint16_t(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(uint8_t(t->rank()));
    for (int d : t->dims) put_u32(buf, uint32_t(d));
    for (int64_t i = 0; i < t->size(); ++i) put_f32(buf, t->data[i]);
  }
  nlohmann::json blob{{"model", nlohmann::json::parse(model_config_to_json(ckpt.model))},
                      {"epoch", ckpt.epoch},
                      {"best_val_nrmse", ckpt.best_val_nrmse},
                      {"best_epoch", ckpt.best_epoch}};
  const std::string cfg = blob.dump();
  put_u32(buf, uint32_t(cfg.size()));
  buf.insert(buf.end(), cfg.begin(), cfg.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
  if (!out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<size_t>(size), 0);
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("short read from " + path);

  Reader r{buf, 0, path};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0)
    throw IoError("checkpoint " + path + ": bad magic");
  r.off = 4;
  const uint32_t version = r.u32("version");
  if (version != kVersion)
    throw IoError("checkpoint " + path + ": unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const uint32_t count = r.u32("entry count");
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = r.u16("name length");
    r.need(name_len, "name");
    std::string name(reinterpret_cast<const char*>(buf.data() + r.off), name_len);
    r.off += name_len;
    r.need(1, "rank");
    const int rank = buf[r.off++];
    std::vector<int> dims;
    for (int d = 0; d < rank; ++d) dims.push_back(int(r.u32("extent")));
    auto t = make_tensor(dims);
    for (int64_t i = 0; i < t->size(); ++i) t->data[i] = r.f32("payload");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  const uint32_t cfg_len = r.u32("config length");
  r.need(cfg_len, "config blob");
  const std::string cfg(reinterpret_cast<const char*>(buf.data() + r.off), cfg_len);
  r.off += cfg_len;
  if (r.off != buf.size())
    throw IoError("checkpoint " + path + ": " + std::to_string(buf.size() - r.off) +
                  " trailing bytes");
  nlohmann::json blob;
  try {
    blob = nlohmann::json::parse(cfg);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("checkpoint " + path + ": bad config blob: " + e.what());
  }
  ckpt.model = model_config_from_json(blob.at("model").dump());
  ckpt.epoch = blob.value("epoch", 0);
  ckpt.best_val_nrmse = blob.value("best_val_nrmse", -1.0);
  ckpt.best_epoch = blob.value("best_epoch", 0);
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ParamRegistry& params) {
  std::string missing, unexpected, mismatched;
  for (const auto& [name, t] : params.items()) {
    TensorPtr src = ckpt.find(name);
    if (!src) {
      missing += "\n  missing from checkpoint: " + name + " " + dims_str(t->dims);
    } else if (src->dims != t->dims) {
      mismatched += "\n  extent mismatch: " + name + " expects " + dims_str(t->dims) +
                    ", checkpoint holds " + dims_str(src->dims);
    }
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind("optim.", 0) == 0) continue;  // optimizer state, applied by resume
    if (!params.find(name))
      unexpected += "\n  unexpected in checkpoint: " + name + " " + dims_str(t->dims);
  }
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty())
    throw IoError("checkpoint does not match the model parameters:" + missing + unexpected +
                  mismatched);
  for (const auto& [name, t] : params.items()) t->data = ckpt.find(name)->data;
}

}  // namespace onedf
