#include "wdci/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "wdci/errors.hpp"

WDCI_NAMESPACE_BEGIN

namespace {

constexpr char kMagic[8] = {'W', 'D', 'C', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeF32 = 1;

using json = nlohmann::json;

json net_to_json(const NetConfig& c) {
  return {{"channels", c.channels},
          {"levels", c.levels},
          {"large_kernel", c.large_kernel},
          {"max_disparity", c.max_disparity},
          {"use_hf_cim", c.use_hf_cim},
          {"use_dtem", c.use_dtem},
          {"use_iam", c.use_iam},
          {"use_downsample_fusion", c.use_downsample_fusion},
          {"global_residual", c.global_residual}};
}

NetConfig net_from_json(const json& j) {
  NetConfig c;
  c.channels = j.at("channels").get<int>();
  c.levels = j.at("levels").get<int>();
  c.large_kernel = j.at("large_kernel").get<int>();
  c.max_disparity = j.at("max_disparity").get<int>();
  c.use_hf_cim = j.at("use_hf_cim").get<bool>();
  c.use_dtem = j.at("use_dtem").get<bool>();
  c.use_iam = j.at("use_iam").get<bool>();
  c.use_downsample_fusion = j.at("use_downsample_fusion").get<bool>();
  c.global_residual = j.at("global_residual").get<bool>();
  return c;
}

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(path + ": truncated checkpoint");
  return v;
}

struct Archive {
  CheckpointMeta meta;
  std::uint64_t stored_hash = 0;
  std::vector<std::pair<std::string, Tensor>> params;
};

Archive read_archive(const std::string& path, bool with_params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError(path + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, path);
  if (len > (1u << 24)) throw IoError(path + ": manifest too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path + ": truncated manifest");

  Archive a;
  try {
    const json m = json::parse(text);
    a.meta.net = net_from_json(m.at("net"));
    a.meta.epoch = m.at("epoch").get<int>();
    a.meta.seed = m.at("seed").get<std::uint64_t>();
    a.meta.step = m.at("step").get<std::uint64_t>();
    a.stored_hash = std::stoull(m.at("config_hash").get<std::string>(), nullptr, 16);
    if (!with_params) return a;
    const auto count = m.at("param_count").get<std::size_t>();
    for (std::size_t i = 0; i < count; ++i) {
      const auto name_len = get<std::uint32_t>(in, path);
      if (name_len > 4096) throw IoError(path + ": corrupt parameter name");
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      Shape s;
      s.n = get<std::int32_t>(in, path);
      s.c = get<std::int32_t>(in, path);
      s.h = get<std::int32_t>(in, path);
      s.w = get<std::int32_t>(in, path);
      if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw IoError(path + ": corrupt shape for " + name);
      if (get<std::uint32_t>(in, path) != kDtypeF32) throw IoError(path + ": unsupported dtype for " + name);
      std::vector<float> buf(s.numel());
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) throw IoError(path + ": truncated data for " + name);
      a.params.emplace_back(name, Tensor(s, std::vector<real>(buf.begin(), buf.end())));
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": bad manifest: " + e.what());
  }
  return a;
}

void assign(const Archive& a, WdciNet& net, const std::string& path) {
  auto& params = net.params().params();
  if (a.params.size() != params.size()) {
    throw StructureError(path + ": stores " + std::to_string(a.params.size()) + " parameters, network has " +
                         std::to_string(params.size()));
  }
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : a.params) by_name[name] = &t;
  for (auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw StructureError(path + ": missing parameter " + p.name);
    if (it->second->shape() != p.var.shape()) {
      throw StructureError(path + ": parameter " + p.name + " has shape " + it->second->shape().str() +
                           ", expected " + p.var.shape().str());
    }
    p.var.mutable_value() = *it->second;
  }
}

}  // namespace

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& path, const WdciNet& net, const CheckpointMeta& meta) {
  const auto& params = net.params().params();
  const json manifest = {{"format", "wdci-checkpoint"},
                         {"config_hash", hash_hex(net.config().hash())},
                         {"net", net_to_json(net.config())},
                         {"epoch", meta.epoch},
                         {"seed", meta.seed},
                         {"step", meta.step},
                         {"param_count", params.size()}};
  const std::string text = manifest.dump();
  // Written to a sibling file first so a crash never leaves a torn archive.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 8);
    put(out, kVersion);
    put(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
      put(out, static_cast<std::uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      const Shape& s = p.var.shape();
      for (std::int32_t d : {s.n, s.c, s.h, s.w}) put(out, d);
      put(out, kDtypeF32);
      const auto v = p.var.value().values();
      std::vector<float> buf(v.begin(), v.end());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write on checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into place: " + path);
}

CheckpointMeta read_checkpoint_meta(const std::string& path) { return read_archive(path, false).meta; }

std::unique_ptr<WdciNet> load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  const Archive a = read_archive(path, true);
  if (a.stored_hash != a.meta.net.hash()) {
    throw IoError(path + ": manifest hash " + hash_hex(a.stored_hash) + " does not match its config " +
                  hash_hex(a.meta.net.hash()));
  }
  auto net = std::make_unique<WdciNet>(a.meta.net, a.meta.seed);
  assign(a, *net, path);
  if (meta) *meta = a.meta;
  return net;
}

CheckpointMeta load_into(const std::string& path, WdciNet& net) {
  const Archive a = read_archive(path, true);
  if (a.stored_hash != net.config().hash()) {
    throw ConfigError("checkpoint " + path + " has config hash " + hash_hex(a.stored_hash) +
                      " but the model config hash is " + hash_hex(net.config().hash()));
  }
  assign(a, net, path);
  return a.meta;
}

WDCI_NAMESPACE_END
