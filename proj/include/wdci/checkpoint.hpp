#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "wdci/net.hpp"

WDCI_NAMESPACE_BEGIN

struct CheckpointMeta {
  NetConfig net;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Archive layout: "WDCICKPT", u32 version, u64 manifest length, JSON
/// manifest, then per parameter: u32 name length, name, 4 x i32 shape,
/// u32 dtype tag (1 = f32), raw little-endian data.
void save_checkpoint(const std::string& path, const WdciNet& net, const CheckpointMeta& meta);

/// Reads only the manifest.
CheckpointMeta read_checkpoint_meta(const std::string& path);

/// Builds a network from the stored configuration and parameters.
std::unique_ptr<WdciNet> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

/// Loads parameters into an existing network. Throws ConfigError naming both
/// config hashes when the stored structure differs from the network's.
CheckpointMeta load_into(const std::string& path, WdciNet& net);

std::string hash_hex(std::uint64_t h);

WDCI_NAMESPACE_END
