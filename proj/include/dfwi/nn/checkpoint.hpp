#pragma once

#include <string>

#include "dfwi/nn/denoiser.hpp"

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

// Layout: "DFWI", u32 version, u32 header length, JSON header
// {"architecture": {...}, "meta": {...}}, u32 segment count, then per segment
// u32 name length, name, u64 value count, float32 values. All little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Denoiser& net, const std::string& meta_json = "{}");

struct LoadedCheckpoint {
  Denoiser net;
  std::string meta_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
