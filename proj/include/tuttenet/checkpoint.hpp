#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tuttenet/deform.hpp"
#include "tuttenet/geometry_io.hpp"
#include "tuttenet/optim.hpp"

namespace tuttenet {

inline constexpr const char* kCheckpointFormat = "tuttenet-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Everything needed to rebuild a net bit-identically, plus the geometry
/// normalization it was trained under.
struct Checkpoint {
  int resolution = 0;
  std::vector<Frame> frames;
  std::vector<TutteLayerParams> params;
  Normalization normalization;
  std::optional<AdamState> optimizer;
  std::uint64_t config_hash = 0;

  static Checkpoint from_net(const DeformationNet& net, const Normalization& normalization = {});
  DeformationNet realize() const;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Doubles are written in shortest round-trip form, so parse(dump(c)) == c.
std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws ParseError naming the offending field.
Checkpoint checkpoint_from_json(const std::string& text, const std::string& name = "<checkpoint>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace tuttenet
