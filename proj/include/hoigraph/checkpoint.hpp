#pragma once

// Binary model container:
//   8 bytes   magic "HOIGCKPT"
//   1 byte    format version
//   4 bytes   header length, little-endian uint32
//   header    JSON: config echo, variant tag, parameter table (name, shape),
//             epoch and serialized generator state
//   payload   every parameter's values as little-endian float64, table order

#include <cstdint>
#include <filesystem>
#include <string>

#include "hoigraph/model.hpp"
#include "hoigraph/training.hpp"

namespace hoigraph {

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  Model model;
  std::size_t epoch = 0;
  /// Text form of the shuffle generator, empty when unknown.
  std::string rng_state;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws ConfigError on a bad container and ShapeError when the parameter
/// table disagrees with the shapes implied by the stored config.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hoigraph
