#pragma once

#include <map>
#include <optional>
#include <string>

#include "fpk/kernel.hpp"

namespace fpk {

// Serialized model state: generator (absent in EBM mode), feature net, and
// training metadata. The on-disk format is a single JSON header line
// followed by a little-endian IEEE-754 float64 blob of all parameters in
// declared layer order (generator first, each layer W row-major then b).
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int version = kFormatVersion;
  int latent_dim = 2;
  std::optional<Net> generator;  // MLP when present
  Net feature;                   // feature / discriminator net
  std::map<std::string, std::string> metadata;

  const Net& require_generator() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fpk
