#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "haft/nn/layers.hpp"

namespace haft {

struct CheckpointArray {
  std::string name;
  nn::Tensor value;
  bool train_only = false;
};

/// Named float64 arrays plus the metadata needed to resume or deploy.
struct Checkpoint {
  std::vector<CheckpointArray> arrays;
  std::map<std::string, std::string> config;  // resolved key = value snapshot
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;

  const CheckpointArray* find(const std::string& name) const;
};

/// Writes `manifest.json` and one little-endian `.bin` per array into `dir`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);

/// Verifies every payload against its SHA-256 and the manifest digest. With
/// strict = false, train-only arrays are skipped.
Checkpoint load_checkpoint(const std::filesystem::path& dir, bool strict = true);

std::string sha256_hex(const void* data, std::size_t size);

/// Snapshot of `arrays` (values copied).
std::vector<CheckpointArray> snapshot(const nn::ParamList& arrays, bool train_only);

/// Copies checkpoint values into `arrays`. Throws DataError when an array is missing
/// from the checkpoint, when a deployable (non-train-only) checkpoint array has no
/// counterpart in `arrays`, and on shape mismatch.
void restore(const Checkpoint& checkpoint, const nn::ParamList& arrays);

}  // namespace haft
