#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "phenotag/tensor.hpp"

namespace phenotag {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

// On disk: <dir>/manifest.json and <dir>/params.bin. The manifest lists each
// tensor's name, shape and float offset; params.bin holds the tensors as
// little-endian float32 in index order. content_hash (BLAKE2b-256 over
// params.bin) guards the blob.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string kind;  // "annotator" or "kg"
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> vocabulary;
  std::vector<std::string> frequent_set;
  std::vector<std::string> concept_index;
  std::vector<NamedTensor> tensors;

  const Tensor<float>& tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
// Throws VersionError for a different format_version and IntegrityError for
// a missing, truncated or modified blob.
Checkpoint load_checkpoint(const std::filesystem::path& dir);
// Hash recorded in the manifest of a saved checkpoint.
std::string checkpoint_hash(const std::filesystem::path& dir);

}  // namespace phenotag
