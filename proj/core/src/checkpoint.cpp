#include "phenotag/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "phenotag/errors.hpp"
#include "phenotag/hash.hpp"

namespace phenotag {
namespace {

using nlohmann::ordered_json;

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "params.bin";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

ordered_json read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw IntegrityError("checkpoint manifest missing in " + dir.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
}

}  // namespace

const Tensor<float>& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw IntegrityError("checkpoint has no tensor " + name);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string blob;
  auto index = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    index.push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}});
    for (float x : t.tensor.values()) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      bits = to_little_endian(bits);
      blob.append(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.tensor.size();
  }

  ordered_json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["kind"] = ckpt.kind;
  manifest["config"] = ckpt.config;
  manifest["vocabulary"] = ckpt.vocabulary;
  manifest["frequent_set"] = ckpt.frequent_set;
  manifest["concept_index"] = ckpt.concept_index;
  manifest["parameters"] = std::move(index);
  manifest["param_floats"] = offset;
  manifest["content_hash"] = content_hash(blob);

  {
    std::ofstream out(dir / kBlob, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + (dir / kBlob).string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  std::ofstream out(dir / kManifest, std::ios::trunc);
  if (!out) throw InputError("cannot write " + (dir / kManifest).string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  Checkpoint ckpt;
  try {
    ckpt.format_version = manifest.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointFormatVersion) {
      throw VersionError("checkpoint format version " + std::to_string(ckpt.format_version) +
                         " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    }
    ckpt.kind = manifest.at("kind").get<std::string>();
    ckpt.config = manifest.at("config");
    ckpt.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
    ckpt.frequent_set = manifest.at("frequent_set").get<std::vector<std::string>>();
    ckpt.concept_index = manifest.at("concept_index").get<std::vector<std::string>>();

    std::ifstream in(dir / kBlob, std::ios::binary);
    if (!in) throw IntegrityError("checkpoint blob missing in " + dir.string());
    const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto expected_floats = manifest.at("param_floats").get<std::size_t>();
    if (blob.size() != expected_floats * sizeof(float)) {
      throw IntegrityError("checkpoint blob has " + std::to_string(blob.size()) + " bytes, expected " +
                           std::to_string(expected_floats * sizeof(float)));
    }
    if (content_hash(blob) != manifest.at("content_hash").get<std::string>()) {
      throw IntegrityError("checkpoint blob hash mismatch in " + dir.string());
    }

    for (const auto& entry : manifest.at("parameters")) {
      NamedTensor nt;
      nt.name = entry.at("name").get<std::string>();
      auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto count = shape_size(shape);
      if (offset + count > expected_floats) throw IntegrityError("tensor " + nt.name + " extends past blob");
      std::vector<float> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, blob.data() + (offset + i) * sizeof bits, sizeof bits);
        bits = to_little_endian(bits);
        std::memcpy(&values[i], &bits, sizeof bits);
      }
      nt.tensor = Tensor<float>(std::move(shape), std::move(values));
      ckpt.tensors.push_back(std::move(nt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  return read_manifest(dir).at("content_hash").get<std::string>();
}

}  // namespace phenotag
