#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace phenotag {

// BLAKE2b-256 content digests rendered as lowercase hex.
std::string content_hash(std::span<const std::byte> bytes);
std::string content_hash(std::string_view text);
std::string file_hash(const std::filesystem::path& path);

}  // namespace phenotag
