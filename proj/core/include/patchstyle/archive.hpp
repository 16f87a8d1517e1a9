#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace patchstyle {

struct TensorBlob {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<float> values;

    friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

/// Single-file container: JSON metadata plus named float32 blobs.
///
/// Layout: "PSTYLEAR" magic, u32 version, u64 header length, UTF-8 JSON header,
/// then the blobs back to back as little-endian float32. The header lists every
/// blob with its name, shape, and element offset into the blob section.
struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<TensorBlob> tensors;

    const TensorBlob* find(const std::string& name) const;
};

std::vector<uint8_t> serialize_archive(const Archive& archive);
Archive deserialize_archive(std::span<const uint8_t> bytes);

/// Writes to a temporary sibling and renames it into place, so readers only ever
/// observe a complete file.
void write_archive_atomic(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

/// Stable 64-bit FNV-1a digest rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

}  // namespace patchstyle
