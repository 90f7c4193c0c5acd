#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gdvig/tensor.hpp"

namespace gdvig {

// GDVT layout: "GDVT", u8 version (1), u8 rank, rank x u32 dims, float32 payload.
// All multi-byte fields little-endian. Values narrow to float32 on write.

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// Rounds every element to the nearest float32, the precision a GDVT round trip keeps.
Tensor narrow_to_float(Tensor t);

/// FNV-1a 64-bit digest used for file checksums in manifests.
std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace gdvig
