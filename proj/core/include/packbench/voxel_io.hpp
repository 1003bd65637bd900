#pragma once

// Object voxel containers. See docs/formats.md for the byte layout.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "packbench/geometry.hpp"

namespace packbench {

inline constexpr std::uint16_t kPkvxVersion = 1;

std::vector<std::uint8_t> encode_pkvx(const VoxelGrid& grid);
VoxelGrid decode_pkvx(const std::vector<std::uint8_t>& bytes);

std::string voxels_to_json(const VoxelGrid& grid);
VoxelGrid voxels_from_json(std::string_view text);

void write_pkvx_file(const std::string& path, const VoxelGrid& grid);
VoxelGrid read_pkvx_file(const std::string& path);

/// Reads either container, chosen by the leading bytes.
VoxelGrid read_voxel_file(const std::string& path);

}  // namespace packbench
