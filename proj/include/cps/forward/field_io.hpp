#pragma once

#include <cstdint>
#include <filesystem>

#include "cps/common.hpp"

namespace cps::forward {

inline constexpr std::uint32_t kFieldVersion = 1;

/// Binary PGM (P5, maxval 255). Values are clipped to [0, 1] and scaled.
void write_pgm(const std::filesystem::path& path, const Vector& image);
/// Returns values in [0, 1], row-major.
Vector read_pgm(const std::filesystem::path& path);

/// Raw float64 field: "CPSF", u32 version, u32 side, u32 reserved (0), then
/// little-endian doubles. side = 0 marks a flat vector whose length follows
/// from the file size.
void write_field(const std::filesystem::path& path, const Vector& values, std::uint32_t side);
Vector read_field(const std::filesystem::path& path, std::uint32_t* side = nullptr);

}  // namespace cps::forward
