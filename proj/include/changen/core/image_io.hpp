#pragma once

#include <filesystem>

#include "changen/core/types.hpp"

namespace changen {

/// Reads an 8-bit PNG (gray, gray+alpha, RGB or RGBA; alpha dropped).
RawImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawImage& image);

/// Reads only the PNG header. Returns {height, width}.
std::pair<int, int> png_size(const std::filesystem::path& path);

/// Single-channel 8-bit mask raster. class_count <= 0 infers max label + 1 (at least 2).
SemanticMask read_mask(const std::filesystem::path& path, int class_count = 0);
void write_mask(const std::filesystem::path& path, const SemanticMask& mask);

ImageArray read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageArray& image);

/// Writes an arbitrary single-channel byte raster (change labels, norm maps).
void write_gray(const std::filesystem::path& path, int height, int width,
                std::span<const std::uint8_t> data);

}  // namespace changen
