#pragma once

#include <filesystem>

#include "clanet/types.hpp"

namespace clanet {

// Reads an 8-bit grayscale image. Supported formats: PGM (P5 binary and P2
// ascii) and 8-bit grayscale PNG, selected by file extension.
GrayImage read_image(const std::filesystem::path& path);

// Writes an 8-bit grayscale image as binary PGM (.pgm) or grayscale PNG
// (.png), selected by file extension.
void write_image(const GrayImage& img, const std::filesystem::path& path);

}  // namespace clanet
