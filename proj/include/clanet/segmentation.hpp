#pragma once

#include <cstdint>
#include <vector>

#include "clanet/types.hpp"

namespace clanet {

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }

    std::size_t foreground_count() const;

    bool operator==(const BinaryMask&) const = default;
};

// Decomposition of a mask into 8-connected regions. Labels are 1..region_count,
// assigned in raster order of each region's first pixel; 0 is background.
struct RegionMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> labels;
    std::vector<std::vector<std::int32_t>> region_pixels;  // per region, linear indices in raster order

    int region_count() const { return static_cast<int>(region_pixels.size()); }

    bool operator==(const RegionMap&) const = default;
};

struct SegParams {
    int window = 9;            // local standard-deviation window (odd)
    int close_iterations = 2;  // 3x3 morphological closing passes
    int min_area = 64;         // regions below this pixel count are dropped
};

// Foreground mask for a brightfield image. Cells differ from background
// chiefly in local texture variance, not mean intensity, so the workflow is:
// local std-dev filter -> Otsu threshold on the deviation map -> morphological
// closing -> hole filling from the border -> halo-compensating erosion
// (window/4 passes) -> small-region removal. Deterministic for fixed params;
// may be empty.
BinaryMask segment(const GrayImage& image, const SegParams& params = {});

// 8-connected region labeling via union-find (path compression + union by
// size).
RegionMap label_regions(const BinaryMask& mask);

}  // namespace clanet
