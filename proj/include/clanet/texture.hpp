#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "clanet/types.hpp"

namespace clanet {

constexpr int kIntensityBins = 32;
// Uniform LBP, 8 neighbors, radius 1: 58 uniform patterns plus one
// catch-all bin.
constexpr int kLbpBins = 59;

// Maps raw 8-bit LBP codes to uniform-pattern bins 0..58.
const std::array<std::uint8_t, 256>& uniform_lbp_table();

// Per-pixel LBP code map (neighbors sampled circularly at radius 1,
// border-replicated; bit set when neighbor >= center).
std::vector<std::uint8_t> lbp_codes(const GrayImage& img);

// L1-normalized 32-bin intensity histogram over a box (all pixels).
std::array<double, kIntensityBins> intensity_histogram(const GrayImage& img, int x, int y, int w, int h);

// L1-normalized 59-bin uniform-LBP histogram over a box of a precomputed
// code map.
std::array<double, kLbpBins> lbp_histogram(const std::vector<std::uint8_t>& codes, int img_width,
                                           int x, int y, int w, int h);

}  // namespace clanet
