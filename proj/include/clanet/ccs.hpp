#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clanet/segmentation.hpp"
#include "clanet/types.hpp"

namespace clanet {

// Axis-aligned box with its cell density: the count of mask-foreground
// pixels inside the box (box area is constant after correction, so it cannot
// discriminate).
struct BBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    std::int64_t density = 0;

    std::int64_t area() const { return static_cast<std::int64_t>(w) * h; }

    bool same_rect(const BBox& o) const { return x == o.x && y == o.y && w == o.w && h == o.h; }
    bool operator==(const BBox&) const = default;
};

struct Patch {
    GrayImage pixels;
    BBox source;

    bool operator==(const Patch&) const = default;
};

// Patches selected for one image, ordered by non-increasing density.
struct PatchSet {
    std::string image_id;
    std::vector<Patch> patches;

    bool operator==(const PatchSet&) const = default;
};

// Pairwise complementary similarity between overlapping boxes a < b
// (indices into the box list).
struct ScoredPair {
    int a = 0;
    int b = 0;
    double score = 0;
};

// One tight box per region, in region (raster) order; density = region pixel
// count.
std::vector<BBox> initial_bboxes(const RegionMap& regions);

// Fixed-size box correction: for each region a patch_w x patch_h box centered
// on the region's foreground centroid (floored, clamped in-bounds), plus a
// tile cover of the region's initial box when its cell area reaches twice the
// patch area. Densities are recomputed from the mask. Duplicate rectangles
// collapse (set semantics).
std::vector<BBox> correct_bboxes(const std::vector<BBox>& initial, const RegionMap& regions,
                                 int patch_w, int patch_h, const BinaryMask& mask);

// Complementary similarity of two overlapping boxes: intersection of their
// unit-normalized intensity histograms, plus intersection of their
// unit-normalized uniform-LBP histograms, plus IoU. Range [0, 3]; identical
// boxes score exactly 3. Throws if the boxes do not overlap.
double similarity(const BBox& a, const BBox& b, const GrayImage& img,
                  const std::vector<std::uint8_t>& lbp);

// Scores every overlapping pair (a < b in box order).
std::vector<ScoredPair> score_overlapping_pairs(const std::vector<BBox>& boxes, const GrayImage& img,
                                                const std::vector<std::uint8_t>& lbp);

// Removes the lower-density member of every pair scoring at or above the
// mean pair score. The mean is computed once up front; pairs are visited in
// descending-score order (ties by box order) and pairs with an
// already-removed member are skipped. Density ties keep the earlier box.
std::vector<BBox> prune_similar(const std::vector<BBox>& boxes, const std::vector<ScoredPair>& pairs);

// Full selection for one image: label regions, propose, correct, score,
// prune, then crop the top-k densest surviving boxes (ties by box order).
// Zero foreground regions yield an empty PatchSet.
PatchSet select_patches(const GrayImage& img, const BinaryMask& mask, int k, int patch_w, int patch_h);

}  // namespace clanet
