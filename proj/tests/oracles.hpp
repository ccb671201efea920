#pragma once

// Independent reference implementations used only by tests. Each oracle
// re-derives its result by a different route than the library (breadth-first
// flood fill instead of union-find, naive per-pixel loops instead of shared
// helpers) so agreement is meaningful.

#include <vector>

#include "clanet/ccs.hpp"
#include "clanet/mil.hpp"
#include "clanet/rng.hpp"
#include "clanet/segmentation.hpp"
#include "clanet/ssl.hpp"
#include "clanet/types.hpp"

namespace oracle {

// Breadth-first flood-fill labeling, 8-connectivity, labels in raster order
// of each region's first pixel.
clanet::RegionMap flood_fill_labeling(const clanet::BinaryMask& mask);

// Full re-execution of the selection pipeline with self-contained code:
// flood-fill regions, extent boxes, centroid/tile correction, naive
// histogram similarity, mean-threshold pruning in descending-score order,
// density-ranked cropping.
clanet::PatchSet brute_force_select_patches(const clanet::GrayImage& img,
                                            const clanet::BinaryMask& mask, int k, int patch_w,
                                            int patch_h);

// Standard normal CDF.
double normal_cdf(double x);

// Probability mass N(mu, sigma^2) assigns to each candidate under
// nearest-candidate snapping (ties toward the smaller candidate).
std::vector<double> snap_probabilities(const std::vector<int>& candidates, double mu, double sigma);

// Max relative error between analytic MIL gradients and central finite
// differences over every parameter block.
double mil_gradient_max_rel_error(clanet::MilModel model, const std::vector<clanet::Bag>& batch,
                                  double eps = 1e-5);

// Same check for the SSL student parameters.
double ssl_gradient_max_rel_error(clanet::SslModel model, const clanet::CropSet& crops,
                                  double eps = 1e-5);

// Test-data helpers.
clanet::BinaryMask random_mask(int width, int height, double fill, clanet::Rng& rng);
clanet::GrayImage random_image(int width, int height, clanet::Rng& rng);

// Blob-textured image resembling rendered cell clusters.
clanet::GrayImage random_cell_image(int width, int height, clanet::Rng& rng);

}  // namespace oracle
