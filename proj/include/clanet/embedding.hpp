#pragma once

#include <memory>
#include <string>
#include <vector>

#include "clanet/types.hpp"

namespace clanet {

// Patch -> D-dimensional embedding. Deterministic providers must map equal
// patches to equal embeddings; outputs are always finite.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual int dimension() const = 0;
    virtual std::vector<float> embed(const GrayImage& patch) const = 0;
};

// Deterministic hand-crafted descriptor: unit-normalized 32-bin intensity
// histogram, unit-normalized 59-bin uniform-LBP histogram, 4x4 grid of mean
// intensities, 4x4 grid of local standard deviations (both scaled to [0,1]),
// and a texture-density scalar (fraction of pixels whose 3x3 neighborhood
// deviation reaches kTextureDensityThreshold). Blocks are concatenated then
// zero-padded or truncated to d.
std::vector<float> descriptor_embed(const GrayImage& patch, int d = 128);

constexpr double kTextureDensityThreshold = 8.0;
constexpr int kDescriptorRawSize = 32 + 59 + 16 + 16 + 1;

class DescriptorProvider final : public EmbeddingProvider {
public:
    explicit DescriptorProvider(int d = 128) : d_(d) {}
    std::string name() const override { return "descriptor"; }
    int dimension() const override { return d_; }
    std::vector<float> embed(const GrayImage& patch) const override { return descriptor_embed(patch, d_); }

private:
    int d_;
};

}  // namespace clanet
