#include "clanet/embedding.hpp"

#include <cmath>

#include "clanet/texture.hpp"

namespace clanet {

std::vector<float> descriptor_embed(const GrayImage& patch, int d) {
    if (d < 1) throw DataError("descriptor_embed: d must be >= 1");

    std::vector<double> raw;
    raw.reserve(kDescriptorRawSize);

    const auto ch = intensity_histogram(patch, 0, 0, patch.width, patch.height);
    raw.insert(raw.end(), ch.begin(), ch.end());

    const auto codes = lbp_codes(patch);
    const auto th = lbp_histogram(codes, patch.width, 0, 0, patch.width, patch.height);
    raw.insert(raw.end(), th.begin(), th.end());

    // 4x4 grids of cell means and population standard deviations.
    std::array<double, 16> means{};
    std::array<double, 16> stds{};
    for (int gy = 0; gy < 4; ++gy)
        for (int gx = 0; gx < 4; ++gx) {
            const int x0 = gx * patch.width / 4, x1 = (gx + 1) * patch.width / 4;
            const int y0 = gy * patch.height / 4, y1 = (gy + 1) * patch.height / 4;
            double sum = 0, sq = 0;
            const double n = static_cast<double>(x1 - x0) * (y1 - y0);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) {
                    const double v = patch.at(x, y);
                    sum += v;
                    sq += v * v;
                }
            const double mean = n > 0 ? sum / n : 0.0;
            const double var = n > 0 ? sq / n - mean * mean : 0.0;
            means[gy * 4 + gx] = mean / 255.0;
            stds[gy * 4 + gx] = (var > 0 ? std::sqrt(var) : 0.0) / 255.0;
        }
    raw.insert(raw.end(), means.begin(), means.end());
    raw.insert(raw.end(), stds.begin(), stds.end());

    // Texture density: fraction of pixels whose 3x3 neighborhood deviation
    // reaches the threshold.
    std::int64_t textured = 0;
    for (int y = 0; y < patch.height; ++y)
        for (int x = 0; x < patch.width; ++x) {
            double sum = 0, sq = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double v = patch.at_clamped(x + dx, y + dy);
                    sum += v;
                    sq += v * v;
                }
            const double mean = sum / 9.0;
            const double var = sq / 9.0 - mean * mean;
            if (var > 0 && std::sqrt(var) >= kTextureDensityThreshold) ++textured;
        }
    raw.push_back(static_cast<double>(textured) /
                  (static_cast<double>(patch.width) * patch.height));

    std::vector<float> out(static_cast<std::size_t>(d), 0.0f);
    for (std::size_t i = 0; i < raw.size() && i < out.size(); ++i)
        out[i] = static_cast<float>(raw[i]);
    return out;
}

}  // namespace clanet
