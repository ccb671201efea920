#include "clanet/texture.hpp"

namespace clanet {

namespace {

int circular_transitions(unsigned code) {
    const unsigned rotated = ((code << 1) | (code >> 7)) & 0xFF;
    unsigned diff = code ^ rotated;
    int n = 0;
    while (diff) {
        diff &= diff - 1;
        ++n;
    }
    return n;
}

std::array<std::uint8_t, 256> build_uniform_table() {
    std::array<std::uint8_t, 256> table{};
    std::uint8_t next = 0;
    for (unsigned code = 0; code < 256; ++code)
        table[code] = circular_transitions(code) <= 2 ? next++ : kLbpBins - 1;
    return table;
}

}  // namespace

const std::array<std::uint8_t, 256>& uniform_lbp_table() {
    static const std::array<std::uint8_t, 256> table = build_uniform_table();
    return table;
}

std::vector<std::uint8_t> lbp_codes(const GrayImage& img) {
    // Circular neighbor order: E, NE, N, NW, W, SW, S, SE.
    static constexpr int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static constexpr int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    std::vector<std::uint8_t> codes(static_cast<std::size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::uint8_t center = img.at(x, y);
            unsigned code = 0;
            for (int b = 0; b < 8; ++b)
                if (img.at_clamped(x + dx[b], y + dy[b]) >= center) code |= 1u << b;
            codes[static_cast<std::size_t>(y) * img.width + x] = static_cast<std::uint8_t>(code);
        }
    return codes;
}

std::array<double, kIntensityBins> intensity_histogram(const GrayImage& img, int x, int y, int w, int h) {
    std::array<double, kIntensityBins> hist{};
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) hist[img.at(xx, yy) * kIntensityBins / 256] += 1.0;
    const double total = static_cast<double>(w) * h;
    for (double& v : hist) v /= total;
    return hist;
}

std::array<double, kLbpBins> lbp_histogram(const std::vector<std::uint8_t>& codes, int img_width,
                                           int x, int y, int w, int h) {
    const auto& table = uniform_lbp_table();
    std::array<double, kLbpBins> hist{};
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx)
            hist[table[codes[static_cast<std::size_t>(yy) * img_width + xx]]] += 1.0;
    const double total = static_cast<double>(w) * h;
    for (double& v : hist) v /= total;
    return hist;
}

}  // namespace clanet
