#include "clanet/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace clanet {

std::size_t BinaryMask::foreground_count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

// Local standard deviation over a (2r+1)^2 window, border-clamped, via
// integral images of sums and squared sums.
std::vector<double> local_std(const GrayImage& img, int window) {
    const int w = img.width, h = img.height;
    const int r = window / 2;
    const int iw = w + 1;
    std::vector<double> sum(static_cast<std::size_t>(iw) * (h + 1), 0.0);
    std::vector<double> sq(static_cast<std::size_t>(iw) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row_sum = 0, row_sq = 0;
        for (int x = 0; x < w; ++x) {
            const double v = img.at(x, y);
            row_sum += v;
            row_sq += v * v;
            sum[static_cast<std::size_t>(y + 1) * iw + x + 1] = sum[static_cast<std::size_t>(y) * iw + x + 1] + row_sum;
            sq[static_cast<std::size_t>(y + 1) * iw + x + 1] = sq[static_cast<std::size_t>(y) * iw + x + 1] + row_sq;
        }
    }
    auto box = [&](const std::vector<double>& t, int x0, int y0, int x1, int y1) {
        return t[static_cast<std::size_t>(y1) * iw + x1] - t[static_cast<std::size_t>(y0) * iw + x1] -
               t[static_cast<std::size_t>(y1) * iw + x0] + t[static_cast<std::size_t>(y0) * iw + x0];
    };
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(h, y + r + 1);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(w, x + r + 1);
            const double n = static_cast<double>(x1 - x0) * (y1 - y0);
            const double mean = box(sum, x0, y0, x1, y1) / n;
            const double var = box(sq, x0, y0, x1, y1) / n - mean * mean;
            out[static_cast<std::size_t>(y) * w + x] = var > 0 ? std::sqrt(var) : 0.0;
        }
    }
    return out;
}

// Otsu threshold over a 256-bin histogram of the (quantized) deviation map.
// Returns the bin index maximizing between-class variance; all-equal maps
// yield 0 so a uniform image produces an empty mask.
int otsu_threshold(const std::vector<double>& values) {
    std::array<std::int64_t, 256> hist{};
    for (double v : values) {
        int bin = static_cast<int>(v + 0.5);
        bin = std::clamp(bin, 0, 255);
        ++hist[bin];
    }
    const std::int64_t total = static_cast<std::int64_t>(values.size());
    double sum_all = 0;
    for (int i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * hist[i];

    double best_sigma = 0.0;
    int best_t = 0;
    std::int64_t w0 = 0;
    double sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[t];
        if (w0 == 0) continue;
        const std::int64_t w1 = total - w0;
        if (w1 == 0) break;
        sum0 += static_cast<double>(t) * hist[t];
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double sigma = static_cast<double>(w0) * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (sigma > best_sigma) {
            best_sigma = sigma;
            best_t = t;
        }
    }
    return best_t;
}

BinaryMask dilate3x3(const BinaryMask& m) {
    BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 0;
            for (int dy = -1; dy <= 1 && !v; ++dy)
                for (int dx = -1; dx <= 1 && !v; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx >= 0 && ny >= 0 && nx < m.width && ny < m.height && m.at(nx, ny)) v = 1;
                }
            out.at(x, y) = v;
        }
    return out;
}

BinaryMask erode3x3(const BinaryMask& m) {
    BinaryMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t v = 1;
            for (int dy = -1; dy <= 1 && v; ++dy)
                for (int dx = -1; dx <= 1 && v; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    // Outside the image counts as background.
                    if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height || !m.at(nx, ny)) v = 0;
                }
            out.at(x, y) = v;
        }
    return out;
}

// Fills interior holes: 4-connected flood fill of background from every
// border background pixel; anything unreached becomes foreground.
void fill_holes(BinaryMask& m) {
    const int w = m.width, h = m.height;
    std::vector<std::uint8_t> outside(static_cast<std::size_t>(w) * h, 0);
    std::vector<std::int32_t> stack;
    auto push = [&](int x, int y) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!m.bits[i] && !outside[i]) {
            outside[i] = 1;
            stack.push_back(static_cast<std::int32_t>(i));
        }
    };
    for (int x = 0; x < w; ++x) {
        push(x, 0);
        push(x, h - 1);
    }
    for (int y = 0; y < h; ++y) {
        push(0, y);
        push(w - 1, y);
    }
    while (!stack.empty()) {
        const std::int32_t i = stack.back();
        stack.pop_back();
        const int x = i % w, y = i / w;
        if (x > 0) push(x - 1, y);
        if (x + 1 < w) push(x + 1, y);
        if (y > 0) push(x, y - 1);
        if (y + 1 < h) push(x, y + 1);
    }
    for (std::size_t i = 0; i < m.bits.size(); ++i)
        if (!m.bits[i] && !outside[i]) m.bits[i] = 1;
}

struct UnionFind {
    std::vector<std::int32_t> parent;
    std::vector<std::int32_t> size;

    explicit UnionFind(std::size_t n) : parent(n), size(n, 1) {
        std::iota(parent.begin(), parent.end(), 0);
    }

    std::int32_t find(std::int32_t x) {
        std::int32_t root = x;
        while (parent[root] != root) root = parent[root];
        while (parent[x] != root) {  // path compression
            const std::int32_t next = parent[x];
            parent[x] = root;
            x = next;
        }
        return root;
    }

    void unite(std::int32_t a, std::int32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size[a] < size[b]) std::swap(a, b);  // union by size
        parent[b] = a;
        size[a] += size[b];
    }
};

}  // namespace

BinaryMask segment(const GrayImage& image, const SegParams& params) {
    const std::vector<double> dev = local_std(image, params.window);
    const int thr = otsu_threshold(dev);

    BinaryMask mask(image.width, image.height);
    if (thr > 0) {
        for (std::size_t i = 0; i < dev.size(); ++i)
            mask.bits[i] = dev[i] >= thr ? 1 : 0;
    }

    for (int i = 0; i < params.close_iterations; ++i) mask = dilate3x3(mask);
    for (int i = 0; i < params.close_iterations; ++i) mask = erode3x3(mask);

    fill_holes(mask);

    // The deviation filter lights up a halo of ~window/2 px around real
    // texture; shrink it back after holes are filled.
    for (int i = 0; i < params.window / 4; ++i) mask = erode3x3(mask);

    if (params.min_area > 1) {
        const RegionMap regions = label_regions(mask);
        for (const auto& pixels : regions.region_pixels)
            if (static_cast<int>(pixels.size()) < params.min_area)
                for (std::int32_t i : pixels) mask.bits[i] = 0;
    }
    return mask;
}

RegionMap label_regions(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    RegionMap map;
    map.width = w;
    map.height = h;
    map.labels.assign(static_cast<std::size_t>(w) * h, 0);

    UnionFind uf(static_cast<std::size_t>(w) * h);
    // Union each foreground pixel with its already-visited 8-neighbors
    // (W, NW, N, NE).
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t i = y * w + x;
            if (!mask.bits[i]) continue;
            if (x > 0 && mask.bits[i - 1]) uf.unite(i, i - 1);
            if (y > 0) {
                if (x > 0 && mask.bits[i - w - 1]) uf.unite(i, i - w - 1);
                if (mask.bits[i - w]) uf.unite(i, i - w);
                if (x + 1 < w && mask.bits[i - w + 1]) uf.unite(i, i - w + 1);
            }
        }
    }

    // Assign labels in raster order of each region's first pixel.
    std::vector<std::uint32_t> root_label(static_cast<std::size_t>(w) * h, 0);
    for (std::int32_t i = 0; i < w * h; ++i) {
        if (!mask.bits[i]) continue;
        const std::int32_t root = uf.find(i);
        if (root_label[root] == 0) {
            root_label[root] = static_cast<std::uint32_t>(map.region_pixels.size() + 1);
            map.region_pixels.emplace_back();
        }
        const std::uint32_t label = root_label[root];
        map.labels[i] = label;
        map.region_pixels[label - 1].push_back(i);
    }
    return map;
}

}  // namespace clanet
