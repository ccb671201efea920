#include "clanet/ccs.hpp"

#include <algorithm>
#include <cmath>

#include "clanet/texture.hpp"

namespace clanet {

namespace {

// Prefix-sum table of mask foreground counts for O(1) box densities.
struct MaskIntegral {
    int width = 0;
    std::vector<std::int64_t> table;  // (w+1) x (h+1)

    explicit MaskIntegral(const BinaryMask& mask) : width(mask.width) {
        const int w = mask.width, h = mask.height;
        table.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0);
        for (int y = 0; y < h; ++y) {
            std::int64_t row = 0;
            for (int x = 0; x < w; ++x) {
                row += mask.at(x, y);
                table[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                    table[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
            }
        }
    }

    std::int64_t box_count(int x, int y, int w, int h) const {
        const int iw = width + 1;
        return table[static_cast<std::size_t>(y + h) * iw + x + w] -
               table[static_cast<std::size_t>(y) * iw + x + w] -
               table[static_cast<std::size_t>(y + h) * iw + x] +
               table[static_cast<std::size_t>(y) * iw + x];
    }
};

std::int64_t intersection_area(const BBox& a, const BBox& b) {
    const int x0 = std::max(a.x, b.x);
    const int y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    if (x1 <= x0 || y1 <= y0) return 0;
    return static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
}

void append_unique(std::vector<BBox>& boxes, const BBox& candidate) {
    for (const auto& b : boxes)
        if (b.same_rect(candidate)) return;
    boxes.push_back(candidate);
}

GrayImage crop(const GrayImage& img, const BBox& box) {
    GrayImage out(box.w, box.h);
    for (int y = 0; y < box.h; ++y)
        for (int x = 0; x < box.w; ++x) out.at(x, y) = img.at(box.x + x, box.y + y);
    return out;
}

}  // namespace

std::vector<BBox> initial_bboxes(const RegionMap& regions) {
    std::vector<BBox> boxes;
    boxes.reserve(regions.region_pixels.size());
    for (const auto& pixels : regions.region_pixels) {
        int min_x = regions.width, min_y = regions.height, max_x = -1, max_y = -1;
        for (std::int32_t i : pixels) {
            const int x = i % regions.width, y = i / regions.width;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
        }
        boxes.push_back({min_x, min_y, max_x - min_x + 1, max_y - min_y + 1,
                         static_cast<std::int64_t>(pixels.size())});
    }
    return boxes;
}

std::vector<BBox> correct_bboxes(const std::vector<BBox>& initial, const RegionMap& regions,
                                 int patch_w, int patch_h, const BinaryMask& mask) {
    if (patch_w > mask.width || patch_h > mask.height)
        throw DataError("correct_bboxes: patch size " + std::to_string(patch_w) + "x" +
                        std::to_string(patch_h) + " exceeds image dimensions");
    if (initial.size() != regions.region_pixels.size())
        throw DataError("correct_bboxes: box/region count mismatch");

    const MaskIntegral integral(mask);
    const int max_x = mask.width - patch_w;
    const int max_y = mask.height - patch_h;
    auto make_box = [&](int x, int y) {
        x = std::clamp(x, 0, max_x);
        y = std::clamp(y, 0, max_y);
        return BBox{x, y, patch_w, patch_h, integral.box_count(x, y, patch_w, patch_h)};
    };

    std::vector<BBox> out;
    for (std::size_t o = 0; o < initial.size(); ++o) {
        const auto& pixels = regions.region_pixels[o];
        std::int64_t sum_x = 0, sum_y = 0;
        for (std::int32_t i : pixels) {
            sum_x += i % regions.width;
            sum_y += i / regions.width;
        }
        const int cx = static_cast<int>(sum_x / static_cast<std::int64_t>(pixels.size()));
        const int cy = static_cast<int>(sum_y / static_cast<std::int64_t>(pixels.size()));
        append_unique(out, make_box(cx - patch_w / 2, cy - patch_h / 2));

        // Large clusters additionally get a tile cover of their initial box.
        if (initial[o].density >= 2 * static_cast<std::int64_t>(patch_w) * patch_h) {
            const BBox& r = initial[o];
            const int nx = (r.w + patch_w - 1) / patch_w;
            const int ny = (r.h + patch_h - 1) / patch_h;
            for (int ty = 0; ty < ny; ++ty)
                for (int tx = 0; tx < nx; ++tx)
                    append_unique(out, make_box(r.x + tx * patch_w, r.y + ty * patch_h));
        }
    }
    return out;
}

double similarity(const BBox& a, const BBox& b, const GrayImage& img,
                  const std::vector<std::uint8_t>& lbp) {
    const std::int64_t inter = intersection_area(a, b);
    if (inter <= 0) throw DataError("similarity: boxes do not overlap");

    const auto ch_a = intensity_histogram(img, a.x, a.y, a.w, a.h);
    const auto ch_b = intensity_histogram(img, b.x, b.y, b.w, b.h);
    double color = 0;
    for (int i = 0; i < kIntensityBins; ++i) color += std::min(ch_a[i], ch_b[i]);

    const auto th_a = lbp_histogram(lbp, img.width, a.x, a.y, a.w, a.h);
    const auto th_b = lbp_histogram(lbp, img.width, b.x, b.y, b.w, b.h);
    double tex = 0;
    for (int i = 0; i < kLbpBins; ++i) tex += std::min(th_a[i], th_b[i]);

    const double iou = static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
    return color + tex + iou;
}

std::vector<ScoredPair> score_overlapping_pairs(const std::vector<BBox>& boxes, const GrayImage& img,
                                                const std::vector<std::uint8_t>& lbp) {
    std::vector<ScoredPair> pairs;
    for (int i = 0; i < static_cast<int>(boxes.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(boxes.size()); ++j)
            if (intersection_area(boxes[i], boxes[j]) > 0)
                pairs.push_back({i, j, similarity(boxes[i], boxes[j], img, lbp)});
    return pairs;
}

std::vector<BBox> prune_similar(const std::vector<BBox>& boxes, const std::vector<ScoredPair>& pairs) {
    if (pairs.empty()) return boxes;

    double mean = 0;
    for (const auto& p : pairs) mean += p.score;
    mean /= static_cast<double>(pairs.size());

    std::vector<ScoredPair> order = pairs;
    std::sort(order.begin(), order.end(), [](const ScoredPair& l, const ScoredPair& r) {
        if (l.score != r.score) return l.score > r.score;
        if (l.a != r.a) return l.a < r.a;
        return l.b < r.b;
    });

    std::vector<char> removed(boxes.size(), 0);
    for (const auto& p : order) {
        if (p.score < mean) break;
        if (removed[p.a] || removed[p.b]) continue;
        if (boxes[p.a].density < boxes[p.b].density)
            removed[p.a] = 1;
        else
            removed[p.b] = 1;
    }

    std::vector<BBox> out;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        if (!removed[i]) out.push_back(boxes[i]);
    return out;
}

PatchSet select_patches(const GrayImage& img, const BinaryMask& mask, int k, int patch_w, int patch_h) {
    if (k < 1) throw DataError("select_patches: k must be >= 1");
    PatchSet set;

    const RegionMap regions = label_regions(mask);
    if (regions.region_count() == 0) return set;

    const std::vector<BBox> initial = initial_bboxes(regions);
    std::vector<BBox> corrected = correct_bboxes(initial, regions, patch_w, patch_h, mask);

    const std::vector<std::uint8_t> lbp = lbp_codes(img);
    const std::vector<ScoredPair> pairs = score_overlapping_pairs(corrected, img, lbp);
    std::vector<BBox> surviving = prune_similar(corrected, pairs);

    // Top-k by density; ties keep box order.
    std::stable_sort(surviving.begin(), surviving.end(),
                     [](const BBox& a, const BBox& b) { return a.density > b.density; });
    if (static_cast<int>(surviving.size()) > k) surviving.resize(k);

    for (const auto& box : surviving) set.patches.push_back({crop(img, box), box});
    return set;
}

}  // namespace clanet
