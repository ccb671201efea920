#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace oracle {

using namespace clanet;

RegionMap flood_fill_labeling(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;
    RegionMap map;
    map.width = w;
    map.height = h;
    map.labels.assign(static_cast<std::size_t>(w) * h, 0);

    for (std::int32_t start = 0; start < w * h; ++start) {
        if (!mask.bits[start] || map.labels[start] != 0) continue;
        const std::uint32_t label = static_cast<std::uint32_t>(map.region_pixels.size() + 1);
        map.region_pixels.emplace_back();
        std::deque<std::int32_t> queue{start};
        map.labels[start] = label;
        while (!queue.empty()) {
            const std::int32_t i = queue.front();
            queue.pop_front();
            const int x = i % w, y = i / w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const std::int32_t ni = ny * w + nx;
                    if (mask.bits[ni] && map.labels[ni] == 0) {
                        map.labels[ni] = label;
                        queue.push_back(ni);
                    }
                }
        }
    }
    // Pixel lists in raster order, independent of BFS visit order.
    for (std::int32_t i = 0; i < w * h; ++i)
        if (map.labels[i] != 0) map.region_pixels[map.labels[i] - 1].push_back(i);
    return map;
}

namespace {

struct Box {
    int x, y, w, h;
    std::int64_t density;
};

std::int64_t count_foreground(const BinaryMask& mask, int x, int y, int w, int h) {
    std::int64_t n = 0;
    for (int yy = y; yy < y + h; ++yy)
        for (int xx = x; xx < x + w; ++xx) n += mask.at(xx, yy);
    return n;
}

int lbp_code_at(const GrayImage& img, int x, int y) {
    static const int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const int dy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    const std::uint8_t center = img.at(x, y);
    int code = 0;
    for (int b = 0; b < 8; ++b) {
        int nx = x + dx[b], ny = y + dy[b];
        nx = std::clamp(nx, 0, img.width - 1);
        ny = std::clamp(ny, 0, img.height - 1);
        if (img.at(nx, ny) >= center) code |= 1 << b;
    }
    return code;
}

const std::vector<int>& uniform_bins() {
    static const std::vector<int> table = [] {
        std::vector<int> t(256, 58);
        int next = 0;
        for (int code = 0; code < 256; ++code) {
            const int rotated = ((code << 1) | (code >> 7)) & 0xFF;
            int transitions = 0;
            for (int bit = 0, diff = code ^ rotated; bit < 8; ++bit)
                transitions += (diff >> bit) & 1;
            if (transitions <= 2) t[code] = next++;
        }
        return t;
    }();
    return table;
}

double box_similarity(const Box& a, const Box& b, const GrayImage& img) {
    double ch_a[32] = {0}, ch_b[32] = {0};
    for (int y = a.y; y < a.y + a.h; ++y)
        for (int x = a.x; x < a.x + a.w; ++x) ch_a[img.at(x, y) / 8] += 1.0;
    for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) ch_b[img.at(x, y) / 8] += 1.0;
    for (double& v : ch_a) v /= static_cast<double>(a.w) * a.h;
    for (double& v : ch_b) v /= static_cast<double>(b.w) * b.h;
    double color = 0;
    for (int i = 0; i < 32; ++i) color += std::min(ch_a[i], ch_b[i]);

    double th_a[59] = {0}, th_b[59] = {0};
    for (int y = a.y; y < a.y + a.h; ++y)
        for (int x = a.x; x < a.x + a.w; ++x) th_a[uniform_bins()[lbp_code_at(img, x, y)]] += 1.0;
    for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) th_b[uniform_bins()[lbp_code_at(img, x, y)]] += 1.0;
    for (double& v : th_a) v /= static_cast<double>(a.w) * a.h;
    for (double& v : th_b) v /= static_cast<double>(b.w) * b.h;
    double tex = 0;
    for (int i = 0; i < 59; ++i) tex += std::min(th_a[i], th_b[i]);

    const int ix0 = std::max(a.x, b.x), iy0 = std::max(a.y, b.y);
    const int ix1 = std::min(a.x + a.w, b.x + b.w), iy1 = std::min(a.y + a.h, b.y + b.h);
    const std::int64_t inter =
        ix1 > ix0 && iy1 > iy0 ? static_cast<std::int64_t>(ix1 - ix0) * (iy1 - iy0) : 0;
    const std::int64_t uni =
        static_cast<std::int64_t>(a.w) * a.h + static_cast<std::int64_t>(b.w) * b.h - inter;
    return color + tex + static_cast<double>(inter) / static_cast<double>(uni);
}

bool boxes_overlap(const Box& a, const Box& b) {
    return std::max(a.x, b.x) < std::min(a.x + a.w, b.x + b.w) &&
           std::max(a.y, b.y) < std::min(a.y + a.h, b.y + b.h);
}

}  // namespace

PatchSet brute_force_select_patches(const GrayImage& img, const BinaryMask& mask, int k,
                                    int patch_w, int patch_h) {
    PatchSet result;
    const RegionMap regions = flood_fill_labeling(mask);
    if (regions.region_pixels.empty()) return result;

    // Tight extent boxes per region.
    std::vector<Box> initial;
    for (const auto& pixels : regions.region_pixels) {
        Box b{mask.width, mask.height, 0, 0, static_cast<std::int64_t>(pixels.size())};
        int max_x = -1, max_y = -1;
        for (std::int32_t i : pixels) {
            const int x = i % mask.width, y = i / mask.width;
            b.x = std::min(b.x, x);
            b.y = std::min(b.y, y);
            max_x = std::max(max_x, x);
            max_y = std::max(max_y, y);
        }
        b.w = max_x - b.x + 1;
        b.h = max_y - b.y + 1;
        initial.push_back(b);
    }

    // Correction: centroid boxes plus tile covers for large clusters.
    std::vector<Box> corrected;
    auto emit = [&](int x, int y) {
        x = std::clamp(x, 0, mask.width - patch_w);
        y = std::clamp(y, 0, mask.height - patch_h);
        for (const auto& b : corrected)
            if (b.x == x && b.y == y) return;
        corrected.push_back({x, y, patch_w, patch_h, count_foreground(mask, x, y, patch_w, patch_h)});
    };
    for (std::size_t o = 0; o < initial.size(); ++o) {
        std::int64_t sx = 0, sy = 0;
        for (std::int32_t i : regions.region_pixels[o]) {
            sx += i % mask.width;
            sy += i / mask.width;
        }
        const auto n = static_cast<std::int64_t>(regions.region_pixels[o].size());
        emit(static_cast<int>(sx / n) - patch_w / 2, static_cast<int>(sy / n) - patch_h / 2);
        if (initial[o].density >= 2ll * patch_w * patch_h) {
            const Box& r = initial[o];
            for (int ty = 0; ty < (r.h + patch_h - 1) / patch_h; ++ty)
                for (int tx = 0; tx < (r.w + patch_w - 1) / patch_w; ++tx)
                    emit(r.x + tx * patch_w, r.y + ty * patch_h);
        }
    }

    // Score all overlapping pairs, mean first, then prune in
    // descending-score order.
    struct Pair {
        int a, b;
        double u;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < static_cast<int>(corrected.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(corrected.size()); ++j)
            if (boxes_overlap(corrected[i], corrected[j]))
                pairs.push_back({i, j, box_similarity(corrected[i], corrected[j], img)});

    std::vector<char> removed(corrected.size(), 0);
    if (!pairs.empty()) {
        double mean = 0;
        for (const auto& p : pairs) mean += p.u;
        mean /= static_cast<double>(pairs.size());
        std::vector<Pair> order = pairs;
        std::stable_sort(order.begin(), order.end(), [](const Pair& l, const Pair& r) {
            if (l.u != r.u) return l.u > r.u;
            if (l.a != r.a) return l.a < r.a;
            return l.b < r.b;
        });
        for (const auto& p : order) {
            if (p.u < mean || removed[p.a] || removed[p.b]) continue;
            if (corrected[p.a].density < corrected[p.b].density)
                removed[p.a] = 1;
            else
                removed[p.b] = 1;
        }
    }

    // Argmax-without-replacement over densities; earlier boxes win ties.
    std::vector<int> surviving;
    for (int i = 0; i < static_cast<int>(corrected.size()); ++i)
        if (!removed[i]) surviving.push_back(i);
    std::vector<char> taken(surviving.size(), 0);
    for (int round = 0; round < k; ++round) {
        int best = -1;
        for (std::size_t i = 0; i < surviving.size(); ++i) {
            if (taken[i]) continue;
            if (best < 0 || corrected[surviving[i]].density > corrected[surviving[best]].density)
                best = static_cast<int>(i);
        }
        if (best < 0) break;
        taken[best] = 1;
        const Box& box = corrected[surviving[best]];
        Patch patch;
        patch.source = {box.x, box.y, box.w, box.h, box.density};
        patch.pixels = GrayImage(box.w, box.h);
        for (int y = 0; y < box.h; ++y)
            for (int x = 0; x < box.w; ++x) patch.pixels.at(x, y) = img.at(box.x + x, box.y + y);
        result.patches.push_back(std::move(patch));
    }
    return result;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> snap_probabilities(const std::vector<int>& candidates, double mu, double sigma) {
    std::vector<double> probs(candidates.size(), 0.0);
    if (sigma <= 0) {
        // Point mass at mu: the nearest candidate takes everything.
        std::size_t best = 0;
        for (std::size_t i = 1; i < candidates.size(); ++i)
            if (std::abs(mu - candidates[i]) < std::abs(mu - candidates[best])) best = i;
        probs[best] = 1.0;
        return probs;
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double lo = i == 0 ? -1e300 : (candidates[i - 1] + candidates[i]) / 2.0;
        const double hi = i + 1 == candidates.size()
                              ? 1e300
                              : (candidates[i] + candidates[i + 1]) / 2.0;
        probs[i] = normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
    }
    return probs;
}

namespace {

double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

}  // namespace

double mil_gradient_max_rel_error(MilModel model, const std::vector<Bag>& batch, double eps) {
    MilGrads analytic = MilGrads::zeros(model);
    loss_and_grads(model, batch, analytic);

    double worst = 0;
    MilGrads scratch = MilGrads::zeros(model);
    auto check_block = [&](std::vector<double>& params, const std::vector<double>& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + eps;
            const double plus = loss_and_grads(model, batch, scratch);
            params[i] = saved - eps;
            const double minus = loss_and_grads(model, batch, scratch);
            params[i] = saved;
            worst = std::max(worst, rel_error(grads[i], (plus - minus) / (2 * eps)));
        }
    };
    check_block(model.theta, analytic.theta);
    check_block(model.phi, analytic.phi);
    check_block(model.psi, analytic.psi);
    check_block(model.cls_w, analytic.cls_w);
    check_block(model.cls_b, analytic.cls_b);
    return worst;
}

double ssl_gradient_max_rel_error(SslModel model, const CropSet& crops, double eps) {
    MlpParams analytic = model.student;
    ssl_loss_and_grads(model, crops, &analytic);

    double worst = 0;
    auto check_block = [&](std::vector<double> MlpParams::* block) {
        std::vector<double>& params = model.student.*block;
        const std::vector<double>& grads = analytic.*block;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + eps;
            const double plus = ssl_loss_and_grads(model, crops, nullptr);
            params[i] = saved - eps;
            const double minus = ssl_loss_and_grads(model, crops, nullptr);
            params[i] = saved;
            worst = std::max(worst, rel_error(grads[i], (plus - minus) / (2 * eps)));
        }
    };
    check_block(&MlpParams::w1);
    check_block(&MlpParams::b1);
    check_block(&MlpParams::w2);
    check_block(&MlpParams::b2);
    check_block(&MlpParams::w3);
    check_block(&MlpParams::b3);
    return worst;
}

BinaryMask random_mask(int width, int height, double fill, Rng& rng) {
    BinaryMask mask(width, height);
    for (auto& bit : mask.bits) bit = rng.uniform() < fill ? 1 : 0;
    return mask;
}

GrayImage random_image(int width, int height, Rng& rng) {
    GrayImage img(width, height);
    for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.uniform_int(256));
    return img;
}

GrayImage random_cell_image(int width, int height, Rng& rng) {
    GrayImage img(width, height, 128);
    const int blobs = 3 + static_cast<int>(rng.uniform_int(6));
    for (int b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0, width);
        const double cy = rng.uniform(0, height);
        const double r = rng.uniform(8, 36);
        const int x0 = std::max(0, static_cast<int>(cx - r - 1));
        const int x1 = std::min(width - 1, static_cast<int>(cx + r + 1));
        const int y0 = std::max(0, static_cast<int>(cy - r - 1));
        const int y1 = std::min(height - 1, static_cast<int>(cy + r + 1));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - cx, y - cy) / r;
                if (d > 1.0) continue;
                img.at(x, y) = d > 0.75 ? 190 : static_cast<std::uint8_t>(96 + rng.uniform_int(40));
            }
    }
    for (auto& px : img.pixels) {
        const int v = px + static_cast<int>(rng.uniform_int(7)) - 3;
        px = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
    return img;
}

}  // namespace oracle
