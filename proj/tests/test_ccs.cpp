#include <doctest.h>

#include "clanet/ccs.hpp"
#include "clanet/texture.hpp"
#include "oracles.hpp"

using namespace clanet;

namespace {

BinaryMask mask_with_rect(int w, int h, int x0, int y0, int rw, int rh) {
    BinaryMask mask(w, h);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) mask.at(x, y) = 1;
    return mask;
}

}  // namespace

TEST_CASE("initial_bboxes: tight extents and densities") {
    SUBCASE("single rectangle region") {
        const BinaryMask mask = mask_with_rect(16, 12, 3, 2, 5, 3);
        const auto boxes = initial_bboxes(label_regions(mask));
        REQUIRE(boxes.size() == 1);
        CHECK(boxes[0] == BBox{3, 2, 5, 3, 15});
    }
    SUBCASE("no regions, no boxes") {
        CHECK(initial_bboxes(label_regions(BinaryMask(8, 8))).empty());
    }
    SUBCASE("random masks match the extent of their pixel lists") {
        Rng rng(11);
        for (int round = 0; round < 30; ++round) {
            const BinaryMask mask = oracle::random_mask(40, 30, 0.3, rng);
            const RegionMap regions = label_regions(mask);
            const auto boxes = initial_bboxes(regions);
            REQUIRE(boxes.size() == regions.region_pixels.size());
            for (std::size_t o = 0; o < boxes.size(); ++o) {
                int min_x = 1 << 20, min_y = 1 << 20, max_x = -1, max_y = -1;
                for (std::int32_t i : regions.region_pixels[o]) {
                    min_x = std::min(min_x, i % 40);
                    max_x = std::max(max_x, i % 40);
                    min_y = std::min(min_y, i / 40);
                    max_y = std::max(max_y, i / 40);
                }
                REQUIRE(boxes[o].x == min_x);
                REQUIRE(boxes[o].y == min_y);
                REQUIRE(boxes[o].w == max_x - min_x + 1);
                REQUIRE(boxes[o].h == max_y - min_y + 1);
                REQUIRE(boxes[o].density ==
                        static_cast<std::int64_t>(regions.region_pixels[o].size()));
            }
        }
    }
}

TEST_CASE("correct_bboxes: centering, clamping, tiling") {
    SUBCASE("single pixel centers the patch") {
        BinaryMask mask(400, 400);
        mask.at(200, 200) = 1;
        const RegionMap regions = label_regions(mask);
        const auto boxes = correct_bboxes(initial_bboxes(regions), regions, 112, 112, mask);
        REQUIRE(boxes.size() == 1);
        CHECK(boxes[0].x == 144);
        CHECK(boxes[0].y == 144);
        CHECK(boxes[0].w == 112);
        CHECK(boxes[0].h == 112);
        CHECK(boxes[0].density == 1);
    }
    SUBCASE("centroid near the edge clamps to zero") {
        const BinaryMask mask = mask_with_rect(300, 300, 8, 140, 5, 5);  // centroid x = 10
        const RegionMap regions = label_regions(mask);
        const auto boxes = correct_bboxes(initial_bboxes(regions), regions, 112, 112, mask);
        REQUIRE(boxes.size() == 1);
        CHECK(boxes[0].x == 0);
    }
    SUBCASE("large cluster gets a mass-center box plus a 3x3 tile cover") {
        const BinaryMask mask = mask_with_rect(1408, 1040, 500, 300, 300, 300);
        const RegionMap regions = label_regions(mask);
        const auto boxes = correct_bboxes(initial_bboxes(regions), regions, 112, 112, mask);
        REQUIRE(boxes.size() == 10);  // centroid box + ceil(300/112)^2 tiles
        for (const auto& b : boxes) {
            CHECK(b.w == 112);
            CHECK(b.h == 112);
            CHECK(b.x >= 0);
            CHECK(b.y >= 0);
            CHECK(b.x + b.w <= 1408);
            CHECK(b.y + b.h <= 1040);
        }
        // Tile enumeration oracle: anchors at stride 112 from the region
        // corner.
        for (int ty = 0; ty < 3; ++ty)
            for (int tx = 0; tx < 3; ++tx) {
                const int ex = 500 + tx * 112, ey = 300 + ty * 112;
                bool found = false;
                for (const auto& b : boxes) found = found || (b.x == ex && b.y == ey);
                REQUIRE(found);
            }
    }
    SUBCASE("patch larger than the image is a configuration error") {
        const BinaryMask mask = mask_with_rect(64, 64, 1, 1, 3, 3);
        const RegionMap regions = label_regions(mask);
        CHECK_THROWS_AS(correct_bboxes(initial_bboxes(regions), regions, 112, 112, mask), DataError);
    }
}

TEST_CASE("similarity: fixed values and symmetry") {
    SUBCASE("identical boxes score exactly 3") {
        Rng rng(5);
        const GrayImage img = oracle::random_image(64, 64, rng);
        const auto lbp = lbp_codes(img);
        const BBox box{10, 12, 20, 20, 0};
        CHECK(similarity(box, box, img, lbp) == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("uniform image, half-overlapping 2x2 boxes") {
        const GrayImage img(16, 16, 150);
        const auto lbp = lbp_codes(img);
        const BBox a{0, 0, 2, 2, 0}, b{1, 0, 2, 2, 0};
        // Identical histograms on a uniform image: 1 + 1 + IoU(2/6).
        CHECK(similarity(a, b, img, lbp) == doctest::Approx(2.0 + 1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("non-overlapping pair violates the contract") {
        const GrayImage img(16, 16, 0);
        const auto lbp = lbp_codes(img);
        CHECK_THROWS_AS(similarity({0, 0, 4, 4, 0}, {8, 8, 4, 4, 0}, img, lbp), DataError);
    }
    SUBCASE("randomized pairs are symmetric") {
        Rng rng(17);
        for (int round = 0; round < 200; ++round) {
            const GrayImage img = oracle::random_image(48, 48, rng);
            const auto lbp = lbp_codes(img);
            const BBox a{static_cast<int>(rng.uniform_int(24)), static_cast<int>(rng.uniform_int(24)),
                         8 + static_cast<int>(rng.uniform_int(16)),
                         8 + static_cast<int>(rng.uniform_int(16)), 0};
            const BBox b{a.x + static_cast<int>(rng.uniform_int(a.w)),
                         a.y + static_cast<int>(rng.uniform_int(a.h)),
                         8 + static_cast<int>(rng.uniform_int(16)),
                         8 + static_cast<int>(rng.uniform_int(16)), 0};
            if (b.x + b.w > 48 || b.y + b.h > 48) continue;
            const double u_ab = similarity(a, b, img, lbp);
            const double u_ba = similarity(b, a, img, lbp);
            REQUIRE(std::abs(u_ab - u_ba) <= 1e-12);
            REQUIRE(u_ab >= 0.0);
            REQUIRE(u_ab <= 3.0);
        }
    }
}

TEST_CASE("prune_similar: removal rules") {
    SUBCASE("identical stacked boxes keep the earlier one") {
        Rng rng(9);
        const GrayImage img = oracle::random_image(64, 64, rng);
        const auto lbp = lbp_codes(img);
        const std::vector<BBox> boxes = {{8, 8, 16, 16, 50}, {8, 8, 16, 16, 50}};
        const auto pairs = score_overlapping_pairs(boxes, img, lbp);
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].score == doctest::Approx(3.0));
        const auto kept = prune_similar(boxes, pairs);
        REQUIRE(kept.size() == 1);
        CHECK(kept[0] == boxes[0]);
    }
    SUBCASE("no overlapping pairs leaves boxes unchanged") {
        const std::vector<BBox> boxes = {{0, 0, 4, 4, 9}, {20, 20, 4, 4, 3}};
        CHECK(prune_similar(boxes, {}) == boxes);
    }
    SUBCASE("five-box arrangement equals direct re-execution") {
        Rng rng(23);
        const GrayImage img = oracle::random_cell_image(160, 120, rng);
        const auto lbp = lbp_codes(img);
        std::vector<BBox> boxes;
        for (int i = 0; i < 5; ++i)
            boxes.push_back({static_cast<int>(rng.uniform_int(100)),
                             static_cast<int>(rng.uniform_int(70)), 48, 48,
                             static_cast<std::int64_t>(rng.uniform_int(1000))});
        const auto pairs = score_overlapping_pairs(boxes, img, lbp);
        const auto kept = prune_similar(boxes, pairs);

        // Direct re-execution of the removal sweep.
        double mean = 0;
        for (const auto& p : pairs) mean += p.score;
        if (!pairs.empty()) mean /= static_cast<double>(pairs.size());
        auto order = pairs;
        std::sort(order.begin(), order.end(), [](const ScoredPair& l, const ScoredPair& r) {
            if (l.score != r.score) return l.score > r.score;
            return l.a != r.a ? l.a < r.a : l.b < r.b;
        });
        std::vector<char> removed(boxes.size(), 0);
        for (const auto& p : order) {
            if (p.score < mean || removed[p.a] || removed[p.b]) continue;
            removed[boxes[p.a].density < boxes[p.b].density ? p.a : p.b] = 1;
        }
        std::vector<BBox> expected;
        for (std::size_t i = 0; i < boxes.size(); ++i)
            if (!removed[i]) expected.push_back(boxes[i]);
        CHECK(kept == expected);
    }
}

TEST_CASE("select_patches: ranking and under-supply") {
    SUBCASE("density ranking picks the densest regions first") {
        GrayImage img(600, 600, 40);
        BinaryMask mask(600, 600);
        auto paint = [&](int x0, int y0, int w, int h) {
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) {
                    mask.at(x, y) = 1;
                    img.at(x, y) = 210;
                }
        };
        paint(60, 60, 25, 20);    // 500 px
        paint(420, 80, 20, 15);   // 300 px
        paint(120, 430, 10, 10);  // 100 px

        const PatchSet top2 = select_patches(img, mask, 2, 112, 112);
        REQUIRE(top2.patches.size() == 2);
        CHECK(top2.patches[0].source.density == 500);
        CHECK(top2.patches[1].source.density == 300);
        for (const auto& p : top2.patches) {
            CHECK(p.pixels.width == 112);
            CHECK(p.pixels.height == 112);
        }

        const PatchSet all = select_patches(img, mask, 10, 112, 112);
        CHECK(all.patches.size() == 3);  // under-supply keeps what survives
    }
    SUBCASE("zero foreground regions yield an empty set") {
        const GrayImage img(128, 128, 90);
        CHECK(select_patches(img, BinaryMask(128, 128), 5, 64, 64).patches.empty());
    }
}

TEST_CASE("select_patches: matches the brute-force oracle bit-exactly") {
    Rng rng(4242);
    for (int round = 0; round < 25; ++round) {
        const GrayImage img = oracle::random_cell_image(240, 180, rng);
        const BinaryMask mask = segment(img);
        const PatchSet ours = select_patches(img, mask, 10, 112, 112);
        const PatchSet ref = oracle::brute_force_select_patches(img, mask, 10, 112, 112);
        REQUIRE(ours.patches.size() == ref.patches.size());
        for (std::size_t i = 0; i < ours.patches.size(); ++i) {
            REQUIRE(ours.patches[i].source == ref.patches[i].source);
            REQUIRE(ours.patches[i].pixels == ref.patches[i].pixels);
        }
    }
}

TEST_CASE("select_patches: deterministic across runs") {
    Rng rng(777);
    const GrayImage img = oracle::random_cell_image(200, 160, rng);
    const BinaryMask mask = segment(img);
    const PatchSet a = select_patches(img, mask, 10, 112, 112);
    const PatchSet b = select_patches(img, mask, 10, 112, 112);
    CHECK(a == b);
}
