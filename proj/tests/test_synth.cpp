#include <doctest.h>

#include <cmath>
#include <fstream>

#include "clanet/image_io.hpp"
#include "clanet/manifest.hpp"
#include "clanet/synth.hpp"
#include "test_util.hpp"

using namespace clanet;

namespace {

std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generate_corpus: frame count and timestamps follow the timing spec") {
    const auto dir = testutil::scratch_dir("synth_timing");
    const auto classes = default_class_specs(1);
    BatchSpec batch;
    batch.batch_id = "b0";
    batch.class_index = 0;
    batch.interval_hours = 2;
    batch.duration_days = 1.0;
    batch.sequences = 1;
    SynthParams params;
    params.width = params.height = 96;
    Rng rng(1);
    const DatasetManifest m = generate_corpus(classes, {batch}, params, rng, dir);
    REQUIRE(m.sequences.size() == 1);
    REQUIRE(m.sequences[0].frames.size() == 13);  // 0,2,...,24
    for (int f = 0; f < 13; ++f)
        CHECK(m.sequences[0].frames[f].timestamp == doctest::Approx(2.0 * f));
    // The manifest on disk loads back identically.
    CHECK(load_manifest(dir / "manifest.txt") == m);
}

TEST_CASE("generate_corpus: brightness offset shifts pixels by a constant before noise") {
    const auto dir = testutil::scratch_dir("synth_brightness");
    const auto classes = default_class_specs(1);
    BatchSpec a;
    a.batch_id = "ba";
    a.class_index = 0;
    a.interval_hours = 8;
    a.duration_days = 0.5;
    a.sequences = 1;
    a.noise_sigma = 0;
    a.brightness_offset = 0;
    a.layout_seed = 42;
    BatchSpec b = a;
    b.batch_id = "bb";
    b.brightness_offset = 17;
    SynthParams params;
    params.width = params.height = 96;
    Rng rng(2);
    const DatasetManifest m = generate_corpus(classes, {a, b}, params, rng, dir);

    const GrayImage img_a = read_image(dir / m.sequences[0].frames[0].path);
    const GrayImage img_b = read_image(dir / m.sequences[1].frames[0].path);
    for (std::size_t i = 0; i < img_a.pixels.size(); ++i) {
        const int expected = std::clamp(static_cast<int>(img_a.pixels[i]) + 17, 0, 255);
        REQUIRE(static_cast<int>(img_b.pixels[i]) == expected);
    }
}

TEST_CASE("generate_corpus: rendered coverage tracks the logistic target within 5%") {
    const auto dir = testutil::scratch_dir("synth_logistic");
    const auto classes = default_class_specs(2);
    auto batches = default_batch_specs(2, 2, 1);
    SynthParams params;
    params.width = params.height = 160;
    Rng rng(3);
    std::vector<SequenceStats> stats;
    generate_corpus(classes, batches, params, rng, dir, &stats);
    REQUIRE(!stats.empty());
    for (const auto& seq : stats)
        for (std::size_t f = 0; f < seq.target_confluency.size(); ++f)
            REQUIRE(std::abs(seq.rendered_coverage[f] - seq.target_confluency[f]) <= 0.05);
}

TEST_CASE("generate_corpus: deterministic bytes for equal specs and seed") {
    const auto dir_a = testutil::scratch_dir("synth_det_a");
    const auto dir_b = testutil::scratch_dir("synth_det_b");
    const auto classes = default_class_specs(2);
    auto batches = default_batch_specs(2, 1, 2);
    for (auto& b : batches) b.duration_days = 0.5;
    SynthParams params;
    params.width = params.height = 96;
    Rng rng_a(9), rng_b(9);
    const DatasetManifest ma = generate_corpus(classes, batches, params, rng_a, dir_a);
    const DatasetManifest mb = generate_corpus(classes, batches, params, rng_b, dir_b);
    REQUIRE(ma == mb);
    CHECK(file_bytes(dir_a / "manifest.txt") == file_bytes(dir_b / "manifest.txt"));
    for (const auto& seq : ma.sequences)
        for (const auto& frame : seq.frames)
            REQUIRE(file_bytes(dir_a / frame.path) == file_bytes(dir_b / frame.path));
}

TEST_CASE("generate_corpus: infeasible confluency is rejected") {
    const auto dir = testutil::scratch_dir("synth_infeasible");
    const auto classes = default_class_specs(1);
    BatchSpec batch;
    batch.batch_id = "b";
    batch.class_index = 0;
    batch.initial_confluency = 0.97;
    SynthParams params;
    Rng rng(4);
    CHECK_THROWS_AS(generate_corpus(classes, {batch}, params, rng, dir), DataError);
}

TEST_CASE("corpus_stats: recovers intervals and separates batch confluency profiles") {
    const auto dir = testutil::scratch_dir("synth_stats");
    const auto classes = default_class_specs(1);
    BatchSpec low;
    low.batch_id = "low";
    low.class_index = 0;
    low.initial_confluency = 0.06;
    low.interval_hours = 4;
    low.duration_days = 1.0;
    low.sequences = 3;
    low.noise_sigma = 3;
    low.layout_seed = 1;
    BatchSpec high = low;
    high.batch_id = "high";
    high.initial_confluency = 0.3;
    high.interval_hours = 8;
    high.layout_seed = 2;
    SynthParams params;
    params.width = params.height = 128;
    Rng rng(5);
    const DatasetManifest m = generate_corpus(classes, {low, high}, params, rng, dir);

    const CorpusStats stats = corpus_stats(m);
    REQUIRE(stats.batches.size() == 2);
    CHECK(stats.batches[0].mean_interval == doctest::Approx(4.0));
    CHECK(stats.batches[1].mean_interval == doctest::Approx(8.0));

    // Within-batch spread at t=0 is smaller than the between-batch gap.
    const double m0 = stats.batches[0].confluency_mean[0];
    const double m1 = stats.batches[1].confluency_mean[0];
    CHECK(std::abs(m1 - m0) > stats.batches[0].confluency_std[0]);
    CHECK(std::abs(m1 - m0) > stats.batches[1].confluency_std[0]);

    const std::string csv = stats.to_csv();
    CHECK(csv.find("interval,low") != std::string::npos);
    CHECK(csv.find("confluency,high") != std::string::npos);
}

TEST_CASE("generate_corpus: matched nuisance knobs leave batches statistically alike") {
    const auto dir = testutil::scratch_dir("synth_indistinct");
    const auto classes = default_class_specs(1);
    BatchSpec a;
    a.batch_id = "ba";
    a.class_index = 0;
    a.initial_confluency = 0.2;
    a.interval_hours = 2;
    a.duration_days = 199.0 / 24.0;  // 100 frames
    a.sequences = 1;
    a.noise_sigma = 4;
    a.layout_seed = 10;
    BatchSpec b = a;
    b.batch_id = "bb";
    b.layout_seed = 20;  // independent layouts, same knobs
    SynthParams params;
    params.width = params.height = 96;
    params.confluency_cap = 0.5;
    Rng rng(6);
    const DatasetManifest m = generate_corpus(classes, {a, b}, params, rng, dir);

    auto frame_means = [&](const SequenceRecord& seq) {
        std::vector<double> means;
        for (const auto& f : seq.frames) {
            const GrayImage img = read_image(dir / f.path);
            double sum = 0;
            for (auto px : img.pixels) sum += px;
            means.push_back(sum / img.pixels.size());
        }
        return means;
    };
    const auto ma = frame_means(m.sequences[0]);
    const auto mb = frame_means(m.sequences[1]);
    REQUIRE(ma.size() == 100);
    REQUIRE(mb.size() == 100);

    auto mean_var = [](const std::vector<double>& v) {
        double mean = 0;
        for (double x : v) mean += x;
        mean /= v.size();
        double var = 0;
        for (double x : v) var += (x - mean) * (x - mean);
        return std::pair<double, double>{mean, var / (v.size() - 1)};
    };
    const auto [mean_a, var_a] = mean_var(ma);
    const auto [mean_b, var_b] = mean_var(mb);
    const double z = (mean_a - mean_b) / std::sqrt(var_a / ma.size() + var_b / mb.size());
    CHECK(std::abs(z) < 2.576);  // alpha = 0.01, two-sided
}
