#include <doctest.h>

#include <cmath>

#include "clanet/ssl.hpp"
#include "oracles.hpp"

using namespace clanet;

namespace {

SslConfig tiny_config() {
    SslConfig cfg;
    cfg.input_side = 6;
    cfg.hidden = 16;
    cfg.out_dim = 8;
    cfg.crops.n_local = 4;
    cfg.crops.global_size = 24;
    cfg.crops.local_size = 10;
    return cfg;
}

SslModel tiny_model(Rng& rng) {
    SslModel model;
    model.config = tiny_config();
    Rng init = rng.fork(0);
    model.student = MlpParams::init(36, 16, 8, init);
    model.teacher = model.student;
    model.center.assign(8, 0.0);
    for (double& c : model.center) c = rng.uniform(-0.2, 0.2);
    return model;
}

}  // namespace

TEST_CASE("multi_crop: deterministic under a fixed seed") {
    Rng rng(3);
    const GrayImage patch = oracle::random_image(48, 48, rng);
    MultiCropParams params;
    params.global_size = 48;
    params.local_size = 16;
    Rng a(55), b(55);
    const CropSet ca = multi_crop(patch, params, a);
    const CropSet cb = multi_crop(patch, params, b);
    REQUIRE(ca.global_crops == cb.global_crops);
    REQUIRE(ca.local_crops == cb.local_crops);
}

TEST_CASE("multi_crop: identity augmentation reproduces the patch") {
    Rng rng(4);
    const GrayImage patch = oracle::random_image(40, 40, rng);
    MultiCropParams params;
    params.global_size = 40;
    params.global_scale_min = params.global_scale_max = 1.0;
    params.brightness_jitter = 0;
    params.contrast_jitter = 0;
    params.flips = false;
    Rng crop_rng(9);
    const CropSet crops = multi_crop(patch, params, crop_rng);
    REQUIRE(crops.global_crops.size() == 2);
    CHECK(crops.global_crops[0] == patch);
    CHECK(crops.global_crops[1] == patch);
}

TEST_CASE("multi_crop: geometry stays inside the source over many draws") {
    Rng rng(6);
    const GrayImage patch = oracle::random_image(64, 48, rng);
    MultiCropParams params;
    Rng crop_rng(13);
    for (int round = 0; round < 1000; ++round) {  // 10 crops each = 1e4 windows
        const CropSet crops = multi_crop(patch, params, crop_rng);
        for (const auto& rec : crops.records) {
            REQUIRE(rec.x >= 0);
            REQUIRE(rec.y >= 0);
            REQUIRE(rec.w >= 1);
            REQUIRE(rec.x + rec.w <= patch.width);
            REQUIRE(rec.y + rec.h <= patch.height);
        }
    }
}

TEST_CASE("dino_loss: uniform distributions give ln D'") {
    const std::vector<double> flat(8, 0.3);
    const std::vector<std::vector<double>> teacher = {flat, flat};
    const std::vector<std::vector<double>> student = {flat, flat, flat, flat};
    const std::vector<double> center(8, 0.0);
    CHECK(dino_loss(teacher, student, 0.04, 0.1, center) ==
          doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("dino_loss: matched sharp distributions approach zero") {
    std::vector<double> peaked(8, 0.0);
    peaked[3] = 40.0;
    const std::vector<std::vector<double>> teacher = {peaked, peaked};
    const std::vector<std::vector<double>> student = {peaked, peaked, peaked};
    const std::vector<double> center(8, 0.0);
    CHECK(dino_loss(teacher, student, 0.04, 0.1, center) < 1e-3);
}

TEST_CASE("dino_loss: matches per-pair cross-entropy summation") {
    Rng rng(21);
    const int dprime = 8, n_global = 2, n_local = 5;
    std::vector<std::vector<double>> teacher(n_global, std::vector<double>(dprime));
    std::vector<std::vector<double>> student(n_global + n_local, std::vector<double>(dprime));
    std::vector<double> center(dprime);
    for (auto& row : teacher)
        for (auto& v : row) v = rng.uniform(-2, 2);
    for (auto& row : student)
        for (auto& v : row) v = rng.uniform(-2, 2);
    for (auto& v : center) v = rng.uniform(-1, 1);

    const double tau_t = 0.07, tau_s = 0.12;
    auto softmax = [](std::vector<double> v) {
        double peak = *std::max_element(v.begin(), v.end());
        double sum = 0;
        for (auto& x : v) {
            x = std::exp(x - peak);
            sum += x;
        }
        for (auto& x : v) x /= sum;
        return v;
    };

    double expected = 0;
    int pairs = 0;
    for (int i = 0; i < n_global; ++i) {
        std::vector<double> t(dprime);
        for (int d = 0; d < dprime; ++d) t[d] = (teacher[i][d] - center[d]) / tau_t;
        const auto pt = softmax(t);
        for (int j = 0; j < n_global + n_local; ++j) {
            if (j == i) continue;
            std::vector<double> s(dprime);
            for (int d = 0; d < dprime; ++d) s[d] = student[j][d] / tau_s;
            const auto ps = softmax(s);
            for (int d = 0; d < dprime; ++d) expected -= pt[d] * std::log(ps[d]);
            ++pairs;
        }
    }
    expected /= pairs;
    CHECK(dino_loss(teacher, student, tau_t, tau_s, center) ==
          doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("dino_loss: rejects non-finite logits") {
    std::vector<std::vector<double>> teacher = {{1.0, std::nan("")}, {0.0, 0.0}};
    std::vector<std::vector<double>> student = {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
    CHECK_THROWS_AS(dino_loss(teacher, student, 0.04, 0.1, {0.0, 0.0}), DataError);
}

TEST_CASE("ema_update: endpoint and midpoint behavior") {
    Rng rng(8);
    Rng init = rng.fork(1);
    MlpParams student = MlpParams::init(4, 3, 2, init);
    MlpParams teacher = student;
    for (auto& v : teacher.w1) v = 0.0;

    SUBCASE("lambda 1 leaves the teacher unchanged") {
        MlpParams before = teacher;
        ema_update(teacher, student, 1.0);
        CHECK(teacher.w1 == before.w1);
    }
    SUBCASE("lambda 0 copies the student") {
        ema_update(teacher, student, 0.0);
        CHECK(teacher.w1 == student.w1);
    }
    SUBCASE("lambda 0.5 blends halfway") {
        for (auto& v : student.w1) v = 1.0;
        ema_update(teacher, student, 0.5);
        for (double v : teacher.w1) REQUIRE(v == doctest::Approx(0.5));
    }
    SUBCASE("shape mismatch is an error") {
        Rng other = rng.fork(2);
        MlpParams small = MlpParams::init(3, 3, 2, other);
        CHECK_THROWS_AS(ema_update(small, student, 0.5), DataError);
    }
}

TEST_CASE("ema_update: repeated steps follow the geometric closed form") {
    Rng rng(15);
    Rng init = rng.fork(1);
    const MlpParams student = MlpParams::init(4, 3, 2, init);
    MlpParams teacher = student;
    for (auto& v : teacher.w2) v = 0.0;
    const double lambda = 0.9;
    const int steps = 17;
    for (int i = 0; i < steps; ++i) ema_update(teacher, student, lambda);
    const double decay = std::pow(lambda, steps);
    for (std::size_t i = 0; i < teacher.w2.size(); ++i)
        REQUIRE(teacher.w2[i] == doctest::Approx((1.0 - decay) * student.w2[i]).epsilon(1e-12));
}

TEST_CASE("ssl gradients match central finite differences") {
    Rng rng(29);
    SslModel model = tiny_model(rng);
    const GrayImage patch = oracle::random_cell_image(24, 24, rng);
    Rng crop_rng(5);
    const CropSet crops = multi_crop(patch, model.config.crops, crop_rng);
    CHECK(oracle::ssl_gradient_max_rel_error(model, crops) < 1e-4);
}

TEST_CASE("train_ssl: loss decreases on a two-cluster patch set") {
    Rng rng(101);
    std::vector<GrayImage> patches;
    for (int i = 0; i < 12; ++i) {
        GrayImage patch(24, 24, i % 2 ? 60 : 190);
        for (auto& px : patch.pixels) {
            const int v = px + static_cast<int>(rng.uniform_int(31)) - 15;
            px = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
        patches.push_back(std::move(patch));
    }
    SslConfig cfg = tiny_config();
    cfg.epochs = 50;
    cfg.learning_rate = 0.02;
    Rng train_rng(7);
    const SslModel model = train_ssl(patches, cfg, train_rng);
    REQUIRE(model.epoch_loss.size() == 50);
    CHECK(model.epoch_loss.back() < model.epoch_loss.front());

    const auto e = ssl_embed(model, patches[0]);
    REQUIRE(e.size() == 8);
    for (float v : e) REQUIRE(std::isfinite(v));
}

TEST_CASE("train_ssl: teacher stays an EMA trail of the student") {
    // Between EMA steps the teacher is never touched by gradients; after
    // training it must differ from the student (it lags) but stay finite.
    Rng rng(55);
    std::vector<GrayImage> patches(4, GrayImage(16, 16, 120));
    SslConfig cfg = tiny_config();
    cfg.epochs = 3;
    Rng train_rng(8);
    const SslModel model = train_ssl(patches, cfg, train_rng);
    bool differs = false;
    for (std::size_t i = 0; i < model.teacher.w1.size(); ++i)
        differs = differs || model.teacher.w1[i] != model.student.w1[i];
    CHECK(differs);
}
