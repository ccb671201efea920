#include "clanet/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace clanet {

namespace {

void scaled_uniform_init(std::vector<double>& w, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-bound, bound);
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

GrayImage resize_bilinear(const GrayImage& src, int out_w, int out_h) {
    if (src.width == out_w && src.height == out_h) return src;
    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const int y0 = std::min(static_cast<int>(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const int x0 = std::min(static_cast<int>(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double top = src.at(x0, y0) * (1 - wx) + src.at(x1, y0) * wx;
            const double bot = src.at(x0, y1) * (1 - wx) + src.at(x1, y1) * wx;
            out.at(x, y) = static_cast<std::uint8_t>(std::clamp(top * (1 - wy) + bot * wy + 0.5, 0.0, 255.0));
        }
    }
    return out;
}

GrayImage make_crop(const GrayImage& patch, int out_size, double scale_min, double scale_max,
                    const MultiCropParams& params, Rng& rng, CropRecord& record) {
    const int side = std::min(patch.width, patch.height);
    int crop_side = static_cast<int>(std::lround(side * rng.uniform(scale_min, scale_max)));
    crop_side = std::clamp(crop_side, 1, side);
    record.w = record.h = crop_side;
    record.x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(patch.width - crop_side + 1)));
    record.y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(patch.height - crop_side + 1)));
    record.brightness = params.brightness_jitter > 0
                            ? rng.uniform(-params.brightness_jitter, params.brightness_jitter)
                            : 0.0;
    record.contrast = params.contrast_jitter > 0
                          ? rng.uniform(1.0 - params.contrast_jitter, 1.0 + params.contrast_jitter)
                          : 1.0;
    record.hflip = params.flips && rng.uniform() < 0.5;
    record.vflip = params.flips && rng.uniform() < 0.5;

    GrayImage cropped(record.w, record.h);
    for (int y = 0; y < record.h; ++y)
        for (int x = 0; x < record.w; ++x) {
            int sx = record.hflip ? record.w - 1 - x : x;
            int sy = record.vflip ? record.h - 1 - y : y;
            double v = patch.at(record.x + sx, record.y + sy);
            v = (v - 128.0) * record.contrast + 128.0 + record.brightness;
            cropped.at(x, y) = static_cast<std::uint8_t>(std::clamp(v + 0.5, 0.0, 255.0));
        }
    return resize_bilinear(cropped, out_size, out_size);
}

struct MlpCache {
    std::vector<double> x, h1, h2;
};

std::vector<double> forward_cached(const MlpParams& p, const std::vector<double>& x, MlpCache& cache) {
    cache.x = x;
    cache.h1.assign(p.hidden, 0.0);
    for (int i = 0; i < p.hidden; ++i) {
        double a = p.b1[i];
        const double* row = p.w1.data() + static_cast<std::size_t>(i) * p.in;
        for (int j = 0; j < p.in; ++j) a += row[j] * x[j];
        cache.h1[i] = std::tanh(a);
    }
    cache.h2.assign(p.hidden, 0.0);
    for (int i = 0; i < p.hidden; ++i) {
        double a = p.b2[i];
        const double* row = p.w2.data() + static_cast<std::size_t>(i) * p.hidden;
        for (int j = 0; j < p.hidden; ++j) a += row[j] * cache.h1[j];
        cache.h2[i] = std::tanh(a);
    }
    std::vector<double> logits(p.out, 0.0);
    for (int i = 0; i < p.out; ++i) {
        double a = p.b3[i];
        const double* row = p.w3.data() + static_cast<std::size_t>(i) * p.hidden;
        for (int j = 0; j < p.hidden; ++j) a += row[j] * cache.h2[j];
        logits[i] = a;
    }
    return logits;
}

// Accumulates parameter gradients for one view given d(loss)/d(logits).
void backward(const MlpParams& p, const MlpCache& cache, const std::vector<double>& dlogits,
              MlpParams& grads) {
    std::vector<double> dh2(p.hidden, 0.0);
    for (int i = 0; i < p.out; ++i) {
        const double g = dlogits[i];
        grads.b3[i] += g;
        double* grow = grads.w3.data() + static_cast<std::size_t>(i) * p.hidden;
        const double* wrow = p.w3.data() + static_cast<std::size_t>(i) * p.hidden;
        for (int j = 0; j < p.hidden; ++j) {
            grow[j] += g * cache.h2[j];
            dh2[j] += g * wrow[j];
        }
    }
    std::vector<double> dh1(p.hidden, 0.0);
    for (int i = 0; i < p.hidden; ++i) {
        const double g = dh2[i] * (1.0 - cache.h2[i] * cache.h2[i]);
        grads.b2[i] += g;
        double* grow = grads.w2.data() + static_cast<std::size_t>(i) * p.hidden;
        const double* wrow = p.w2.data() + static_cast<std::size_t>(i) * p.hidden;
        for (int j = 0; j < p.hidden; ++j) {
            grow[j] += g * cache.h1[j];
            dh1[j] += g * wrow[j];
        }
    }
    for (int i = 0; i < p.hidden; ++i) {
        const double g = dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]);
        grads.b1[i] += g;
        double* grow = grads.w1.data() + static_cast<std::size_t>(i) * p.in;
        for (int j = 0; j < p.in; ++j) grow[j] += g * cache.x[j];
    }
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DataError(std::string("ssl: non-finite ") + what);
}

}  // namespace

MlpParams MlpParams::init(int in, int hidden, int out, Rng& rng) {
    MlpParams p;
    p.in = in;
    p.hidden = hidden;
    p.out = out;
    p.w1.assign(static_cast<std::size_t>(hidden) * in, 0.0);
    p.b1.assign(hidden, 0.0);
    p.w2.assign(static_cast<std::size_t>(hidden) * hidden, 0.0);
    p.b2.assign(hidden, 0.0);
    p.w3.assign(static_cast<std::size_t>(out) * hidden, 0.0);
    p.b3.assign(out, 0.0);
    scaled_uniform_init(p.w1, in, hidden, rng);
    scaled_uniform_init(p.w2, hidden, hidden, rng);
    scaled_uniform_init(p.w3, hidden, out, rng);
    return p;
}

bool MlpParams::same_shape(const MlpParams& o) const {
    return in == o.in && hidden == o.hidden && out == o.out;
}

void MlpParams::fill_zero() {
    for (auto* block : {&w1, &b1, &w2, &b2, &w3, &b3}) std::fill(block->begin(), block->end(), 0.0);
}

std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& x) {
    MlpCache cache;
    return forward_cached(p, x, cache);
}

void ema_update(MlpParams& teacher, const MlpParams& student, double lambda) {
    if (!teacher.same_shape(student)) throw DataError("ema_update: parameter shape mismatch");
    if (lambda < 0.0 || lambda > 1.0) throw DataError("ema_update: lambda must be in [0, 1]");
    auto blend = [lambda](std::vector<double>& t, const std::vector<double>& s) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = lambda * t[i] + (1.0 - lambda) * s[i];
    };
    blend(teacher.w1, student.w1);
    blend(teacher.b1, student.b1);
    blend(teacher.w2, student.w2);
    blend(teacher.b2, student.b2);
    blend(teacher.w3, student.w3);
    blend(teacher.b3, student.b3);
}

CropSet multi_crop(const GrayImage& patch, const MultiCropParams& params, Rng& rng) {
    if (params.n_global < 2) throw DataError("multi_crop: need at least 2 global views");
    CropSet set;
    for (int i = 0; i < params.n_global; ++i) {
        CropRecord rec;
        set.global_crops.push_back(make_crop(patch, params.global_size, params.global_scale_min,
                                             params.global_scale_max, params, rng, rec));
        set.records.push_back(rec);
    }
    for (int i = 0; i < params.n_local; ++i) {
        CropRecord rec;
        set.local_crops.push_back(make_crop(patch, params.local_size, params.local_scale_min,
                                            params.local_scale_max, params, rng, rec));
        set.records.push_back(rec);
    }
    return set;
}

double dino_loss(const std::vector<std::vector<double>>& teacher_logits,
                 const std::vector<std::vector<double>>& student_logits, double tau_t, double tau_s,
                 const std::vector<double>& center) {
    const int n_global = static_cast<int>(teacher_logits.size());
    const int n_views = static_cast<int>(student_logits.size());
    if (n_global < 1 || n_views <= n_global) throw DataError("dino_loss: missing views");

    std::vector<std::vector<double>> teacher_p(n_global);
    for (int i = 0; i < n_global; ++i) {
        check_finite(teacher_logits[i], "teacher logits");
        std::vector<double> centered(teacher_logits[i].size());
        for (std::size_t d = 0; d < centered.size(); ++d)
            centered[d] = (teacher_logits[i][d] - center[d]) / tau_t;
        teacher_p[i] = softmax(centered);
    }
    std::vector<std::vector<double>> student_logp(n_views);
    for (int j = 0; j < n_views; ++j) {
        check_finite(student_logits[j], "student logits");
        std::vector<double> scaled(student_logits[j].size());
        for (std::size_t d = 0; d < scaled.size(); ++d) scaled[d] = student_logits[j][d] / tau_s;
        const std::vector<double> p = softmax(scaled);
        student_logp[j].resize(p.size());
        const double peak = *std::max_element(scaled.begin(), scaled.end());
        double log_sum = 0;
        for (double s : scaled) log_sum += std::exp(s - peak);
        log_sum = peak + std::log(log_sum);
        for (std::size_t d = 0; d < p.size(); ++d) student_logp[j][d] = scaled[d] - log_sum;
    }

    double loss = 0;
    int n_pairs = 0;
    for (int i = 0; i < n_global; ++i)
        for (int j = 0; j < n_views; ++j) {
            if (j == i) continue;  // same-view global pair excluded
            double ce = 0;
            for (std::size_t d = 0; d < teacher_p[i].size(); ++d)
                ce -= teacher_p[i][d] * student_logp[j][d];
            loss += ce;
            ++n_pairs;
        }
    return loss / n_pairs;
}

std::vector<double> pool_to_input(const GrayImage& crop, int side) {
    std::vector<double> x(static_cast<std::size_t>(side) * side, 0.0);
    for (int gy = 0; gy < side; ++gy)
        for (int gx = 0; gx < side; ++gx) {
            const int x0 = gx * crop.width / side, x1 = std::max(x0 + 1, (gx + 1) * crop.width / side);
            const int y0 = gy * crop.height / side, y1 = std::max(y0 + 1, (gy + 1) * crop.height / side);
            double sum = 0;
            for (int y = y0; y < y1; ++y)
                for (int xx = x0; xx < x1; ++xx) sum += crop.at(std::min(xx, crop.width - 1), std::min(y, crop.height - 1));
            x[static_cast<std::size_t>(gy) * side + gx] =
                sum / (255.0 * (x1 - x0) * (y1 - y0));
        }
    return x;
}

double ssl_loss_and_grads(const SslModel& model, const CropSet& crops, MlpParams* grads) {
    const SslConfig& cfg = model.config;
    const int n_global = static_cast<int>(crops.global_crops.size());
    const int n_views = n_global + static_cast<int>(crops.local_crops.size());

    std::vector<std::vector<double>> teacher_logits(n_global);
    for (int i = 0; i < n_global; ++i)
        teacher_logits[i] = mlp_forward(model.teacher, pool_to_input(crops.global_crops[i], cfg.input_side));

    std::vector<MlpCache> caches(n_views);
    std::vector<std::vector<double>> student_logits(n_views);
    for (int j = 0; j < n_views; ++j) {
        const GrayImage& crop =
            j < n_global ? crops.global_crops[j] : crops.local_crops[j - n_global];
        student_logits[j] =
            forward_cached(model.student, pool_to_input(crop, cfg.input_side), caches[j]);
    }

    const double loss =
        dino_loss(teacher_logits, student_logits, cfg.tau_t, cfg.tau_s, model.center);
    if (!grads) return loss;

    // d(loss)/d(student logits): for each (teacher i, student j) pair,
    // (P_s - P_t) / tau_s, averaged over pairs.
    const int n_pairs = n_global * (n_views - 1);
    std::vector<std::vector<double>> teacher_p(n_global);
    for (int i = 0; i < n_global; ++i) {
        std::vector<double> centered(teacher_logits[i].size());
        for (std::size_t d = 0; d < centered.size(); ++d)
            centered[d] = (teacher_logits[i][d] - model.center[d]) / cfg.tau_t;
        teacher_p[i] = softmax(centered);
    }
    grads->fill_zero();
    for (int j = 0; j < n_views; ++j) {
        std::vector<double> scaled(student_logits[j].size());
        for (std::size_t d = 0; d < scaled.size(); ++d) scaled[d] = student_logits[j][d] / cfg.tau_s;
        const std::vector<double> ps = softmax(scaled);
        std::vector<double> dlogits(ps.size(), 0.0);
        bool any = false;
        for (int i = 0; i < n_global; ++i) {
            if (j == i) continue;
            any = true;
            for (std::size_t d = 0; d < ps.size(); ++d)
                dlogits[d] += (ps[d] - teacher_p[i][d]) / (cfg.tau_s * n_pairs);
        }
        if (any) backward(model.student, caches[j], dlogits, *grads);
    }
    return loss;
}

SslModel train_ssl(const std::vector<GrayImage>& patches, const SslConfig& config, Rng& rng) {
    if (patches.empty()) throw DataError("train_ssl: need at least one patch");

    SslModel model;
    model.config = config;
    const int in = config.input_side * config.input_side;
    Rng init_rng = rng.fork(0);
    Rng crop_rng = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);
    model.student = MlpParams::init(in, config.hidden, config.out_dim, init_rng);
    model.teacher = model.student;
    model.center.assign(config.out_dim, 0.0);

    MlpParams grads = model.student;
    std::vector<int> order(patches.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double epoch_loss = 0;
        for (int idx : order) {
            const CropSet crops = multi_crop(patches[idx], config.crops, crop_rng);
            const double loss = ssl_loss_and_grads(model, crops, &grads);
            if (!std::isfinite(loss))
                throw DataError("train_ssl: diverged at epoch " + std::to_string(epoch) +
                                " (non-finite loss)");
            epoch_loss += loss;

            auto step = [&](std::vector<double>& p, const std::vector<double>& g) {
                for (std::size_t k = 0; k < p.size(); ++k) p[k] -= config.learning_rate * g[k];
            };
            step(model.student.w1, grads.w1);
            step(model.student.b1, grads.b1);
            step(model.student.w2, grads.w2);
            step(model.student.b2, grads.b2);
            step(model.student.w3, grads.w3);
            step(model.student.b3, grads.b3);

            ema_update(model.teacher, model.student, config.lambda);

            // Center follows the mean teacher output over this step's global
            // views.
            std::vector<double> mean(config.out_dim, 0.0);
            for (const auto& crop : crops.global_crops) {
                const auto logits = mlp_forward(model.teacher, pool_to_input(crop, config.input_side));
                for (int d = 0; d < config.out_dim; ++d) mean[d] += logits[d];
            }
            for (int d = 0; d < config.out_dim; ++d)
                model.center[d] = config.center_momentum * model.center[d] +
                                  (1.0 - config.center_momentum) * mean[d] / crops.global_crops.size();
        }
        model.epoch_loss.push_back(epoch_loss / patches.size());
    }
    return model;
}

std::vector<float> ssl_embed(const SslModel& model, const GrayImage& patch) {
    const auto logits = mlp_forward(model.teacher, pool_to_input(patch, model.config.input_side));
    std::vector<float> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<float>(logits[i]);
    return out;
}

namespace {

constexpr char kSslMagic[4] = {'C', 'L', 'A', 'S'};
constexpr std::uint32_t kSslVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (in.gcount() != sizeof(T)) throw DataError("ssl checkpoint truncated: " + path.string());
    return v;
}

void put_block(std::ofstream& out, const std::vector<double>& block) {
    put<std::uint64_t>(out, block.size());
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
}

std::vector<double> get_block(std::ifstream& in, const std::filesystem::path& path) {
    const auto n = get<std::uint64_t>(in, path);
    std::vector<double> block(n);
    in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
        throw DataError("ssl checkpoint truncated: " + path.string());
    return block;
}

void put_mlp(std::ofstream& out, const MlpParams& p) {
    put<std::int32_t>(out, p.in);
    put<std::int32_t>(out, p.hidden);
    put<std::int32_t>(out, p.out);
    put_block(out, p.w1);
    put_block(out, p.b1);
    put_block(out, p.w2);
    put_block(out, p.b2);
    put_block(out, p.w3);
    put_block(out, p.b3);
}

MlpParams get_mlp(std::ifstream& in, const std::filesystem::path& path) {
    MlpParams p;
    p.in = get<std::int32_t>(in, path);
    p.hidden = get<std::int32_t>(in, path);
    p.out = get<std::int32_t>(in, path);
    p.w1 = get_block(in, path);
    p.b1 = get_block(in, path);
    p.w2 = get_block(in, path);
    p.b2 = get_block(in, path);
    p.w3 = get_block(in, path);
    p.b3 = get_block(in, path);
    return p;
}

}  // namespace

void save_ssl_checkpoint(const SslModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write ssl checkpoint " + path.string());
    out.write(kSslMagic, 4);
    put<std::uint32_t>(out, kSslVersion);
    const SslConfig& c = model.config;
    put<std::int32_t>(out, c.input_side);
    put<std::int32_t>(out, c.hidden);
    put<std::int32_t>(out, c.out_dim);
    put<double>(out, c.tau_s);
    put<double>(out, c.tau_t);
    put<double>(out, c.center_momentum);
    put<double>(out, c.lambda);
    put<std::int32_t>(out, c.epochs);
    put<double>(out, c.learning_rate);
    put<std::int32_t>(out, c.crops.n_global);
    put<std::int32_t>(out, c.crops.n_local);
    put<std::int32_t>(out, c.crops.global_size);
    put<std::int32_t>(out, c.crops.local_size);
    put_mlp(out, model.student);
    put_mlp(out, model.teacher);
    put_block(out, model.center);
    if (!out) throw DataError("write failed for ssl checkpoint " + path.string());
}

SslModel load_ssl_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open ssl checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kSslMagic, 4) != 0)
        throw DataError("ssl checkpoint magic mismatch: " + path.string());
    if (get<std::uint32_t>(in, path) != kSslVersion)
        throw DataError("ssl checkpoint version unsupported: " + path.string());
    SslModel model;
    SslConfig& c = model.config;
    c.input_side = get<std::int32_t>(in, path);
    c.hidden = get<std::int32_t>(in, path);
    c.out_dim = get<std::int32_t>(in, path);
    c.tau_s = get<double>(in, path);
    c.tau_t = get<double>(in, path);
    c.center_momentum = get<double>(in, path);
    c.lambda = get<double>(in, path);
    c.epochs = get<std::int32_t>(in, path);
    c.learning_rate = get<double>(in, path);
    c.crops.n_global = get<std::int32_t>(in, path);
    c.crops.n_local = get<std::int32_t>(in, path);
    c.crops.global_size = get<std::int32_t>(in, path);
    c.crops.local_size = get<std::int32_t>(in, path);
    model.student = get_mlp(in, path);
    model.teacher = get_mlp(in, path);
    model.center = get_block(in, path);
    return model;
}

}  // namespace clanet
