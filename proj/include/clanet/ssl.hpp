#pragma once

#include <filesystem>
#include <vector>

#include "clanet/embedding.hpp"
#include "clanet/rng.hpp"
#include "clanet/types.hpp"

namespace clanet {

// Three-layer perceptron with tanh hidden activations. Weight blocks are
// row-major (out x in).
struct MlpParams {
    int in = 0;
    int hidden = 0;
    int out = 0;
    std::vector<double> w1, b1;  // hidden x in, hidden
    std::vector<double> w2, b2;  // hidden x hidden, hidden
    std::vector<double> w3, b3;  // out x hidden, out

    static MlpParams init(int in, int hidden, int out, Rng& rng);
    bool same_shape(const MlpParams& o) const;
    void fill_zero();
};

std::vector<double> mlp_forward(const MlpParams& p, const std::vector<double>& x);

// theta_teacher <- lambda * theta_teacher + (1 - lambda) * theta_student,
// elementwise. Throws on shape mismatch or lambda outside [0, 1].
void ema_update(MlpParams& teacher, const MlpParams& student, double lambda);

struct MultiCropParams {
    int n_global = 2;
    int n_local = 8;
    int global_size = 112;
    int local_size = 32;
    double global_scale_min = 0.5, global_scale_max = 1.0;  // crop side as a fraction of source
    double local_scale_min = 0.15, local_scale_max = 0.4;
    double brightness_jitter = 25.0;  // additive, intensity units
    double contrast_jitter = 0.25;    // multiplicative, around 1
    bool flips = true;
};

struct CropRecord {
    int x = 0, y = 0, w = 0, h = 0;  // crop window in the source patch
    double brightness = 0, contrast = 1;
    bool hflip = false, vflip = false;
};

struct CropSet {
    std::vector<GrayImage> global_crops;
    std::vector<GrayImage> local_crops;
    std::vector<CropRecord> records;  // globals first, then locals
};

// Random resize crops with brightness/contrast jitter and flips; deterministic
// under a fixed rng.
CropSet multi_crop(const GrayImage& patch, const MultiCropParams& params, Rng& rng);

// Self-distillation loss: mean cross-entropy between centered, sharpened
// teacher distributions over global views and student distributions over
// every other view (global -> local plus global -> other-global pairs).
// student_logits holds globals first, then locals. Throws on non-finite
// logits.
double dino_loss(const std::vector<std::vector<double>>& teacher_logits,
                 const std::vector<std::vector<double>>& student_logits, double tau_t, double tau_s,
                 const std::vector<double>& center);

struct SslConfig {
    int input_side = 16;  // crops are mean-pooled to input_side^2 before the encoder
    int hidden = 256;
    int out_dim = 64;  // D'
    double tau_s = 0.1;
    double tau_t = 0.04;
    double center_momentum = 0.9;
    double lambda = 0.996;  // teacher EMA momentum
    int epochs = 20;
    double learning_rate = 0.05;
    MultiCropParams crops;
};

struct SslModel {
    SslConfig config;
    MlpParams student;
    MlpParams teacher;
    std::vector<double> center;
    std::vector<double> epoch_loss;  // mean loss per training epoch
};

// Mean-pool a crop to side x side and scale to [0, 1].
std::vector<double> pool_to_input(const GrayImage& crop, int side);

// Loss for one crop set under the current student (teacher and center held
// fixed). When grads is non-null it receives d(loss)/d(student params).
double ssl_loss_and_grads(const SslModel& model, const CropSet& crops, MlpParams* grads);

SslModel train_ssl(const std::vector<GrayImage>& patches, const SslConfig& config, Rng& rng);

// Teacher pre-softmax output; the embedding used downstream.
std::vector<float> ssl_embed(const SslModel& model, const GrayImage& patch);

// Versioned binary checkpoint (config scalars + student/teacher/center).
void save_ssl_checkpoint(const SslModel& model, const std::filesystem::path& path);
SslModel load_ssl_checkpoint(const std::filesystem::path& path);

// Embedding provider backed by a trained teacher network.
class SslProvider final : public EmbeddingProvider {
public:
    explicit SslProvider(SslModel model) : model_(std::move(model)) {}
    std::string name() const override { return "ssl"; }
    int dimension() const override { return model_.config.out_dim; }
    std::vector<float> embed(const GrayImage& patch) const override {
        return ssl_embed(model_, patch);
    }

private:
    SslModel model_;
};

}  // namespace clanet
