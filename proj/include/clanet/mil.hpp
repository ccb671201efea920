#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "clanet/rng.hpp"
#include "clanet/types.hpp"

namespace clanet {

// Expected frame interval in whole hours: the mean consecutive timestamp
// difference (which telescopes to (T_N - T_1)/(N - 1)), rounded to nearest
// with halves away from zero. Requires >= 2 strictly increasing timestamps.
int expected_interval(const std::vector<Hours>& timestamps);

// Gaussian interval model over the training corpus: per-sequence expected
// intervals, their population standard deviation, and the distinct-interval
// candidate set draws are snapped to. Single-frame sequences take the
// candidate-set minimum.
struct IntervalModel {
    double sigma = 0;
    std::vector<int> candidates;  // distinct expected intervals, ascending
    std::unordered_map<std::string, int> mu_by_sequence;

    int mu_of(const std::string& sequence_id) const;
};

IntervalModel build_interval_model(const std::vector<const EmbeddingSequence*>& training);

// Nearest candidate to a raw draw; ties go to the smaller candidate.
int snap_interval(const IntervalModel& model, double draw);

// One draw from N(mu_s, sigma^2) snapped onto the candidate set.
int sample_interval(const IntervalModel& model, int mu_s, Rng& rng);

// An epoch's view of a bag: a subsequence of the source frames plus its loss
// weight.
struct SampledSequence {
    const EmbeddingSequence* source = nullptr;
    std::vector<int> frame_indices;  // strictly increasing
    bool sampled = false;            // false = full sequence passed through
    double weight = 1.0;

    int frame_count() const { return static_cast<int>(frame_indices.size()); }
    std::vector<Hours> timestamps() const;
};

// Segment sampling: when t_tilde <= mu_s the full sequence passes through
// unsampled; otherwise frames are partitioned into consecutive chunks of
// floor(t_tilde / mu_s) (last chunk may be shorter) and one frame is drawn
// uniformly per chunk.
SampledSequence tss_sample(const EmbeddingSequence& seq, int t_tilde, int mu_s, Rng& rng);

// Loss weight: alpha1 * V/N + alpha2 * (mu(sampled) - mu_s)/(t_tilde - mu_s).
// The second term is zero when the sequence was not sampled, when
// t_tilde == mu_s, or when fewer than two frames survive. Unsampled
// sequences always weigh 1 (in particular when alpha1 = 0), and disabling
// both terms disables weighting entirely.
double reweight(const SampledSequence& sampled, int mu_s, int t_tilde, int alpha1, int alpha2);

enum class Aggregator { gated, max_pool, avg_pool };

Aggregator aggregator_from_string(const std::string& name);
std::string to_string(Aggregator a);

// Gated-attention MIL head: attention parameters (theta: tanh branch, phi:
// sigmoid branch, psi: score vector) over instance embeddings plus a linear
// classifier on the attention-pooled representation. Max/avg pooling
// baselines reuse the same classifier and interface.
struct MilModel {
    Aggregator kind = Aggregator::gated;
    int hidden = 0;   // L
    int d = 0;        // embedding dimension
    int classes = 0;  // C
    std::vector<double> theta;  // L x D
    std::vector<double> phi;    // L x D
    std::vector<double> psi;    // L
    std::vector<double> cls_w;  // C x D
    std::vector<double> cls_b;  // C

    static MilModel init(Aggregator kind, int hidden, int d, int classes, Rng& rng);
};

struct MilGrads {
    std::vector<double> theta, phi, psi, cls_w, cls_b;

    static MilGrads zeros(const MilModel& model);
    void add_scaled(const MilGrads& other, double scale);
    double max_abs_diff(const MilGrads& other) const;
};

struct AggregateResult {
    std::vector<double> representation;  // D
    std::vector<double> attention;       // per instance; sums to 1 (gated only)
};

// Pools a flat instance list (each pointer is a row of d floats).
AggregateResult aggregate(const MilModel& model, const std::vector<const float*>& instances);

std::vector<const float*> gather_instances(const EmbeddingSequence& seq,
                                           const std::vector<int>* frames = nullptr);

// Bag-level class probabilities over the complete sequence. The inference
// path never samples and consults no rng.
std::vector<double> predict(const MilModel& model, const EmbeddingSequence& seq);

struct Bag {
    std::vector<const float*> instances;
    int label = 0;
    double weight = 1.0;
};

// Weighted minibatch loss: sum_b (W_b / sum W) * CE_b, with gradients for
// every parameter block accumulated across bags in order.
double loss_and_grads(const MilModel& model, const std::vector<Bag>& minibatch, MilGrads& grads);

struct TrainConfig {
    int epochs = 2000;
    int batch_size = 32;
    double learning_rate = 5e-4;
    int alpha1 = 1;
    int alpha2 = 1;
    int hidden = 128;
    Aggregator aggregator = Aggregator::gated;
    bool use_tss = true;
    std::uint64_t seed = 0;
};

struct TrainResult {
    MilModel model;
    std::vector<double> epoch_loss;
};

// Full training loop: per epoch and per sequence, draw an interval, sample
// segments, reweight, accumulate gradients over batch_size bags, then step.
// Deterministic under a fixed seed.
TrainResult train_mil(const std::vector<const EmbeddingSequence*>& training,
                      const std::vector<int>& labels, int classes, const TrainConfig& config);

// Versioned binary checkpoint of all parameter blocks plus the training
// config.
void save_mil_checkpoint(const MilModel& model, const TrainConfig& config,
                         const std::filesystem::path& path);
MilModel load_mil_checkpoint(const std::filesystem::path& path, TrainConfig* config = nullptr);

}  // namespace clanet
