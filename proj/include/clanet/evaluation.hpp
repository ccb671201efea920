#pragma once

#include <string>
#include <vector>

#include "clanet/mil.hpp"
#include "clanet/rng.hpp"
#include "clanet/types.hpp"

namespace clanet {

enum class SplitStrategy { separated, stratified };

SplitStrategy split_from_string(const std::string& name);
std::string to_string(SplitStrategy s);

// Train/test partition over sequence ids. Separated: one randomly chosen
// batch per class trains, every other batch tests (train/test batch sets
// disjoint). Stratified: every batch contributes sequences to both sides,
// with the train side sized to roughly match a separated split.
struct Split {
    SplitStrategy strategy = SplitStrategy::separated;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::uint64_t seed = 0;
};

Split make_split(const DatasetManifest& manifest, SplitStrategy strategy, Rng& rng);

struct Metrics {
    double accuracy = 0;
    double f1 = 0;  // macro-averaged over classes present in the labels
};

Metrics seq_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// Batch-level evaluation: averages the probability vectors of a batch's
// sequences (soft voting; hard = majority over argmaxes), then scores the
// per-batch argmax against the batch class.
Metrics batch_metrics(const std::vector<std::string>& sequence_ids,
                      const std::vector<std::vector<double>>& probabilities,
                      const DatasetManifest& manifest, bool soft = true);

// Modal class; ties go to the smaller class index.
int majority_vote(const std::vector<int>& votes);

struct EvalReport {
    Metrics sequence;
    Metrics batch;
    std::vector<int> per_class_counts;  // test-label histogram
};

EvalReport evaluate_predictions(const std::vector<std::string>& sequence_ids,
                                const std::vector<std::vector<double>>& probabilities,
                                const std::vector<int>& labels, int classes,
                                const DatasetManifest& manifest);

// Mean and standard deviation over replicate reports.
struct ReplicateSummary {
    Metrics seq_mean, seq_std;
    Metrics batch_mean, batch_std;
    int replicates = 0;
};

ReplicateSummary summarize_replicates(const std::vector<EvalReport>& reports);

// Image-level baseline: a linear softmax classifier over per-frame mean patch
// embeddings; sequence predictions by majority vote over frame predictions.
struct FrameVoteBaseline {
    int d = 0;
    int classes = 0;
    std::vector<double> w;  // C x D
    std::vector<double> b;  // C
};

struct FrameBaselineConfig {
    int epochs = 200;
    double learning_rate = 0.5;
    std::uint64_t seed = 0;
};

std::vector<double> frame_representation(const EmbeddingSequence& seq, int frame);

FrameVoteBaseline train_frame_baseline(const std::vector<const EmbeddingSequence*>& training,
                                       const std::vector<int>& labels, int classes,
                                       const FrameBaselineConfig& config);

int baseline_frame_vote(const FrameVoteBaseline& model, const EmbeddingSequence& seq);
std::vector<double> baseline_sequence_probs(const FrameVoteBaseline& model,
                                            const EmbeddingSequence& seq);

enum class TruncationOrder { natural, reverse };

// First (natural) or last (reverse) ceil(fraction * N) frames, at least one.
EmbeddingSequence truncate_sequence(const EmbeddingSequence& seq, double fraction,
                                    TruncationOrder order);

struct TruncationResult {
    double fraction = 0;
    EvalReport report;
};

// Evaluates the model on test sequences truncated to each fraction of their
// length. Allowed fractions: 0.01, 0.25, 0.5, 0.75, 1.0.
std::vector<TruncationResult> truncation_study(const MilModel& model,
                                               const std::vector<const EmbeddingSequence*>& test,
                                               const std::vector<int>& labels,
                                               const std::vector<std::string>& sequence_ids,
                                               const DatasetManifest& manifest, int classes,
                                               const std::vector<double>& fractions,
                                               TruncationOrder order);

}  // namespace clanet
