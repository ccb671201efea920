#include "clanet/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace clanet {

SplitStrategy split_from_string(const std::string& name) {
    if (name == "separated") return SplitStrategy::separated;
    if (name == "stratified") return SplitStrategy::stratified;
    throw DataError("unknown split strategy '" + name + "' (expected separated|stratified)");
}

std::string to_string(SplitStrategy s) {
    return s == SplitStrategy::separated ? "separated" : "stratified";
}

namespace {

void shuffle_indices(std::vector<int>& indices, Rng& rng) {
    for (std::size_t i = indices.size(); i > 1; --i)
        std::swap(indices[i - 1], indices[rng.uniform_int(i)]);
}

}  // namespace

Split make_split(const DatasetManifest& manifest, SplitStrategy strategy, Rng& rng) {
    Split split;
    split.strategy = strategy;
    split.seed = rng.seed();

    // Class -> batches, batch -> sequence ids (manifest order).
    std::vector<std::vector<std::string>> class_batches(manifest.classes.size());
    std::map<std::string, std::vector<std::string>> batch_sequences;
    for (const auto& b : manifest.batches) class_batches[b.class_index].push_back(b.batch_id);
    for (const auto& s : manifest.sequences) batch_sequences[s.batch_id].push_back(s.sequence_id);

    for (std::size_t c = 0; c < class_batches.size(); ++c)
        if (class_batches[c].empty())
            throw DataError("make_split: class '" + manifest.classes[c] + "' has no batches");

    if (strategy == SplitStrategy::separated) {
        bool any_test = false;
        std::set<std::string> train_batches;
        for (const auto& batches : class_batches) {
            const auto& chosen = batches[rng.uniform_int(batches.size())];
            train_batches.insert(chosen);
            if (batches.size() > 1) any_test = true;
        }
        if (!any_test)
            throw DataError("make_split: separated split needs a class with >= 2 batches");
        for (const auto& s : manifest.sequences) {
            if (train_batches.count(s.batch_id))
                split.train_ids.push_back(s.sequence_id);
            else
                split.test_ids.push_back(s.sequence_id);
        }
        return split;
    }

    // Stratified: target the expected separated train size (one average-sized
    // batch per class), drawn evenly from inside every batch.
    double target = 0;
    for (std::size_t c = 0; c < class_batches.size(); ++c) {
        std::size_t class_sequences = 0;
        for (const auto& b : class_batches[c]) class_sequences += batch_sequences[b].size();
        target += static_cast<double>(class_sequences) / class_batches[c].size();
    }
    const double fraction = target / manifest.sequences.size();

    for (const auto& b : manifest.batches) {
        const auto& ids = batch_sequences[b.batch_id];
        const int n = static_cast<int>(ids.size());
        if (n < 2)
            throw DataError("make_split: stratified split needs >= 2 sequences per batch (batch '" +
                            b.batch_id + "' has " + std::to_string(n) + ")");
        int take = static_cast<int>(std::llround(fraction * n));
        take = std::clamp(take, 1, n - 1);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle_indices(order, rng);
        for (int i = 0; i < n; ++i) {
            if (i < take)
                split.train_ids.push_back(ids[order[i]]);
            else
                split.test_ids.push_back(ids[order[i]]);
        }
    }
    return split;
}

namespace {

Metrics metrics_from_pairs(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw DataError("metrics: empty or mismatched prediction/label lists");

    std::size_t correct = 0;
    std::set<int> present(labels.begin(), labels.end());
    std::map<int, std::array<std::int64_t, 3>> tally;  // class -> tp, fp, fn
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) {
            ++correct;
            ++tally[labels[i]][0];
        } else {
            ++tally[predictions[i]][1];
            ++tally[labels[i]][2];
        }
    }

    double f1_sum = 0;
    for (int c : present) {
        const auto& t = tally[c];
        const double tp = static_cast<double>(t[0]);
        const double precision = tp + t[1] > 0 ? tp / (tp + t[1]) : 0.0;
        const double recall = tp + t[2] > 0 ? tp / (tp + t[2]) : 0.0;
        f1_sum += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    }

    Metrics m;
    m.accuracy = static_cast<double>(correct) / predictions.size();
    m.f1 = f1_sum / static_cast<double>(present.size());
    return m;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

Metrics seq_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    return metrics_from_pairs(predictions, labels);
}

Metrics batch_metrics(const std::vector<std::string>& sequence_ids,
                      const std::vector<std::vector<double>>& probabilities,
                      const DatasetManifest& manifest, bool soft) {
    if (sequence_ids.empty() || sequence_ids.size() != probabilities.size())
        throw DataError("batch_metrics: empty or mismatched inputs");

    struct BatchAcc {
        std::vector<double> prob_sum;
        std::vector<int> votes;
        int count = 0;
    };
    std::map<std::string, BatchAcc> by_batch;
    for (std::size_t i = 0; i < sequence_ids.size(); ++i) {
        const auto& seq = manifest.sequence(sequence_ids[i]);
        auto& acc = by_batch[seq.batch_id];
        if (acc.prob_sum.empty()) acc.prob_sum.assign(probabilities[i].size(), 0.0);
        if (acc.prob_sum.size() != probabilities[i].size())
            throw DataError("batch_metrics: inconsistent probability dimensions");
        for (std::size_t c = 0; c < probabilities[i].size(); ++c)
            acc.prob_sum[c] += probabilities[i][c];
        acc.votes.push_back(argmax(probabilities[i]));
        ++acc.count;
    }

    std::vector<int> predictions, labels;
    for (const auto& [batch_id, acc] : by_batch) {
        predictions.push_back(soft ? argmax(acc.prob_sum) : majority_vote(acc.votes));
        labels.push_back(manifest.class_of_batch(batch_id));
    }
    return metrics_from_pairs(predictions, labels);
}

int majority_vote(const std::vector<int>& votes) {
    if (votes.empty()) throw DataError("majority_vote: no votes");
    std::map<int, int> counts;
    for (int v : votes) ++counts[v];
    int best = votes[0], best_count = 0;
    for (const auto& [cls, count] : counts) {
        if (count > best_count) {  // map iteration is ascending, so ties keep the smaller class
            best = cls;
            best_count = count;
        }
    }
    return best;
}

EvalReport evaluate_predictions(const std::vector<std::string>& sequence_ids,
                                const std::vector<std::vector<double>>& probabilities,
                                const std::vector<int>& labels, int classes,
                                const DatasetManifest& manifest) {
    EvalReport report;
    std::vector<int> predictions;
    predictions.reserve(probabilities.size());
    for (const auto& p : probabilities) predictions.push_back(argmax(p));
    report.sequence = seq_metrics(predictions, labels);
    report.batch = batch_metrics(sequence_ids, probabilities, manifest, true);
    report.per_class_counts.assign(classes, 0);
    for (int label : labels) ++report.per_class_counts[label];
    return report;
}

ReplicateSummary summarize_replicates(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw DataError("summarize_replicates: no reports");
    ReplicateSummary s;
    s.replicates = static_cast<int>(reports.size());
    auto mean_std = [&](auto pick) {
        double mean = 0;
        for (const auto& r : reports) mean += pick(r);
        mean /= reports.size();
        double var = 0;
        for (const auto& r : reports) {
            const double d = pick(r) - mean;
            var += d * d;
        }
        return std::pair<double, double>{mean, std::sqrt(var / reports.size())};
    };
    std::tie(s.seq_mean.accuracy, s.seq_std.accuracy) =
        mean_std([](const EvalReport& r) { return r.sequence.accuracy; });
    std::tie(s.seq_mean.f1, s.seq_std.f1) =
        mean_std([](const EvalReport& r) { return r.sequence.f1; });
    std::tie(s.batch_mean.accuracy, s.batch_std.accuracy) =
        mean_std([](const EvalReport& r) { return r.batch.accuracy; });
    std::tie(s.batch_mean.f1, s.batch_std.f1) =
        mean_std([](const EvalReport& r) { return r.batch.f1; });
    return s;
}

std::vector<double> frame_representation(const EmbeddingSequence& seq, int frame) {
    std::vector<double> rep(seq.d, 0.0);
    const int k = seq.k(frame);
    for (int i = 0; i < k; ++i) {
        const float* f = seq.instance(frame, i);
        for (int c = 0; c < seq.d; ++c) rep[c] += f[c];
    }
    for (int c = 0; c < seq.d; ++c) rep[c] /= k;
    return rep;
}

namespace {

std::vector<double> linear_softmax(const FrameVoteBaseline& m, const std::vector<double>& x) {
    std::vector<double> logits(m.classes, 0.0);
    for (int c = 0; c < m.classes; ++c) {
        double a = m.b[c];
        const double* row = m.w.data() + static_cast<std::size_t>(c) * m.d;
        for (int k = 0; k < m.d; ++k) a += row[k] * x[k];
        logits[c] = a;
    }
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0;
    std::vector<double> p(m.classes);
    for (int c = 0; c < m.classes; ++c) {
        p[c] = std::exp(logits[c] - peak);
        sum += p[c];
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace

FrameVoteBaseline train_frame_baseline(const std::vector<const EmbeddingSequence*>& training,
                                       const std::vector<int>& labels, int classes,
                                       const FrameBaselineConfig& config) {
    if (training.empty() || training.size() != labels.size())
        throw DataError("train_frame_baseline: bad training inputs");

    FrameVoteBaseline model;
    model.d = training.front()->d;
    model.classes = classes;
    model.w.assign(static_cast<std::size_t>(classes) * model.d, 0.0);
    model.b.assign(classes, 0.0);

    std::vector<std::vector<double>> features;
    std::vector<int> frame_labels;
    for (std::size_t s = 0; s < training.size(); ++s)
        for (int n = 0; n < training[s]->frame_count(); ++n) {
            features.push_back(frame_representation(*training[s], n));
            frame_labels.push_back(labels[s]);
        }

    Rng rng(config.seed);
    std::vector<int> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        for (int idx : order) {
            const auto& x = features[idx];
            std::vector<double> p = linear_softmax(model, x);
            p[frame_labels[idx]] -= 1.0;
            for (int c = 0; c < classes; ++c) {
                const double g = config.learning_rate * p[c];
                model.b[c] -= g;
                double* row = model.w.data() + static_cast<std::size_t>(c) * model.d;
                for (int k = 0; k < model.d; ++k) row[k] -= g * x[k];
            }
        }
    }
    return model;
}

int baseline_frame_vote(const FrameVoteBaseline& model, const EmbeddingSequence& seq) {
    std::vector<int> votes;
    votes.reserve(seq.frame_count());
    for (int n = 0; n < seq.frame_count(); ++n) {
        const std::vector<double> p = linear_softmax(model, frame_representation(seq, n));
        votes.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    return majority_vote(votes);
}

std::vector<double> baseline_sequence_probs(const FrameVoteBaseline& model,
                                            const EmbeddingSequence& seq) {
    // Vote distribution over frames; keeps batch-level aggregation consistent
    // with majority voting.
    std::vector<double> probs(model.classes, 0.0);
    for (int n = 0; n < seq.frame_count(); ++n) {
        const std::vector<double> p = linear_softmax(model, frame_representation(seq, n));
        probs[static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin())] += 1.0;
    }
    for (double& v : probs) v /= seq.frame_count();
    return probs;
}

EmbeddingSequence truncate_sequence(const EmbeddingSequence& seq, double fraction,
                                    TruncationOrder order) {
    const int n = seq.frame_count();
    int keep = static_cast<int>(std::ceil(fraction * n));
    keep = std::clamp(keep, 1, n);
    EmbeddingSequence out;
    out.sequence_id = seq.sequence_id;
    out.d = seq.d;
    const int start = order == TruncationOrder::natural ? 0 : n - keep;
    for (int i = start; i < start + keep; ++i) {
        out.timestamps.push_back(seq.timestamps[i]);
        out.frames.push_back(seq.frames[i]);
    }
    return out;
}

std::vector<TruncationResult> truncation_study(const MilModel& model,
                                               const std::vector<const EmbeddingSequence*>& test,
                                               const std::vector<int>& labels,
                                               const std::vector<std::string>& sequence_ids,
                                               const DatasetManifest& manifest, int classes,
                                               const std::vector<double>& fractions,
                                               TruncationOrder order) {
    static const std::vector<double> allowed = {0.01, 0.25, 0.5, 0.75, 1.0};
    for (double f : fractions) {
        bool ok = false;
        for (double a : allowed) ok = ok || std::abs(f - a) < 1e-12;
        if (!ok) throw DataError("truncation_study: unsupported fraction " + std::to_string(f));
    }

    std::vector<TruncationResult> results;
    for (double fraction : fractions) {
        std::vector<std::vector<double>> probabilities;
        probabilities.reserve(test.size());
        for (const auto* seq : test)
            probabilities.push_back(predict(model, truncate_sequence(*seq, fraction, order)));
        results.push_back(
            {fraction, evaluate_predictions(sequence_ids, probabilities, labels, classes, manifest)});
    }
    return results;
}

}  // namespace clanet
