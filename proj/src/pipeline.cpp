#include "clanet/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <thread>

namespace clanet {

EmbeddingSequence embed_sequence(const DatasetManifest& manifest, const SequenceRecord& record,
                                 const CcsParams& ccs, const EmbeddingProvider& provider) {
    const ImageSequence images = load_sequence_images(manifest, record);

    EmbeddingSequence seq;
    seq.sequence_id = record.sequence_id;
    seq.d = provider.dimension();
    for (std::size_t n = 0; n < images.frames.size(); ++n) {
        const GrayImage& img = images.frames[n];
        const BinaryMask mask = segment(img, ccs.seg);
        const PatchSet patches = select_patches(img, mask, ccs.k, ccs.patch_w, ccs.patch_h);
        if (patches.patches.empty()) continue;  // skip frames with no cell regions

        std::vector<float> frame;
        frame.reserve(patches.patches.size() * seq.d);
        for (const auto& patch : patches.patches) {
            const std::vector<float> e = provider.embed(patch.pixels);
            frame.insert(frame.end(), e.begin(), e.end());
        }
        seq.frames.push_back(std::move(frame));
        seq.timestamps.push_back(images.timestamps[n]);
    }
    if (seq.frames.empty())
        throw DataError("embed_sequence: sequence '" + record.sequence_id +
                        "' has no frames with foreground regions");
    seq.validate();
    return seq;
}

std::map<std::string, EmbeddingSequence> embed_corpus(const DatasetManifest& manifest,
                                                      const CcsParams& ccs,
                                                      const EmbeddingProvider& provider,
                                                      int threads) {
    const int n = static_cast<int>(manifest.sequences.size());
    std::vector<EmbeddingSequence> results(n);
    const int workers = std::max(1, std::min(threads, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            results[i] = embed_sequence(manifest, manifest.sequences[i], ccs, provider);
    } else {
        std::atomic<int> next{0};
        auto run = [&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                results[i] = embed_sequence(manifest, manifest.sequences[i], ccs, provider);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    std::map<std::string, EmbeddingSequence> out;
    for (int i = 0; i < n; ++i) out.emplace(manifest.sequences[i].sequence_id, std::move(results[i]));
    return out;
}

const MethodReports& ExperimentResult::method(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return m;
    throw DataError("experiment: no method '" + name + "'");
}

namespace {

struct SplitData {
    std::vector<const EmbeddingSequence*> train;
    std::vector<int> train_labels;
    std::vector<const EmbeddingSequence*> test;
    std::vector<int> test_labels;
    std::vector<std::string> test_ids;
};

SplitData gather_split(const DatasetManifest& manifest,
                       const std::map<std::string, EmbeddingSequence>& embeddings,
                       const Split& split) {
    SplitData data;
    for (const auto& id : split.train_ids) {
        data.train.push_back(&embeddings.at(id));
        data.train_labels.push_back(manifest.class_of_sequence(manifest.sequence(id)));
    }
    for (const auto& id : split.test_ids) {
        data.test.push_back(&embeddings.at(id));
        data.test_labels.push_back(manifest.class_of_sequence(manifest.sequence(id)));
        data.test_ids.push_back(id);
    }
    return data;
}

EvalReport evaluate_mil(const MilModel& model, const SplitData& data,
                        const DatasetManifest& manifest, int classes) {
    std::vector<std::vector<double>> probabilities;
    probabilities.reserve(data.test.size());
    for (const auto* seq : data.test) probabilities.push_back(predict(model, *seq));
    return evaluate_predictions(data.test_ids, probabilities, data.test_labels, classes, manifest);
}

}  // namespace

ExperimentResult run_experiment(const DatasetManifest& manifest,
                                const std::map<std::string, EmbeddingSequence>& embeddings,
                                const ExperimentConfig& config) {
    const int classes = static_cast<int>(manifest.classes.size());
    ExperimentResult result;
    result.split = config.split;

    std::map<std::string, std::vector<EvalReport>> reports;
    for (int r = 0; r < config.replicates; ++r) {
        Rng split_rng = Rng(config.seed).fork(0xA000 + static_cast<std::uint64_t>(r));
        const Split split = make_split(manifest, config.split, split_rng);
        result.splits.push_back(split);
        const SplitData data = gather_split(manifest, embeddings, split);

        auto train_and_eval = [&](const char* name, Aggregator agg, bool use_tss) {
            TrainConfig tc = config.mil;
            tc.aggregator = agg;
            tc.use_tss = use_tss;
            tc.seed = Rng(config.seed).fork(0xB000 + static_cast<std::uint64_t>(r)).next_u64();
            TrainResult trained = train_mil(data.train, data.train_labels, classes, tc);
            reports[name].push_back(evaluate_mil(trained.model, data, manifest, classes));
            return trained;
        };

        if (config.methods.clanet) {
            TrainResult trained = train_and_eval("clanet", Aggregator::gated, true);
            result.clanet_models.push_back(std::move(trained.model));
        }
        if (config.methods.no_tss) train_and_eval("gated_no_tss", Aggregator::gated, false);
        if (config.methods.max_pool) train_and_eval("max_pool", Aggregator::max_pool, true);
        if (config.methods.avg_pool) train_and_eval("avg_pool", Aggregator::avg_pool, true);

        if (config.methods.majority) {
            FrameBaselineConfig bc = config.baseline;
            bc.seed = Rng(config.seed).fork(0xC000 + static_cast<std::uint64_t>(r)).next_u64();
            const FrameVoteBaseline baseline =
                train_frame_baseline(data.train, data.train_labels, classes, bc);
            std::vector<std::vector<double>> probabilities;
            probabilities.reserve(data.test.size());
            for (const auto* seq : data.test)
                probabilities.push_back(baseline_sequence_probs(baseline, *seq));
            reports["majority_vote"].push_back(evaluate_predictions(
                data.test_ids, probabilities, data.test_labels, classes, manifest));
        }
    }

    // Stable method ordering for reporting.
    for (const char* name : {"clanet", "gated_no_tss", "max_pool", "avg_pool", "majority_vote"}) {
        const auto it = reports.find(name);
        if (it == reports.end()) continue;
        MethodReports m;
        m.method = name;
        m.reports = it->second;
        m.summary = summarize_replicates(it->second);
        result.methods.push_back(std::move(m));
    }
    return result;
}

std::string metrics_csv(const std::vector<const ExperimentResult*>& results) {
    std::string csv =
        "method,split,seq_accuracy_mean,seq_accuracy_std,batch_accuracy_mean,batch_accuracy_std,"
        "seq_f1_mean,seq_f1_std,batch_f1_mean,batch_f1_std\n";
    char line[320];
    for (const auto* result : results)
        for (const auto& m : result->methods) {
            const auto& s = m.summary;
            std::snprintf(line, sizeof(line), "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                          m.method.c_str(), to_string(result->split).c_str(), s.seq_mean.accuracy,
                          s.seq_std.accuracy, s.batch_mean.accuracy, s.batch_std.accuracy,
                          s.seq_mean.f1, s.seq_std.f1, s.batch_mean.f1, s.batch_std.f1);
            csv += line;
        }
    return csv;
}

}  // namespace clanet
