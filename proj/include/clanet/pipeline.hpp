#pragma once

#include <map>
#include <string>
#include <vector>

#include "clanet/ccs.hpp"
#include "clanet/embedding.hpp"
#include "clanet/evaluation.hpp"
#include "clanet/manifest.hpp"
#include "clanet/mil.hpp"

namespace clanet {

struct CcsParams {
    int k = 10;
    int patch_w = 112;
    int patch_h = 112;
    SegParams seg;
};

// Segment + CCS + embed one sequence. Frames yielding no patches are
// dropped; a sequence losing every frame is an error (the corpus is
// unusable for the pipeline).
EmbeddingSequence embed_sequence(const DatasetManifest& manifest, const SequenceRecord& record,
                                 const CcsParams& ccs, const EmbeddingProvider& provider);

// Whole-corpus embedding, keyed by sequence id.
std::map<std::string, EmbeddingSequence> embed_corpus(const DatasetManifest& manifest,
                                                      const CcsParams& ccs,
                                                      const EmbeddingProvider& provider,
                                                      int threads = 1);

struct ExperimentMethods {
    bool clanet = true;    // CCS + TSS + gated attention
    bool no_tss = true;    // gated attention without TSS
    bool majority = true;  // image-level majority vote baseline
    bool max_pool = false;
    bool avg_pool = false;
};

struct ExperimentConfig {
    SplitStrategy split = SplitStrategy::separated;
    int replicates = 3;
    std::uint64_t seed = 0;
    TrainConfig mil;
    FrameBaselineConfig baseline;
    ExperimentMethods methods;
};

struct MethodReports {
    std::string method;
    std::vector<EvalReport> reports;  // one per replicate
    ReplicateSummary summary;
};

struct ExperimentResult {
    SplitStrategy split = SplitStrategy::separated;
    std::vector<MethodReports> methods;
    std::vector<Split> splits;            // per replicate
    std::vector<MilModel> clanet_models;  // per replicate, when the clanet method ran

    const MethodReports& method(const std::string& name) const;
};

// Replicated split -> train -> evaluate, for every enabled method.
ExperimentResult run_experiment(const DatasetManifest& manifest,
                                const std::map<std::string, EmbeddingSequence>& embeddings,
                                const ExperimentConfig& config);

// Table-shaped CSV: one row per method with replicate mean/std of
// sequence- and batch-level accuracy and F1.
std::string metrics_csv(const std::vector<const ExperimentResult*>& results);

}  // namespace clanet
