#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "clanet/rng.hpp"
#include "clanet/segmentation.hpp"
#include "clanet/types.hpp"

namespace clanet {

// Cell-line morphology knobs: cells render as anti-aliased ellipses with a
// bright membrane ring and a darker speckled interior over a mid-gray
// background.
struct ClassSpec {
    std::string name;
    double aspect_min = 0.4, aspect_max = 0.7;  // minor/major axis ratio
    double radius_min = 7, radius_max = 11;     // major semi-axis, px
    double ring_contrast = 45;                  // membrane brightness above background
    double interior_depth = 18;                 // cytoplasm darkness below background
    double speckle_freq = 0.25;                 // fraction of interior pixels speckled
    double speckle_contrast = 40;
    double growth_rate = 0.02;                  // logistic rate constant, 1/h
};

// One experimental batch: which class it cultures plus the three nuisance
// knobs (density via initial confluency, image quality, incubation timing).
// layout_seed controls cell placement so batches can share or vary layouts
// independently of their identifiers.
struct BatchSpec {
    std::string batch_id;
    int class_index = 0;
    double initial_confluency = 0.1;  // (0, cap)
    double brightness_offset = 0;
    double contrast_gain = 1.0;
    double noise_sigma = 0;
    double exposure_jitter = 0;  // per-frame uniform brightness wobble
    double gain_jitter = 0;      // per-frame uniform contrast wobble
    int interval_hours = 2;      // in {1, 2, 4, 8}
    double duration_days = 3;
    int sequences = 6;
    std::uint64_t layout_seed = 0;
};

struct SynthParams {
    int width = 256;
    int height = 256;
    double confluency_cap = 0.9;
    int background = 132;  // mid-gray, centered inside an intensity-histogram bin
};

// Per-sequence confluency record from the renderer: the analytic logistic
// target and the true rendered coverage for every frame.
struct SequenceStats {
    std::string sequence_id;
    std::vector<double> target_confluency;
    std::vector<double> rendered_coverage;
};

struct FrameRender {
    GrayImage image;
    double coverage = 0;  // fraction of pixels inside some cell, before quality effects
};

double logistic_confluency(double initial, double cap, double rate, double t_hours);

// One persistent cell layout per sequence: an ordered list of cells placed
// colony by colony. Every frame renders a prefix of this list (longer as
// confluency grows, cells slightly enlarged), so consecutive frames are
// near-duplicates and far-apart frames differ, like a real time-lapse
// location.
struct CellGeometry {
    double cx, cy;
    double ra, rb;  // major/minor semi-axes at base scale
    double cos_t, sin_t;
    std::uint64_t speckle_seed;
};

struct SequenceLayout {
    std::vector<CellGeometry> cells;
};

SequenceLayout generate_sequence_layout(const ClassSpec& cls, const SynthParams& params, Rng rng);

// Renders the shortest layout prefix reaching the target coverage, then
// applies the batch quality transform (contrast/brightness with per-frame
// wobble, then noise).
FrameRender render_frame(const ClassSpec& cls, const BatchSpec& batch, const SynthParams& params,
                         double target_confluency, const SequenceLayout& layout, Rng noise_rng);

// Renders the whole corpus under out_dir (frames as PGM plus manifest.txt)
// and returns the loaded-equivalent manifest. Deterministic: same specs and
// seed give a bit-identical corpus.
DatasetManifest generate_corpus(const std::vector<ClassSpec>& classes,
                                const std::vector<BatchSpec>& batches, const SynthParams& params,
                                Rng& rng, const std::filesystem::path& out_dir,
                                std::vector<SequenceStats>* stats = nullptr);

// Desk-scale defaults: n well-separated morphologies.
std::vector<ClassSpec> default_class_specs(int n);

// Rotates density / quality / timing knobs across each class's batches so
// the three batch-effect forms all vary.
std::vector<BatchSpec> default_batch_specs(int n_classes, int batches_per_class,
                                           int sequences_per_batch);

struct BatchCurve {
    std::string batch_id;
    int class_index = 0;
    double mean_interval = 0;
    std::vector<Hours> timestamps;
    std::vector<double> confluency_mean;
    std::vector<double> confluency_std;
};

struct CorpusStats {
    std::vector<BatchCurve> batches;
    std::string to_csv() const;
};

// Fig.-4 style summary: per-batch segmentation-estimated confluency curves
// (mean and std over the batch's sequences) and mean frame intervals.
CorpusStats corpus_stats(const DatasetManifest& manifest, const SegParams& seg = {});

}  // namespace clanet
