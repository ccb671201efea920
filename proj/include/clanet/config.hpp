#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "clanet/pipeline.hpp"
#include "clanet/ssl.hpp"
#include "clanet/synth.hpp"

namespace clanet {

// Every tunable across the pipeline, resolved in layers: built-in defaults,
// then a config file, then CLANET_* environment variables, then command-line
// flags.
struct PipelineConfig {
    std::uint64_t seed = 7;
    int threads = 1;

    SegParams seg;
    CcsParams ccs;

    std::string provider = "descriptor";  // descriptor | ssl | archive
    int embed_d = 128;
    SslConfig ssl;

    TrainConfig mil;
    FrameBaselineConfig baseline;

    std::string split = "separated";
    int replicates = 3;

    int synth_classes = 8;
    int synth_batches_per_class = 4;
    int synth_sequences_per_batch = 6;
    int synth_image_size = 256;
};

// Known keys use the manifest's structured-text dialect: one "key value" per
// line, '#' comments. Unknown keys and unparsable values are errors.
void apply_config_entry(PipelineConfig& config, const std::string& key, const std::string& value);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

// CLANET_<KEY> with dots mapped to underscores, uppercased
// (e.g. mil.epochs -> CLANET_MIL_EPOCHS).
void apply_env(PipelineConfig& config);

// Canonical snapshot in the config-file dialect; replaying it reproduces the
// run.
std::string config_snapshot(const PipelineConfig& config);

}  // namespace clanet
