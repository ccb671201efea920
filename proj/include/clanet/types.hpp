#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace clanet {

// Thrown on malformed inputs: bad files, violated preconditions, broken
// dimension contracts. Message carries file/record context where available.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 8-bit grayscale image, row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw DataError("GrayImage: dimensions must be >= 1");
    }

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

    // Border-replicated access for neighborhood filters.
    std::uint8_t at_clamped(int x, int y) const {
        if (x < 0) x = 0;
        if (y < 0) y = 0;
        if (x >= width) x = width - 1;
        if (y >= height) y = height - 1;
        return at(x, y);
    }

    bool operator==(const GrayImage&) const = default;
};

// Hours since incubation start.
using Hours = double;

struct FrameRecord {
    Hours timestamp = 0;
    std::string path;  // relative to the manifest directory

    bool operator==(const FrameRecord&) const = default;
};

struct SequenceRecord {
    std::string sequence_id;
    std::string batch_id;
    std::vector<FrameRecord> frames;

    bool operator==(const SequenceRecord&) const = default;
};

struct BatchRecord {
    std::string batch_id;
    int class_index = 0;

    bool operator==(const BatchRecord&) const = default;
};

// Class / batch / sequence hierarchy driving splits and batch-level
// evaluation. `root` is the directory frame paths are resolved against; it is
// set by the loader and not part of the serialized content.
struct DatasetManifest {
    std::vector<std::string> classes;
    std::vector<BatchRecord> batches;
    std::vector<SequenceRecord> sequences;
    std::filesystem::path root;

    int class_of_batch(const std::string& batch_id) const;
    int class_of_sequence(const SequenceRecord& seq) const { return class_of_batch(seq.batch_id); }
    const SequenceRecord& sequence(const std::string& sequence_id) const;

    bool operator==(const DatasetManifest& o) const {
        return classes == o.classes && batches == o.batches && sequences == o.sequences;
    }
};

// One MIL bag: ordered frames plus incubation timestamps for a single flask
// location.
struct ImageSequence {
    std::string sequence_id;
    std::string batch_id;
    int class_label = 0;
    std::vector<GrayImage> frames;
    std::vector<Hours> timestamps;

    void validate() const;
};

// Per-frame patch embeddings aligned to timestamps. Frame n holds k(n) rows
// of `d` floats, row-major. Values are stored as 32-bit floats so the archive
// round-trip is bit-exact.
struct EmbeddingSequence {
    std::string sequence_id;
    int d = 0;
    std::vector<Hours> timestamps;
    std::vector<std::vector<float>> frames;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int k(int frame) const { return static_cast<int>(frames[frame].size()) / d; }
    const float* instance(int frame, int idx) const { return frames[frame].data() + static_cast<std::size_t>(idx) * d; }

    void validate() const;

    bool operator==(const EmbeddingSequence&) const = default;
};

}  // namespace clanet
