#include "clanet/types.hpp"

#include <cmath>
#include <unordered_map>

namespace clanet {

int DatasetManifest::class_of_batch(const std::string& batch_id) const {
    for (const auto& b : batches)
        if (b.batch_id == batch_id) return b.class_index;
    throw DataError("manifest: unknown batch_id '" + batch_id + "'");
}

const SequenceRecord& DatasetManifest::sequence(const std::string& sequence_id) const {
    for (const auto& s : sequences)
        if (s.sequence_id == sequence_id) return s;
    throw DataError("manifest: unknown sequence_id '" + sequence_id + "'");
}

void ImageSequence::validate() const {
    if (frames.empty()) throw DataError("sequence '" + sequence_id + "': no frames");
    if (frames.size() != timestamps.size())
        throw DataError("sequence '" + sequence_id + "': frame/timestamp count mismatch");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].width != frames[0].width || frames[i].height != frames[0].height)
            throw DataError("sequence '" + sequence_id + "': frame dimensions differ");
        if (timestamps[i] < 0 || !std::isfinite(timestamps[i]))
            throw DataError("sequence '" + sequence_id + "': invalid timestamp");
        if (i > 0 && !(timestamps[i] > timestamps[i - 1]))
            throw DataError("sequence '" + sequence_id + "': timestamps not strictly increasing");
    }
}

void EmbeddingSequence::validate() const {
    if (d < 1) throw DataError("embedding sequence '" + sequence_id + "': d must be >= 1");
    if (frames.empty()) throw DataError("embedding sequence '" + sequence_id + "': no frames");
    if (frames.size() != timestamps.size())
        throw DataError("embedding sequence '" + sequence_id + "': frame/timestamp count mismatch");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].empty() || frames[i].size() % static_cast<std::size_t>(d) != 0)
            throw DataError("embedding sequence '" + sequence_id + "': frame " + std::to_string(i) +
                            " payload is not a positive multiple of d");
        if (i > 0 && !(timestamps[i] > timestamps[i - 1]))
            throw DataError("embedding sequence '" + sequence_id + "': timestamps not strictly increasing");
    }
}

}  // namespace clanet
