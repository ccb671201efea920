#pragma once

#include <filesystem>

#include "clanet/types.hpp"

namespace clanet {

// Embedding archive: little-endian binary, self-describing, streamable.
//
//   magic "CLAE" | u32 version (=1) | u32 id_len | id bytes
//   | u32 frame_count | u32 d
//   | per frame: f64 timestamp | u32 k_n | k_n * d f32 values
//
// read(write(x)) == x bit-exactly for all finite payloads.

void write_embedding_archive(const EmbeddingSequence& seq, const std::filesystem::path& path);

EmbeddingSequence read_embedding_archive(const std::filesystem::path& path);

}  // namespace clanet
