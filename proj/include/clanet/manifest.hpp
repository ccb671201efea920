#pragma once

#include <filesystem>

#include "clanet/types.hpp"

namespace clanet {

// Manifest file: one human-readable structured-text file at the corpus root.
// Line-oriented, whitespace-separated tokens, '#' starts a comment line:
//
//   clanet-manifest 1
//   classes <C>
//   class <index> <name>
//   batches <B>
//   batch <batch_id> <class_index>
//   sequences <S>
//   sequence <sequence_id> <batch_id> <frame_count>
//   frame <timestamp_hours> <relative_path>
//
// Identifiers and paths must not contain whitespace. Timestamps are written
// with round-trip precision.

// Loads and fully validates a manifest; every referenced image file must
// exist. Errors name the file and offending line/record.
DatasetManifest load_manifest(const std::filesystem::path& path);

// Writes the canonical text form. write -> load is the identity.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Structural validation only (no filesystem checks); used by both the loader
// and the writer.
void validate_manifest(const DatasetManifest& manifest);

// Loads all frames of one sequence from disk.
ImageSequence load_sequence_images(const DatasetManifest& manifest, const SequenceRecord& seq);

}  // namespace clanet
