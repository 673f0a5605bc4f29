#pragma once

#include <string>
#include <vector>

#include "irdet/detector.hpp"
#include "irdet/synthir.hpp"

namespace irdet {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const Image16& image, const std::string& path);
Image16 read_pgm16(const std::string& path);

// Directory layout: <dir>/annotations.json plus
// <dir>/images/film_<id>/frame_<index>.pgm referenced by relative path.
void write_dataset(const std::vector<Film>& films, const std::string& dir);
std::vector<Film> read_dataset(const std::string& dir);

// Binary checkpoint: magic, format version, architecture JSON, parameters as
// f32 little-endian in declaration order, normalization stats, checksum.
// Distinct failures: FormatError, VersionError, TruncatedFileError,
// ChecksumError.
void save_checkpoint(const std::string& path, const DetectorParams& params,
                     const NormStats& stats);

struct LoadedCheckpoint {
    DetectorParams params;
    NormStats stats;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace irdet
