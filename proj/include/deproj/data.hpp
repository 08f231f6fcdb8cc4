#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deproj/projection.hpp"
#include "deproj/tensor.hpp"

// Dataset synthesis and ingestion: bouncing-digit clips rendered from 8x8
// glyphs, IDX raster ingestion, (projection, signal) pair construction,
// and deterministic splitting.

namespace deproj {

struct ClipDataset {
    std::vector<Tensor> clips; // each [1, T, H, W] (or [1, H, W] for stills)
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct SynthConfig {
    int clip_count = 16;
    int digits = 1;       // digits per clip
    int frames = 8;       // T
    int height = 32;      // canvas H
    int width = 32;       // canvas W
    int min_speed = 1;    // px/frame per axis, inclusive
    int max_speed = 3;
    std::uint64_t seed = 0;

    std::string canonical() const;
};

// Parses an IDX stream: two zero bytes, type byte 0x08 (unsigned byte),
// dimension count, big-endian u32 extents, payload. Values scale to [0,1].
Tensor read_idx(const std::vector<unsigned char>& bytes);
Tensor read_idx_file(const std::string& path);

// Ten 8x8 binary digit glyphs shipped with the library, shape [10, 8, 8].
Tensor builtin_glyphs();

// Position fold for elastic bouncing on [0, limit]; flips the velocity
// component once per edge crossing. Exposed for direct testing.
void reflect_bounce(int& pos, int& vel, int limit);

ClipDataset synth_moving_digits(const Tensor& glyphs, const SynthConfig& cfg);

struct Pair {
    Tensor x; // projection
    Tensor y; // full signal
};

struct PairSet {
    std::vector<Pair> pairs;
    ProjectionSpec spec;
};

// x_i = project(y_i) plus optional i.i.d. Gaussian noise of std noise_sigma.
// With translate set, each clip is first shifted uniformly in [-2, 2] px
// per image axis (zero fill), so the pair identity still holds.
PairSet make_pairs(const ClipDataset& ds, const ProjectionSpec& spec, float noise_sigma,
                   std::uint64_t seed, bool translate = false);

struct SplitResult {
    ClipDataset train, val, test;
};

// Seeded shuffle then contiguous partition; val/test sizes floor, the
// remainder goes to train. Rejects ratios that leave any part empty.
SplitResult split(const ClipDataset& ds, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed);

void save_dataset(const ClipDataset& ds, const std::string& path);
ClipDataset load_dataset(const std::string& path);

} // namespace deproj
