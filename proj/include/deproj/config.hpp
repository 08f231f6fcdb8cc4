#pragma once

// Text configuration for the command-line tools.  A config file is a flat
// list of "key=value" lines; '#' starts a comment and blank lines are
// ignored.  Keys are grouped by prefix into four sections (data., model.,
// train., eval.) and every key must belong to the published schema below.
// Absent keys take their defaults, so an empty file is a valid config.
//
// The normalized dump (keys sorted, values reprinted canonically) defines
// a 64-bit hash that is stamped into checkpoints, letting artifacts be
// traced back to the exact configuration that produced them.

#include <string>
#include <vector>

namespace deproj {

struct RunConfig {
    // data: synthesis / ingestion and the train/val/test split.
    int data_clips = 16;
    int data_digits = 1;
    int data_frames = 8;
    int data_height = 32;
    int data_width = 32;
    int data_min_speed = 1;
    int data_max_speed = 3;
    double data_noise_sigma = 0.0;
    int data_translate = 0;           // 1: jitter pairs with random shifts
    double data_val_ratio = 0.1;
    double data_test_ratio = 0.1;
    std::string data_source = "synth";  // "synth" or "idx"
    std::string data_idx_path;          // image file when source is "idx"

    // model: network shape and objective weight.
    int model_axis = 1;               // collapsed axis of [C,...] signals
    int model_latent_dim = 10;
    std::vector<int> model_enc_channels{16, 32};
    std::vector<int> model_dec_channels{32, 16};
    int model_expand_features = 4;
    double model_leaky_slope = 0.2;
    double model_beta = 1.0;
    int model_latent = 1;             // 0: deterministic variant

    // train: optimization schedule and the divergence band for tuning.
    int train_batch_size = 16;
    int train_epochs = 30;
    double train_lr = 1e-4;
    int train_max_steps = 0;          // 0: no cap
    int train_probe_steps = 200;
    double train_band_lo = 5.0;
    double train_band_hi = 15.0;

    // eval: sampling protocol and rendering.
    std::vector<int> eval_k_list{1, 2, 5, 10};
    std::string eval_method = "cvae";
    int eval_montage_examples = 4;
    double eval_ridge = 1e-6;
};

// Parse config text.  Unknown keys, duplicate keys, malformed lines and
// type errors are rejected with the offending line number and key.
RunConfig parse_config(const std::string& text);

// Read and parse a config file.
RunConfig load_config(const std::string& path);

// Canonical dump: every schema key on its own "key=value" line, sorted by
// key.  Two configs with equal dumps are operationally identical.
std::string config_dump(const RunConfig& cfg);

// FNV-1a (64-bit) of the canonical dump, as 16 lowercase hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace deproj
