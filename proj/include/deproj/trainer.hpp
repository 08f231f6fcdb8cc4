#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "deproj/checkpoint.hpp"
#include "deproj/data.hpp"
#include "deproj/model.hpp"

// Gradient-descent training of the deprojection network: bias-corrected
// Adam, epoch bookkeeping, a validation-band search for the divergence
// weight, and checkpoint packing. Single-threaded runs are bitwise
// deterministic for a given seed; the optional thread pool preserves that
// by drawing noise up front and reducing gradients in example order.

namespace deproj {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    AdamConfig cfg;
    std::int64_t step = 0;
    std::vector<Tensor> m, v; // aligned with the ModelParams tensor order

    static AdamState fresh(const ModelParams& params, AdamConfig cfg = {});
};

// One bias-corrected Adam update; increments state.step.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state);

struct EpochStats {
    int epoch = 0; // 1-based
    double train_total = 0, train_recon = 0, train_kl = 0;
    bool has_val = false;
    double val_total = 0, val_recon = 0, val_kl = 0;
};

struct TrainConfig {
    int batch_size = 16;
    int epochs = 30;
    std::int64_t max_steps = 0; // 0 = no cap; otherwise stop after this many updates
    AdamConfig adam;
    double beta = 1.0; // weight on the divergence term; unused without a latent branch
    int threads = 1;
};

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<EpochStats> history;
};

// Called after each epoch with the evolving result (history holds the
// freshly finished epoch last).
using EpochCallback = std::function<void(const TrainResult&)>;

TrainResult train(const DeprojNet& net, const TrainConfig& cfg, const PairSet& train_set,
                  const PairSet& val_set, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

// Mean per-example divergence between the posterior and prior encodings.
double mean_divergence(const DeprojNet& net, const ModelParams& params, const PairSet& set,
                       int threads = 1);

struct BetaProbe {
    double beta = 0;
    double val_kl = 0;
};

struct BetaResult {
    double beta = 1.0;
    bool in_band = false; // false = closest achievable only; treat as a warning
    std::vector<BetaProbe> trace;
};

struct BetaTuneConfig {
    TrainConfig train;     // epochs/max_steps are overridden by probe_steps
    int probe_steps = 200; // optimizer updates per probe
    double band_lo = 5.0;
    double band_hi = 15.0;
    int max_probes = 12; // total probe budget across both phases
    int max_bisect = 4;  // geometric bisection probes once the band is bracketed
};

// Geometric search for the divergence weight whose validation divergence
// lands inside [band_lo, band_hi].
BetaResult tune_beta(const DeprojNet& net, const BetaTuneConfig& cfg,
                     const PairSet& train_set, const PairSet& val_set,
                     std::uint64_t seed);

// "epoch,split,total,recon,kl" rows, one per epoch and split.
std::string history_csv(const std::vector<EpochStats>& history);

Checkpoint pack_train_checkpoint(const DeprojNet& net, const TrainResult& result,
                                 std::uint64_t seed);
TrainResult unpack_train_checkpoint(const DeprojNet& net, const Checkpoint& ck);

} // namespace deproj
