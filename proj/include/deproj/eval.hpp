#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deproj/baselines.hpp"
#include "deproj/data.hpp"
#include "deproj/model.hpp"
#include "deproj/tensor.hpp"

// Peak-signal-to-noise metrics and the best-of-k evaluation protocol:
// per test pair, draw a fixed pool of candidate reconstructions and
// score growing prefixes of it, so curves across k stay consistent.

namespace deproj {

// 10*log10(peak^2 / MSE), capped at 100 dB when the MSE drops below
// 1e-10 (a finite stand-in for a perfect match).
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

struct EvalRow {
    int k = 0;
    double best_signal_psnr = 0.0;       // mean over test examples
    double mean_reprojection_psnr = 0.0; // mean over candidates, then examples
};

struct EvalCurve {
    std::string method;
    std::uint64_t seed = 0;
    std::vector<EvalRow> rows;
};

// One reconstruction method plus the assets it samples from. `name`
// selects the branch: "cvae" and "det" need net+params, "knn" needs the
// training pairs, "lmmse" needs the fitted estimator.
struct EvalMethod {
    std::string name;
    const DeprojNet* net = nullptr;
    const ModelParams* params = nullptr;
    const PairSet* train = nullptr;
    const LinearGaussianModel* lmmse = nullptr;
};

// Draws n candidate reconstructions for one projection. The stream is
// keyed by (seed, example), exactly as best_of_k keys it, so a longer
// draw extends a shorter one ("det" replicates its single output).
std::vector<Tensor> draw_candidates(const EvalMethod& method, const Tensor& x, int n,
                                    std::uint64_t seed, int example);

// Scores `method` on the test pairs for each k in ks (ascending, >= 1).
// Per example, max(ks) candidates are drawn once from a stream keyed by
// (seed, example index); the row for k scores the first k of them:
// best-signal takes the max candidate PSNR against the true signal,
// reprojection averages the PSNR of each candidate's projection against
// the input. Results are averaged over the test set and do not depend
// on the thread count.
EvalCurve best_of_k(const EvalMethod& method, const PairSet& test, const std::vector<int>& ks,
                    std::uint64_t seed, int threads = 1);

// "k,best_signal_psnr,mean_reprojection_psnr" rows at six decimals.
std::string curve_csv(const EvalCurve& curve);
void emit_csv(const EvalCurve& curve, const std::string& path);

// Binary PGM (P5, maxval 255) tiling each clip's frames left-to-right
// and the clips top-to-bottom; values clamp to [0, 1] and map to 0..255
// rounding half up. Clips are [1, H, W] or [1, T, H, W], all alike.
void emit_montage(const std::vector<Tensor>& clips, const std::string& path);

} // namespace deproj
