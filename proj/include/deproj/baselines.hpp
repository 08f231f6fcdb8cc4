#pragma once

#include <cstdint>
#include <vector>

#include "deproj/checkpoint.hpp"
#include "deproj/data.hpp"
#include "deproj/model.hpp"
#include "deproj/tensor.hpp"
#include "deproj/trainer.hpp"

// Comparison methods: the closed-form linear-Gaussian estimator, a
// nearest-neighbor selector over stored projections, and thin wrappers
// for the deterministic (latent-free) network variant.

namespace deproj {

// Fitted linear-Gaussian estimator. All fields are kept in double
// precision; `factor` is a low-rank square root of the posterior
// covariance (factor * factor^T), shared across query points. When the
// posterior collapses completely the factor is a single zero column.
struct LinearGaussianModel {
    std::vector<int> signal_shape; // unvectorized y shape
    std::vector<int> x_shape;      // unvectorized projection shape
    TensorD x_mean;                // [d]
    TensorD y_mean;                // [D]
    TensorD gain;                  // [D, d]
    TensorD factor;                // [D, r], r >= 1
};

// Empirical fit (covariance denominator N). `ridge` scales an isotropic
// addition ridge * trace / d to the projection covariance before
// inversion; with ridge == 0 the inverse is a pseudo-inverse with
// relative eigenvalue cutoff 1e-10. Requires at least two pairs.
LinearGaussianModel lmmse_fit(const PairSet& pairs, double ridge = 1e-6);

// Conditional mean for one projection, shaped like the signal. The
// covariance factor does not depend on x and lives in the model.
TensorD lmmse_posterior(const LinearGaussianModel& model, const Tensor& x);

// k independent draws mean + factor * u, u standard normal; deterministic
// given (seed, stream). Distinct streams give independent draws, so
// callers can key one stream per query. Results are rounded to 32-bit
// signal tensors.
std::vector<Tensor> lmmse_sample(const LinearGaussianModel& model, const Tensor& x, int k,
                                 std::uint64_t seed, std::uint64_t stream = 0);

// The k stored signals whose stored projections are closest to x in mean
// squared error, ascending; ties prefer the lower training index.
std::vector<Tensor> knn_select(const PairSet& train, const Tensor& x, int k);

// Deterministic-variant wrappers: training requires a model built with
// use_latent = false; prediction is a plain decoder pass.
TrainResult det_train(const DeprojNet& net, const TrainConfig& cfg, const PairSet& train_set,
                      const PairSet& val_set, std::uint64_t seed);
Tensor det_predict(const DeprojNet& net, const ModelParams& params, const Tensor& x);

// Persistence in the common container ("lmmse/<field>" tensors). Values
// are rounded to 32-bit on save.
Checkpoint pack_lmmse_checkpoint(const LinearGaussianModel& model);
LinearGaussianModel unpack_lmmse_checkpoint(const Checkpoint& ck);

} // namespace deproj
