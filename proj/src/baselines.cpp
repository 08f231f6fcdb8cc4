#include "deproj/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <utility>

#include "deproj/rng.hpp"

namespace deproj {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::string join_shape(const std::vector<int>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "|";
        out += std::to_string(s[i]);
    }
    return out;
}

std::vector<int> split_shape(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t bar = s.find('|', pos);
        if (bar == std::string::npos) bar = s.size();
        out.push_back(std::atoi(s.substr(pos, bar - pos).c_str()));
        pos = bar + 1;
    }
    return out;
}

// Low-rank PSD square root of the residual covariance R R^T / N. Works in
// whichever space (signal or sample) is smaller, clamps negative
// eigenvalues to zero, and keeps the leading eigenpairs covering all but
// a 1e-8 fraction of the trace.
MatrixXd posterior_factor(const MatrixXd& R) {
    const auto D = R.rows();
    const auto N = R.cols();
    MatrixXd basis;           // columns to scale into factor columns
    VectorXd w;               // ascending eigenvalues
    bool gram = D > N;
    if (gram) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es((R.transpose() * R) /
                                                   static_cast<double>(N));
        w = es.eigenvalues();
        basis = es.eigenvectors();
    } else {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es((R * R.transpose()) /
                                                   static_cast<double>(N));
        w = es.eigenvalues();
        basis = es.eigenvectors();
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) total += std::max(w[i], 0.0);

    std::vector<Eigen::Index> keep;
    double cum = 0.0;
    for (Eigen::Index i = w.size() - 1; i >= 0 && cum < (1.0 - 1e-8) * total; --i) {
        double wi = std::max(w[i], 0.0);
        if (wi <= 0.0) break;
        keep.push_back(i);
        cum += wi;
    }

    MatrixXd L = MatrixXd::Zero(D, std::max<std::size_t>(keep.size(), 1));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        Eigen::Index i = keep[j];
        if (gram)
            L.col(static_cast<Eigen::Index>(j)) =
                R * basis.col(i) / std::sqrt(static_cast<double>(N));
        else
            L.col(static_cast<Eigen::Index>(j)) = basis.col(i) * std::sqrt(w[i]);
    }
    return L;
}

TensorD from_eigen(const MatrixXd& m, std::vector<int> shape) {
    TensorD t(std::move(shape));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t[static_cast<std::size_t>(i) * static_cast<std::size_t>(m.cols()) +
              static_cast<std::size_t>(j)] = m(i, j);
    return t;
}

Tensor to_float(const TensorD& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t[i]);
    return out;
}

TensorD to_double(const Tensor& t) {
    TensorD out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]);
    return out;
}

} // namespace

LinearGaussianModel lmmse_fit(const PairSet& pairs, double ridge) {
    const std::size_t n = pairs.pairs.size();
    if (n < 2) throw Error("linear-Gaussian fit needs at least 2 pairs");
    if (ridge < 0.0) throw Error("ridge must be >= 0");
    const std::vector<int>& ys = pairs.pairs[0].y.shape();
    const std::vector<int>& xs = pairs.pairs[0].x.shape();
    for (const Pair& p : pairs.pairs)
        if (p.y.shape() != ys || p.x.shape() != xs)
            throw Error("pairs disagree in shape: got signal " + shape_str(p.y.shape()) +
                        ", projection " + shape_str(p.x.shape()));

    const auto N = static_cast<Eigen::Index>(n);
    const auto D = static_cast<Eigen::Index>(pairs.pairs[0].y.size());
    const auto d = static_cast<Eigen::Index>(pairs.pairs[0].x.size());

    MatrixXd Y(N, D), X(N, d);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Pair& p = pairs.pairs[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < D; ++j)
            Y(i, j) = static_cast<double>(p.y[static_cast<std::size_t>(j)]);
        for (Eigen::Index j = 0; j < d; ++j)
            X(i, j) = static_cast<double>(p.x[static_cast<std::size_t>(j)]);
    }
    VectorXd xm = X.colwise().mean();
    VectorXd ym = Y.colwise().mean();
    X.rowwise() -= xm.transpose();
    Y.rowwise() -= ym.transpose();

    MatrixXd Sxx = (X.transpose() * X) / static_cast<double>(N);
    if (ridge > 0.0)
        Sxx.diagonal().array() += ridge * Sxx.trace() / static_cast<double>(d);

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Sxx);
    const VectorXd& w = es.eigenvalues();
    double cut = ridge > 0.0 ? 0.0 : 1e-10 * std::max(w[d - 1], 0.0);
    VectorXd winv = VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i)
        if (w[i] > cut && w[i] > 0.0) winv[i] = 1.0 / w[i];
    MatrixXd Sxx_inv = es.eigenvectors() * winv.asDiagonal() * es.eigenvectors().transpose();

    MatrixXd G = ((Y.transpose() * X) / static_cast<double>(N)) * Sxx_inv;
    MatrixXd R = Y.transpose() - G * X.transpose();

    LinearGaussianModel model;
    model.signal_shape = ys;
    model.x_shape = xs;
    model.x_mean = from_eigen(xm, {static_cast<int>(d)});
    model.y_mean = from_eigen(ym, {static_cast<int>(D)});
    model.gain = from_eigen(G, {static_cast<int>(D), static_cast<int>(d)});
    MatrixXd L = posterior_factor(R);
    model.factor = from_eigen(L, {static_cast<int>(D), static_cast<int>(L.cols())});
    return model;
}

TensorD lmmse_posterior(const LinearGaussianModel& model, const Tensor& x) {
    if (x.shape() != model.x_shape)
        throw Error("projection shape " + shape_str(x.shape()) +
                    " does not match the fitted shape " + shape_str(model.x_shape));
    const auto D = static_cast<Eigen::Index>(model.y_mean.size());
    const auto d = static_cast<Eigen::Index>(model.x_mean.size());
    VectorXd xc(d);
    for (Eigen::Index i = 0; i < d; ++i)
        xc[i] = static_cast<double>(x[static_cast<std::size_t>(i)]) -
                model.x_mean[static_cast<std::size_t>(i)];
    RowMajorMap G(model.gain.data(), D, d);
    VectorXd mean = G * xc;
    TensorD out(model.signal_shape);
    for (Eigen::Index i = 0; i < D; ++i)
        out[static_cast<std::size_t>(i)] = mean[i] + model.y_mean[static_cast<std::size_t>(i)];
    return out;
}

std::vector<Tensor> lmmse_sample(const LinearGaussianModel& model, const Tensor& x, int k,
                                 std::uint64_t seed, std::uint64_t stream) {
    if (k < 1) throw Error("sample count must be >= 1");
    TensorD mean = lmmse_posterior(model, x);
    const auto D = static_cast<Eigen::Index>(model.y_mean.size());
    const auto r = static_cast<Eigen::Index>(model.factor.shape()[1]);
    RowMajorMap L(model.factor.data(), D, r);
    Rng rng = stream_rng(seed, Stream::sample, stream);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int s = 0; s < k; ++s) {
        VectorXd u(r);
        for (Eigen::Index i = 0; i < r; ++i) u[i] = rng.next_gaussian();
        VectorXd dev = L * u;
        Tensor t(model.signal_shape);
        for (Eigen::Index i = 0; i < D; ++i)
            t[static_cast<std::size_t>(i)] =
                static_cast<float>(mean[static_cast<std::size_t>(i)] + dev[i]);
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<Tensor> knn_select(const PairSet& train, const Tensor& x, int k) {
    const std::size_t n = train.pairs.size();
    if (n == 0) throw Error("nearest-neighbor selection needs stored pairs");
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw Error("neighbor count must lie in [1, " + std::to_string(n) + "], got " +
                    std::to_string(k));
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor& sx = train.pairs[i].x;
        if (sx.shape() != x.shape())
            throw Error("projection shape " + shape_str(x.shape()) +
                        " does not match stored shape " + shape_str(sx.shape()));
        double acc = 0.0;
        for (std::size_t j = 0; j < sx.size(); ++j) {
            double diff = static_cast<double>(sx[j]) - static_cast<double>(x[j]);
            acc += diff * diff;
        }
        ranked.push_back({acc / static_cast<double>(sx.size()), static_cast<int>(i)});
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
        out.push_back(train.pairs[static_cast<std::size_t>(ranked[static_cast<std::size_t>(i)].second)].y);
    return out;
}

TrainResult det_train(const DeprojNet& net, const TrainConfig& cfg, const PairSet& train_set,
                      const PairSet& val_set, std::uint64_t seed) {
    if (net.config().use_latent)
        throw Error("deterministic baseline requires a model without the latent branch");
    return train(net, cfg, train_set, val_set, seed);
}

Tensor det_predict(const DeprojNet& net, const ModelParams& params, const Tensor& x) {
    return net.deproject_det(params, x);
}

Checkpoint pack_lmmse_checkpoint(const LinearGaussianModel& model) {
    Checkpoint ck;
    ck.set_meta("kind", "lmmse");
    ck.set_meta("signal", join_shape(model.signal_shape));
    ck.set_meta("x", join_shape(model.x_shape));
    ck.add("lmmse/x_mean", to_float(model.x_mean));
    ck.add("lmmse/y_mean", to_float(model.y_mean));
    ck.add("lmmse/gain", to_float(model.gain));
    ck.add("lmmse/factor", to_float(model.factor));
    return ck;
}

LinearGaussianModel unpack_lmmse_checkpoint(const Checkpoint& ck) {
    if (!ck.has_meta("kind") || ck.meta("kind") != "lmmse")
        throw Error("checkpoint does not hold a linear-Gaussian model");
    LinearGaussianModel model;
    model.signal_shape = split_shape(ck.meta("signal"));
    model.x_shape = split_shape(ck.meta("x"));
    model.x_mean = to_double(ck.at("lmmse/x_mean"));
    model.y_mean = to_double(ck.at("lmmse/y_mean"));
    model.gain = to_double(ck.at("lmmse/gain"));
    model.factor = to_double(ck.at("lmmse/factor"));

    const auto D = model.y_mean.size();
    const auto d = model.x_mean.size();
    std::size_t sp = 1, xp = 1;
    for (int e : model.signal_shape) sp *= static_cast<std::size_t>(e);
    for (int e : model.x_shape) xp *= static_cast<std::size_t>(e);
    if (model.gain.shape().size() != 2 || model.factor.shape().size() != 2 ||
        static_cast<std::size_t>(model.gain.shape()[0]) != D ||
        static_cast<std::size_t>(model.gain.shape()[1]) != d ||
        static_cast<std::size_t>(model.factor.shape()[0]) != D || sp != D || xp != d)
        throw Error("linear-Gaussian checkpoint fields disagree");
    return model;
}

} // namespace deproj
