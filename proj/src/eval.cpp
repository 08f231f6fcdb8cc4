#include "deproj/eval.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "deproj/projection.hpp"
#include "deproj/rng.hpp"
#include "parallel.hpp"

namespace deproj {

namespace {

void check_method(const EvalMethod& m) {
    if (m.name == "cvae" || m.name == "det") {
        if (!m.net || !m.params)
            throw Error("method '" + m.name + "' needs a model and parameters");
        if (m.name == "cvae" && !m.net->config().use_latent)
            throw Error("method 'cvae' requires a model with the latent branch");
        if (m.name == "det" && m.net->config().use_latent)
            throw Error("method 'det' requires a model without the latent branch");
        return;
    }
    if (m.name == "knn") {
        if (!m.train) throw Error("method 'knn' needs the training pairs");
        return;
    }
    if (m.name == "lmmse") {
        if (!m.lmmse) throw Error("method 'lmmse' needs a fitted estimator");
        return;
    }
    throw Error("unknown method '" + m.name + "'");
}

void write_file(const std::string& path, const std::string& bytes, const char* what) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(std::string("cannot write ") + what + " '" + path +
                        "': " + std::strerror(errno));
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f.good())
        throw Error(std::string("cannot write ") + what + " '" + path +
                    "': " + std::strerror(errno));
}

} // namespace

std::vector<Tensor> draw_candidates(const EvalMethod& m, const Tensor& x, int n,
                                    std::uint64_t seed, int example) {
    check_method(m);
    if (n < 1) throw Error("candidate count must be >= 1, got " + std::to_string(n));
    if (m.name == "cvae") {
        DiagonalGaussian prior = m.net->prior_encode(*m.params, x);
        Rng rng = stream_rng(seed, Stream::sample, static_cast<std::uint64_t>(example));
        std::vector<Tensor> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int c = 0; c < n; ++c) {
            Tensor eps(prior.mean.shape());
            for (std::size_t i = 0; i < eps.size(); ++i)
                eps[i] = static_cast<float>(rng.next_gaussian());
            Tensor z = DeprojNet::reparam_sample(prior, eps);
            out.push_back(m.net->deproject(*m.params, x, z));
        }
        return out;
    }
    if (m.name == "det") {
        Tensor one = m.net->deproject_det(*m.params, x);
        return std::vector<Tensor>(static_cast<std::size_t>(n), one);
    }
    if (m.name == "knn") return knn_select(*m.train, x, n);
    return lmmse_sample(*m.lmmse, x, n, seed, static_cast<std::uint64_t>(example));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    if (a.shape() != b.shape())
        throw Error("psnr inputs disagree in shape: " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
    if (peak <= 0.0) throw Error("peak must be > 0");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += diff * diff;
    }
    mse /= static_cast<double>(a.size());
    if (mse < 1e-10) return 100.0;
    return 10.0 * std::log10(peak * peak / mse);
}

EvalCurve best_of_k(const EvalMethod& method, const PairSet& test, const std::vector<int>& ks,
                    std::uint64_t seed, int threads) {
    check_method(method);
    if (test.pairs.empty()) throw Error("test set is empty");
    if (ks.empty()) throw Error("k list is empty");
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] < 1 || (i > 0 && ks[i] <= ks[i - 1]))
            throw Error("k values must be ascending and >= 1");
    if (threads < 1) throw Error("thread count must be >= 1");

    const int n = static_cast<int>(test.pairs.size());
    const int kmax = ks.back();
    std::vector<std::vector<double>> sig(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> rep(static_cast<std::size_t>(n));
    run_parallel(n, threads, [&](int i) {
        const Pair& pr = test.pairs[static_cast<std::size_t>(i)];
        std::vector<Tensor> cands = draw_candidates(method, pr.x, kmax, seed, i);
        auto& s = sig[static_cast<std::size_t>(i)];
        auto& r = rep[static_cast<std::size_t>(i)];
        s.reserve(cands.size());
        r.reserve(cands.size());
        for (const Tensor& c : cands) {
            s.push_back(psnr(c, pr.y));
            r.push_back(psnr(project(c, test.spec), pr.x));
        }
    });

    EvalCurve curve;
    curve.method = method.name;
    curve.seed = seed;
    for (int k : ks) {
        EvalRow row;
        row.k = k;
        for (int i = 0; i < n; ++i) {
            const auto& s = sig[static_cast<std::size_t>(i)];
            const auto& r = rep[static_cast<std::size_t>(i)];
            double best = s[0];
            double acc = 0.0;
            for (int c = 0; c < k; ++c) {
                best = std::max(best, s[static_cast<std::size_t>(c)]);
                acc += r[static_cast<std::size_t>(c)];
            }
            row.best_signal_psnr += best;
            row.mean_reprojection_psnr += acc / static_cast<double>(k);
        }
        row.best_signal_psnr /= static_cast<double>(n);
        row.mean_reprojection_psnr /= static_cast<double>(n);
        curve.rows.push_back(row);
    }
    return curve;
}

std::string curve_csv(const EvalCurve& curve) {
    std::string out = "k,best_signal_psnr,mean_reprojection_psnr\n";
    char buf[96];
    for (const EvalRow& r : curve.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f\n", r.k, r.best_signal_psnr,
                      r.mean_reprojection_psnr);
        out += buf;
    }
    return out;
}

void emit_csv(const EvalCurve& curve, const std::string& path) {
    write_file(path, curve_csv(curve), "csv");
}

void emit_montage(const std::vector<Tensor>& clips, const std::string& path) {
    if (clips.empty()) throw Error("montage needs at least one clip");
    int T = 0, H = 0, W = 0;
    for (const Tensor& c : clips) {
        const auto& s = c.shape();
        if ((s.size() != 3 && s.size() != 4) || s[0] != 1)
            throw Error("montage clips must be [1,H,W] or [1,T,H,W], got " + shape_str(s));
        int t = s.size() == 4 ? s[1] : 1;
        int h = s[s.size() - 2];
        int w = s[s.size() - 1];
        if (T == 0) {
            T = t;
            H = h;
            W = w;
        } else if (t != T || h != H || w != W) {
            throw Error("montage clips disagree in frame layout: " + shape_str(s));
        }
    }
    const int width = T * W;
    const int height = static_cast<int>(clips.size()) * H;
    std::string bytes =
        "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    bytes.reserve(bytes.size() + static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    for (const Tensor& c : clips)
        for (int y = 0; y < H; ++y)
            for (int t = 0; t < T; ++t)
                for (int x = 0; x < W; ++x) {
                    float v = c[(static_cast<std::size_t>(t) * static_cast<std::size_t>(H) +
                                 static_cast<std::size_t>(y)) *
                                    static_cast<std::size_t>(W) +
                                static_cast<std::size_t>(x)];
                    v = std::min(1.0f, std::max(0.0f, v));
                    bytes.push_back(static_cast<char>(static_cast<unsigned char>(
                        std::floor(v * 255.0f + 0.5f))));
                }
    write_file(path, bytes, "montage");
}

} // namespace deproj
