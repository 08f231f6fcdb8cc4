#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "deproj/checkpoint.hpp"
#include "deproj/data.hpp"
#include "deproj/model.hpp"
#include "deproj/projection.hpp"
#include "deproj/rng.hpp"
#include "deproj/trainer.hpp"

using deproj::AdamState;
using deproj::BetaResult;
using deproj::BetaTuneConfig;
using deproj::Checkpoint;
using deproj::DeprojNet;
using deproj::EpochStats;
using deproj::ModelConfig;
using deproj::ModelParams;
using deproj::Pair;
using deproj::PairSet;
using deproj::Rng;
using deproj::Tensor;
using deproj::TrainConfig;
using deproj::TrainResult;

namespace {

ModelConfig micro_config() {
    ModelConfig c;
    c.signal_shape = {1, 4, 8, 8};
    c.projection.axis = 1;
    c.latent_dim = 2;
    c.enc_channels = {2, 4};
    c.dec_channels = {4, 2};
    c.expand_features = 2;
    return c;
}

// Same topology with more capacity; used where the net must memorize.
ModelConfig wide_config() {
    ModelConfig c = micro_config();
    c.enc_channels = {4, 8};
    c.dec_channels = {8, 4};
    c.expand_features = 4;
    return c;
}

PairSet random_pairs(const ModelConfig& mc, int n, std::uint64_t seed) {
    PairSet ps;
    ps.spec = mc.projection;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Tensor y(mc.signal_shape);
        for (std::size_t k = 0; k < y.size(); ++k) y[k] = rng.next_unit_f();
        ps.pairs.push_back({deproj::project(y, ps.spec), y});
    }
    return ps;
}

// Pairs whose projection destroys exactly one scalar per example: each
// signal is a random plane (constant along the collapsed axis) plus a
// random amplitude times a fixed pattern with zero mean along that axis.
// Recovering the amplitude requires the latent path, so the recorded
// posterior-prior divergence responds to the divergence weight.
PairSet keyed_pairs(const ModelConfig& mc, int n, std::uint64_t seed) {
    PairSet ps;
    ps.spec = mc.projection;
    Rng rng(seed);
    Tensor pat(mc.signal_shape);
    for (int t = 0; t < 4; ++t) {
        float sign = (t < 2) ? 1.0f : -1.0f;
        for (int i = 0; i < 64; ++i)
            pat[static_cast<std::size_t>(t) * 64 + static_cast<std::size_t>(i)] =
                sign * ((i / 8 + i % 8) % 2 ? 0.25f : 0.1f);
    }
    for (int i = 0; i < n; ++i) {
        std::vector<float> plane(64);
        for (auto& v : plane) v = 0.3f + 0.4f * rng.next_unit_f();
        float s = 2.0f * rng.next_unit_f() - 1.0f;
        Tensor y(mc.signal_shape);
        for (int t = 0; t < 4; ++t)
            for (int k = 0; k < 64; ++k)
                y[static_cast<std::size_t>(t) * 64 + static_cast<std::size_t>(k)] =
                    plane[static_cast<std::size_t>(k)] +
                    s * pat[static_cast<std::size_t>(t) * 64 + static_cast<std::size_t>(k)];
        ps.pairs.push_back({deproj::project(y, ps.spec), y});
    }
    return ps;
}

// One clip alternating two glyphs, contrast softened into [0.1, 0.9].
PairSet glyph_pair(const ModelConfig& mc) {
    Tensor g = deproj::builtin_glyphs();
    Tensor y(mc.signal_shape);
    for (int t = 0; t < 4; ++t)
        for (int k = 0; k < 64; ++k) {
            float v = g[static_cast<std::size_t>(t % 2 + 3) * 64 + static_cast<std::size_t>(k)];
            y[static_cast<std::size_t>(t) * 64 + static_cast<std::size_t>(k)] =
                0.1f + 0.8f * v;
        }
    PairSet ps;
    ps.spec = mc.projection;
    ps.pairs.push_back({deproj::project(y, ps.spec), y});
    return ps;
}

PairSet no_pairs(const ModelConfig& mc) {
    PairSet ps;
    ps.spec = mc.projection;
    return ps;
}

bool same_data(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool same_params(const ModelParams& a, const ModelParams& b) {
    if (a.tensors.size() != b.tensors.size()) return false;
    for (std::size_t i = 0; i < a.tensors.size(); ++i)
        if (a.tensors[i].first != b.tensors[i].first ||
            !same_data(a.tensors[i].second, b.tensors[i].second))
            return false;
    return true;
}

std::vector<Tensor> fill_like(const ModelParams& params, float v) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : params.tensors) {
        Tensor g(t.shape());
        g.fill(v);
        out.push_back(g);
    }
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

} // namespace

TEST_CASE("adam leaves parameters unchanged for zero gradients") {
    DeprojNet net(micro_config());
    ModelParams params = net.init_params(1);
    ModelParams before = params;
    AdamState st = AdamState::fresh(params);
    REQUIRE(st.step == 0);
    deproj::adam_step(params, fill_like(params, 0.0f), st);
    CHECK(st.step == 1);
    CHECK(same_params(params, before));
}

TEST_CASE("adam with zero learning rate is the identity") {
    DeprojNet net(micro_config());
    ModelParams params = net.init_params(2);
    ModelParams before = params;
    deproj::AdamConfig ac;
    ac.lr = 0.0f;
    AdamState st = AdamState::fresh(params, ac);
    deproj::adam_step(params, fill_like(params, 0.37f), st);
    CHECK(st.step == 1);
    CHECK(same_params(params, before));
}

TEST_CASE("first adam update moves every element by the learning rate") {
    DeprojNet net(micro_config());
    ModelParams params = net.init_params(3);
    ModelParams before = params;
    AdamState st = AdamState::fresh(params);
    deproj::adam_step(params, fill_like(params, 2.0f), st);
    // m-hat = g, v-hat = g^2, so the step is lr * g / (|g| + eps) ~ lr.
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        const Tensor& now = params.tensors[i].second;
        const Tensor& was = before.tensors[i].second;
        for (std::size_t k = 0; k < now.size(); ++k)
            CHECK(static_cast<double>(was[k]) - static_cast<double>(now[k]) ==
                  doctest::Approx(1e-4).epsilon(1e-6));
    }
}

TEST_CASE("two adam steps match a double-precision reference") {
    ModelParams params;
    Tensor p0({1});
    p0[0] = 0.5f;
    params.tensors.push_back({"p", p0});
    AdamState st = AdamState::fresh(params);

    std::vector<Tensor> g1 = fill_like(params, 1.0f);
    std::vector<Tensor> g2 = fill_like(params, -1.0f);
    deproj::adam_step(params, g1, st);
    deproj::adam_step(params, g2, st);

    double p = 0.5, m = 0.0, v = 0.0;
    const double lr = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double gs[2] = {1.0, -1.0};
    for (int t = 1; t <= 2; ++t) {
        double g = gs[t - 1];
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        double mh = m / (1 - std::pow(b1, t));
        double vh = v / (1 - std::pow(b2, t));
        p -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(std::abs(static_cast<double>(params.tensors[0].second[0]) - p) < 1e-7);
    CHECK(st.step == 2);
}

TEST_CASE("adam rejects mismatched gradients") {
    DeprojNet net(micro_config());
    ModelParams params = net.init_params(4);
    AdamState st = AdamState::fresh(params);

    std::vector<Tensor> too_few = fill_like(params, 0.0f);
    too_few.pop_back();
    CHECK_THROWS_WITH_AS(deproj::adam_step(params, too_few, st),
                         doctest::Contains("counts disagree"), deproj::Error);

    std::vector<Tensor> bad_shape = fill_like(params, 0.0f);
    bad_shape[0] = Tensor({1});
    CHECK_THROWS_WITH_AS(deproj::adam_step(params, bad_shape, st),
                         doctest::Contains("shape mismatch"), deproj::Error);
}

TEST_CASE("training input validation") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 2, 1);
    TrainConfig tc;
    tc.epochs = 1;

    CHECK_THROWS_WITH_AS(deproj::train(net, tc, no_pairs(mc), no_pairs(mc), 1),
                         doctest::Contains("training set is empty"), deproj::Error);

    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_WITH_AS(deproj::train(net, bad, tr, no_pairs(mc), 1),
                         doctest::Contains("batch size"), deproj::Error);
    bad = tc;
    bad.epochs = 0;
    CHECK_THROWS_WITH_AS(deproj::train(net, bad, tr, no_pairs(mc), 1),
                         doctest::Contains("epoch count"), deproj::Error);
    bad = tc;
    bad.threads = 0;
    CHECK_THROWS_WITH_AS(deproj::train(net, bad, tr, no_pairs(mc), 1),
                         doctest::Contains("thread count"), deproj::Error);

    PairSet wrong = tr;
    wrong.pairs[0].y = Tensor({1, 2, 8, 8});
    CHECK_THROWS_WITH_AS(deproj::train(net, tc, wrong, no_pairs(mc), 1),
                         doctest::Contains("pair signal shape"), deproj::Error);
    wrong = tr;
    wrong.pairs[1].x = Tensor({1, 4, 8});
    CHECK_THROWS_WITH_AS(deproj::train(net, tc, wrong, no_pairs(mc), 1),
                         doctest::Contains("pair projection shape"), deproj::Error);
}

TEST_CASE("training is deterministic for a fixed seed") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 8, 31);
    PairSet va = keyed_pairs(mc, 4, 32);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 3;
    tc.adam.lr = 1e-3f;

    TrainResult a = deproj::train(net, tc, tr, va, 5);
    TrainResult b = deproj::train(net, tc, tr, va, 5);
    const std::string pa = "trainer_det_a.dpjk";
    const std::string pb = "trainer_det_b.dpjk";
    deproj::save_checkpoint(deproj::pack_train_checkpoint(net, a, 5), pa);
    deproj::save_checkpoint(deproj::pack_train_checkpoint(net, b, 5), pb);
    CHECK(slurp(pa) == slurp(pb));
    std::remove(pa.c_str());
    std::remove(pb.c_str());

    TrainResult c = deproj::train(net, tc, tr, va, 6);
    CHECK(!same_params(a.params, c.params));
}

TEST_CASE("results do not depend on the worker thread count") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 8, 31);
    PairSet va = keyed_pairs(mc, 4, 32);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.adam.lr = 1e-3f;

    TrainResult one = deproj::train(net, tc, tr, va, 9);
    tc.threads = 4;
    TrainResult four = deproj::train(net, tc, tr, va, 9);
    CHECK(same_params(one.params, four.params));
    REQUIRE(one.history.size() == four.history.size());
    for (std::size_t i = 0; i < one.history.size(); ++i) {
        CHECK(one.history[i].train_total == four.history[i].train_total);
        CHECK(one.history[i].val_total == four.history[i].val_total);
    }
    CHECK(deproj::mean_divergence(net, one.params, va, 1) ==
          deproj::mean_divergence(net, four.params, va, 4));
}

TEST_CASE("training aborts when the loss explodes") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 2, 11);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 10;
    tc.adam.lr = 1e38f;
    CHECK_THROWS_WITH_AS(deproj::train(net, tc, tr, no_pairs(mc), 3),
                         doctest::Contains("diverged at step"), deproj::Error);
}

TEST_CASE("epoch records cover both splits and keep the divergence non-negative") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 6, 21);
    PairSet va = random_pairs(mc, 3, 22);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 3;
    tc.adam.lr = 1e-3f;

    TrainResult r = deproj::train(net, tc, tr, va, 17);
    REQUIRE(r.history.size() == 3);
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const EpochStats& e = r.history[i];
        CHECK(e.epoch == static_cast<int>(i) + 1);
        CHECK(e.has_val);
        CHECK(e.train_kl >= 0.0);
        CHECK(e.val_kl >= 0.0);
        CHECK(e.train_total ==
              doctest::Approx(e.train_recon + e.train_kl).epsilon(1e-5));
        CHECK(e.val_total == doctest::Approx(e.val_recon + e.val_kl).epsilon(1e-5));
    }
    CHECK(r.adam.step == 9); // 3 batches per epoch, 3 epochs

    TrainResult no_val = deproj::train(net, tc, tr, no_pairs(mc), 17);
    for (const EpochStats& e : no_val.history) CHECK(!e.has_val);
}

TEST_CASE("a step cap stops training mid-epoch and records the partial epoch") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 8, 23);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 10;
    tc.max_steps = 3;
    tc.adam.lr = 1e-3f;

    int calls = 0;
    std::size_t last_seen = 0;
    TrainResult r = deproj::train(net, tc, tr, no_pairs(mc), 29,
                                  [&](const TrainResult& partial) {
                                      ++calls;
                                      last_seen = partial.history.size();
                                  });
    CHECK(r.adam.step == 3);
    REQUIRE(r.history.size() == 2); // two full batches, then one of epoch 2
    CHECK(r.history[0].epoch == 1);
    CHECK(r.history[1].epoch == 2);
    CHECK(calls == 2);
    CHECK(last_seen == 2);
}

TEST_CASE("training loss decreases over the first epochs") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 6, 41);
    PairSet va = random_pairs(mc, 3, 42);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 5;
    tc.adam.lr = 1e-3f;

    TrainResult r = deproj::train(net, tc, tr, va, 13);
    REQUIRE(r.history.size() == 5);
    CHECK(r.history.back().train_total < r.history.front().train_total);
}

TEST_CASE("a single pair is memorized within five hundred steps") {
    ModelConfig mc = wide_config();
    DeprojNet net(mc);
    PairSet one = glyph_pair(mc);
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 500;
    tc.adam.lr = 1e-2f;

    TrainResult r = deproj::train(net, tc, one, no_pairs(mc), 7);
    CHECK(r.history.back().train_recon < 1e-3);
}

TEST_CASE("mean divergence matches the posterior-prior gap") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    ModelParams params = net.init_params(2);
    PairSet set = keyed_pairs(mc, 4, 61);

    double got = deproj::mean_divergence(net, params, set);
    CHECK(got >= 0.0);

    double want = 0.0;
    for (const Pair& pr : set.pairs) {
        deproj::DiagonalGaussian q = net.posterior_encode(params, pr.y);
        deproj::DiagonalGaussian p = net.prior_encode(params, pr.x);
        for (int i = 0; i < mc.latent_dim; ++i) {
            double mq = q.mean[static_cast<std::size_t>(i)];
            double lq = q.log_var[static_cast<std::size_t>(i)];
            double mp = p.mean[static_cast<std::size_t>(i)];
            double lp = p.log_var[static_cast<std::size_t>(i)];
            want += 0.5 * (std::exp(lq - lp) + (mp - mq) * (mp - mq) / std::exp(lp) -
                           1.0 + lp - lq);
        }
    }
    want /= static_cast<double>(set.pairs.size());
    CHECK(got == doctest::Approx(want).epsilon(1e-4));

    CHECK_THROWS_WITH_AS(deproj::mean_divergence(net, params, no_pairs(mc)),
                         doctest::Contains("non-empty"), deproj::Error);
}

TEST_CASE("history export is one csv row per epoch and split") {
    std::vector<EpochStats> h(2);
    h[0].epoch = 1;
    h[0].train_total = 0.5;
    h[0].train_recon = 0.25;
    h[0].train_kl = 0.25;
    h[1].epoch = 2;
    h[1].train_total = 0.375;
    h[1].train_recon = 0.25;
    h[1].train_kl = 0.125;
    h[1].has_val = true;
    h[1].val_total = 0.4375;
    h[1].val_recon = 0.25;
    h[1].val_kl = 0.1875;

    std::string csv = deproj::history_csv(h);
    CHECK(csv ==
          "epoch,split,total,recon,kl\n"
          "1,train,0.5,0.25,0.25\n"
          "2,train,0.375,0.25,0.125\n"
          "2,val,0.4375,0.25,0.1875\n");
}

TEST_CASE("checkpoints round-trip training state bitwise") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 6, 71);
    PairSet va = keyed_pairs(mc, 3, 72);
    TrainConfig tc;
    tc.batch_size = 3;
    tc.epochs = 2;
    tc.adam.lr = 1e-3f;
    TrainResult r = deproj::train(net, tc, tr, va, 19);

    const std::string path = "trainer_roundtrip.dpjk";
    deproj::save_checkpoint(deproj::pack_train_checkpoint(net, r, 19), path);
    Checkpoint ck = deproj::load_checkpoint(path);
    std::remove(path.c_str());
    TrainResult back = deproj::unpack_train_checkpoint(net, ck);

    CHECK(same_params(back.params, r.params));
    CHECK(back.adam.step == r.adam.step);
    CHECK(back.adam.cfg.lr == r.adam.cfg.lr);
    CHECK(back.adam.cfg.beta1 == r.adam.cfg.beta1);
    CHECK(back.adam.cfg.beta2 == r.adam.cfg.beta2);
    CHECK(back.adam.cfg.eps == r.adam.cfg.eps);
    REQUIRE(back.adam.m.size() == r.adam.m.size());
    for (std::size_t i = 0; i < r.adam.m.size(); ++i) {
        CHECK(same_data(back.adam.m[i], r.adam.m[i]));
        CHECK(same_data(back.adam.v[i], r.adam.v[i]));
    }
    REQUIRE(back.history.size() == r.history.size());
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const EpochStats& want = r.history[i];
        const EpochStats& got = back.history[i];
        CHECK(got.epoch == want.epoch);
        CHECK(got.has_val == want.has_val);
        CHECK(got.train_total == static_cast<double>(static_cast<float>(want.train_total)));
        CHECK(got.train_recon == static_cast<double>(static_cast<float>(want.train_recon)));
        CHECK(got.train_kl == static_cast<double>(static_cast<float>(want.train_kl)));
        CHECK(got.val_total == static_cast<double>(static_cast<float>(want.val_total)));
    }

    CHECK(ck.meta("seed") == "19");
    CHECK(ck.meta("kind") == "model");
    CHECK(ck.meta("model") == mc.canonical());
}

TEST_CASE("checkpoint unpacking rejects foreign content") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 2, 81);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 1;
    TrainResult r = deproj::train(net, tc, tr, no_pairs(mc), 23);
    Checkpoint ck = deproj::pack_train_checkpoint(net, r, 23);

    Checkpoint wrong_kind = ck;
    wrong_kind.set_meta("kind", "dataset");
    CHECK_THROWS_WITH_AS(deproj::unpack_train_checkpoint(net, wrong_kind),
                         doctest::Contains("does not hold a model"), deproj::Error);

    ModelConfig other = mc;
    other.latent_dim = 3;
    DeprojNet net3(other);
    CHECK_THROWS_WITH_AS(deproj::unpack_train_checkpoint(net3, ck),
                         doctest::Contains("different model configuration"), deproj::Error);

    Checkpoint bad_moment = ck;
    bad_moment.at("adam/m/post/conv0/w") = Tensor({1});
    CHECK_THROWS_WITH_AS(deproj::unpack_train_checkpoint(net, bad_moment),
                         doctest::Contains("moment shape mismatch"), deproj::Error);
}

TEST_CASE("weight tuning accepts an in-band first probe immediately") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 32, 101);
    PairSet va = keyed_pairs(mc, 16, 202);
    BetaTuneConfig bc;
    bc.train.batch_size = 8;
    bc.train.adam.lr = 3e-2f;
    bc.probe_steps = 200;
    bc.band_lo = 1e-6;
    bc.band_hi = 1.0;

    BetaResult r = deproj::tune_beta(net, bc, tr, va, 11);
    CHECK(r.in_band);
    CHECK(r.beta == 1.0);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].val_kl > bc.band_lo);
    CHECK(r.trace[0].val_kl < bc.band_hi);
}

TEST_CASE("an unreachable band yields the closest weight and a warning") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 32, 101);
    PairSet va = keyed_pairs(mc, 16, 202);
    BetaTuneConfig bc;
    bc.train.batch_size = 8;
    bc.train.adam.lr = 3e-2f;
    bc.probe_steps = 40; // band [5, 15] is far out of reach at this scale

    BetaResult r = deproj::tune_beta(net, bc, tr, va, 11);
    CHECK(!r.in_band);
    REQUIRE(r.trace.size() == 12);
    CHECK(r.trace[0].beta == 1.0);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
        CHECK(r.trace[i].beta == doctest::Approx(r.trace[i - 1].beta / 2).epsilon(1e-12));
    for (const auto& p : r.trace) CHECK(p.val_kl < bc.band_lo);

    // the reported weight is the probe closest to the band in log space
    double best = 1e300;
    double best_beta = 0.0;
    for (const auto& p : r.trace) {
        double d = p.val_kl < bc.band_lo ? std::log(bc.band_lo / p.val_kl)
                                         : std::log(p.val_kl / bc.band_hi);
        if (p.val_kl >= bc.band_lo && p.val_kl <= bc.band_hi) d = 0.0;
        if (d < best) {
            best = d;
            best_beta = p.beta;
        }
    }
    CHECK(r.beta == best_beta);
}

TEST_CASE("a bracketed band is bisected geometrically") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 32, 101);
    PairSet va = keyed_pairs(mc, 16, 202);
    BetaTuneConfig bc;
    bc.train.batch_size = 8;
    bc.train.adam.lr = 3e-2f;
    bc.probe_steps = 200;
    // sits in the observed gap between the probes at 2^-9 and 2^-8
    bc.band_lo = 1.2e-3;
    bc.band_hi = 3.0e-3;

    BetaResult r = deproj::tune_beta(net, bc, tr, va, 11);
    CHECK(r.in_band);

    // halving runs past the band, then the bracket midpoint lands inside
    REQUIRE(r.trace.size() == 11);
    CHECK(r.beta == doctest::Approx(std::pow(2.0, -8.5)).epsilon(1e-12));
    double l2 = std::log2(r.trace.back().beta);
    CHECK(std::abs(l2 - std::round(l2)) > 0.1); // a true bisection probe
    CHECK(r.trace.back().val_kl > bc.band_lo);
    CHECK(r.trace.back().val_kl < bc.band_hi);

    // raising the weight never raises the recorded divergence by more
    // than a 20% noise allowance
    std::vector<deproj::BetaProbe> by_beta = r.trace;
    std::sort(by_beta.begin(), by_beta.end(),
              [](const auto& a, const auto& b) { return a.beta < b.beta; });
    for (std::size_t i = 1; i < by_beta.size(); ++i)
        CHECK(by_beta[i].val_kl <= 1.2 * by_beta[i - 1].val_kl);
}

TEST_CASE("weight tuning validates its inputs") {
    ModelConfig mc = micro_config();
    DeprojNet net(mc);
    PairSet tr = keyed_pairs(mc, 4, 91);
    PairSet va = keyed_pairs(mc, 2, 92);
    BetaTuneConfig bc;

    BetaTuneConfig bad = bc;
    bad.band_lo = 5.0;
    bad.band_hi = 5.0;
    CHECK_THROWS_WITH_AS(deproj::tune_beta(net, bad, tr, va, 1),
                         doctest::Contains("band"), deproj::Error);
    bad = bc;
    bad.probe_steps = 0;
    CHECK_THROWS_WITH_AS(deproj::tune_beta(net, bad, tr, va, 1),
                         doctest::Contains("probe length"), deproj::Error);
    CHECK_THROWS_WITH_AS(deproj::tune_beta(net, bc, tr, no_pairs(mc), 1),
                         doctest::Contains("validation set"), deproj::Error);
    CHECK_THROWS_WITH_AS(deproj::tune_beta(net, bc, no_pairs(mc), va, 1),
                         doctest::Contains("training set is empty"), deproj::Error);

    ModelConfig det = mc;
    det.use_latent = false;
    DeprojNet det_net(det);
    CHECK_THROWS_WITH_AS(deproj::tune_beta(det_net, bc, tr, va, 1),
                         doctest::Contains("latent branch"), deproj::Error);
}

TEST_CASE("the deterministic variant trains without a latent term") {
    ModelConfig mc = micro_config();
    mc.use_latent = false;
    DeprojNet net(mc);
    PairSet tr = random_pairs(mc, 4, 51);
    PairSet va = random_pairs(mc, 2, 52);
    TrainConfig tc;
    tc.batch_size = 2;
    tc.epochs = 3;
    tc.adam.lr = 1e-3f;

    TrainResult r = deproj::train(net, tc, tr, va, 3);
    REQUIRE(r.history.size() == 3);
    for (const EpochStats& e : r.history) {
        CHECK(e.train_kl == 0.0);
        CHECK(e.train_total == e.train_recon);
    }
    CHECK(r.history.back().train_total < r.history.front().train_total);

    CHECK_THROWS_WITH_AS(deproj::mean_divergence(net, r.params, va),
                         doctest::Contains("latent branch"), deproj::Error);
}
