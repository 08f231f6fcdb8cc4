#include "deproj/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "deproj/kernels.hpp"
#include "deproj/rng.hpp"
#include "parallel.hpp"

namespace deproj {

namespace {

Tensor with_batch(const Tensor& t) {
    std::vector<int> s{1};
    for (int e : t.shape()) s.push_back(e);
    return Tensor(s, t.vec());
}

void check_pairs(const DeprojNet& net, const PairSet& set, const char* which) {
    const auto& ys = net.config().signal_shape;
    const auto xs = net.config().x_shape();
    for (const Pair& p : set.pairs) {
        if (p.y.shape() != ys)
            throw Error(std::string(which) + " pair signal shape " + shape_str(p.y.shape()) +
                        " does not match the model's " + shape_str(ys));
        if (p.x.shape() != xs)
            throw Error(std::string(which) + " pair projection shape " +
                        shape_str(p.x.shape()) + " does not match the model's " +
                        shape_str(xs));
    }
}

struct LossTriple {
    double total = 0, recon = 0, kl = 0;
};

// Per-example losses with pre-drawn noise; results land in example order.
std::vector<LossTriple> eval_losses(const DeprojNet& net, const ModelParams& params,
                                    const PairSet& set, const std::vector<int>& indices,
                                    const std::vector<Tensor>& eps, double beta,
                                    int threads) {
    bool latent = net.config().use_latent;
    std::vector<LossTriple> out(indices.size());
    run_parallel(static_cast<int>(indices.size()), threads, [&](int i) {
        const Pair& pr = set.pairs[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)])];
        Tape t;
        auto g = net.bind(t, params, false);
        auto L = net.loss(g, t.leaf(with_batch(pr.x)), t.leaf(with_batch(pr.y)),
                          latent ? eps[static_cast<std::size_t>(i)] : Tensor({1}), beta);
        out[static_cast<std::size_t>(i)].total = t.val(L.total)[0];
        out[static_cast<std::size_t>(i)].recon = t.val(L.recon)[0];
        out[static_cast<std::size_t>(i)].kl = latent ? t.val(L.kl)[0] : 0.0;
    });
    return out;
}

std::vector<Tensor> draw_eps(Rng& rng, int count, int latent_dim) {
    std::vector<Tensor> eps;
    eps.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Tensor e({1, latent_dim});
        for (float& v : e.vec()) v = static_cast<float>(rng.next_gaussian());
        eps.push_back(std::move(e));
    }
    return eps;
}

} // namespace

AdamState AdamState::fresh(const ModelParams& params, AdamConfig cfg) {
    AdamState s;
    s.cfg = cfg;
    s.step = 0;
    s.m.reserve(params.tensors.size());
    s.v.reserve(params.tensors.size());
    for (const auto& [name, t] : params.tensors) {
        s.m.emplace_back(t.shape());
        s.v.emplace_back(t.shape());
    }
    return s;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state) {
    std::size_t n = params.tensors.size();
    if (grads.size() != n || state.m.size() != n || state.v.size() != n)
        throw Error("adam_step tensor counts disagree: " + std::to_string(n) +
                    " params, " + std::to_string(grads.size()) + " grads, " +
                    std::to_string(state.m.size()) + " moments");
    for (std::size_t i = 0; i < n; ++i)
        if (!params.tensors[i].second.same_shape(grads[i]) ||
            !params.tensors[i].second.same_shape(state.m[i]) ||
            !params.tensors[i].second.same_shape(state.v[i]))
            throw Error("adam_step shape mismatch at parameter '" +
                        params.tensors[i].first + "'");
    state.step += 1;
    float bias1 =
        1.0f - static_cast<float>(std::pow(static_cast<double>(state.cfg.beta1),
                                           static_cast<double>(state.step)));
    float bias2 =
        1.0f - static_cast<float>(std::pow(static_cast<double>(state.cfg.beta2),
                                           static_cast<double>(state.step)));
    for (std::size_t i = 0; i < n; ++i) {
        Tensor& p = params.tensors[i].second;
        kernels::adam_update(p.data(), grads[i].data(), state.m[i].data(),
                             state.v[i].data(), static_cast<std::size_t>(p.size()),
                             state.cfg.lr, state.cfg.beta1, state.cfg.beta2,
                             state.cfg.eps, bias1, bias2);
    }
}

TrainResult train(const DeprojNet& net, const TrainConfig& cfg, const PairSet& train_set,
                  const PairSet& val_set, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
    if (train_set.pairs.empty()) throw Error("training set is empty");
    if (cfg.batch_size < 1) throw Error("batch size must be >= 1");
    if (cfg.epochs < 1) throw Error("epoch count must be >= 1");
    if (cfg.threads < 1) throw Error("thread count must be >= 1");
    if (cfg.max_steps < 0) throw Error("step cap must be >= 0");
    check_pairs(net, train_set, "train");
    check_pairs(net, val_set, "validation");

    const int n = static_cast<int>(train_set.pairs.size());
    const int latent_dim = net.config().latent_dim;
    const bool latent = net.config().use_latent;
    const std::size_t P = net.param_specs().size();

    TrainResult res;
    res.params = net.init_params(seed);
    res.adam = AdamState::fresh(res.params, cfg.adam);

    Rng noise_rng = stream_rng(seed, Stream::noise, 0);
    std::int64_t global_step = 0;
    bool stop = false;

    struct Slot {
        std::vector<Tensor> grads;
        LossTriple loss;
    };

    for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuf = stream_rng(seed, Stream::shuffle, static_cast<std::uint64_t>(epoch));
        for (int i = n - 1; i > 0; --i) {
            int j = shuf.next_int(0, i);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double et = 0, er = 0, ek = 0;
        std::int64_t ecount = 0;
        for (int start = 0; start < n && !stop; start += cfg.batch_size) {
            int bc = std::min(cfg.batch_size, n - start);
            std::vector<Tensor> eps;
            if (latent) eps = draw_eps(noise_rng, bc, latent_dim);

            std::vector<Slot> slots(static_cast<std::size_t>(bc));
            run_parallel(bc, cfg.threads, [&](int i) {
                const Pair& pr =
                    train_set.pairs[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
                Tape t;
                auto g = net.bind(t, res.params, true);
                auto L = net.loss(g, t.leaf(with_batch(pr.x)), t.leaf(with_batch(pr.y)),
                                  latent ? eps[static_cast<std::size_t>(i)] : Tensor({1}),
                                  cfg.beta);
                t.backward(L.total);
                Slot& s = slots[static_cast<std::size_t>(i)];
                s.loss.total = t.val(L.total)[0];
                s.loss.recon = t.val(L.recon)[0];
                s.loss.kl = latent ? t.val(L.kl)[0] : 0.0;
                s.grads.reserve(P);
                for (std::size_t p = 0; p < P; ++p) s.grads.push_back(t.grad(g.params[p]));
            });

            ++global_step;
            double bt = 0, br = 0, bk = 0;
            for (const Slot& s : slots) {
                bt += s.loss.total;
                br += s.loss.recon;
                bk += s.loss.kl;
            }
            if (!std::isfinite(bt))
                throw Error("training diverged at step " + std::to_string(global_step) +
                            " (total loss is not finite)");

            // fixed reduction order: example 0 first, then the rest in order
            std::vector<Tensor> grads = std::move(slots[0].grads);
            for (int i = 1; i < bc; ++i)
                for (std::size_t p = 0; p < P; ++p)
                    kernels::axpy(1.0f, slots[static_cast<std::size_t>(i)].grads[p].data(),
                                  grads[p].data(),
                                  static_cast<std::size_t>(grads[p].size()));
            float inv = 1.0f / static_cast<float>(bc);
            for (std::size_t p = 0; p < P; ++p)
                kernels::scale(inv, grads[p].data(), static_cast<std::size_t>(grads[p].size()));

            adam_step(res.params, grads, res.adam);

            et += bt;
            er += br;
            ek += bk;
            ecount += bc;
            if (cfg.max_steps > 0 && global_step >= cfg.max_steps) stop = true;
        }

        EpochStats es;
        es.epoch = epoch;
        es.train_total = et / static_cast<double>(ecount);
        es.train_recon = er / static_cast<double>(ecount);
        es.train_kl = ek / static_cast<double>(ecount);
        if (!val_set.pairs.empty()) {
            es.has_val = true;
            std::vector<int> vidx(val_set.pairs.size());
            std::iota(vidx.begin(), vidx.end(), 0);
            Rng vr = stream_rng(seed, Stream::eval, static_cast<std::uint64_t>(epoch));
            std::vector<Tensor> veps;
            if (latent) veps = draw_eps(vr, static_cast<int>(vidx.size()), latent_dim);
            auto losses = eval_losses(net, res.params, val_set, vidx, veps, cfg.beta,
                                      cfg.threads);
            double vt = 0, vrr = 0, vk = 0;
            for (const LossTriple& l : losses) {
                vt += l.total;
                vrr += l.recon;
                vk += l.kl;
            }
            double vc = static_cast<double>(losses.size());
            es.val_total = vt / vc;
            es.val_recon = vrr / vc;
            es.val_kl = vk / vc;
        }
        res.history.push_back(es);
        if (on_epoch) on_epoch(res);
    }
    return res;
}

double mean_divergence(const DeprojNet& net, const ModelParams& params, const PairSet& set,
                       int threads) {
    if (set.pairs.empty()) throw Error("divergence requires a non-empty pair set");
    std::vector<double> kls(set.pairs.size());
    run_parallel(static_cast<int>(set.pairs.size()), threads, [&](int i) {
        const Pair& pr = set.pairs[static_cast<std::size_t>(i)];
        Tape t;
        auto g = net.bind(t, params, false);
        GaussNodes q = net.posterior(g, t.leaf(with_batch(pr.y)));
        GaussNodes p = net.prior(g, t.leaf(with_batch(pr.x)));
        NodeId kl = ops::kl_diag(t, q.mean, q.log_var, p.mean, p.log_var);
        kls[static_cast<std::size_t>(i)] = t.val(kl)[0];
    });
    double acc = 0;
    for (double k : kls) acc += k;
    return acc / static_cast<double>(kls.size());
}

BetaResult tune_beta(const DeprojNet& net, const BetaTuneConfig& cfg,
                     const PairSet& train_set, const PairSet& val_set,
                     std::uint64_t seed) {
    if (!net.config().use_latent)
        throw Error("divergence-weight tuning requires the latent branch");
    if (!(cfg.band_lo > 0 && cfg.band_lo < cfg.band_hi))
        throw Error("divergence band must satisfy 0 < lo < hi");
    if (cfg.probe_steps < 1) throw Error("probe length must be >= 1");
    if (val_set.pairs.empty()) throw Error("tuning requires a validation set");
    if (train_set.pairs.empty()) throw Error("training set is empty");

    auto probe = [&](double beta) {
        TrainConfig tc = cfg.train;
        tc.beta = beta;
        std::int64_t steps_per_epoch =
            (static_cast<std::int64_t>(train_set.pairs.size()) + tc.batch_size - 1) /
            tc.batch_size;
        tc.epochs = static_cast<int>((cfg.probe_steps + steps_per_epoch - 1) /
                                     steps_per_epoch);
        tc.max_steps = cfg.probe_steps;
        TrainResult r = train(net, tc, train_set, val_set, seed);
        return mean_divergence(net, r.params, val_set, tc.threads);
    };

    BetaResult res;
    double beta = 1.0;
    bool have_hi = false, have_lo = false;
    double hi_beta = 0, lo_beta = 0; // hi_beta: divergence above band; lo_beta: below
    for (int i = 0; i < cfg.max_probes && !(have_hi && have_lo); ++i) {
        double k = probe(beta);
        res.trace.push_back({beta, k});
        if (k >= cfg.band_lo && k <= cfg.band_hi) {
            res.beta = beta;
            res.in_band = true;
            return res;
        }
        if (k > cfg.band_hi) {
            have_hi = true;
            hi_beta = beta;
            beta *= 2;
        } else {
            have_lo = true;
            lo_beta = beta;
            beta /= 2;
        }
    }
    if (have_hi && have_lo) {
        double a = hi_beta, b = lo_beta;
        for (int i = 0;
             i < cfg.max_bisect && static_cast<int>(res.trace.size()) < cfg.max_probes; ++i) {
            double m = std::sqrt(a * b);
            double k = probe(m);
            res.trace.push_back({m, k});
            if (k >= cfg.band_lo && k <= cfg.band_hi) {
                res.beta = m;
                res.in_band = true;
                return res;
            }
            (k > cfg.band_hi ? a : b) = m;
        }
    }
    // nothing landed: report the probe closest to the band (log distance)
    double best = 0;
    bool first = true;
    for (const BetaProbe& p : res.trace) {
        double d = p.val_kl < cfg.band_lo ? std::log(cfg.band_lo / std::max(p.val_kl, 1e-300))
                                          : std::log(p.val_kl / cfg.band_hi);
        if (first || d < best) {
            best = d;
            res.beta = p.beta;
            first = false;
        }
    }
    res.in_band = false;
    return res;
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,split,total,recon,kl\n";
    char buf[160];
    for (const EpochStats& e : history) {
        std::snprintf(buf, sizeof buf, "%d,train,%.9g,%.9g,%.9g\n", e.epoch, e.train_total,
                      e.train_recon, e.train_kl);
        out += buf;
        if (e.has_val) {
            std::snprintf(buf, sizeof buf, "%d,val,%.9g,%.9g,%.9g\n", e.epoch, e.val_total,
                          e.val_recon, e.val_kl);
            out += buf;
        }
    }
    return out;
}

Checkpoint pack_train_checkpoint(const DeprojNet& net, const TrainResult& result,
                                 std::uint64_t seed) {
    net.validate(result.params);
    Checkpoint ck;
    for (const auto& [name, t] : result.params.tensors) ck.add("param/" + name, t);
    for (std::size_t i = 0; i < result.params.tensors.size(); ++i) {
        ck.add("adam/m/" + result.params.tensors[i].first, result.adam.m[i]);
        ck.add("adam/v/" + result.params.tensors[i].first, result.adam.v[i]);
    }
    if (!result.history.empty()) {
        int e = static_cast<int>(result.history.size());
        Tensor tr({e, 4}), va({e, 4});
        bool any_val = false;
        for (int i = 0; i < e; ++i) {
            const EpochStats& s = result.history[static_cast<std::size_t>(i)];
            tr[i * 4 + 0] = static_cast<float>(s.epoch);
            tr[i * 4 + 1] = static_cast<float>(s.train_total);
            tr[i * 4 + 2] = static_cast<float>(s.train_recon);
            tr[i * 4 + 3] = static_cast<float>(s.train_kl);
            va[i * 4 + 0] = static_cast<float>(s.epoch);
            va[i * 4 + 1] = static_cast<float>(s.val_total);
            va[i * 4 + 2] = static_cast<float>(s.val_recon);
            va[i * 4 + 3] = static_cast<float>(s.val_kl);
            any_val = any_val || s.has_val;
        }
        ck.add("history/train", tr);
        if (any_val) ck.add("history/val", va);
    }
    ck.set_meta("kind", "model");
    ck.set_meta("model", net.config().canonical());
    ck.set_meta("seed", std::to_string(seed));
    ck.set_meta("adam_step", std::to_string(result.adam.step));
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(result.adam.cfg.lr));
    ck.set_meta("adam_lr", buf);
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(result.adam.cfg.beta1));
    ck.set_meta("adam_beta1", buf);
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(result.adam.cfg.beta2));
    ck.set_meta("adam_beta2", buf);
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(result.adam.cfg.eps));
    ck.set_meta("adam_eps", buf);
    return ck;
}

TrainResult unpack_train_checkpoint(const DeprojNet& net, const Checkpoint& ck) {
    if (!ck.has_meta("kind") || ck.meta("kind") != "model")
        throw Error("checkpoint does not hold a model");
    if (!ck.has_meta("model") || ck.meta("model") != net.config().canonical())
        throw Error("checkpoint was written for a different model configuration");

    TrainResult res;
    for (const auto& [name, shape] : net.param_specs()) {
        res.params.tensors.emplace_back(name, ck.at("param/" + name));
    }
    net.validate(res.params);

    res.adam.cfg.lr = std::strtof(ck.meta("adam_lr").c_str(), nullptr);
    res.adam.cfg.beta1 = std::strtof(ck.meta("adam_beta1").c_str(), nullptr);
    res.adam.cfg.beta2 = std::strtof(ck.meta("adam_beta2").c_str(), nullptr);
    res.adam.cfg.eps = std::strtof(ck.meta("adam_eps").c_str(), nullptr);
    res.adam.step = std::strtoll(ck.meta("adam_step").c_str(), nullptr, 10);
    for (const auto& [name, shape] : net.param_specs()) {
        res.adam.m.push_back(ck.at("adam/m/" + name));
        res.adam.v.push_back(ck.at("adam/v/" + name));
        if (res.adam.m.back().shape() != shape || res.adam.v.back().shape() != shape)
            throw Error("optimizer moment shape mismatch for '" + name + "'");
    }

    if (ck.has("history/train")) {
        const Tensor& tr = ck.at("history/train");
        if (tr.rank() != 2 || tr.extent(1) != 4)
            throw Error("history table must have shape [epochs,4], got " +
                        shape_str(tr.shape()));
        bool has_val = ck.has("history/val");
        const Tensor* va = has_val ? &ck.at("history/val") : nullptr;
        if (va && !va->same_shape(tr))
            throw Error("history tables disagree in shape");
        for (int i = 0; i < tr.extent(0); ++i) {
            EpochStats s;
            s.epoch = static_cast<int>(tr[i * 4 + 0]);
            s.train_total = tr[i * 4 + 1];
            s.train_recon = tr[i * 4 + 2];
            s.train_kl = tr[i * 4 + 3];
            if (va) {
                s.has_val = true;
                s.val_total = (*va)[i * 4 + 1];
                s.val_recon = (*va)[i * 4 + 2];
                s.val_kl = (*va)[i * 4 + 3];
            }
            res.history.push_back(s);
        }
    }
    return res;
}

} // namespace deproj
