// Command-line front end for the deprojection toolkit.  A run is a
// subcommand plus a text config file; flags override config values.
// Artifacts all land under --out, and a fixed (command, config, seed)
// triple reproduces them byte for byte in single-threaded mode.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.  Failures
// print one machine-parseable line: "error: <code>: <detail>".

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "deproj/baselines.hpp"
#include "deproj/checkpoint.hpp"
#include "deproj/config.hpp"
#include "deproj/data.hpp"
#include "deproj/eval.hpp"
#include "deproj/kernels.hpp"
#include "deproj/model.hpp"
#include "deproj/projection.hpp"
#include "deproj/tensor.hpp"
#include "deproj/trainer.hpp"

namespace {

using namespace deproj;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string command;
    std::string config_path;
    std::string out = ".";
    std::string checkpoint; // input artifact override (model or dataset file)
    std::string method;     // overrides eval.method
    std::string k_list;     // overrides eval.k_list, e.g. "1,2,5"
    std::string kernels;    // force a compute backend
    std::uint64_t seed = 0;
    int threads = 1;
};

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

std::vector<int> parse_k_list(const std::string& text) {
    std::vector<int> ks;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = text.find(',', pos);
        std::string item = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            ks.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("--k-list expects comma-separated integers, got '" + text + "'");
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return ks;
}

RunConfig apply_overrides(RunConfig cfg, const Options& opt) {
    if (!opt.method.empty()) cfg.eval_method = opt.method;
    if (!opt.k_list.empty()) cfg.eval_k_list = parse_k_list(opt.k_list);
    return cfg;
}

ModelConfig model_config(const RunConfig& cfg, const std::vector<int>& signal_shape) {
    ModelConfig mc;
    mc.signal_shape = signal_shape;
    mc.projection.axis = cfg.model_axis;
    mc.latent_dim = cfg.model_latent_dim;
    mc.enc_channels = cfg.model_enc_channels;
    mc.dec_channels = cfg.model_dec_channels;
    mc.expand_features = cfg.model_expand_features;
    mc.leaky_slope = static_cast<float>(cfg.model_leaky_slope);
    mc.beta = static_cast<float>(cfg.model_beta);
    mc.use_latent = cfg.model_latent != 0;
    return mc;
}

TrainConfig train_config(const RunConfig& cfg, const Options& opt) {
    TrainConfig tc;
    tc.batch_size = cfg.train_batch_size;
    tc.epochs = cfg.train_epochs;
    tc.max_steps = cfg.train_max_steps;
    tc.adam.lr = static_cast<float>(cfg.train_lr);
    tc.beta = cfg.model_beta;
    tc.threads = opt.threads;
    return tc;
}

// Pair noise/jitter streams are decorrelated across splits by seed offset:
// train uses the run seed, validation seed+1, test seed+2.
PairSet pairs_for(const ClipDataset& ds, const RunConfig& cfg, std::uint64_t seed) {
    ProjectionSpec spec;
    spec.axis = cfg.model_axis;
    return make_pairs(ds, spec, static_cast<float>(cfg.data_noise_sigma), seed,
                      cfg.data_translate != 0);
}

ClipDataset load_split(const Options& opt, const char* name) {
    return load_dataset(join(opt.out, name));
}

void write_text(const std::string& path, const std::string& text, const char* what) {
    std::ofstream out(path, std::ios::binary);
    if (out) out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(std::string("cannot write ") + what + " '" + path + "'");
}

int montage_count(const RunConfig& cfg, std::size_t available, const char* what) {
    if (cfg.eval_montage_examples < 1)
        throw Error("eval.montage_examples must be >= 1, got " +
                    std::to_string(cfg.eval_montage_examples));
    if (available == 0) throw Error(std::string(what) + " is empty");
    return static_cast<int>(std::min<std::size_t>(
        available, static_cast<std::size_t>(cfg.eval_montage_examples)));
}

// Assets backing one reconstruction method; keeps everything the
// EvalMethod points at alive for the duration of a command.
struct MethodAssets {
    std::unique_ptr<DeprojNet> net;
    ModelParams params;
    PairSet train;
    LinearGaussianModel lmmse;
    EvalMethod method;
};

void attach_method(MethodAssets& a, const Options& opt, const RunConfig& cfg,
                   const std::string& name, const std::vector<int>& signal_shape) {
    a.method.name = name;
    if (name == "cvae" || name == "det") {
        a.net = std::make_unique<DeprojNet>(model_config(cfg, signal_shape));
        std::string path = opt.checkpoint.empty() ? join(opt.out, "model.dpjk") : opt.checkpoint;
        TrainResult res = unpack_train_checkpoint(*a.net, load_checkpoint(path));
        a.params = std::move(res.params);
        a.method.net = a.net.get();
        a.method.params = &a.params;
    } else if (name == "knn") {
        a.train = pairs_for(load_split(opt, "data_train.dpjk"), cfg, opt.seed);
        a.method.train = &a.train;
    } else if (name == "lmmse") {
        PairSet tr = pairs_for(load_split(opt, "data_train.dpjk"), cfg, opt.seed);
        a.lmmse = lmmse_fit(tr, cfg.eval_ridge);
        a.method.lmmse = &a.lmmse;
    } else {
        throw Error("unknown method '" + name + "'");
    }
}

void print_epoch(const EpochStats& e, int total) {
    std::printf("epoch %d/%d train total %.6f recon %.6f kl %.6f", e.epoch, total,
                e.train_total, e.train_recon, e.train_kl);
    if (e.has_val)
        std::printf(" | val total %.6f recon %.6f kl %.6f", e.val_total, e.val_recon, e.val_kl);
    std::printf("\n");
}

void print_curve(const EvalCurve& curve) {
    for (const EvalRow& r : curve.rows)
        std::printf("k %d best_signal %.6f reprojection %.6f\n", r.k, r.best_signal_psnr,
                    r.mean_reprojection_psnr);
}

void cmd_synth(const Options& opt, const RunConfig& cfg) {
    ClipDataset ds;
    if (cfg.data_source == "synth") {
        SynthConfig sc;
        sc.clip_count = cfg.data_clips;
        sc.digits = cfg.data_digits;
        sc.frames = cfg.data_frames;
        sc.height = cfg.data_height;
        sc.width = cfg.data_width;
        sc.min_speed = cfg.data_min_speed;
        sc.max_speed = cfg.data_max_speed;
        sc.seed = opt.seed;
        ds = synth_moving_digits(builtin_glyphs(), sc);
    } else if (cfg.data_source == "idx") {
        if (cfg.data_idx_path.empty())
            throw Error("data.source=idx requires data.idx_path");
        Tensor all = read_idx_file(cfg.data_idx_path);
        if (all.shape().size() != 3)
            throw Error("idx data must have shape [count,rows,cols], got " +
                        shape_str(all.shape()));
        int count = all.shape()[0];
        if (cfg.data_clips < 1 || cfg.data_clips > count)
            throw Error("data.clips must lie in [1, " + std::to_string(count) + "] for '" +
                        cfg.data_idx_path + "', got " + std::to_string(cfg.data_clips));
        int h = all.shape()[1], w = all.shape()[2];
        std::int64_t px = static_cast<std::int64_t>(h) * w;
        for (int i = 0; i < cfg.data_clips; ++i) {
            Tensor still({1, h, w});
            const float* src = all.data() + i * px;
            std::copy(src, src + px, still.data());
            ds.clips.push_back(std::move(still));
        }
        ds.seed = opt.seed;
    } else {
        throw Error("data.source must be 'synth' or 'idx', got '" + cfg.data_source + "'");
    }
    ds.config_hash = config_hash(cfg);

    double train_ratio = 1.0 - cfg.data_val_ratio - cfg.data_test_ratio;
    SplitResult sp = split(ds, train_ratio, cfg.data_val_ratio, cfg.data_test_ratio, opt.seed);
    save_dataset(sp.train, join(opt.out, "data_train.dpjk"));
    save_dataset(sp.val, join(opt.out, "data_val.dpjk"));
    save_dataset(sp.test, join(opt.out, "data_test.dpjk"));
    std::printf("synth: %zu clips (%zu train, %zu val, %zu test) -> %s\n", ds.clips.size(),
                sp.train.clips.size(), sp.val.clips.size(), sp.test.clips.size(),
                opt.out.c_str());
}

void cmd_train(const Options& opt, const RunConfig& cfg) {
    ClipDataset dtr = load_split(opt, "data_train.dpjk");
    ClipDataset dva = load_split(opt, "data_val.dpjk");
    if (dtr.clips.empty()) throw Error("training dataset is empty");
    PairSet ptr = pairs_for(dtr, cfg, opt.seed);
    PairSet pva = pairs_for(dva, cfg, opt.seed + 1);

    DeprojNet net(model_config(cfg, dtr.clips[0].shape()));
    TrainConfig tc = train_config(cfg, opt);
    TrainResult res = train(net, tc, ptr, pva, opt.seed,
                            [&](const TrainResult& r) { print_epoch(r.history.back(), tc.epochs); });

    Checkpoint ck = pack_train_checkpoint(net, res, opt.seed);
    ck.set_meta("config_hash", config_hash(cfg));
    std::string model_path = join(opt.out, "model.dpjk");
    save_checkpoint(ck, model_path);
    write_text(join(opt.out, "history.csv"), history_csv(res.history), "history");
    std::printf("train: %zu pairs, %zu epochs -> %s\n", ptr.pairs.size(), res.history.size(),
                model_path.c_str());
}

void cmd_tune_beta(const Options& opt, const RunConfig& cfg) {
    ClipDataset dtr = load_split(opt, "data_train.dpjk");
    ClipDataset dva = load_split(opt, "data_val.dpjk");
    if (dtr.clips.empty()) throw Error("training dataset is empty");
    PairSet ptr = pairs_for(dtr, cfg, opt.seed);
    PairSet pva = pairs_for(dva, cfg, opt.seed + 1);

    DeprojNet net(model_config(cfg, dtr.clips[0].shape()));
    BetaTuneConfig bc;
    bc.train = train_config(cfg, opt);
    bc.probe_steps = cfg.train_probe_steps;
    bc.band_lo = cfg.train_band_lo;
    bc.band_hi = cfg.train_band_hi;
    BetaResult r = tune_beta(net, bc, ptr, pva, opt.seed);

    for (const BetaProbe& p : r.trace)
        std::printf("probe beta %.9g divergence %.6f\n", p.beta, p.val_kl);
    if (r.in_band)
        std::printf("beta %.9g lands in divergence band [%g, %g]\n", r.beta, bc.band_lo,
                    bc.band_hi);
    else
        std::printf("warning: divergence band [%g, %g] unreachable; closest beta %.9g\n",
                    bc.band_lo, bc.band_hi, r.beta);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g\n", r.beta);
    write_text(join(opt.out, "beta.txt"), buf, "tuning result");
}

void cmd_sample(const Options& opt, const RunConfig& cfg) {
    ClipDataset dte = load_split(opt, "data_test.dpjk");
    PairSet pte = pairs_for(dte, cfg, opt.seed + 2);
    int n = montage_count(cfg, pte.pairs.size(), "test dataset");
    int k = cfg.eval_k_list.back();

    MethodAssets a;
    attach_method(a, opt, cfg, cfg.eval_method, dte.clips[0].shape());

    // One row block per example: the true signal, then its k candidates.
    std::vector<Tensor> rows;
    for (int i = 0; i < n; ++i) {
        rows.push_back(pte.pairs[i].y);
        std::vector<Tensor> cands = draw_candidates(a.method, pte.pairs[i].x, k, opt.seed, i);
        for (Tensor& c : cands) rows.push_back(std::move(c));
    }
    std::string path = join(opt.out, "samples.pgm");
    emit_montage(rows, path);
    std::printf("sample %s: %d examples x %d candidates -> %s\n", a.method.name.c_str(), n, k,
                path.c_str());
}

void cmd_eval(const Options& opt, const RunConfig& cfg) {
    ClipDataset dte = load_split(opt, "data_test.dpjk");
    PairSet pte = pairs_for(dte, cfg, opt.seed + 2);
    if (pte.pairs.empty()) throw Error("test dataset is empty");

    MethodAssets a;
    attach_method(a, opt, cfg, cfg.eval_method, dte.clips[0].shape());
    EvalCurve curve = best_of_k(a.method, pte, cfg.eval_k_list, opt.seed, opt.threads);
    print_curve(curve);
    std::string csv_path = join(opt.out, "curve_" + a.method.name + ".csv");
    emit_csv(curve, csv_path);

    // Montage: truth plus the first few scored candidates per example.
    int n = montage_count(cfg, pte.pairs.size(), "test dataset");
    int kshow = std::min(3, cfg.eval_k_list.back());
    std::vector<Tensor> rows;
    for (int i = 0; i < n; ++i) {
        rows.push_back(pte.pairs[i].y);
        std::vector<Tensor> cands = draw_candidates(a.method, pte.pairs[i].x, kshow, opt.seed, i);
        for (Tensor& c : cands) rows.push_back(std::move(c));
    }
    std::string pgm_path = join(opt.out, "montage_" + a.method.name + ".pgm");
    emit_montage(rows, pgm_path);
    std::printf("eval %s: %zu test pairs -> %s, %s\n", a.method.name.c_str(), pte.pairs.size(),
                csv_path.c_str(), pgm_path.c_str());
}

void cmd_baseline_lmmse(const Options& opt, const RunConfig& cfg) {
    PairSet ptr = pairs_for(load_split(opt, "data_train.dpjk"), cfg, opt.seed);
    PairSet pte = pairs_for(load_split(opt, "data_test.dpjk"), cfg, opt.seed + 2);
    LinearGaussianModel lm = lmmse_fit(ptr, cfg.eval_ridge);
    std::string model_path = join(opt.out, "lmmse.dpjk");
    save_checkpoint(pack_lmmse_checkpoint(lm), model_path);

    EvalMethod m;
    m.name = "lmmse";
    m.lmmse = &lm;
    EvalCurve curve = best_of_k(m, pte, cfg.eval_k_list, opt.seed, opt.threads);
    print_curve(curve);
    emit_csv(curve, join(opt.out, "curve_lmmse.csv"));
    std::printf("lmmse: fit rank %d on %zu pairs -> %s\n", lm.factor.shape()[1],
                ptr.pairs.size(), model_path.c_str());
}

void cmd_baseline_knn(const Options& opt, const RunConfig& cfg) {
    PairSet ptr = pairs_for(load_split(opt, "data_train.dpjk"), cfg, opt.seed);
    PairSet pte = pairs_for(load_split(opt, "data_test.dpjk"), cfg, opt.seed + 2);
    EvalMethod m;
    m.name = "knn";
    m.train = &ptr;
    EvalCurve curve = best_of_k(m, pte, cfg.eval_k_list, opt.seed, opt.threads);
    print_curve(curve);
    std::string csv_path = join(opt.out, "curve_knn.csv");
    emit_csv(curve, csv_path);
    std::printf("knn: %zu stored pairs -> %s\n", ptr.pairs.size(), csv_path.c_str());
}

void cmd_montage(const Options& opt, const RunConfig& cfg) {
    std::string src = opt.checkpoint.empty() ? join(opt.out, "data_test.dpjk") : opt.checkpoint;
    ClipDataset ds = load_dataset(src);
    int n = montage_count(cfg, ds.clips.size(), "dataset");
    std::vector<Tensor> rows(ds.clips.begin(), ds.clips.begin() + n);
    std::string path = join(opt.out, "montage.pgm");
    emit_montage(rows, path);
    std::printf("montage: %d clips from %s -> %s\n", n, src.c_str(), path.c_str());
}

void dispatch(const Options& opt, const RunConfig& cfg) {
    if (opt.command == "synth") return cmd_synth(opt, cfg);
    if (opt.command == "train") return cmd_train(opt, cfg);
    if (opt.command == "tune-beta") return cmd_tune_beta(opt, cfg);
    if (opt.command == "sample") return cmd_sample(opt, cfg);
    if (opt.command == "eval") return cmd_eval(opt, cfg);
    if (opt.command == "baseline-lmmse") return cmd_baseline_lmmse(opt, cfg);
    if (opt.command == "baseline-knn") return cmd_baseline_knn(opt, cfg);
    cmd_montage(opt, cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visual deprojection: synthesis, training, and evaluation"};
    app.require_subcommand(1);

    Options opt;
    const std::pair<const char*, const char*> commands[] = {
        {"synth", "synthesize or ingest clips and write train/val/test datasets"},
        {"train", "train the deprojection network on the prepared datasets"},
        {"tune-beta", "search the divergence weight for the configured band"},
        {"sample", "render truth and sampled reconstructions for test examples"},
        {"eval", "score best-of-k reconstruction curves on the test set"},
        {"baseline-lmmse", "fit the linear-Gaussian baseline and score it"},
        {"baseline-knn", "score the nearest-neighbor baseline"},
        {"montage", "render dataset clips to a PGM contact sheet"},
    };
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("config", opt.config_path, "config file (key=value lines)")->required();
        sub->add_option("--out", opt.out, "directory for all inputs and outputs (default .)");
        sub->add_option("--seed", opt.seed, "RNG seed (default 0)");
        sub->add_option("--threads", opt.threads, "worker threads (default 1, deterministic)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--checkpoint", opt.checkpoint, "input artifact path override");
        sub->add_option("--method", opt.method, "reconstruction method override")
            ->check(CLI::IsMember({"cvae", "det", "knn", "lmmse"}));
        sub->add_option("--k-list", opt.k_list, "sample counts override, e.g. 1,2,5");
        sub->add_option("--kernels", opt.kernels, "force a compute backend")
            ->check(CLI::IsMember({"scalar", "avx2", "neon"}));
        sub->callback([&opt, name = std::string(name)] { opt.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        std::fputs(app.help().c_str(), stderr);
        return 2;
    }

    if (!opt.kernels.empty()) {
        kernels::Backend b = opt.kernels == "scalar" ? kernels::Backend::scalar
                             : opt.kernels == "avx2" ? kernels::Backend::avx2
                                                     : kernels::Backend::neon;
        if (!kernels::select(b)) {
            std::fprintf(stderr, "error: run: kernel backend '%s' is unavailable on this host\n",
                         opt.kernels.c_str());
            return 1;
        }
    }

    RunConfig cfg;
    try {
        cfg = apply_overrides(load_config(opt.config_path), opt);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: usage: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 1;
    }

    try {
        fs::create_directories(opt.out.empty() ? "." : opt.out);
        dispatch(opt, cfg);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: run: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 0;
}
