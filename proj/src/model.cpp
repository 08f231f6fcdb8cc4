#include "deproj/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "deproj/rng.hpp"

namespace deproj {

DiagonalGaussian::DiagonalGaussian(Tensor m, Tensor lv)
    : mean(std::move(m)), log_var(std::move(lv)) {
    if (!mean.same_shape(log_var))
        throw Error("mean shape " + shape_str(mean.shape()) + " != log_var shape " +
                    shape_str(log_var.shape()));
    for (float& v : log_var.vec()) v = std::clamp(v, -10.0f, 10.0f);
}

int ModelConfig::collapse_extent() const {
    return signal_shape[static_cast<std::size_t>(projection.axis)];
}

std::vector<int> ModelConfig::x_shape() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < signal_shape.size(); ++i)
        if (static_cast<int>(i) != projection.axis) out.push_back(signal_shape[i]);
    return out;
}

namespace {

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += '|';
        s += std::to_string(v[i]);
    }
    return s;
}

} // namespace

std::string ModelConfig::canonical() const {
    char buf[64];
    std::string s;
    s += "signal=" + join(signal_shape);
    s += ",axis=" + std::to_string(projection.axis);
    s += ",latent=" + std::to_string(latent_dim);
    s += ",enc=" + join(enc_channels);
    s += ",dec=" + join(dec_channels);
    s += ",features=" + std::to_string(expand_features);
    std::snprintf(buf, sizeof buf, ",slope=%.9g", static_cast<double>(leaky_slope));
    s += buf;
    std::snprintf(buf, sizeof buf, ",beta=%.9g", static_cast<double>(beta));
    s += buf;
    s += ",latent_branch=" + std::string(use_latent ? "1" : "0");
    return s;
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw Error("no parameter named '" + name + "'");
}

Tensor& ModelParams::at(const std::string& name) {
    for (auto& [n, t] : tensors)
        if (n == name) return t;
    throw Error("no parameter named '" + name + "'");
}

namespace {

int ceil_half(int v) { return (v + 1) / 2; }

std::vector<int> conv_kernel(int out_ch, int in_ch, int nsp) {
    std::vector<int> s{out_ch, in_ch};
    for (int i = 0; i < nsp; ++i) s.push_back(3);
    return s;
}

} // namespace

DeprojNet::DeprojNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
    const auto& sig = cfg_.signal_shape;
    if (sig.size() < 3 || sig.size() > 4)
        throw Error("signal shape must have rank 3 or 4, got " + shape_str(sig));
    for (int e : sig)
        if (e < 1) throw Error("signal shape " + shape_str(sig) + " has extent < 1");
    if (sig[0] != 1)
        throw Error("signal must have one channel, got " + std::to_string(sig[0]));
    if (cfg_.projection.axis < 1 || cfg_.projection.axis >= static_cast<int>(sig.size()))
        throw Error("collapsed axis " + std::to_string(cfg_.projection.axis) +
                    " must name a spatial axis of " + shape_str(sig));
    if (cfg_.latent_dim < 1) throw Error("latent dimension must be >= 1");
    if (cfg_.expand_features < 1) throw Error("expand features must be >= 1");
    if (cfg_.enc_channels.empty())
        throw Error("encoder channel list must not be empty");
    if (cfg_.enc_channels.size() != cfg_.dec_channels.size())
        throw Error("encoder and decoder ladders must have the same depth, got " +
                    std::to_string(cfg_.enc_channels.size()) + " and " +
                    std::to_string(cfg_.dec_channels.size()));
    for (int c : cfg_.enc_channels)
        if (c < 1) throw Error("encoder channels must be >= 1");
    for (int c : cfg_.dec_channels)
        if (c < 1) throw Error("decoder channels must be >= 1");
    if (!(cfg_.leaky_slope >= 0.0f && cfg_.leaky_slope < 1.0f))
        throw Error("leaky slope must lie in [0, 1)");

    ysp_.assign(sig.begin() + 1, sig.end());
    auto xs = cfg_.x_shape();
    xsp_.assign(xs.begin() + 1, xs.end());

    int n = static_cast<int>(cfg_.enc_channels.size());
    int scale = 1 << n;
    coarse_.clear();
    for (int e : xsp_) {
        if (e % scale != 0)
            throw Error("projection extent " + std::to_string(e) +
                        " must be divisible by " + std::to_string(scale) +
                        " (one halving per ladder level)");
        coarse_.push_back(e / scale);
    }

    // The decoder emits the rebuilt axis right after the channel axis; when
    // the collapsed axis is a later one, a permutation restores signal order.
    perm_.clear();
    if (cfg_.projection.axis != 1) {
        perm_ = {0, 1};
        int src = 3;
        for (int d = 1; d < static_cast<int>(sig.size()); ++d)
            perm_.push_back(d == cfg_.projection.axis ? 2 : src++);
    }

    int nsx = static_cast<int>(xsp_.size());
    int nsy = static_cast<int>(ysp_.size());
    auto add = [&](const std::string& name, std::vector<int> shape) {
        index_.emplace(name, static_cast<int>(specs_.size()));
        specs_.emplace_back(name, std::move(shape));
    };
    auto add_encoder = [&](const std::string& prefix, const std::vector<int>& spatial) {
        int in_ch = 1;
        std::vector<int> sp = spatial;
        for (int i = 0; i < n; ++i) {
            int out_ch = cfg_.enc_channels[static_cast<std::size_t>(i)];
            add(prefix + "/conv" + std::to_string(i) + "/w",
                conv_kernel(out_ch, in_ch, static_cast<int>(spatial.size())));
            add(prefix + "/conv" + std::to_string(i) + "/b", {out_ch});
            for (int& e : sp) e = ceil_half(e);
            in_ch = out_ch;
        }
        int flat = in_ch;
        for (int e : sp) flat *= e;
        add(prefix + "/mu/w", {cfg_.latent_dim, flat});
        add(prefix + "/mu/b", {cfg_.latent_dim});
        add(prefix + "/lv/w", {cfg_.latent_dim, flat});
        add(prefix + "/lv/b", {cfg_.latent_dim});
    };

    if (cfg_.use_latent) {
        add_encoder("post", ysp_);
        add_encoder("prior", xsp_);
    }
    {
        int in_ch = 1;
        for (int i = 0; i < n; ++i) {
            int out_ch = cfg_.enc_channels[static_cast<std::size_t>(i)];
            add("dec/enc" + std::to_string(i) + "/w", conv_kernel(out_ch, in_ch, nsx));
            add("dec/enc" + std::to_string(i) + "/b", {out_ch});
            in_ch = out_ch;
        }
        int coarse_px = 1;
        for (int e : coarse_) coarse_px *= e;
        int zc = cfg_.enc_channels.back();
        if (cfg_.use_latent) {
            add("dec/z/w", {zc * coarse_px, cfg_.latent_dim});
            add("dec/z/b", {zc * coarse_px});
        }
        int cur_ch = cfg_.use_latent ? 2 * zc : zc;
        for (int j = 0; j < n; ++j) {
            int out_ch = cfg_.dec_channels[static_cast<std::size_t>(j)];
            add("dec/up" + std::to_string(j) + "/w", conv_kernel(out_ch, cur_ch, nsx));
            add("dec/up" + std::to_string(j) + "/b", {out_ch});
            int skip_ch =
                (j < n - 1) ? cfg_.enc_channels[static_cast<std::size_t>(n - 2 - j)] : 1;
            cur_ch = out_ch + skip_ch;
        }
        int tf = cfg_.collapse_extent() * cfg_.expand_features;
        add("dec/expand/w", conv_kernel(tf, cur_ch, nsx));
        add("dec/expand/b", {tf});
        add("dec/refine0/w", conv_kernel(cfg_.expand_features, cfg_.expand_features, nsy));
        add("dec/refine0/b", {cfg_.expand_features});
        add("dec/refine1/w", conv_kernel(1, cfg_.expand_features, nsy));
        add("dec/refine1/b", {1});
    }
}

int DeprojNet::param_index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("no parameter named '" + name + "'");
    return it->second;
}

ModelParams DeprojNet::init_params(std::uint64_t seed) const {
    ModelParams out;
    out.tensors.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const auto& [name, shape] = specs_[i];
        Tensor t(shape);
        bool is_weight = name.size() >= 2 && name.compare(name.size() - 2, 2, "/w") == 0;
        if (is_weight) {
            std::size_t fan_in = 1;
            for (std::size_t d = 1; d < shape.size(); ++d)
                fan_in *= static_cast<std::size_t>(shape[d]);
            double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            Rng rng = stream_rng(seed, Stream::init, i);
            for (float& v : t.vec()) v = static_cast<float>(rng.uniform(-bound, bound));
        }
        out.tensors.emplace_back(name, std::move(t));
    }
    return out;
}

void DeprojNet::validate(const ModelParams& p) const {
    if (p.tensors.size() != specs_.size())
        throw Error("expected " + std::to_string(specs_.size()) +
                    " parameter tensors, got " + std::to_string(p.tensors.size()));
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        if (p.tensors[i].first != specs_[i].first)
            throw Error("parameter " + std::to_string(i) + " should be '" +
                        specs_[i].first + "', got '" + p.tensors[i].first + "'");
        if (p.tensors[i].second.shape() != specs_[i].second)
            throw Error("parameter '" + specs_[i].first + "' should have shape " +
                        shape_str(specs_[i].second) + ", got " +
                        shape_str(p.tensors[i].second.shape()));
    }
}

namespace {

Tensor with_batch(const Tensor& t) {
    std::vector<int> s{1};
    for (int e : t.shape()) s.push_back(e);
    return Tensor(s, t.vec());
}

Tensor strip_batch(const Tensor& t) {
    std::vector<int> s(t.shape().begin() + 1, t.shape().end());
    return Tensor(s, t.vec());
}

} // namespace

DiagonalGaussian DeprojNet::posterior_encode(const ModelParams& p, const Tensor& y) const {
    Tape tape;
    auto g = bind(tape, p, false);
    GaussNodes q = posterior(g, tape.leaf(with_batch(y)));
    return DiagonalGaussian(strip_batch(tape.val(q.mean)),
                            strip_batch(tape.val(q.log_var)));
}

DiagonalGaussian DeprojNet::prior_encode(const ModelParams& p, const Tensor& x) const {
    Tape tape;
    auto g = bind(tape, p, false);
    GaussNodes pr = prior(g, tape.leaf(with_batch(x)));
    return DiagonalGaussian(strip_batch(tape.val(pr.mean)),
                            strip_batch(tape.val(pr.log_var)));
}

Tensor DeprojNet::deproject(const ModelParams& p, const Tensor& x, const Tensor& z) const {
    Tape tape;
    auto g = bind(tape, p, false);
    NodeId out = decode(g, tape.leaf(with_batch(x)), tape.leaf(with_batch(z)));
    return strip_batch(tape.val(out));
}

Tensor DeprojNet::deproject_det(const ModelParams& p, const Tensor& x) const {
    Tape tape;
    auto g = bind(tape, p, false);
    NodeId out = decode(g, tape.leaf(with_batch(x)));
    return strip_batch(tape.val(out));
}

Tensor DeprojNet::reparam_sample(const DiagonalGaussian& gauss, const Tensor& eps) {
    if (!eps.same_shape(gauss.mean))
        throw Error("noise shape " + shape_str(eps.shape()) + " != mean shape " +
                    shape_str(gauss.mean.shape()));
    Tensor out(gauss.mean.shape());
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = gauss.mean[i] + std::exp(gauss.log_var[i] / 2.0f) * eps[i];
    return out;
}

} // namespace deproj
