#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deproj/autodiff.hpp"
#include "deproj/projection.hpp"
#include "deproj/tensor.hpp"

// Conditional deprojection network. Three sub-networks share one parameter
// set: a posterior encoder over the full signal y (strided convs spanning
// all signal axes), a prior encoder over the projection x (one fewer
// spatial axis), and a UNet-style decoder that rebuilds y from x plus a
// latent draw. A deterministic variant drops the latent branch entirely.

namespace deproj {

struct DiagonalGaussian {
    Tensor mean;
    Tensor log_var; // clamped to [-10, 10] at construction

    DiagonalGaussian(Tensor m, Tensor lv);
    int dim() const { return static_cast<int>(mean.size()); }
};

struct ModelConfig {
    std::vector<int> signal_shape; // unbatched, channel-first; channel must be 1
    ProjectionSpec projection;     // collapsed axis within signal_shape
    int latent_dim = 10;
    std::vector<int> enc_channels{16, 32};
    std::vector<int> dec_channels{32, 16};
    int expand_features = 4; // F: channels carried into the collapsed axis
    float leaky_slope = 0.2f;
    float beta = 1.0f;
    bool use_latent = true; // false: deterministic single-output variant

    int collapse_extent() const; // extent of the collapsed axis (T)
    std::vector<int> x_shape() const;
    std::string canonical() const;
};

struct ModelParams {
    std::vector<std::pair<std::string, Tensor>> tensors;

    bool has(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
};

struct GaussNodes {
    NodeId mean, log_var;
};

struct LossNodes {
    NodeId total, recon;
    NodeId kl; // invalid for the deterministic variant
    NodeId z;  // invalid for the deterministic variant
};

class DeprojNet {
public:
    explicit DeprojNet(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<std::pair<std::string, std::vector<int>>>& param_specs() const {
        return specs_;
    }

    // Uniform +-sqrt(6 / fan_in) weights, zero biases; one stream per tensor.
    ModelParams init_params(std::uint64_t seed) const;
    void validate(const ModelParams& p) const;

    template <typename T>
    struct Graph {
        TapeT<T>* tape = nullptr;
        const DeprojNet* net = nullptr;
        std::vector<NodeId> params; // aligned with param_specs()

        NodeId p(const std::string& name) const {
            return params[static_cast<std::size_t>(net->param_index(name))];
        }
    };

    template <typename T>
    Graph<T> bind(TapeT<T>& tape, const ModelParams& p, bool needs_grad) const {
        validate(p);
        Graph<T> g;
        g.tape = &tape;
        g.net = this;
        g.params.reserve(p.tensors.size());
        for (const auto& [name, t] : p.tensors)
            g.params.push_back(tape.leaf(t.template cast<T>(), needs_grad));
        return g;
    }

    template <typename T>
    GaussNodes posterior(Graph<T>& g, NodeId y) const {
        require_latent("posterior");
        check_batched(*g.tape, y, cfg_.signal_shape, "signal");
        return encoder_head<T>(g, y, "post", static_cast<int>(ysp_.size()));
    }

    template <typename T>
    GaussNodes prior(Graph<T>& g, NodeId x) const {
        require_latent("prior");
        check_batched(*g.tape, x, cfg_.x_shape(), "projection");
        return encoder_head<T>(g, x, "prior", static_cast<int>(xsp_.size()));
    }

    template <typename T>
    NodeId decode(Graph<T>& g, NodeId x, NodeId z = NodeId{}) const {
        TapeT<T>& t = *g.tape;
        check_batched(t, x, cfg_.x_shape(), "projection");
        int B = t.val(x).extent(0);
        int nsx = static_cast<int>(xsp_.size());
        std::vector<int> s1(static_cast<std::size_t>(nsx), 1);
        std::vector<int> s2(static_cast<std::size_t>(nsx), 2);
        std::vector<int> p1(static_cast<std::size_t>(nsx), 1);
        int n = static_cast<int>(cfg_.enc_channels.size());

        std::vector<NodeId> skips;
        NodeId h = x;
        for (int i = 0; i < n; ++i) {
            h = ops::conv(t, h, g.p("dec/enc" + std::to_string(i) + "/w"),
                          g.p("dec/enc" + std::to_string(i) + "/b"), s2, p1);
            h = ops::leaky_relu(t, h, cfg_.leaky_slope);
            skips.push_back(h);
        }
        NodeId cur = h;
        if (cfg_.use_latent) {
            if (!z.valid()) throw Error("decode requires a latent sample");
            const auto& zs = t.val(z).shape();
            if (zs.size() != 2 || zs[0] != B || zs[1] != cfg_.latent_dim)
                throw Error("latent sample must have shape [" + std::to_string(B) + "," +
                            std::to_string(cfg_.latent_dim) + "], got " + shape_str(zs));
            NodeId zd = ops::dense(t, z, g.p("dec/z/w"), g.p("dec/z/b"));
            std::vector<int> zshape{B, cfg_.enc_channels.back()};
            for (int e : coarse_) zshape.push_back(e);
            NodeId zmap = ops::reshape(t, zd, zshape);
            cur = ops::concat(t, cur, zmap, 1);
        }
        for (int j = 0; j < n; ++j) {
            cur = ops::conv(t, cur, g.p("dec/up" + std::to_string(j) + "/w"),
                            g.p("dec/up" + std::to_string(j) + "/b"), s1, p1);
            cur = ops::leaky_relu(t, cur, cfg_.leaky_slope);
            cur = ops::upsample_nearest(t, cur, s2);
            NodeId skip = (j < n - 1) ? skips[static_cast<std::size_t>(n - 2 - j)] : x;
            cur = ops::concat(t, cur, skip, 1);
        }
        cur = ops::conv(t, cur, g.p("dec/expand/w"), g.p("dec/expand/b"), s1, p1);
        cur = ops::leaky_relu(t, cur, cfg_.leaky_slope);
        std::vector<int> volume{B, cfg_.expand_features, cfg_.collapse_extent()};
        for (int e : xsp_) volume.push_back(e);
        cur = ops::reshape(t, cur, volume);

        int nsy = static_cast<int>(ysp_.size());
        std::vector<int> rs1(static_cast<std::size_t>(nsy), 1);
        std::vector<int> rp1(static_cast<std::size_t>(nsy), 1);
        cur = ops::conv(t, cur, g.p("dec/refine0/w"), g.p("dec/refine0/b"), rs1, rp1);
        cur = ops::leaky_relu(t, cur, cfg_.leaky_slope);
        cur = ops::conv(t, cur, g.p("dec/refine1/w"), g.p("dec/refine1/b"), rs1, rp1);
        cur = ops::sigmoid(t, cur);
        if (!perm_.empty()) cur = ops::permute(t, cur, perm_);
        return cur;
    }

    template <typename T>
    LossNodes loss(Graph<T>& g, NodeId x, NodeId y, const TensorT<T>& eps,
                   double beta) const {
        TapeT<T>& t = *g.tape;
        check_batched(t, y, cfg_.signal_shape, "signal");
        LossNodes out;
        if (cfg_.use_latent) {
            GaussNodes q = posterior(g, y);
            GaussNodes p = prior(g, x);
            out.z = ops::reparam(t, q.mean, q.log_var, eps);
            NodeId yhat = decode(g, x, out.z);
            out.recon = ops::mse(t, yhat, y);
            out.kl = ops::kl_diag(t, q.mean, q.log_var, p.mean, p.log_var);
            out.total = ops::add(t, out.recon, ops::scale(t, out.kl, beta));
        } else {
            NodeId yhat = decode(g, x);
            out.recon = ops::mse(t, yhat, y);
            out.total = out.recon;
        }
        return out;
    }

    // Single-example eager wrappers (unbatched tensors in and out).
    DiagonalGaussian posterior_encode(const ModelParams& p, const Tensor& y) const;
    DiagonalGaussian prior_encode(const ModelParams& p, const Tensor& x) const;
    Tensor deproject(const ModelParams& p, const Tensor& x, const Tensor& z) const;
    Tensor deproject_det(const ModelParams& p, const Tensor& x) const;
    static Tensor reparam_sample(const DiagonalGaussian& gauss, const Tensor& eps);

    int param_index(const std::string& name) const;

private:
    template <typename T>
    GaussNodes encoder_head(Graph<T>& g, NodeId input, const std::string& prefix,
                            int nsp) const {
        TapeT<T>& t = *g.tape;
        std::vector<int> s2(static_cast<std::size_t>(nsp), 2);
        std::vector<int> p1(static_cast<std::size_t>(nsp), 1);
        NodeId h = input;
        for (std::size_t i = 0; i < cfg_.enc_channels.size(); ++i) {
            h = ops::conv(t, h, g.p(prefix + "/conv" + std::to_string(i) + "/w"),
                          g.p(prefix + "/conv" + std::to_string(i) + "/b"), s2, p1);
            h = ops::leaky_relu(t, h, cfg_.leaky_slope);
        }
        NodeId flat = ops::flatten(t, h);
        GaussNodes out;
        out.mean = ops::dense(t, flat, g.p(prefix + "/mu/w"), g.p(prefix + "/mu/b"));
        out.log_var = ops::clamp(
            t, ops::dense(t, flat, g.p(prefix + "/lv/w"), g.p(prefix + "/lv/b")), -10.0,
            10.0);
        return out;
    }

    template <typename T>
    void check_batched(const TapeT<T>& t, NodeId id, const std::vector<int>& expect,
                       const char* what) const {
        const auto& s = t.val(id).shape();
        bool ok = s.size() == expect.size() + 1;
        for (std::size_t i = 0; ok && i < expect.size(); ++i) ok = s[i + 1] == expect[i];
        if (!ok)
            throw Error(std::string(what) + " must be batched " + shape_str(expect) +
                        ", got " + shape_str(s));
    }

    void require_latent(const char* what) const {
        if (!cfg_.use_latent)
            throw Error(std::string(what) +
                        " is unavailable: this model has no latent branch");
    }

    ModelConfig cfg_;
    std::vector<std::pair<std::string, std::vector<int>>> specs_;
    std::unordered_map<std::string, int> index_;
    std::vector<int> xsp_;    // projection spatial extents
    std::vector<int> ysp_;    // signal spatial extents, in storage order
    std::vector<int> coarse_; // x extents at the coarsest level
    std::vector<int> perm_;   // applied when the collapsed axis is not first
};

} // namespace deproj
