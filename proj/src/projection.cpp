#include "deproj/projection.hpp"

#include "deproj/kernels.hpp"

namespace deproj {

std::vector<float> resolve_weights(const ProjectionSpec& spec, int extent) {
    if (spec.weights.empty())
        return std::vector<float>(static_cast<std::size_t>(extent),
                                  1.0f / static_cast<float>(extent));
    if (static_cast<int>(spec.weights.size()) != extent)
        throw Error("projection weights length " + std::to_string(spec.weights.size()) +
                    " does not match axis extent " + std::to_string(extent));
    return spec.weights;
}

Tensor project(const Tensor& x, const ProjectionSpec& spec) {
    const auto& xs = x.shape();
    if (xs.size() < 2)
        throw Error("projection input must have rank >= 2, got " + shape_str(xs));
    if (spec.axis < 0 || spec.axis >= static_cast<int>(xs.size()))
        throw Error("projection axis " + std::to_string(spec.axis) + " out of range for " +
                    shape_str(xs));
    int d = xs[static_cast<std::size_t>(spec.axis)];
    std::vector<float> w = resolve_weights(spec, d);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < spec.axis; ++i) outer *= xs[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(spec.axis) + 1; i < xs.size(); ++i)
        inner *= xs[i];
    std::vector<int> os;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (static_cast<int>(i) != spec.axis) os.push_back(xs[i]);
    Tensor out(os);
    for (std::int64_t o = 0; o < outer; ++o)
        for (int k = 0; k < d; ++k)
            kernels::axpy(w[static_cast<std::size_t>(k)], x.data() + (o * d + k) * inner,
                          out.data() + o * inner, static_cast<std::size_t>(inner));
    return out;
}

Tensor projection_matrix(const ProjectionSpec& spec, const std::vector<int>& in_shape) {
    if (in_shape.size() < 2)
        throw Error("projection input must have rank >= 2, got " + shape_str(in_shape));
    if (spec.axis < 0 || spec.axis >= static_cast<int>(in_shape.size()))
        throw Error("projection axis " + std::to_string(spec.axis) + " out of range for " +
                    shape_str(in_shape));
    int d = in_shape[static_cast<std::size_t>(spec.axis)];
    std::vector<float> w = resolve_weights(spec, d);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < spec.axis; ++i) outer *= in_shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(spec.axis) + 1; i < in_shape.size(); ++i)
        inner *= in_shape[i];
    std::int64_t in_size = outer * d * inner;
    std::int64_t out_size = outer * inner;
    Tensor m({static_cast<int>(out_size), static_cast<int>(in_size)});
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t j = 0; j < inner; ++j) {
            std::int64_t row = o * inner + j;
            for (int k = 0; k < d; ++k)
                m[row * in_size + (o * d + k) * inner + j] = w[static_cast<std::size_t>(k)];
        }
    return m;
}

} // namespace deproj
