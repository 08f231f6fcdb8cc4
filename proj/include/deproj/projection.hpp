#pragma once

#include <vector>

#include "deproj/autodiff.hpp"
#include "deproj/tensor.hpp"

// Collapse of one tensor axis by a known weighted sum. Empty weights mean
// a uniform average (each weight 1/extent), which is how frame stacks are
// flattened into a single long-exposure image.

namespace deproj {

struct ProjectionSpec {
    int axis = 0;
    std::vector<float> weights; // empty -> uniform 1/extent
};

// Weights actually applied for an axis of the given extent.
std::vector<float> resolve_weights(const ProjectionSpec& spec, int extent);

// Applies the projection to a plain tensor; spec.axis indexes x's shape.
Tensor project(const Tensor& x, const ProjectionSpec& spec);

// y_flat = M x_flat for the flattened input/output; M is [out_size, in_size].
Tensor projection_matrix(const ProjectionSpec& spec, const std::vector<int>& in_shape);

// Tape version; axis_offset shifts spec.axis (use 1 for batched tensors).
template <typename T>
NodeId project_node(TapeT<T>& t, NodeId x, const ProjectionSpec& spec, int axis_offset = 0) {
    int axis = spec.axis + axis_offset;
    const auto& xs = t.val(x).shape();
    if (axis < 0 || axis >= static_cast<int>(xs.size()))
        throw Error("projection axis " + std::to_string(spec.axis) + " out of range for " +
                    shape_str(xs));
    std::vector<float> wf = resolve_weights(spec, xs[static_cast<std::size_t>(axis)]);
    std::vector<T> w(wf.begin(), wf.end());
    return ops::project(t, x, axis, w);
}

} // namespace deproj
