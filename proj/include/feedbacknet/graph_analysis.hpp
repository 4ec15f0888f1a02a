#pragma once

#include <vector>

#include "feedbacknet/common.hpp"

namespace fbnet {

/// Critical-path model of an unrolled feedback network: m temporal
/// iterations over physical depth n with gate stacks of length s, measured
/// in abstract per-layer time units.
struct GraphSpec {
    int iterations = 4;   // m
    int physical_depth = 12; // n
    int stack_length = 3; // s
    double layer_time = 1.0; // T, time per conv layer

    void validate() const {
        if (iterations < 1 || physical_depth < 1 || stack_length < 1)
            throw ConfigError("graph spec requires m, n, s >= 1");
        if (physical_depth % stack_length != 0)
            throw ConfigError(detail::concat("stack length ", stack_length,
                                             " must divide physical depth ", physical_depth));
        if (layer_time <= 0) throw ConfigError("layer time must be positive");
    }
};

/// Computation-graph depth of a feedforward network with D layers: D - 1.
inline int depth_feedforward(int depth) {
    if (depth < 1) throw ConfigError("feedforward depth must be >= 1");
    return depth - 1;
}

/// Computation-graph depth of the feedback network: n + s(m-1). Reduces to
/// the Stack-1 form m + n - 1; the general-s form is an extrapolation
/// consistent with the Stack-1 formula and the Stack-3 early-prediction
/// times, not an independently stated result.
inline int depth_feedback(const GraphSpec& spec) {
    spec.validate();
    return spec.physical_depth + spec.stack_length * (spec.iterations - 1);
}

/// Time at which iteration i's prediction becomes computable:
/// t_i = (n + s*i) * T for i = 0..m-1.
inline std::vector<double> availability_times(const GraphSpec& spec) {
    spec.validate();
    std::vector<double> out;
    for (int i = 0; i < spec.iterations; ++i)
        out.push_back((spec.physical_depth + static_cast<double>(spec.stack_length) * i) * spec.layer_time);
    return out;
}

/// Depth of the feedforward network that finishes at the same instant as
/// each iteration: the ensemble a feedback network's early predictions
/// compete with.
inline std::vector<int> ensemble_equivalent_depths(const GraphSpec& spec) {
    spec.validate();
    std::vector<int> out;
    for (int i = 0; i < spec.iterations; ++i)
        out.push_back(spec.physical_depth + spec.stack_length * i);
    return out;
}

} // namespace fbnet
