#pragma once

#include <algorithm>
#include <string>

#include "feedbacknet/network.hpp"
#include "feedbacknet/taxonomy.hpp"

namespace fbnet {

/// Direction of the episodic loss schedule. CoarseToFine puts the coarse
/// weight high at early iterations and decays it to zero by iteration k,
/// matching easy-to-hard training over the episodes of one query.
/// LiteralEq6 is the printed zeta = t/k ramp, which moves weight toward the
/// coarse loss instead; it is kept selectable for fidelity.
enum class CurriculumDirection { CoarseToFine, LiteralEq6 };

struct CurriculumSchedule {
    int k = 2; // end iteration of the decay
    CurriculumDirection direction = CurriculumDirection::CoarseToFine;
    int iterations = 4; // T

    void validate() const {
        if (k < 1 || k > iterations)
            throw ConfigError(detail::concat("curriculum k must be in [1,", iterations, "], got ", k));
    }
};

/// Coarse-loss weight at iteration t (1-based).
inline double zeta(const CurriculumSchedule& s, int t) {
    if (t < 1 || t > s.iterations)
        throw IndexError(detail::concat("zeta: iteration ", t, " outside [1,", s.iterations, "]"));
    const double kd = static_cast<double>(s.k);
    if (s.direction == CurriculumDirection::CoarseToFine)
        return std::max(0.0, (kd - t) / kd);
    return std::min(1.0, t / kd);
}

/// Episodic curriculum loss:
///   sum_t gamma^t [ zeta(t) * Lcoarse_t + (1 - zeta(t)) * Lfine_t ]
/// with the coarse loss taken through the taxonomy projection of the same
/// per-iteration logits.
template <typename S>
TensorT<S> episodic_loss(const IterationTraceT<S>& trace, const std::vector<int>& fine_targets,
                         const std::vector<int>& coarse_targets, const Taxonomy& tax,
                         const CurriculumSchedule& schedule, double gamma) {
    schedule.validate();
    const int T = static_cast<int>(trace.logits.size());
    if (T != schedule.iterations)
        throw ContractError(detail::concat("episodic_loss: trace has ", T, " iterations, schedule has ",
                                           schedule.iterations));
    TensorT<S> acc;
    double w = 1.0;
    for (int t = 1; t <= T; ++t) {
        w *= gamma;
        const double z = zeta(schedule, t);
        TensorT<S> fine = softmax_cross_entropy(trace.logits[t - 1], fine_targets);
        TensorT<S> term;
        if (z == 0.0) {
            term = scale(fine, w);
        } else {
            TensorT<S> coarse = coarse_cross_entropy(trace.logits[t - 1], coarse_targets, tax);
            term = add(scale(coarse, w * z), scale(fine, w * (1.0 - z)));
        }
        acc = acc.defined() ? add(acc, term) : term;
    }
    return acc;
}

} // namespace fbnet
