#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "feedbacknet/ops.hpp"
#include "feedbacknet/tensor.hpp"

namespace fbnet {

/// Two-level label hierarchy: every fine class has exactly one coarse
/// parent. The membership matrix M (fine x coarse, one 1 per row) turns a
/// fine probability row into a coarse one by mass summation.
class Taxonomy {
public:
    Taxonomy() = default;

    Taxonomy(int fine_count, int coarse_count, std::vector<int> parent)
        : fine_(fine_count), coarse_(coarse_count), parent_(std::move(parent)) {
        if (static_cast<int>(parent_.size()) != fine_count)
            throw ConfigError(detail::concat("taxonomy parent table has ", parent_.size(),
                                             " entries for ", fine_count, " fine classes"));
        std::vector<int> children(coarse_count, 0);
        for (int i = 0; i < fine_count; ++i) {
            if (parent_[i] < 0 || parent_[i] >= coarse_count)
                throw ConfigError(detail::concat("fine class ", i, " has parent ", parent_[i],
                                                 " outside [0,", coarse_count, ")"));
            children[parent_[i]]++;
        }
        for (int k = 0; k < coarse_count; ++k)
            if (children[k] == 0)
                throw ConfigError(detail::concat("coarse class ", k, " has no children"));
    }

    int fine_count() const { return fine_; }
    int coarse_count() const { return coarse_; }
    int parent(int fine) const {
        if (fine < 0 || fine >= fine_) throw IndexError(detail::concat("fine id ", fine, " out of range"));
        return parent_[fine];
    }
    const std::vector<int>& parents() const { return parent_; }

    /// Dense K x G membership matrix.
    std::vector<float> mapping_matrix() const {
        std::vector<float> m(static_cast<std::size_t>(fine_) * coarse_, 0.f);
        for (int i = 0; i < fine_; ++i) m[static_cast<std::size_t>(i) * coarse_ + parent_[i]] = 1.f;
        return m;
    }

    bool operator==(const Taxonomy& o) const {
        return fine_ == o.fine_ && coarse_ == o.coarse_ && parent_ == o.parent_;
    }

private:
    int fine_ = 0;
    int coarse_ = 0;
    std::vector<int> parent_;
};

/// Parses the taxonomy text format: one `<fine_id> <coarse_id>` pair per
/// line, `#` comments, ids 0-based and contiguous.
inline Taxonomy parse_taxonomy(std::istream& in) {
    std::vector<std::pair<int, int>> pairs;
    std::string line;
    int lineno = 0;
    int max_fine = -1, max_coarse = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::istringstream ls(line);
        long fine, coarse;
        if (!(ls >> fine)) continue; // blank line
        if (!(ls >> coarse))
            throw FormatError(detail::concat("taxonomy line ", lineno, ": expected '<fine> <coarse>'"));
        std::string rest;
        if (ls >> rest)
            throw FormatError(detail::concat("taxonomy line ", lineno, ": trailing token '", rest, "'"));
        if (fine < 0 || coarse < 0)
            throw FormatError(detail::concat("taxonomy line ", lineno, ": ids must be non-negative"));
        pairs.emplace_back(static_cast<int>(fine), static_cast<int>(coarse));
        max_fine = std::max(max_fine, static_cast<int>(fine));
        max_coarse = std::max(max_coarse, static_cast<int>(coarse));
    }
    if (pairs.empty()) throw FormatError("taxonomy file has no entries");
    std::vector<int> parent(max_fine + 1, -1);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto [f, c] = pairs[i];
        if (parent[f] != -1)
            throw FormatError(detail::concat("taxonomy: fine id ", f, " defined twice"));
        parent[f] = c;
    }
    for (int f = 0; f <= max_fine; ++f)
        if (parent[f] == -1) throw FormatError(detail::concat("taxonomy: fine id ", f, " missing (ids must be contiguous)"));
    return Taxonomy(max_fine + 1, max_coarse + 1, std::move(parent));
}

inline Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(detail::concat("cannot open taxonomy file ", path));
    return parse_taxonomy(in);
}

inline void save_taxonomy(const Taxonomy& tax, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError(detail::concat("cannot write taxonomy file ", path));
    for (int f = 0; f < tax.fine_count(); ++f) out << f << ' ' << tax.parent(f) << '\n';
}

/// Aggregates fine probabilities into coarse probabilities by parent
/// summation. Rows must already be normalized.
template <typename S>
TensorT<S> coarse_distribution(const TensorT<S>& fine_probs, const Taxonomy& tax) {
    if (fine_probs.ndim() != 2 || fine_probs.dim(1) != tax.fine_count())
        throw ShapeError(detail::concat("coarse_distribution expects [N,", tax.fine_count(), "], got ",
                                        shape_str(fine_probs.shape())));
    const int N = fine_probs.dim(0), K = tax.fine_count(), G = tax.coarse_count();
    TensorT<S> out = TensorT<S>::zeros({N, G});
    for (int n = 0; n < N; ++n) {
        const S* p = fine_probs.data() + static_cast<std::size_t>(n) * K;
        double mass = 0;
        for (int i = 0; i < K; ++i) mass += p[i];
        if (std::abs(mass - 1.0) > 1e-5)
            throw ContractError(detail::concat("coarse_distribution: row ", n, " sums to ", mass,
                                               ", expected 1 within 1e-5"));
        S* q = out.data() + static_cast<std::size_t>(n) * G;
        for (int i = 0; i < K; ++i) q[tax.parent(i)] += p[i];
    }
    return out;
}

/// Mean over the batch of -log P(coarse target), with the coarse probability
/// defined as the summed softmax mass of the target's children. The backward
/// rule is d/dz_j = p_j - [parent(j) = target] * p_j / P(target), scaled 1/N.
template <typename S>
TensorT<S> coarse_cross_entropy(const TensorT<S>& fine_logits, const std::vector<int>& coarse_targets,
                                const Taxonomy& tax) {
    if (fine_logits.ndim() != 2 || fine_logits.dim(1) != tax.fine_count())
        throw ShapeError(detail::concat("coarse_cross_entropy expects [N,", tax.fine_count(), "], got ",
                                        shape_str(fine_logits.shape())));
    const int N = fine_logits.dim(0), K = tax.fine_count(), G = tax.coarse_count();
    if (static_cast<int>(coarse_targets.size()) != N)
        throw ShapeError(detail::concat("coarse_cross_entropy got ", coarse_targets.size(),
                                        " targets for batch ", N));
    for (int n = 0; n < N; ++n)
        if (coarse_targets[n] < 0 || coarse_targets[n] >= G)
            throw IndexError(detail::concat("coarse target ", coarse_targets[n], " out of range [0,", G,
                                            ") at row ", n));

    std::vector<double> lse(N), logmass(N);
    double total = 0;
    for (int n = 0; n < N; ++n) {
        const S* z = fine_logits.data() + static_cast<std::size_t>(n) * K;
        double m = z[0];
        for (int j = 1; j < K; ++j) m = std::max(m, static_cast<double>(z[j]));
        double s = 0, starget = 0;
        for (int j = 0; j < K; ++j) {
            const double e = std::exp(static_cast<double>(z[j]) - m);
            s += e;
            if (tax.parent(j) == coarse_targets[n]) starget += e;
        }
        lse[n] = m + std::log(s);
        logmass[n] = (m + std::log(starget)) - lse[n]; // log P(coarse target)
        total -= logmass[n];
    }
    TensorT<S> out = TensorT<S>::scalar(static_cast<S>(total / N));
    TapeT<S>* tape = TapeT<S>::active();
    if (tape && fine_logits.requires_grad()) {
        out.set_requires_grad(true);
        TensorT<S> zi = fine_logits, o = out;
        std::vector<int> tg = coarse_targets;
        std::vector<int> parent = tax.parents();
        tape->record(out, [zi, o, tg, parent, lse, logmass, N, K]() mutable {
            const S* gy = o.grad_data();
            if (!gy) return;
            S* gz = zi.grad();
            const double scl = static_cast<double>(gy[0]) / N;
            for (int n = 0; n < N; ++n) {
                const S* z = zi.data() + static_cast<std::size_t>(n) * K;
                S* g = gz + static_cast<std::size_t>(n) * K;
                const double inv_mass = std::exp(-logmass[n]);
                for (int j = 0; j < K; ++j) {
                    const double p = std::exp(static_cast<double>(z[j]) - lse[n]);
                    const double member = (parent[j] == tg[n]) ? p * inv_mass : 0.0;
                    g[j] += static_cast<S>(scl * (p - member));
                }
            }
        });
    }
    return out;
}

/// Taxonomy-compliance metric F(N): among samples whose fine prediction is
/// wrong, the fraction whose predicted class shares the target's parent.
/// Empty conditional support (no fine errors) yields nullopt.
inline std::optional<double> compliance_metric(const std::vector<int>& fine_preds,
                                               const std::vector<int>& fine_targets, const Taxonomy& tax) {
    if (fine_preds.empty()) throw ContractError("compliance_metric on empty input");
    if (fine_preds.size() != fine_targets.size())
        throw ContractError(detail::concat("compliance_metric length mismatch: ", fine_preds.size(), " vs ",
                                           fine_targets.size()));
    long wrong = 0, coarse_ok = 0;
    for (std::size_t i = 0; i < fine_preds.size(); ++i) {
        if (fine_preds[i] == fine_targets[i]) continue;
        ++wrong;
        if (tax.parent(fine_preds[i]) == tax.parent(fine_targets[i])) ++coarse_ok;
    }
    if (wrong == 0) return std::nullopt;
    return static_cast<double>(coarse_ok) / static_cast<double>(wrong);
}

} // namespace fbnet
