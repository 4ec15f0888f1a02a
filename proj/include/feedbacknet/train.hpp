#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "feedbacknet/checkpoint.hpp"
#include "feedbacknet/config.hpp"
#include "feedbacknet/curriculum.hpp"
#include "feedbacknet/dataset.hpp"
#include "feedbacknet/network.hpp"
#include "feedbacknet/optim.hpp"
#include "feedbacknet/taxonomy.hpp"

namespace fbnet {

/// Test-set measurements of one model state.
struct MetricsReport {
    std::vector<double> fine_acc;                  // per iteration, top-1
    std::vector<double> coarse_acc;                // per iteration, coarse argmax of the summed mass
    std::vector<double> coarse_acc_parent;         // per iteration, parent of the fine argmax
    std::vector<std::optional<double>> compliance; // per iteration F(N); nullopt if no fine errors
    double top1 = 0.0;                             // endpoint fine top-1
    double top5 = 0.0;                             // endpoint fine top-5
};

namespace detail {

inline std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < n; at += batch) {
        std::vector<std::size_t> idx;
        for (std::size_t i = at; i < std::min(n, at + batch); ++i) idx.push_back(i);
        out.push_back(std::move(idx));
    }
    return out;
}

} // namespace detail

/// Eval-mode pass over a dataset; fills every per-iteration metric.
inline MetricsReport evaluate(FeedbackNet& net, const Dataset& ds, int batch = 64) {
    if (ds.samples.empty()) throw ContractError("evaluate on empty dataset");
    if (ds.tax.fine_count() != net.spec().num_classes)
        throw ContractError(detail::concat("dataset has ", ds.tax.fine_count(), " fine classes, model expects ",
                                           net.spec().num_classes));
    const int T = net.spec().iterations;
    const int K = net.spec().num_classes;
    std::vector<std::vector<int>> fine_preds(T), coarse_preds(T);
    std::vector<int> fine_targets, coarse_targets;
    long top5_hits = 0;

    for (const auto& idx : detail::batch_indices(ds.size(), batch)) {
        Batch b = make_batch(ds, idx);
        IterationTrace trace = net.forward(b.images, b.fine, Mode::Eval);
        fine_targets.insert(fine_targets.end(), b.fine.begin(), b.fine.end());
        coarse_targets.insert(coarse_targets.end(), b.coarse.begin(), b.coarse.end());
        for (int t = 0; t < T; ++t) {
            const Tensor& logits = trace.logits[t];
            Tensor probs = softmax_probs(logits);
            Tensor coarse = coarse_distribution(probs, ds.tax);
            for (std::size_t n = 0; n < idx.size(); ++n) {
                const float* z = logits.data() + n * K;
                int arg = 0;
                for (int j = 1; j < K; ++j)
                    if (z[j] > z[arg]) arg = j;
                fine_preds[t].push_back(arg);
                const float* cz = coarse.data() + n * ds.tax.coarse_count();
                int carg = 0;
                for (int j = 1; j < ds.tax.coarse_count(); ++j)
                    if (cz[j] > cz[carg]) carg = j;
                coarse_preds[t].push_back(carg);
                if (t == T - 1) {
                    // endpoint top-5
                    const float zt = z[b.fine[n]];
                    int better = 0;
                    for (int j = 0; j < K; ++j)
                        if (z[j] > zt) ++better;
                    if (better < 5) ++top5_hits;
                }
            }
        }
    }

    const double n = static_cast<double>(fine_targets.size());
    MetricsReport rep;
    for (int t = 0; t < T; ++t) {
        long fine_ok = 0, coarse_ok = 0, parent_ok = 0;
        for (std::size_t i = 0; i < fine_targets.size(); ++i) {
            if (fine_preds[t][i] == fine_targets[i]) ++fine_ok;
            if (coarse_preds[t][i] == coarse_targets[i]) ++coarse_ok;
            if (ds.tax.parent(fine_preds[t][i]) == coarse_targets[i]) ++parent_ok;
        }
        rep.fine_acc.push_back(fine_ok / n);
        rep.coarse_acc.push_back(coarse_ok / n);
        rep.coarse_acc_parent.push_back(parent_ok / n);
        rep.compliance.push_back(compliance_metric(fine_preds[t], fine_targets, ds.tax));
    }
    rep.top1 = rep.fine_acc.back();
    rep.top5 = top5_hits / n;
    return rep;
}

// --- checkpoint <-> model state ------------------------------------------

inline Checkpoint snapshot_model(FeedbackNet& net, const Sgd* opt, const TrainConfig& cfg, long long epoch,
                                 std::uint64_t rng_state) {
    Checkpoint cp;
    cp.fingerprint = detail::sha256(net.spec().canonical());
    cp.config_text = cfg.canonical();
    cp.num_classes = net.spec().num_classes;
    cp.epoch = epoch;
    cp.rng_state = rng_state;
    for (auto& p : net.params()) cp.tensors.emplace_back(p.name, p.tensor.clone());
    for (auto& [name, stats] : net.bn_state()) {
        for (std::size_t t = 0; t < stats->size(); ++t) {
            const BnStats<float>& st = (*stats)[t];
            if (!st.initialized()) continue;
            const std::string suffix = ".s" + std::to_string(t);
            cp.tensors.emplace_back(name + ".mean" + suffix,
                                    Tensor::from_data({static_cast<int>(st.mean.size())}, st.mean));
            cp.tensors.emplace_back(name + ".var" + suffix,
                                    Tensor::from_data({static_cast<int>(st.var.size())}, st.var));
            cp.tensors.emplace_back(name + ".count" + suffix,
                                    Tensor::scalar(static_cast<float>(st.batches)));
        }
    }
    if (opt) {
        const auto& ps = opt->params();
        const auto& vs = opt->velocities();
        for (std::size_t i = 0; i < ps.size(); ++i)
            cp.tensors.emplace_back("__opt.v." + ps[i].name,
                                    Tensor::from_data(ps[i].tensor.shape(), vs[i]));
    }
    return cp;
}

inline void restore_model(FeedbackNet& net, Sgd* opt, const Checkpoint& cp) {
    const auto want = detail::sha256(net.spec().canonical());
    if (want != cp.fingerprint)
        throw CheckpointError("architecture fingerprint mismatch: checkpoint was written by a different spec");
    for (auto& p : net.params()) {
        const Tensor* t = cp.find(p.name);
        if (!t) throw CheckpointError(detail::concat("checkpoint is missing tensor '", p.name, "'"));
        if (t->shape() != p.tensor.shape())
            throw CheckpointError(detail::concat("tensor '", p.name, "' has shape ", shape_str(t->shape()),
                                                 ", expected ", shape_str(p.tensor.shape())));
        p.tensor.values() = t->values();
    }
    for (auto& [name, stats] : net.bn_state()) {
        stats->clear();
        for (std::size_t t = 0;; ++t) {
            const std::string suffix = ".s" + std::to_string(t);
            const Tensor* mean = cp.find(name + ".mean" + suffix);
            if (!mean) break;
            const Tensor* var = cp.find(name + ".var" + suffix);
            const Tensor* count = cp.find(name + ".count" + suffix);
            if (!var || !count)
                throw CheckpointError(detail::concat("incomplete batchnorm stats for '", name, suffix, "'"));
            BnStats<float> st;
            st.mean = mean->values();
            st.var = var->values();
            st.batches = static_cast<long long>(count->data()[0]);
            stats->push_back(std::move(st));
        }
    }
    if (opt) {
        const auto& ps = opt->params();
        auto& vs = opt->velocities();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const Tensor* t = cp.find("__opt.v." + ps[i].name);
            if (t) vs[i] = t->values();
        }
    }
}

/// Rebuilds the architecture recorded inside a checkpoint and loads its
/// weights. The weight-init RNG draw is immediately overwritten, so any
/// seed works.
inline std::pair<FeedbackNet, TrainConfig> net_from_checkpoint(const Checkpoint& cp) {
    TrainConfig cfg = parse_config_string(cp.config_text);
    Rng rng(cfg.seed);
    FeedbackNet net = FeedbackNet::init(cfg.net_spec(cp.num_classes), rng);
    restore_model(net, nullptr, cp);
    return {std::move(net), std::move(cfg)};
}

inline MetricsReport evaluate(const Checkpoint& cp, const Dataset& ds, int batch = 64) {
    auto [net, cfg] = net_from_checkpoint(cp);
    return evaluate(net, ds, batch);
}

/// Evaluation against an explicitly supplied config; rejects the checkpoint
/// when its recorded architecture differs.
inline MetricsReport evaluate_with_config(const TrainConfig& cfg, const Checkpoint& cp, const Dataset& ds,
                                          int batch = 64) {
    if (detail::sha256(cfg.net_spec(cp.num_classes).canonical()) != cp.fingerprint)
        throw CheckpointError("architecture fingerprint mismatch between config and checkpoint");
    return evaluate(cp, ds, batch);
}

// --- training --------------------------------------------------------------

struct TrainHooks {
    std::function<void(int epoch, const MetricsReport&, double lr)> on_epoch;
    std::function<void(int epoch, const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
    Checkpoint checkpoint;              // final state (or last good state on abort)
    std::vector<MetricsReport> history; // test metrics per epoch
    std::vector<float> loss_history;    // combined objective per optimizer step
    bool aborted = false;
    std::string abort_message;
};

/// Full training run: shuffled minibatches, per-step unroll -> objective ->
/// backward -> SGD, per-epoch test evaluation. Deterministic given
/// (seed, config).
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_ds, const Dataset& test_ds,
                         const TrainHooks& hooks = {}) {
    cfg.validate();
    if (train_ds.samples.empty()) throw ContractError("training dataset is empty");
    const int K = train_ds.tax.fine_count();

    Rng init_rng(Rng::mix(cfg.seed, 0x1157));
    Rng order_rng(Rng::mix(cfg.seed, 0x2257));
    FeedbackNet net = FeedbackNet::init(cfg.net_spec(K), init_rng);
    Sgd opt(net.params(), cfg.lr, cfg.momentum, cfg.weight_decay);
    CurriculumSchedule schedule = cfg.schedule();

    TrainResult result;
    Checkpoint last_good = snapshot_model(net, &opt, cfg, 0, order_rng.state());

    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr;
        for (double p : cfg.lr_decay_points)
            if (epoch >= static_cast<int>(p * cfg.epochs)) lr *= cfg.lr_decay_factor;
        opt.set_lr(lr);

        if (epoch < cfg.coarse_sorted_epochs) {
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const Sample& sa = train_ds.samples[a];
                const Sample& sb = train_ds.samples[b];
                if (sa.coarse != sb.coarse) return sa.coarse < sb.coarse;
                if (sa.fine != sb.fine) return sa.fine < sb.fine;
                return a < b;
            });
        } else {
            std::iota(order.begin(), order.end(), std::size_t{0});
            shuffle(order, order_rng);
        }

        try {
            for (std::size_t at = 0; at < order.size(); at += cfg.batch) {
                std::vector<std::size_t> idx(order.begin() + at,
                                             order.begin() + std::min(order.size(), at + cfg.batch));
                Batch b = make_batch(train_ds, idx);
                Tape tape;
                Tape::Scope scope(tape);
                IterationTrace trace = net.forward(b.images, b.fine, Mode::Train);
                Tensor loss;
                if (cfg.last_loss_only)
                    loss = trace.losses.back();
                else if (cfg.curriculum_enabled)
                    loss = episodic_loss(trace, b.fine, b.coarse, train_ds.tax, schedule, cfg.gamma);
                else
                    loss = total_loss(trace, cfg.gamma);
                if (!std::isfinite(static_cast<double>(loss.data()[0])))
                    throw NumericError(detail::concat("non-finite combined loss at epoch ", epoch + 1));
                trace.total = loss;
                tape.backward(loss);
                opt.step();
                opt.zero_grad();
                result.loss_history.push_back(loss.data()[0]);
            }
        } catch (const NumericError& e) {
            result.aborted = true;
            result.abort_message = e.what();
            result.checkpoint = std::move(last_good);
            return result;
        }

        MetricsReport rep = test_ds.samples.empty() ? MetricsReport{} : evaluate(net, test_ds);
        result.history.push_back(rep);
        last_good = snapshot_model(net, &opt, cfg, epoch + 1, order_rng.state());
        if (hooks.on_epoch) hooks.on_epoch(epoch + 1, rep, lr);
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            hooks.on_checkpoint(epoch + 1, last_good);
    }
    result.checkpoint = std::move(last_good);
    return result;
}

/// Convenience: builds the datasets named by the config, then trains.
inline TrainResult train(const TrainConfig& cfg, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (!cfg.data_file.empty()) {
        Dataset ds = load_dataset(cfg.data_file);
        Dataset empty;
        empty.tax = ds.tax;
        empty.height = ds.height;
        empty.width = ds.width;
        return train(cfg, ds, empty, hooks);
    }
    auto [train_ds, test_ds] = generate_dataset(cfg.data, cfg.seed);
    return train(cfg, train_ds, test_ds, hooks);
}

// --- representation export --------------------------------------------------

/// Writes one row per (sample, iteration): sample id, 1-based iteration,
/// fine label, coarse label, then the pooled feature vector.
inline void export_representations(FeedbackNet& net, const Dataset& ds, const std::string& path,
                                   int batch = 64) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError(detail::concat("cannot write ", path));
    const int T = net.spec().iterations;
    for (const auto& idx : detail::batch_indices(ds.size(), batch)) {
        Batch b = make_batch(ds, idx);
        IterationTrace trace = net.forward(b.images, b.fine, Mode::Eval);
        for (int t = 0; t < T; ++t) {
            const Tensor& pooled = trace.pooled[t];
            const int F = pooled.dim(1);
            for (std::size_t n = 0; n < idx.size(); ++n) {
                std::fprintf(f, "%zu %d %d %d", idx[n], t + 1, b.fine[n], b.coarse[n]);
                for (int j = 0; j < F; ++j)
                    std::fprintf(f, " %.9g", static_cast<double>(pooled.data()[n * F + j]));
                std::fputc('\n', f);
            }
        }
    }
    if (std::fclose(f) != 0) throw IoError(detail::concat("write failed for ", path));
}

inline void export_representations(const Checkpoint& cp, const Dataset& ds, const std::string& path,
                                   int batch = 64) {
    auto [net, cfg] = net_from_checkpoint(cp);
    export_representations(net, ds, path, batch);
}

// --- feedforward baselines ---------------------------------------------------

struct FfTrainOptions {
    int epochs = 20;
    int batch = 32;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.1;
    std::vector<double> lr_decay_points = {0.5, 0.75};
    std::uint64_t seed = 1;
};

/// Endpoint-loss training of the feedforward baseline.
inline std::vector<float> train_feedforward(FeedforwardNet& net, const Dataset& train_ds,
                                            const FfTrainOptions& opts) {
    Rng order_rng(Rng::mix(opts.seed, 0x3357));
    Sgd opt(net.params(), opts.lr, opts.momentum, opts.weight_decay);
    std::vector<float> losses;
    std::vector<std::size_t> order(train_ds.size());
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        double lr = opts.lr;
        for (double p : opts.lr_decay_points)
            if (epoch >= static_cast<int>(p * opts.epochs)) lr *= opts.lr_decay_factor;
        opt.set_lr(lr);
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, order_rng);
        for (std::size_t at = 0; at < order.size(); at += opts.batch) {
            std::vector<std::size_t> idx(order.begin() + at,
                                         order.begin() + std::min(order.size(), at + opts.batch));
            Batch b = make_batch(train_ds, idx);
            Tape tape;
            Tape::Scope scope(tape);
            Tensor logits = net.forward(b.images, Mode::Train);
            Tensor loss = softmax_cross_entropy(logits, b.fine);
            tape.backward(loss);
            opt.step();
            opt.zero_grad();
            losses.push_back(loss.data()[0]);
        }
    }
    net.mark_trained();
    return losses;
}

/// Fine top-1 of the head at `depth` over a dataset.
inline double feedforward_accuracy(FeedforwardNet& net, const Dataset& ds, int depth, int batch = 64) {
    long ok = 0;
    for (const auto& idx : detail::batch_indices(ds.size(), batch)) {
        Batch b = make_batch(ds, idx);
        Tensor logits = net.forward_heads(b.images, Mode::Eval, {depth})[0];
        const int K = logits.dim(1);
        for (std::size_t n = 0; n < idx.size(); ++n) {
            const float* z = logits.data() + n * K;
            int arg = 0;
            for (int j = 1; j < K; ++j)
                if (z[j] > z[arg]) arg = j;
            if (arg == b.fine[n]) ++ok;
        }
    }
    return static_cast<double>(ok) / static_cast<double>(ds.size());
}

/// Trains auxiliary pooling->FC heads at the given depths, shallowest to
/// deepest, with the convolutional backbone frozen (eval mode, no gradient).
inline void train_aux_heads(FeedforwardNet& net, std::vector<int> depths, const Dataset& train_ds,
                            const FfTrainOptions& opts) {
    if (!net.trained())
        throw ContractError("train_aux_heads requires a fully trained backbone; train the network first");
    std::sort(depths.begin(), depths.end());
    Rng head_rng(Rng::mix(opts.seed, 0x4457));
    net.set_backbone_requires_grad(false);
    for (int depth : depths) {
        net.attach_aux_head(depth, head_rng);
        Sgd opt(net.head_params(depth), opts.lr, opts.momentum, opts.weight_decay);
        Rng order_rng(Rng::mix(opts.seed, 0x5000 + depth));
        std::vector<std::size_t> order(train_ds.size());
        for (int epoch = 0; epoch < opts.epochs; ++epoch) {
            double lr = opts.lr;
            for (double p : opts.lr_decay_points)
                if (epoch >= static_cast<int>(p * opts.epochs)) lr *= opts.lr_decay_factor;
            opt.set_lr(lr);
            std::iota(order.begin(), order.end(), std::size_t{0});
            shuffle(order, order_rng);
            for (std::size_t at = 0; at < order.size(); at += opts.batch) {
                std::vector<std::size_t> idx(order.begin() + at,
                                             order.begin() + std::min(order.size(), at + opts.batch));
                Batch b = make_batch(train_ds, idx);
                Tape tape;
                Tape::Scope scope(tape);
                Tensor logits = net.forward_heads(b.images, Mode::Eval, {depth})[0];
                Tensor loss = softmax_cross_entropy(logits, b.fine);
                tape.backward(loss);
                opt.step();
                opt.zero_grad();
            }
        }
    }
    net.set_backbone_requires_grad(true);
}

} // namespace fbnet
