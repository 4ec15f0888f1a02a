// fbnet: command-line front end for the feedbacknet library.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "feedbacknet/feedbacknet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json metrics_to_json(const fbnet::MetricsReport& rep) {
    json j;
    j["fine_acc"] = rep.fine_acc;
    j["coarse_acc"] = rep.coarse_acc;
    j["coarse_acc_parent"] = rep.coarse_acc_parent;
    json comp = json::array();
    for (const auto& c : rep.compliance) {
        if (c)
            comp.push_back(*c);
        else
            comp.push_back(nullptr);
    }
    j["compliance"] = comp;
    j["top1"] = rep.top1;
    j["top5"] = rep.top5;
    return j;
}

std::string now_string() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::localtime(&t));
    return buf;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    fbnet::TrainConfig cfg = fbnet::load_config(config_path);
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "train.log"); // timestamps live here only

    fbnet::Dataset train_ds, test_ds;
    if (!cfg.data_file.empty()) {
        train_ds = fbnet::load_dataset(cfg.data_file);
    } else {
        auto pair = fbnet::generate_dataset(cfg.data, cfg.seed);
        train_ds = std::move(pair.first);
        test_ds = std::move(pair.second);
    }

    fbnet::TrainHooks hooks;
    hooks.on_epoch = [&](int epoch, const fbnet::MetricsReport& rep, double lr) {
        std::printf("epoch %3d  lr %.4g", epoch, lr);
        if (!rep.fine_acc.empty())
            std::printf("  fine@1 %.4f  fine@T %.4f  coarse@T %.4f", rep.fine_acc.front(),
                        rep.fine_acc.back(), rep.coarse_acc.back());
        std::printf("\n");
        std::fflush(stdout);
        log << now_string() << " epoch " << epoch << " done\n";
    };
    hooks.on_checkpoint = [&](int epoch, const fbnet::Checkpoint& cp) {
        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%04d.fbnc", epoch);
        fbnet::save_checkpoint(cp, (fs::path(out_dir) / name).string());
    };

    fbnet::TrainResult result = fbnet::train(cfg, train_ds, test_ds, hooks);
    fbnet::save_checkpoint(result.checkpoint, (fs::path(out_dir) / "checkpoint.fbnc").string());

    json j;
    j["aborted"] = result.aborted;
    if (result.aborted) j["abort_message"] = result.abort_message;
    j["loss_history"] = result.loss_history;
    json epochs = json::array();
    for (const auto& rep : result.history) epochs.push_back(metrics_to_json(rep));
    j["epochs"] = epochs;
    std::ofstream mf(fs::path(out_dir) / "metrics.json");
    mf << j.dump(2) << "\n";

    if (result.aborted) {
        std::fprintf(stderr, "training aborted: %s (checkpoint holds the last good state)\n",
                     result.abort_message.c_str());
        return 2;
    }
    if (!result.history.empty() && !result.history.back().fine_acc.empty()) {
        const auto& rep = result.history.back();
        std::printf("final: fine top-1 %.4f, top-5 %.4f, coarse %.4f\n", rep.top1, rep.top5,
                    rep.coarse_acc.back());
    }
    std::printf("checkpoint: %s\n", (fs::path(out_dir) / "checkpoint.fbnc").string().c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& config_path, const std::string& json_path) {
    fbnet::Checkpoint cp = fbnet::load_checkpoint(checkpoint_path);
    fbnet::Dataset ds = fbnet::load_dataset(data_path);
    fbnet::MetricsReport rep;
    if (!config_path.empty()) {
        fbnet::TrainConfig cfg = fbnet::load_config(config_path);
        rep = fbnet::evaluate_with_config(cfg, cp, ds);
    } else {
        rep = fbnet::evaluate(cp, ds);
    }
    std::printf("iter  fine    coarse  compliance\n");
    for (std::size_t t = 0; t < rep.fine_acc.size(); ++t) {
        std::printf("%4zu  %.4f  %.4f  ", t + 1, rep.fine_acc[t], rep.coarse_acc[t]);
        if (rep.compliance[t])
            std::printf("%.4f\n", *rep.compliance[t]);
        else
            std::printf("n/a\n");
    }
    std::printf("endpoint top-1 %.4f  top-5 %.4f\n", rep.top1, rep.top5);
    if (!json_path.empty()) {
        std::ofstream f(json_path);
        f << metrics_to_json(rep).dump(2) << "\n";
    }
    return 0;
}

int cmd_analyze_graph(int m, int n, int s, double t_unit) {
    fbnet::GraphSpec spec{m, n, s, t_unit};
    spec.validate();
    const int dff = fbnet::depth_feedforward(m * n);
    const int dfb = fbnet::depth_feedback(spec);
    const auto times = fbnet::availability_times(spec);
    const auto depths = fbnet::ensemble_equivalent_depths(spec);
    std::printf("m=%d iterations, n=%d physical depth, Stack-%d, virtual depth %d\n", m, n, s, m * n);
    std::printf("computation graph depth, feedforward (D=%d): %d\n", m * n, dff);
    std::printf("computation graph depth, feedback:            %d  (n + s(m-1)%s)\n", dfb,
                s == 1 ? " = m+n-1" : ", extrapolated from the Stack-1 formula");
    std::printf("iteration   available at   ensemble-equivalent depth\n");
    for (int i = 0; i < m; ++i) std::printf("%9d   %10.4gT   %25d\n", i + 1, times[i], depths[i]);
    return 0;
}

int cmd_export_reprs(const std::string& checkpoint_path, const std::string& data_path,
                     const std::string& out_path) {
    fbnet::Checkpoint cp = fbnet::load_checkpoint(checkpoint_path);
    fbnet::Dataset ds = fbnet::load_dataset(data_path);
    fbnet::export_representations(cp, ds, out_path);
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_prefix) {
    fbnet::TrainConfig cfg = fbnet::load_config(spec_path);
    auto [train_ds, test_ds] = fbnet::generate_dataset(cfg.data, cfg.seed);
    fbnet::save_dataset(train_ds, out_prefix + ".train.fbds");
    fbnet::save_dataset(test_ds, out_prefix + ".test.fbds");
    fbnet::save_taxonomy(train_ds.tax, out_prefix + ".tax");
    std::printf("wrote %s.train.fbds (%zu samples), %s.test.fbds (%zu samples), %s.tax\n",
                out_prefix.c_str(), train_ds.size(), out_prefix.c_str(), test_ds.size(),
                out_prefix.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"feedbacknet: iterative ConvLSTM inference with per-iteration losses"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run_out";
    auto* train = app.add_subcommand("train", "Train a feedback network from a config file");
    train->add_option("--config", config_path, "key = value config file")->required();
    train->add_option("--out", out_dir, "output directory (checkpoint, metrics, log)");

    std::string ckpt_path, data_path, eval_config, json_path;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--data", data_path, "FBDS dataset file")->required();
    eval->add_option("--config", eval_config, "optional config to cross-check the architecture");
    eval->add_option("--json", json_path, "write metrics as JSON to this path");

    int m = 4, n = 12, s = 3;
    double t_unit = 1.0;
    auto* graph = app.add_subcommand("analyze-graph", "Computation-graph depth and availability times");
    graph->add_option("--m", m, "temporal iterations")->required();
    graph->add_option("--n", n, "physical depth")->required();
    graph->add_option("--s", s, "stack length")->required();
    graph->add_option("--t-unit", t_unit, "time per conv layer (default 1)");

    std::string reprs_ckpt, reprs_data, reprs_out;
    auto* reprs = app.add_subcommand("export-reprs", "Export per-iteration pooled representations");
    reprs->add_option("--checkpoint", reprs_ckpt, "checkpoint file")->required();
    reprs->add_option("--data", reprs_data, "FBDS dataset file")->required();
    reprs->add_option("--out", reprs_out, "output text file")->required();

    std::string gen_spec, gen_out;
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic hierarchical dataset");
    gen->add_option("--spec", gen_spec, "config file with data.* keys and seed")->required();
    gen->add_option("--out", gen_out, "output prefix (.train.fbds/.test.fbds/.tax)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (eval->parsed()) return cmd_eval(ckpt_path, data_path, eval_config, json_path);
        if (graph->parsed()) return cmd_analyze_graph(m, n, s, t_unit);
        if (reprs->parsed()) return cmd_export_reprs(reprs_ckpt, reprs_data, reprs_out);
        if (gen->parsed()) return cmd_gen_data(gen_spec, gen_out);
    } catch (const fbnet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
