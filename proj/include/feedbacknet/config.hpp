#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "feedbacknet/curriculum.hpp"
#include "feedbacknet/dataset.hpp"
#include "feedbacknet/network.hpp"

namespace fbnet {

/// Everything a training run needs, parsed from `key = value` lines.
/// The seed is mandatory; unknown keys are hard errors.
struct TrainConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;

    // net.*
    int iterations = 4;
    int stack = 2;
    bool skip_enabled = true;
    int skip_n = 2;
    SkipMode skip_mode = SkipMode::OutputAdd;
    double gamma = 1.0;
    bool residual = true;

    // train.*
    int epochs = 20;
    int batch = 32;
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.1;
    std::vector<double> lr_decay_points = {0.5, 0.75};
    int checkpoint_every = 0;      // epochs; 0 = final only
    int coarse_sorted_epochs = 0;  // conventional-curriculum data ordering

    // curriculum.*
    bool curriculum_enabled = false;
    int curriculum_k = 2;
    CurriculumDirection curriculum_direction = CurriculumDirection::CoarseToFine;

    // ablation.*
    bool last_loss_only = false;

    // data.*
    std::string data_file; // FBDS path; empty = generate synthetic
    SyntheticSpec data;

    FeedbackNetSpec net_spec(int num_classes) const {
        FeedbackNetSpec spec;
        spec.stem = StemSpec{3, 16, 3, 1};
        spec.modules = {GateStackSpec{16, 32, 3, 2, stack, residual},
                        GateStackSpec{32, 64, 3, 2, stack, residual}};
        spec.iterations = iterations;
        spec.skip_enabled = skip_enabled;
        spec.skip_n = skip_n;
        spec.skip_mode = skip_mode;
        spec.gamma = gamma;
        spec.num_classes = num_classes;
        return spec;
    }

    CurriculumSchedule schedule() const {
        return CurriculumSchedule{curriculum_k, curriculum_direction, iterations};
    }

    void validate() const {
        if (!seed_set) throw ConfigError("config must set 'seed' (no implicit entropy)");
        if (epochs < 1 || batch < 1) throw ConfigError("train.epochs and train.batch must be positive");
        if (lr <= 0.0) throw ConfigError("train.lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must be in [0,1)");
        if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
        if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0)
            throw ConfigError("train.lr_decay_factor must be in (0,1]");
        for (double p : lr_decay_points)
            if (p <= 0.0 || p >= 1.0) throw ConfigError("train.lr_decay_points must be fractions in (0,1)");
        if (checkpoint_every < 0 || coarse_sorted_epochs < 0)
            throw ConfigError("epoch counters must be >= 0");
        if (curriculum_enabled) schedule().validate();
        net_spec(2).validate();
        if (data_file.empty()) data.validate();
    }

    /// Stable serialization of every key; embedded in checkpoints so a model
    /// can be rebuilt from the file alone.
    std::string canonical() const {
        std::ostringstream os;
        os << "seed = " << seed << "\n";
        os << "net.iterations = " << iterations << "\n";
        os << "net.stack = " << stack << "\n";
        os << "net.skip_enabled = " << (skip_enabled ? "true" : "false") << "\n";
        os << "net.skip_n = " << skip_n << "\n";
        os << "net.skip_mode = " << (skip_mode == SkipMode::OutputAdd ? "output_add" : "state_add") << "\n";
        os << "net.gamma = " << gamma << "\n";
        os << "net.residual = " << (residual ? "true" : "false") << "\n";
        os << "train.epochs = " << epochs << "\n";
        os << "train.batch = " << batch << "\n";
        os << "train.lr = " << lr << "\n";
        os << "train.momentum = " << momentum << "\n";
        os << "train.weight_decay = " << weight_decay << "\n";
        os << "train.lr_decay_factor = " << lr_decay_factor << "\n";
        os << "train.lr_decay_points = ";
        for (std::size_t i = 0; i < lr_decay_points.size(); ++i)
            os << (i ? "," : "") << lr_decay_points[i];
        os << "\n";
        os << "train.checkpoint_every = " << checkpoint_every << "\n";
        os << "train.coarse_sorted_epochs = " << coarse_sorted_epochs << "\n";
        os << "curriculum.enabled = " << (curriculum_enabled ? "true" : "false") << "\n";
        os << "curriculum.k = " << curriculum_k << "\n";
        os << "curriculum.direction = "
           << (curriculum_direction == CurriculumDirection::CoarseToFine ? "coarse_to_fine" : "literal_eq6")
           << "\n";
        os << "ablation.last_loss_only = " << (last_loss_only ? "true" : "false") << "\n";
        if (!data_file.empty()) os << "data.file = " << data_file << "\n";
        os << "data.image = " << data.image << "\n";
        os << "data.coarse = " << data.coarse << "\n";
        os << "data.fine_per_coarse = " << data.fine_per_coarse << "\n";
        os << "data.train_per_class = " << data.train_per_class << "\n";
        os << "data.test_per_class = " << data.test_per_class << "\n";
        os << "data.noise = " << data.noise << "\n";
        return os.str();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& key, int line) {
    std::istringstream is(v);
    T out;
    if (!(is >> out) || !(is >> std::ws).eof())
        throw ConfigError(concat("line ", line, ": cannot parse value '", v, "' for key '", key, "'"));
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key, int line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(concat("line ", line, ": expected boolean for key '", key, "', got '", v, "'"));
}

} // namespace detail

inline TrainConfig parse_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(detail::concat("line ", lineno, ": expected 'key = value', got '", line, "'"));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ConfigError(detail::concat("line ", lineno, ": empty key or value"));

        if (key == "seed") {
            cfg.seed = detail::parse_number<std::uint64_t>(val, key, lineno);
            cfg.seed_set = true;
        } else if (key == "net.iterations") {
            cfg.iterations = detail::parse_number<int>(val, key, lineno);
        } else if (key == "net.stack") {
            cfg.stack = detail::parse_number<int>(val, key, lineno);
        } else if (key == "net.skip_enabled") {
            cfg.skip_enabled = detail::parse_bool(val, key, lineno);
        } else if (key == "net.skip_n") {
            cfg.skip_n = detail::parse_number<int>(val, key, lineno);
        } else if (key == "net.skip_mode") {
            if (val == "output_add")
                cfg.skip_mode = SkipMode::OutputAdd;
            else if (val == "state_add")
                cfg.skip_mode = SkipMode::StateAdd;
            else
                throw ConfigError(detail::concat("line ", lineno,
                                                 ": net.skip_mode must be output_add or state_add"));
        } else if (key == "net.gamma") {
            cfg.gamma = detail::parse_number<double>(val, key, lineno);
        } else if (key == "net.residual") {
            cfg.residual = detail::parse_bool(val, key, lineno);
        } else if (key == "train.epochs") {
            cfg.epochs = detail::parse_number<int>(val, key, lineno);
        } else if (key == "train.batch") {
            cfg.batch = detail::parse_number<int>(val, key, lineno);
        } else if (key == "train.lr") {
            cfg.lr = detail::parse_number<double>(val, key, lineno);
        } else if (key == "train.momentum") {
            cfg.momentum = detail::parse_number<double>(val, key, lineno);
        } else if (key == "train.weight_decay") {
            cfg.weight_decay = detail::parse_number<double>(val, key, lineno);
        } else if (key == "train.lr_decay_factor") {
            cfg.lr_decay_factor = detail::parse_number<double>(val, key, lineno);
        } else if (key == "train.lr_decay_points") {
            cfg.lr_decay_points.clear();
            std::istringstream vs(val);
            std::string tok;
            while (std::getline(vs, tok, ','))
                cfg.lr_decay_points.push_back(detail::parse_number<double>(detail::trim(tok), key, lineno));
        } else if (key == "train.checkpoint_every") {
            cfg.checkpoint_every = detail::parse_number<int>(val, key, lineno);
        } else if (key == "train.coarse_sorted_epochs") {
            cfg.coarse_sorted_epochs = detail::parse_number<int>(val, key, lineno);
        } else if (key == "curriculum.enabled") {
            cfg.curriculum_enabled = detail::parse_bool(val, key, lineno);
        } else if (key == "curriculum.k") {
            cfg.curriculum_k = detail::parse_number<int>(val, key, lineno);
        } else if (key == "curriculum.direction") {
            if (val == "coarse_to_fine")
                cfg.curriculum_direction = CurriculumDirection::CoarseToFine;
            else if (val == "literal_eq6")
                cfg.curriculum_direction = CurriculumDirection::LiteralEq6;
            else
                throw ConfigError(detail::concat("line ", lineno,
                                                 ": curriculum.direction must be coarse_to_fine or literal_eq6"));
        } else if (key == "ablation.last_loss_only") {
            cfg.last_loss_only = detail::parse_bool(val, key, lineno);
        } else if (key == "data.file") {
            cfg.data_file = val;
        } else if (key == "data.image") {
            cfg.data.image = detail::parse_number<int>(val, key, lineno);
        } else if (key == "data.coarse") {
            cfg.data.coarse = detail::parse_number<int>(val, key, lineno);
        } else if (key == "data.fine_per_coarse") {
            cfg.data.fine_per_coarse = detail::parse_number<int>(val, key, lineno);
        } else if (key == "data.train_per_class") {
            cfg.data.train_per_class = detail::parse_number<int>(val, key, lineno);
        } else if (key == "data.test_per_class") {
            cfg.data.test_per_class = detail::parse_number<int>(val, key, lineno);
        } else if (key == "data.noise") {
            cfg.data.noise = detail::parse_number<double>(val, key, lineno);
        } else {
            throw ConfigError(detail::concat("line ", lineno, ": unknown key '", key, "'"));
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(detail::concat("cannot open config file ", path));
    return parse_config(in);
}

} // namespace fbnet
