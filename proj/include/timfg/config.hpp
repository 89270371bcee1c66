#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "timfg/errors.hpp"

namespace timfg {

/// Everything a run needs, resolved from defaults, an optional config file,
/// and flag overrides (in that order).  Every command writes the resolved
/// copy next to its outputs so a run can be replayed from its artifacts.
struct RunConfig {
    std::string model_name = "lq_mean";
    double horizon = 0.25;

    int n_time = 40;
    int n_space = 96;
    int n_action = 32;
    double x_lo = -3.0;
    double x_hi = 3.0;

    double lambda = 0.5;  ///< pia / verify / mc-check
    double lambda0 = 0.5; ///< vanish schedule start
    int halvings = 8;     ///< vanish schedule length minus one

    double tol = 1e-6;
    int max_iters = 50;

    std::uint64_t n_particles = 100000; ///< particle count for histogram flows
    std::uint64_t n_paths = 20000;      ///< path count per value estimate

    double nu_mean = 0.0;
    double nu_std = 0.5;

    std::uint64_t seed = 12345;
    int threads = 0; ///< 0 = TIMFG_THREADS env, then hardware count
    std::string out_dir = "out";
    bool allow_nonconverged = false;
};

namespace detail {

template <typename T>
void read_key(const nlohmann::json& node, const std::string& path, const char* key, T& slot) {
    if (!node.contains(key)) return;
    try {
        slot = node.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key " + path + key + ": " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& node, const std::string& path,
                           std::initializer_list<const char*> known) {
    if (!node.is_object())
        throw ConfigError("config: " + (path.empty() ? std::string("document") : path) +
                          " must be a JSON object");
    for (const auto& item : node.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ConfigError("config: unknown key " + path + item.key());
    }
}

} // namespace detail

/// Applies a parsed JSON document on top of `cfg`.  Unknown keys are errors;
/// missing keys keep their current values.
inline void apply_config_json(const nlohmann::json& doc, RunConfig& cfg) {
    detail::reject_unknown(doc, "",
                           {"model", "grid", "lambda", "lambda0", "halvings", "tol", "max_iters",
                            "mc", "nu", "seed", "threads", "out_dir", "allow_nonconverged"});
    if (doc.contains("model")) {
        const auto& node = doc.at("model");
        detail::reject_unknown(node, "model.", {"name", "horizon"});
        detail::read_key(node, "model.", "name", cfg.model_name);
        detail::read_key(node, "model.", "horizon", cfg.horizon);
    }
    if (doc.contains("grid")) {
        const auto& node = doc.at("grid");
        detail::reject_unknown(node, "grid.", {"n_time", "n_space", "n_action", "x_lo", "x_hi"});
        detail::read_key(node, "grid.", "n_time", cfg.n_time);
        detail::read_key(node, "grid.", "n_space", cfg.n_space);
        detail::read_key(node, "grid.", "n_action", cfg.n_action);
        detail::read_key(node, "grid.", "x_lo", cfg.x_lo);
        detail::read_key(node, "grid.", "x_hi", cfg.x_hi);
    }
    if (doc.contains("mc")) {
        const auto& node = doc.at("mc");
        detail::reject_unknown(node, "mc.", {"n_particles", "n_paths"});
        detail::read_key(node, "mc.", "n_particles", cfg.n_particles);
        detail::read_key(node, "mc.", "n_paths", cfg.n_paths);
    }
    if (doc.contains("nu")) {
        const auto& node = doc.at("nu");
        detail::reject_unknown(node, "nu.", {"mean", "std"});
        detail::read_key(node, "nu.", "mean", cfg.nu_mean);
        detail::read_key(node, "nu.", "std", cfg.nu_std);
    }
    detail::read_key(doc, "", "lambda", cfg.lambda);
    detail::read_key(doc, "", "lambda0", cfg.lambda0);
    detail::read_key(doc, "", "halvings", cfg.halvings);
    detail::read_key(doc, "", "tol", cfg.tol);
    detail::read_key(doc, "", "max_iters", cfg.max_iters);
    detail::read_key(doc, "", "seed", cfg.seed);
    detail::read_key(doc, "", "threads", cfg.threads);
    detail::read_key(doc, "", "out_dir", cfg.out_dir);
    detail::read_key(doc, "", "allow_nonconverged", cfg.allow_nonconverged);
}

/// Loads a JSON config file on top of the defaults.
[[nodiscard]] inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse failure in " + path + ": " + e.what());
    }
    RunConfig cfg;
    apply_config_json(doc, cfg);
    return cfg;
}

/// The resolved configuration as an ordered JSON document, mirroring the
/// input schema exactly.
[[nodiscard]] inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
    nlohmann::ordered_json doc;
    doc["model"] = {{"name", cfg.model_name}, {"horizon", cfg.horizon}};
    doc["grid"] = {{"n_time", cfg.n_time},
                   {"n_space", cfg.n_space},
                   {"n_action", cfg.n_action},
                   {"x_lo", cfg.x_lo},
                   {"x_hi", cfg.x_hi}};
    doc["lambda"] = cfg.lambda;
    doc["lambda0"] = cfg.lambda0;
    doc["halvings"] = cfg.halvings;
    doc["tol"] = cfg.tol;
    doc["max_iters"] = cfg.max_iters;
    doc["mc"] = {{"n_particles", cfg.n_particles}, {"n_paths", cfg.n_paths}};
    doc["nu"] = {{"mean", cfg.nu_mean}, {"std", cfg.nu_std}};
    doc["seed"] = cfg.seed;
    doc["threads"] = cfg.threads;
    doc["out_dir"] = cfg.out_dir;
    doc["allow_nonconverged"] = cfg.allow_nonconverged;
    return doc;
}

inline void write_resolved_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write resolved config: " + path);
    out << config_json(cfg).dump(2) << '\n';
}

} // namespace timfg
