#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>

#include "refinegan/train.hpp"

namespace refinegan {

namespace config_detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    }
    if (pos != v.size()) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void apply_opt_key(OptimizerSpec& o, const std::string& field, const std::string& key,
                          const std::string& v) {
    if (field == "kind")
        o.kind = parse_optimizer_kind(v);
    else if (field == "lr")
        o.lr = parse_double(key, v);
    else if (field == "rho")
        o.rho = parse_double(key, v);
    else if (field == "eps")
        o.eps = parse_double(key, v);
    else
        throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace config_detail

/// Flat `key = value` text. `#` starts a comment, blank lines are skipped,
/// later assignments win, unknown keys are errors (raised when applied).
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    using config_detail::trim;
    std::map<std::string, std::string> kv;
    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + " has an empty key");
        kv[key] = value;
    }
    return kv;
}

/// Resolves a key/value map onto defaults. Architecture keys land first;
/// with recurrence on, the adversarial optimizers default to rmsprop unless
/// their kind is pinned explicitly. Remaining keys then override fields.
inline RunConfig resolve_config(const std::map<std::string, std::string>& kv,
                                RunConfig base = RunConfig{}) {
    using namespace config_detail;
    RunConfig cfg = base;
    for (const auto& [key, v] : kv) {
        if (key.rfind("net.", 0) != 0) continue;
        if (key == "net.height")
            cfg.net.height = parse_u64(key, v);
        else if (key == "net.width")
            cfg.net.width = parse_u64(key, v);
        else if (key == "net.in_channels")
            cfg.net.in_channels = parse_u64(key, v);
        else if (key == "net.class_count")
            cfg.net.class_count = parse_u64(key, v);
        else if (key == "net.depth")
            cfg.net.depth = parse_u64(key, v);
        else if (key == "net.base_filters")
            cfg.net.base_filters = parse_u64(key, v);
        else if (key == "net.recurrent")
            cfg.net.recurrent = parse_bool(key, v);
        else if (key == "net.noise_input")
            cfg.net.noise_input = parse_bool(key, v);
        else
            throw ConfigError("config: unknown key '" + key + "'");
    }
    if (cfg.net.recurrent) {
        if (!kv.count("g_opt.kind")) cfg.g_opt = rmsprop_spec();
        if (!kv.count("d_opt.kind")) cfg.d_opt = rmsprop_spec();
    }
    for (const auto& [key, v] : kv) {
        if (key.rfind("net.", 0) == 0) continue;
        if (key == "seed")
            cfg.seed = parse_u64(key, v);
        else if (key == "epochs")
            cfg.epochs = parse_u64(key, v);
        else if (key == "max_steps")
            cfg.max_steps = parse_u64(key, v);
        else if (key == "images_per_batch")
            cfg.images_per_batch = parse_u64(key, v);
        else if (key == "plane")
            cfg.plane = parse_plane(v);
        else if (key == "data")
            cfg.data_dir = v;
        else if (key == "out")
            cfg.out_dir = v;
        else if (key == "loss.lambda_l1")
            cfg.weights.lambda_l1 = parse_double(key, v);
        else if (key.rfind("g_opt.", 0) == 0)
            apply_opt_key(cfg.g_opt, key.substr(6), key, v);
        else if (key.rfind("d_opt.", 0) == 0)
            apply_opt_key(cfg.d_opt, key.substr(6), key, v);
        else if (key.rfind("r_opt.", 0) == 0)
            apply_opt_key(cfg.r_opt, key.substr(6), key, v);
        else
            throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline RunConfig parse_config(const std::string& text, RunConfig base = RunConfig{}) {
    return resolve_config(parse_config_text(text), std::move(base));
}

/// Every resolved field, one per line. Feeding the echo back through the
/// parser reproduces the config bit for bit (optimizer kinds are spelled
/// out, so no default coupling re-fires).
inline std::string echo_config(const RunConfig& cfg) {
    using config_detail::fmt;
    std::string out;
    auto put = [&out](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
    auto put_opt = [&](const std::string& prefix, const OptimizerSpec& o) {
        put(prefix + ".kind", to_string(o.kind));
        put(prefix + ".lr", fmt(o.lr));
        put(prefix + ".rho", fmt(o.rho));
        put(prefix + ".eps", fmt(o.eps));
    };
    put("seed", std::to_string(cfg.seed));
    put("epochs", std::to_string(cfg.epochs));
    put("max_steps", std::to_string(cfg.max_steps));
    put("images_per_batch", std::to_string(cfg.images_per_batch));
    put("plane", to_string(cfg.plane));
    put("data", cfg.data_dir);
    put("out", cfg.out_dir);
    put("net.height", std::to_string(cfg.net.height));
    put("net.width", std::to_string(cfg.net.width));
    put("net.in_channels", std::to_string(cfg.net.in_channels));
    put("net.class_count", std::to_string(cfg.net.class_count));
    put("net.depth", std::to_string(cfg.net.depth));
    put("net.base_filters", std::to_string(cfg.net.base_filters));
    put("net.recurrent", cfg.net.recurrent ? "true" : "false");
    put("net.noise_input", cfg.net.noise_input ? "true" : "false");
    put("loss.lambda_l1", fmt(cfg.weights.lambda_l1));
    put_opt("g_opt", cfg.g_opt);
    put_opt("d_opt", cfg.d_opt);
    put_opt("r_opt", cfg.r_opt);
    return out;
}

}  // namespace refinegan
