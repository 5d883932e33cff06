#include "ace/engine_config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "ace/error.hpp"

namespace ace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(EngineMode m) {
    switch (m) {
        case EngineMode::Ace: return "ace";
        case EngineMode::FixedThresholdBaseline: return "fixed-threshold-baseline";
        case EngineMode::ZeroShotOnly: return "zeroshot-only";
    }
    return "ace";
}

std::string_view to_string(AdmissionKey k) { return k == AdmissionKey::PostOptimization ? "pace" : "zeroshot"; }

EngineMode parse_mode(std::string_view text) {
    if (text == "ace") return EngineMode::Ace;
    if (text == "fixed-threshold-baseline") return EngineMode::FixedThresholdBaseline;
    if (text == "zeroshot-only") return EngineMode::ZeroShotOnly;
    throw Error(ErrorCode::ConfigInvalid, "unknown mode '" + std::string(text) + "'");
}

AdmissionKey parse_admission_key(std::string_view text) {
    if (text == "pace") return AdmissionKey::PostOptimization;
    if (text == "zeroshot") return AdmissionKey::ZeroShot;
    throw Error(ErrorCode::ConfigInvalid, "unknown admission key '" + std::string(text) + "'");
}

namespace {

std::string_view to_string(ViewFilterKind k) { return k == ViewFilterKind::TopFraction ? "top-rho" : "fixed"; }

ViewFilterKind parse_view_filter(std::string_view text) {
    if (text == "top-rho") return ViewFilterKind::TopFraction;
    if (text == "fixed") return ViewFilterKind::FixedThreshold;
    throw Error(ErrorCode::ConfigInvalid, "unknown view filter '" + std::string(text) + "'");
}

// One entry per config key: how to write it out and how to read it back.
struct Field {
    std::string name;
    std::function<ordered_json(const EngineConfig&)> get;
    std::function<void(EngineConfig&, const json&)> set;
};

template <typename T>
Field plain(std::string name, T EngineConfig::*member) {
    return {name, [member](const EngineConfig& c) { return ordered_json(c.*member); },
            [member](EngineConfig& c, const json& j) { c.*member = j.get<T>(); }};
}

template <typename E>
Field enumerated(std::string name, E EngineConfig::*member, std::string_view (*show)(E), E (*parse)(std::string_view)) {
    return {name, [member, show](const EngineConfig& c) { return ordered_json(std::string(show(c.*member))); },
            [member, parse](EngineConfig& c, const json& j) { c.*member = parse(j.get<std::string>()); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> all = [] {
        std::string_view (*show_strategy)(Strategy) = &ace::to_string;
        std::string_view (*show_mode)(EngineMode) = &ace::to_string;
        std::string_view (*show_key)(AdmissionKey) = &ace::to_string;
        std::string_view (*show_filter)(ViewFilterKind) = &to_string;
        return std::vector<Field>{
            enumerated("strategy", &EngineConfig::strategy, show_strategy, &parse_strategy),
            plain("alpha", &EngineConfig::alpha),
            plain("beta", &EngineConfig::beta),
            plain("delta", &EngineConfig::delta),
            plain("gamma", &EngineConfig::gamma),
            plain("lambda", &EngineConfig::lambda),
            plain("cache_size", &EngineConfig::cache_size),
            plain("lr", &EngineConfig::lr),
            plain("weight_decay", &EngineConfig::weight_decay),
            plain("tau", &EngineConfig::tau),
            plain("rho", &EngineConfig::rho),
            enumerated("view_filter", &EngineConfig::view_filter, show_filter, &parse_view_filter),
            plain("view_threshold", &EngineConfig::view_threshold),
            plain("refresh_interval", &EngineConfig::refresh_interval),
            plain("m_floor", &EngineConfig::m_floor),
            enumerated("mode", &EngineConfig::mode, show_mode, &parse_mode),
            plain("zs_init", &EngineConfig::zs_init),
            plain("calib_fraction", &EngineConfig::calib_fraction),
            plain("literal_adapt", &EngineConfig::literal_adapt),
            enumerated("admission_key", &EngineConfig::admission_key, show_key, &parse_admission_key),
            plain("report_pace", &EngineConfig::report_pace),
            plain("carry_optimizer_state", &EngineConfig::carry_optimizer_state),
            plain("trace_thresholds", &EngineConfig::trace_thresholds),
            plain("emit_timings", &EngineConfig::emit_timings),
            plain("seed", &EngineConfig::seed),
        };
    }();
    return all;
}

}  // namespace

const std::vector<std::string>& engine_config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& f : fields()) out.push_back(f.name);
        return out;
    }();
    return keys;
}

ordered_json to_json(const EngineConfig& config) {
    ordered_json j = ordered_json::object();
    for (const auto& f : fields()) j[f.name] = f.get(config);
    return j;
}

std::vector<std::string> apply_json(EngineConfig& config, const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
    std::vector<std::string> applied;
    for (const auto& [key, value] : j.items()) {
        const auto& all = fields();
        auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.name == key; });
        if (it == all.end()) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
        try {
            it->set(config, value);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ConfigInvalid, "key '" + key + "': " + e.what());
        }
        applied.push_back(key);
    }
    return applied;
}

void EngineConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
    auto finite = [](double x) { return std::isfinite(x); };
    if (!finite(alpha) || alpha < 0.0) fail("alpha must be finite and >= 0");
    if (!finite(beta) || beta < 0.0) fail("beta must be finite and >= 0");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0,1)");
    if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must lie in (0,1)");
    if (!(m_floor > 0.0 && m_floor < 1.0)) fail("m_floor must lie in (0,1)");
    if (!finite(lambda) || lambda < 0.0) fail("lambda must be finite and >= 0");
    if (!(lr > 0.0) || !finite(lr)) fail("lr must be positive");
    if (!finite(weight_decay) || weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (!(tau > 0.0) || !finite(tau)) fail("tau must be positive");
    if (!(rho > 0.0 && rho <= 1.0)) fail("rho must lie in (0,1]");
    if (!finite(view_threshold)) fail("view_threshold must be finite");
    if (!(calib_fraction > 0.0 && calib_fraction <= 1.0)) fail("calib_fraction must lie in (0,1]");
    if (mode == EngineMode::FixedThresholdBaseline && literal_adapt) {
        fail("literal_adapt has no effect with the fixed-threshold baseline (thresholds never adapt)");
    }
    if (mode == EngineMode::ZeroShotOnly && (literal_adapt || report_pace)) {
        fail("literal_adapt/report_pace contradict zeroshot-only mode");
    }
}

}  // namespace ace
