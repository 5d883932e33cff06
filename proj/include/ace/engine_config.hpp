#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "ace/curriculum_thresholds.hpp"
#include "ace/prototype_adapter.hpp"
#include "ace/strategy.hpp"

namespace ace {

enum class EngineMode { Ace, FixedThresholdBaseline, ZeroShotOnly };
enum class AdmissionKey { PostOptimization, ZeroShot };

std::string_view to_string(EngineMode m);
std::string_view to_string(AdmissionKey k);
EngineMode parse_mode(std::string_view text);
AdmissionKey parse_admission_key(std::string_view text);

/// Every knob of a run. Field names double as the config-file keys.
struct EngineConfig {
    Strategy strategy = Strategy::Entropy;
    double alpha = 6.0;
    double beta = 5.0;
    double delta = 0.95;
    double gamma = 0.02;
    double lambda = 0.5;
    std::uint64_t cache_size = 16;
    double lr = 0.0005;
    double weight_decay = 0.01;
    double tau = 0.01;
    double rho = 0.10;
    ViewFilterKind view_filter = ViewFilterKind::TopFraction;
    double view_threshold = 0.0;  // only for view_filter = fixed
    /// Samples between curriculum refreshes; 0 disables the curriculum
    /// refresh and leaves rarity adaptation running after every sample.
    std::uint64_t refresh_interval = 1;
    double m_floor = 0.1;
    EngineMode mode = EngineMode::Ace;
    bool zs_init = true;
    double calib_fraction = 1.0;
    bool literal_adapt = false;
    AdmissionKey admission_key = AdmissionKey::PostOptimization;
    bool report_pace = false;
    bool carry_optimizer_state = false;
    bool trace_thresholds = true;
    bool emit_timings = false;
    std::uint64_t seed = 0;

    /// Throws ConfigInvalid on out-of-range values or contradictory flags.
    void validate() const;

    FusionParams fusion() const { return {alpha, beta, tau, lambda}; }
    ViewFilter filter() const { return {view_filter, rho, view_threshold}; }
    ThresholdParams threshold_params() const { return {delta, gamma, m_floor, literal_adapt}; }
    AdamWParams adamw() const {
        AdamWParams p;
        p.lr = lr;
        p.weight_decay = weight_decay;
        return p;
    }
};

/// Flat JSON object with one key per field (enums as strings).
nlohmann::ordered_json to_json(const EngineConfig& config);

/// Applies the keys of `j` onto `config`. Unknown keys, wrong types and
/// bad enum strings raise ConfigInvalid. Returns the keys that were applied.
std::vector<std::string> apply_json(EngineConfig& config, const nlohmann::json& j);

/// Names of all EngineConfig keys in declaration order.
const std::vector<std::string>& engine_config_keys();

}  // namespace ace
