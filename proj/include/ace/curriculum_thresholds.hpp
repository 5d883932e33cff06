#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ace/strategy.hpp"
#include "ace/zeroshot.hpp"

namespace ace {

struct ThresholdParams {
    double delta = 0.95;   // EMA factor
    double gamma = 0.02;   // rarity relaxation rate
    double m_floor = 0.1;  // lower clamp of the per-class metric
    /// Apply the rarity and curriculum formulas as printed (multiply by the
    /// relaxation factor and target m*T0 under both strategies) instead of
    /// relaxing in the admit-more direction of each strategy.
    bool literal_adapt = false;

    void validate() const;
    bool operator==(const ThresholdParams&) const = default;
};

/// Smallest threshold the state will hold; keeps repeated relaxation from
/// underflowing to zero.
inline constexpr double kMinThreshold = 1e-12;

/// Rarity bands on cache occupancy.
inline constexpr std::uint64_t kRarelySeenMax = 10;

/// Per-class admission thresholds with curriculum (confidence-count driven)
/// refinement and rarity-based exploration.
class ThresholdState {
  public:
    /// T0(c) = mean max-probability (probability strategy) or mean entropy
    /// (entropy strategy) of the zero-shot pre-pass, for every class.
    static ThresholdState from_stats(const ZeroShotStats& stats, Strategy strategy, std::size_t classes,
                                     const ThresholdParams& params);

    /// Neutral start without a zero-shot pre-pass: 0.5 (probability) or
    /// 0.5 ln C (entropy).
    static ThresholdState fallback(Strategy strategy, std::size_t classes, const ThresholdParams& params);

    /// Counts class c as confidently predicted when the prediction clears
    /// the class's current threshold.
    void record_prediction(std::size_t c, double max_prob, double entropy_val);

    /// Max-normalizes the cumulative counts, folds them into the metric and
    /// moves every threshold one EMA step toward its curriculum target.
    void refresh_thresholds();

    /// Relaxes classes with empty (factor 1-gamma) or nearly empty
    /// (1..10 entries, factor 1-gamma/2) cache slots.
    void apply_rarity_adaptation(std::span<const std::uint64_t> counts);

    double admission_threshold(std::size_t c) const;

    Strategy strategy() const noexcept { return strategy_; }
    std::size_t class_count() const noexcept { return thresholds_.size(); }
    const ThresholdParams& params() const noexcept { return params_; }
    double cap() const noexcept { return cap_; }

    const std::vector<double>& thresholds() const noexcept { return thresholds_; }
    const std::vector<double>& initial() const noexcept { return initial_; }
    const std::vector<std::uint64_t>& sigma_raw() const noexcept { return sigma_raw_; }
    /// Normalized counts from the most recent refresh (zeros before the first).
    const std::vector<double>& sigma() const noexcept { return sigma_; }
    const std::vector<double>& metric() const noexcept { return metric_; }
    std::uint64_t predictions_recorded() const noexcept { return recorded_; }
    std::uint64_t refreshes() const noexcept { return refreshes_; }

    bool operator==(const ThresholdState&) const = default;

  private:
    ThresholdState(Strategy strategy, std::size_t classes, double t0, const ThresholdParams& params);

    void check_class(std::size_t c) const;
    double clamp_threshold(double t) const;

    Strategy strategy_;
    ThresholdParams params_;
    double cap_;
    std::vector<double> thresholds_;
    std::vector<double> initial_;
    std::vector<std::uint64_t> sigma_raw_;
    std::vector<double> sigma_;
    std::vector<double> metric_;
    std::uint64_t recorded_ = 0;
    std::uint64_t refreshes_ = 0;
};

}  // namespace ace
