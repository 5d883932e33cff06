#include "ace/curriculum_thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ace/error.hpp"

namespace ace {

void ThresholdParams::validate() const {
    auto in_open_unit = [](double x) { return x > 0.0 && x < 1.0; };
    if (!in_open_unit(delta)) throw Error(ErrorCode::InvalidParams, "delta must lie in (0,1), got " + std::to_string(delta));
    if (!in_open_unit(gamma)) throw Error(ErrorCode::InvalidParams, "gamma must lie in (0,1), got " + std::to_string(gamma));
    if (!in_open_unit(m_floor)) {
        throw Error(ErrorCode::InvalidParams, "m_floor must lie in (0,1), got " + std::to_string(m_floor));
    }
}

ThresholdState::ThresholdState(Strategy strategy, std::size_t classes, double t0, const ThresholdParams& params)
    : strategy_(strategy),
      params_(params),
      cap_(strategy == Strategy::Probability ? 1.0 : 2.0 * std::log(static_cast<double>(classes))),
      sigma_raw_(classes, 0),
      sigma_(classes, 0.0),
      metric_(classes, 1.0) {
    params_.validate();
    if (classes < 2) throw Error(ErrorCode::InvalidParams, "need at least 2 classes");
    if (!std::isfinite(t0)) throw Error(ErrorCode::InvalidParams, "initial threshold is not finite");
    initial_.assign(classes, clamp_threshold(t0));
    thresholds_ = initial_;
}

ThresholdState ThresholdState::from_stats(const ZeroShotStats& stats, Strategy strategy, std::size_t classes,
                                          const ThresholdParams& params) {
    const double t0 = strategy == Strategy::Probability ? stats.mean_max_prob : stats.mean_entropy;
    return ThresholdState(strategy, classes, t0, params);
}

ThresholdState ThresholdState::fallback(Strategy strategy, std::size_t classes, const ThresholdParams& params) {
    const double t0 = strategy == Strategy::Probability ? 0.5 : 0.5 * std::log(static_cast<double>(classes));
    return ThresholdState(strategy, classes, t0, params);
}

void ThresholdState::check_class(std::size_t c) const {
    if (c >= thresholds_.size()) {
        throw Error(ErrorCode::ClassOutOfRange,
                    "class " + std::to_string(c) + " with " + std::to_string(thresholds_.size()) + " classes");
    }
}

double ThresholdState::clamp_threshold(double t) const { return std::clamp(t, kMinThreshold, cap_); }

void ThresholdState::record_prediction(std::size_t c, double max_prob, double entropy_val) {
    check_class(c);
    ++recorded_;
    const bool confident =
        strategy_ == Strategy::Probability ? max_prob >= thresholds_[c] : entropy_val <= thresholds_[c];
    if (confident) ++sigma_raw_[c];
}

void ThresholdState::refresh_thresholds() {
    const std::uint64_t top = *std::max_element(sigma_raw_.begin(), sigma_raw_.end());
    const double delta = params_.delta;
    for (std::size_t c = 0; c < thresholds_.size(); ++c) {
        sigma_[c] = top == 0 ? 0.0 : static_cast<double>(sigma_raw_[c]) / static_cast<double>(top);
        metric_[c] = std::clamp(sigma_[c] * metric_[c], params_.m_floor, 1.0);
        const bool divide = strategy_ == Strategy::Entropy && !params_.literal_adapt;
        const double target = divide ? initial_[c] / metric_[c] : initial_[c] * metric_[c];
        thresholds_[c] = clamp_threshold(delta * thresholds_[c] + (1.0 - delta) * target);
    }
    ++refreshes_;
}

void ThresholdState::apply_rarity_adaptation(std::span<const std::uint64_t> counts) {
    if (counts.size() != thresholds_.size()) {
        throw Error(ErrorCode::DimMismatch, "counts of length " + std::to_string(counts.size()) + " for " +
                                                std::to_string(thresholds_.size()) + " classes");
    }
    const bool divide = strategy_ == Strategy::Entropy && !params_.literal_adapt;
    for (std::size_t c = 0; c < thresholds_.size(); ++c) {
        double r = 1.0;
        if (counts[c] == 0) {
            r = 1.0 - params_.gamma;
        } else if (counts[c] <= kRarelySeenMax) {
            r = 1.0 - params_.gamma * 0.5;
        }
        if (r == 1.0) continue;
        thresholds_[c] = clamp_threshold(divide ? thresholds_[c] / r : thresholds_[c] * r);
    }
}

double ThresholdState::admission_threshold(std::size_t c) const {
    check_class(c);
    return thresholds_[c];
}

}  // namespace ace
