#include "ace/adaptive_cache.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ace/error.hpp"

namespace ace {

AdaptiveCache::AdaptiveCache(std::size_t classes, std::size_t capacity) : capacity_(capacity), slots_(classes) {
    for (auto& s : slots_) s.reserve(capacity + 1);
}

AdmitResult AdaptiveCache::try_admit(std::span<const double> feature, std::size_t pseudo_label,
                                     std::span<const double> probs, double threshold, Strategy strategy,
                                     std::uint64_t source) {
    if (std::isnan(threshold)) throw Error(ErrorCode::InvalidThreshold, "threshold is NaN");
    if (pseudo_label >= slots_.size()) {
        throw Error(ErrorCode::ClassOutOfRange,
                    "pseudo-label " + std::to_string(pseudo_label) + " with " + std::to_string(slots_.size()) + " classes");
    }
    const double h = entropy(probs);
    const bool pass = strategy == Strategy::Probability ? *std::max_element(probs.begin(), probs.end()) >= threshold
                                                        : h <= threshold;
    if (!pass || capacity_ == 0) return {};

    auto& slot = slots_[pseudo_label];
    CacheEntry entry{Embedding(feature.begin(), feature.end()), pseudo_label, h, next_seq_++, source};
    // the new seq is the largest, so it goes after every entry with key <= h
    auto pos = std::upper_bound(slot.begin(), slot.end(), h,
                                [](double key, const CacheEntry& e) { return key < e.entropy_key; });
    const bool lands_last = pos == slot.end();
    slot.insert(pos, std::move(entry));
    ++admissions_;

    AdmitResult result{AdmitOutcome::Admitted, std::nullopt, false};
    if (slot.size() > capacity_) {
        result.outcome = AdmitOutcome::AdmittedWithEviction;
        result.evicted_entropy = slot.back().entropy_key;
        result.evicted_self = lands_last;
        slot.pop_back();
        ++evictions_;
    }
    return result;
}

std::span<const CacheEntry> AdaptiveCache::entries(std::size_t c) const {
    if (c >= slots_.size()) throw Error(ErrorCode::ClassOutOfRange, "class " + std::to_string(c));
    return slots_[c];
}

std::optional<Embedding> AdaptiveCache::visual_prototype(std::size_t c) const {
    const auto slot = entries(c);
    if (slot.empty()) return std::nullopt;
    Embedding mean(slot.front().feature.size(), 0.0);
    for (const auto& e : slot) {
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += e.feature[k];
    }
    for (double& x : mean) x /= static_cast<double>(slot.size());
    if (l2_norm(mean) < 1e-12) return std::nullopt;
    return l2_normalize(mean);
}

std::vector<std::uint64_t> AdaptiveCache::class_counts() const {
    std::vector<std::uint64_t> out(slots_.size());
    for (std::size_t c = 0; c < slots_.size(); ++c) out[c] = slots_[c].size();
    return out;
}

std::size_t AdaptiveCache::size() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.size();
    return n;
}

std::optional<double> AdaptiveCache::cache_accuracy(
    const std::function<std::optional<std::uint32_t>(std::uint64_t)>& true_label) const {
    std::size_t known = 0;
    std::size_t correct = 0;
    for (const auto& slot : slots_) {
        for (const auto& e : slot) {
            const auto label = true_label(e.source);
            if (!label) continue;
            ++known;
            if (*label == e.pseudo_label) ++correct;
        }
    }
    if (known == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(known);
}

}  // namespace ace
