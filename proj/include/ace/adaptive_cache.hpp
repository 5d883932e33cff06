#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ace/numerics.hpp"
#include "ace/strategy.hpp"

namespace ace {

struct CacheEntry {
    Embedding feature;
    std::size_t pseudo_label = 0;
    double entropy_key = 0.0;
    std::uint64_t seq = 0;     // insertion counter, shared across classes
    std::uint64_t source = 0;  // stream index of the sample the feature came from
};

enum class AdmitOutcome { Admitted, AdmittedWithEviction, Rejected };

struct AdmitResult {
    AdmitOutcome outcome = AdmitOutcome::Rejected;
    std::optional<double> evicted_entropy;
    bool evicted_self = false;  // the incoming entry was the one pushed out
};

/// Per-class bounded caches of admitted image features, each kept sorted by
/// (entropy_key, seq) ascending. On overflow the last entry goes: highest
/// entropy, newest among equals.
class AdaptiveCache {
  public:
    AdaptiveCache(std::size_t classes, std::size_t capacity);

    std::size_t class_count() const noexcept { return slots_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }

    /// Gate: probability strategy passes when max(probs) >= threshold,
    /// entropy strategy when H(probs) <= threshold. The stored key is
    /// H(probs) either way.
    AdmitResult try_admit(std::span<const double> feature, std::size_t pseudo_label, std::span<const double> probs,
                          double threshold, Strategy strategy, std::uint64_t source = 0);

    std::span<const CacheEntry> entries(std::size_t c) const;

    /// Normalized mean of the stored features of class c; nullopt when the
    /// class is empty or its features cancel out.
    std::optional<Embedding> visual_prototype(std::size_t c) const;

    /// Current occupancy per class.
    std::vector<std::uint64_t> class_counts() const;
    std::size_t size() const;

    /// Fraction of cached entries whose pseudo-label matches the true label
    /// of their source sample. `true_label` maps a source index to its label
    /// (nullopt when unknown). nullopt when no entry has a known label.
    std::optional<double> cache_accuracy(const std::function<std::optional<std::uint32_t>(std::uint64_t)>& true_label) const;

    std::uint64_t admissions() const noexcept { return admissions_; }
    std::uint64_t evictions() const noexcept { return evictions_; }

  private:
    std::size_t capacity_;
    std::vector<std::vector<CacheEntry>> slots_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t admissions_ = 0;
    std::uint64_t evictions_ = 0;
};

}  // namespace ace
