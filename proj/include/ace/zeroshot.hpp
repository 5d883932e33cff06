#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ace/numerics.hpp"

namespace ace {

/// Unit-norm textual class prototypes plus the softmax temperature.
class TextPrototypeBank {
  public:
    TextPrototypeBank(Matrix prototypes, double temperature);

    std::size_t class_count() const noexcept { return prototypes_.rows(); }
    std::size_t dim() const noexcept { return prototypes_.cols(); }
    double temperature() const noexcept { return temperature_; }
    const Matrix& prototypes() const noexcept { return prototypes_; }

  private:
    Matrix prototypes_;
    double temperature_;
};

/// t_c = normalize(mean of the class's prompt embeddings).
/// `prompts` holds classes * prompts_per_class rows, class-major.
TextPrototypeBank build_text_prototypes(const Matrix& prompts, std::size_t prompts_per_class, double temperature);
TextPrototypeBank build_text_prototypes(const std::vector<std::vector<Embedding>>& groups, double temperature);

/// Cosine logits z . t_c (no temperature applied).
Logits text_similarities(std::span<const double> z, const Matrix& text);

/// softmax over (z . t_c) / tau
ProbVector zeroshot_predict(std::span<const double> z, const TextPrototypeBank& bank);

struct ZeroShotStats {
    double mean_max_prob = 0.0;
    double mean_entropy = 0.0;
    std::size_t sample_count = 0;
};

/// Mean max-probability and mean entropy of zero-shot predictions over a
/// stream of clean views. The reduction runs in stream order.
ZeroShotStats calibrate_zero_shot_stats(const Matrix& view0_stream, const TextPrototypeBank& bank);

/// Same reduction over a pulled stream; `next` fills the embedding and
/// returns false at end of stream.
ZeroShotStats calibrate_zero_shot_stats(const std::function<bool(Embedding&)>& next, const TextPrototypeBank& bank);

}  // namespace ace
