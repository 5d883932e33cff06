#include "ace/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ace/error.hpp"

namespace ace {

TextPrototypeBank::TextPrototypeBank(Matrix prototypes, double temperature)
    : prototypes_(std::move(prototypes)), temperature_(temperature) {
    if (!(temperature_ > 0.0)) {
        throw Error(ErrorCode::NonPositiveTemperature, "temperature " + std::to_string(temperature_));
    }
    if (prototypes_.rows() == 0) throw Error(ErrorCode::EmptyClassGroup, "no classes");
}

TextPrototypeBank build_text_prototypes(const Matrix& prompts, std::size_t prompts_per_class, double temperature) {
    if (prompts_per_class == 0) throw Error(ErrorCode::EmptyClassGroup, "zero prompts per class");
    if (prompts.rows() == 0 || prompts.rows() % prompts_per_class != 0) {
        throw Error(ErrorCode::DimMismatch, std::to_string(prompts.rows()) + " prompt rows not divisible by " +
                                                std::to_string(prompts_per_class));
    }
    const std::size_t classes = prompts.rows() / prompts_per_class;
    Matrix out(classes, prompts.cols());
    Embedding mean(prompts.cols());
    for (std::size_t c = 0; c < classes; ++c) {
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t s = 0; s < prompts_per_class; ++s) {
            auto row = prompts.row(c * prompts_per_class + s);
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
        }
        for (double& x : mean) x /= static_cast<double>(prompts_per_class);
        out.set_row(c, l2_normalize(mean));
    }
    return TextPrototypeBank(std::move(out), temperature);
}

TextPrototypeBank build_text_prototypes(const std::vector<std::vector<Embedding>>& groups, double temperature) {
    if (groups.empty()) throw Error(ErrorCode::EmptyClassGroup, "no classes");
    if (groups.front().empty()) throw Error(ErrorCode::EmptyClassGroup, "class 0 has no prompts");
    const std::size_t d = groups.front().front().size();
    Matrix out(groups.size(), d);
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].empty()) throw Error(ErrorCode::EmptyClassGroup, "class " + std::to_string(c) + " has no prompts");
        Embedding mean(d, 0.0);
        for (const auto& p : groups[c]) {
            if (p.size() != d) {
                throw Error(ErrorCode::DimMismatch, "class " + std::to_string(c) + " prompt has dim " +
                                                        std::to_string(p.size()) + ", expected " + std::to_string(d));
            }
            for (std::size_t k = 0; k < d; ++k) mean[k] += p[k];
        }
        for (double& x : mean) x /= static_cast<double>(groups[c].size());
        out.set_row(c, l2_normalize(mean));
    }
    return TextPrototypeBank(std::move(out), temperature);
}

Logits text_similarities(std::span<const double> z, const Matrix& text) {
    if (z.size() != text.cols()) {
        throw Error(ErrorCode::DimMismatch,
                    "embedding dim " + std::to_string(z.size()) + " vs prototypes " + std::to_string(text.cols()));
    }
    Logits out(text.rows());
    for (std::size_t c = 0; c < text.rows(); ++c) out[c] = dot(z, text.row(c));
    return out;
}

ProbVector zeroshot_predict(std::span<const double> z, const TextPrototypeBank& bank) {
    return softmax(text_similarities(z, bank.prototypes()), bank.temperature());
}

namespace {

class StatsAccumulator {
  public:
    void add(const ProbVector& p) {
        max_prob_ += *std::max_element(p.begin(), p.end());
        entropy_ += entropy(p);
        ++count_;
    }

    ZeroShotStats finish() const {
        if (count_ == 0) throw Error(ErrorCode::EmptyStream, "calibration needs at least one sample");
        const double n = static_cast<double>(count_);
        return {max_prob_ / n, entropy_ / n, count_};
    }

  private:
    double max_prob_ = 0.0;
    double entropy_ = 0.0;
    std::size_t count_ = 0;
};

}  // namespace

ZeroShotStats calibrate_zero_shot_stats(const Matrix& view0_stream, const TextPrototypeBank& bank) {
    StatsAccumulator acc;
    for (std::size_t i = 0; i < view0_stream.rows(); ++i) acc.add(zeroshot_predict(view0_stream.row(i), bank));
    return acc.finish();
}

ZeroShotStats calibrate_zero_shot_stats(const std::function<bool(Embedding&)>& next, const TextPrototypeBank& bank) {
    StatsAccumulator acc;
    Embedding z;
    while (next(z)) acc.add(zeroshot_predict(z, bank));
    return acc.finish();
}

}  // namespace ace
