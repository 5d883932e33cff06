#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ace {

/// Dense vector in the shared image/text latent space. Storage on disk is
/// 32-bit; everything in memory is 64-bit.
using Embedding = std::vector<double>;
/// Class distribution, length C, sums to one.
using ProbVector = std::vector<double>;
/// Unnormalized class scores, length C.
using Logits = std::vector<double>;

/// Row-major dense matrix. Used for prototype banks (C x d) and residuals.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    void set_row(std::size_t r, std::span<const double> values);
    void fill(double v);

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Probabilities below this are clamped before taking logs.
inline constexpr double kLogClamp = 1e-30;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Throws ZeroVector when the norm is below 1e-12.
Embedding l2_normalize(std::span<const double> v);

/// Max-subtracted softmax of l / temperature.
ProbVector softmax(std::span<const double> logits, double temperature = 1.0);

/// Shannon entropy in nats with 0 log 0 = 0. Rejects negative entries or
/// distributions whose sum is off by more than 1e-4.
double entropy(std::span<const double> probs);

/// Lowest index among maxima.
std::size_t argmax_stable(std::span<const double> values);

/// alpha * exp(-beta * (1 - similarity))
double modulation(double similarity, double alpha, double beta);

bool all_finite(std::span<const double> v);

}  // namespace ace
