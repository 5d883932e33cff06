#include "ace/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ace/error.hpp"

namespace ace {

void Matrix::set_row(std::size_t r, std::span<const double> values) {
    if (values.size() != cols_) {
        throw Error(ErrorCode::DimMismatch, "row of size " + std::to_string(values.size()) +
                                                " into matrix with " + std::to_string(cols_) + " columns");
    }
    std::copy(values.begin(), values.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * cols_));
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimMismatch,
                    "dot of sizes " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

Embedding l2_normalize(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n >= 1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize vector with norm " + std::to_string(n));
    Embedding out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

ProbVector softmax(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw Error(ErrorCode::NonPositiveTemperature, "temperature " + std::to_string(temperature));
    }
    if (logits.empty()) throw Error(ErrorCode::EmptyInput, "softmax of empty vector");
    const double peak = *std::max_element(logits.begin(), logits.end());
    ProbVector p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp((logits[i] - peak) / temperature);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

double entropy(std::span<const double> probs) {
    double sum = 0.0;
    for (double x : probs) {
        if (x < 0.0 || !std::isfinite(x)) {
            throw Error(ErrorCode::InvalidDistribution, "entry " + std::to_string(x));
        }
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-4) {
        throw Error(ErrorCode::InvalidDistribution, "entries sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double x : probs) {
        if (x > 0.0) h -= x * std::log(std::max(x, kLogClamp));
    }
    // rounding can push a near-uniform result a few ulps past ln C
    return std::clamp(h, 0.0, std::log(static_cast<double>(probs.size())));
}

std::size_t argmax_stable(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

double modulation(double similarity, double alpha, double beta) {
    return alpha * std::exp(-beta * (1.0 - similarity));
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace ace
