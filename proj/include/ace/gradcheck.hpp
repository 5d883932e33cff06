#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ace/prototype_adapter.hpp"

namespace ace {

struct GradcheckSpec {
    std::size_t classes = 3;
    std::size_t dim = 5;
    std::size_t views = 4;
    double step = 1e-4;       // central-difference step
    double tolerance = 1e-4;  // max relative error
    FusionParams fusion{};
};

/// A random objective instance: prototypes with non-zero residuals, a view
/// batch, and the (frozen) view selection.
struct GradcheckInstance {
    PrototypeBank bank;
    Matrix views;
    std::vector<std::size_t> selected;
    Strategy strategy = Strategy::Entropy;
    FusionParams fusion{};
};

/// Builds an instance from the seed. Views are noisy mixtures of two class
/// prototypes so the predictions are not saturated; roughly three in four
/// classes carry a visual prototype (at least one always does when C > 1).
GradcheckInstance make_gradcheck_instance(const GradcheckSpec& spec, std::uint64_t seed);

/// Adds `delta` to one analytic gradient coordinate before comparing.
struct GradientCorruption {
    bool visual = false;
    std::size_t row = 0;
    std::size_t col = 0;
    double delta = 1e-2;
};

struct GradcheckReport {
    double max_rel_error = 0.0;
    bool passed = true;
    // worst coordinate
    bool worst_visual = false;
    std::size_t worst_row = 0;
    std::size_t worst_col = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;

    std::string describe() const;
};

/// Relative error |a - n| / max(|a|, |n|, floor) with
/// floor = max(kRelErrorFloor, kRelErrorScale * largest |n| of the instance).
/// Coordinates far below the instance's gradient scale are thereby judged
/// against that scale instead of against their own truncation error.
inline constexpr double kRelErrorFloor = 1e-8;
inline constexpr double kRelErrorScale = 1e-2;

/// Compares analytic residual gradients against central differences,
/// coordinate by coordinate. Visual coordinates of absent classes are
/// skipped (the objective does not depend on them).
GradcheckReport finite_difference_check(const GradcheckInstance& instance, const GradcheckSpec& spec,
                                        const std::optional<GradientCorruption>& corruption = std::nullopt);

GradcheckReport finite_difference_check(const GradcheckSpec& spec, std::uint64_t seed,
                                        const std::optional<GradientCorruption>& corruption = std::nullopt);

}  // namespace ace
