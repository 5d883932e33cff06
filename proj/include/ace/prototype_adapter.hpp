#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ace/numerics.hpp"
#include "ace/strategy.hpp"

namespace ace {

struct FusionParams {
    double alpha = 6.0;   // cache logit scale
    double beta = 5.0;    // cache logit sharpness
    double tau = 0.01;    // text logit temperature
    double lambda = 0.5;  // weight of the alignment loss
};

/// Text and visual prototypes for every class, plus the per-sample learnable
/// residuals. Rows of `visual` for classes without cached features mirror the
/// text prototype and are ignored (`visual_present[c] == 0`).
struct PrototypeBank {
    Matrix text;
    Matrix visual;
    std::vector<std::uint8_t> visual_present;
    Matrix text_residual;
    Matrix visual_residual;

    PrototypeBank() = default;
    /// Visual rows start absent; residuals start at zero.
    explicit PrototypeBank(Matrix text_prototypes);

    std::size_t class_count() const noexcept { return text.rows(); }
    std::size_t dim() const noexcept { return text.cols(); }
    std::size_t present_count() const;

    void set_visual(std::size_t c, std::span<const double> prototype);
    void clear_visual(std::size_t c);
    void zero_residuals();
};

/// Prototypes with the residuals folded in: normalize(p + residual) per row.
struct EffectivePrototypes {
    Matrix text;
    Matrix visual;
    std::vector<double> text_norms;    // |t_c + t̂_c| before normalization
    std::vector<double> visual_norms;  // |v_c + v̂_c|, 0 for absent classes
};

/// Throws DegenerateSum when a row sum is (numerically) zero.
EffectivePrototypes effective_prototypes(const PrototypeBank& bank);

/// logit_c = (z . t_c) / tau + present_c * alpha exp(-beta (1 - z . v_c))
Logits fused_logits(std::span<const double> z, const Matrix& text, const Matrix& visual,
                    std::span<const std::uint8_t> present, const FusionParams& params);
/// Same, on the bank's prototypes with residuals applied functionally.
Logits fused_logits(std::span<const double> z, const PrototypeBank& bank, const FusionParams& params);

/// Per-view class distributions softmax(fused_logits) (the prototype
/// prediction of each augmented view).
std::vector<ProbVector> score_views(const Matrix& views, const EffectivePrototypes& protos,
                                    std::span<const std::uint8_t> present, const FusionParams& params);

enum class ViewFilterKind { TopFraction, FixedThreshold };

struct ViewFilter {
    ViewFilterKind kind = ViewFilterKind::TopFraction;
    double rho = 0.10;              // retained fraction for TopFraction
    double fixed_threshold = 0.0;   // entropy ceiling or probability floor for FixedThreshold
};

struct ViewSelection {
    std::vector<std::size_t> indices;  // ascending view indices
    ProbVector p_ace;                  // mean of the selected views' distributions
};

/// TopFraction keeps the ceil(rho V) most confident views (lowest entropy or
/// highest max-probability, ties to the lower index). FixedThreshold keeps
/// the views that clear the threshold, falling back to the single most
/// confident view when none do.
ViewSelection filter_views(const std::vector<ProbVector>& view_probs, Strategy strategy, const ViewFilter& filter);

/// Entropy of the filtered view average.
double aug_loss(std::span<const double> p_ace);

struct AlignLoss {
    double value = 0.0;
    std::size_t included = 0;        // classes with a visual prototype
    bool no_visual_prototypes = false;
};

/// Bidirectional contrastive loss between text and visual prototypes over
/// the classes that have a visual prototype, averaged over those classes.
AlignLoss align_loss(const Matrix& text, const Matrix& visual, std::span<const std::uint8_t> present);

/// aug_loss + lambda * align_loss at the functionally applied residuals, with
/// views selected at those same prototypes.
double total_objective(const Matrix& views, const PrototypeBank& bank, Strategy strategy, const ViewFilter& filter,
                       const FusionParams& params);

/// Objective with a fixed view selection (the form that is differentiated).
double objective_for_selection(const Matrix& views, std::span<const std::size_t> selected, const PrototypeBank& bank,
                               const FusionParams& params);

struct ResidualGradients {
    Matrix text;
    Matrix visual;
    double objective = 0.0;
};

/// Exact gradient of objective_for_selection with respect to the text and
/// visual residuals. The selected view set is held constant.
ResidualGradients compute_gradients(const Matrix& views, std::span<const std::size_t> selected,
                                    const PrototypeBank& bank, const FusionParams& params);

struct AdamWParams {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    Matrix text_m1, text_m2;
    Matrix visual_m1, visual_m2;
    std::uint64_t step = 0;

    OptimizerState() = default;
    OptimizerState(std::size_t classes, std::size_t dim);
    void reset();
};

/// One decoupled-weight-decay Adam update of a flat parameter block.
/// `step` is the 1-based step index used for bias correction.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m1,
                  std::span<double> m2, std::uint64_t step, const AdamWParams& hp);

/// One AdamW step on both residual blocks of the bank.
void adamw_step(PrototypeBank& bank, const ResidualGradients& grads, OptimizerState& state, const AdamWParams& hp);

struct ApplyReport {
    std::vector<std::size_t> degenerate_text;    // classes that kept their old text prototype
    std::vector<std::size_t> degenerate_visual;  // same, visual
    bool degenerate() const { return !degenerate_text.empty() || !degenerate_visual.empty(); }
};

/// Folds the residuals into the prototypes (normalize(p + residual)) and
/// zeroes them. A row whose sum has norm below 1e-12 keeps its previous
/// prototype and is reported.
ApplyReport apply_residuals(PrototypeBank& bank);

}  // namespace ace
