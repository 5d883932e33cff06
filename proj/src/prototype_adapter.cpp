#include "ace/prototype_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ace/error.hpp"

namespace ace {

PrototypeBank::PrototypeBank(Matrix text_prototypes)
    : text(std::move(text_prototypes)),
      visual(text),
      visual_present(text.rows(), 0),
      text_residual(text.rows(), text.cols()),
      visual_residual(text.rows(), text.cols()) {}

std::size_t PrototypeBank::present_count() const {
    return static_cast<std::size_t>(std::count(visual_present.begin(), visual_present.end(), 1));
}

void PrototypeBank::set_visual(std::size_t c, std::span<const double> prototype) {
    visual.set_row(c, prototype);
    visual_present.at(c) = 1;
}

void PrototypeBank::clear_visual(std::size_t c) {
    visual.set_row(c, text.row(c));
    visual_present.at(c) = 0;
}

void PrototypeBank::zero_residuals() {
    text_residual.fill(0.0);
    visual_residual.fill(0.0);
}

namespace {

// out.row(r) = normalize(base.row(r) + residual.row(r)); returns the norm
double normalized_sum_into(Matrix& out, std::size_t r, const Matrix& base, const Matrix& residual) {
    auto dst = out.row(r);
    auto a = base.row(r);
    auto b = residual.row(r);
    double sq = 0.0;
    for (std::size_t k = 0; k < dst.size(); ++k) {
        dst[k] = a[k] + b[k];
        sq += dst[k] * dst[k];
    }
    const double n = std::sqrt(sq);
    if (!(n >= 1e-12)) return n;
    for (double& x : dst) x /= n;
    return n;
}

// gradient through u = x / |x|: (g - u (u . g)) / |x|
void normalize_backward(std::span<double> g, std::span<const double> u, double norm) {
    const double proj = dot(u, g);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = (g[k] - u[k] * proj) / norm;
}

void check_views(const Matrix& views, std::size_t dim) {
    if (views.rows() == 0) throw Error(ErrorCode::EmptyBatch, "no views");
    if (views.cols() != dim) {
        throw Error(ErrorCode::DimMismatch,
                    "views have dim " + std::to_string(views.cols()) + ", prototypes " + std::to_string(dim));
    }
}

double entropy_grad(double p) {
    // d/dp of -p log max(p, clamp)
    return p >= kLogClamp ? -(std::log(p) + 1.0) : -std::log(kLogClamp);
}

}  // namespace

EffectivePrototypes effective_prototypes(const PrototypeBank& bank) {
    const std::size_t C = bank.class_count();
    const std::size_t d = bank.dim();
    EffectivePrototypes out{Matrix(C, d), Matrix(C, d), std::vector<double>(C), std::vector<double>(C, 0.0)};
    for (std::size_t c = 0; c < C; ++c) {
        out.text_norms[c] = normalized_sum_into(out.text, c, bank.text, bank.text_residual);
        if (!(out.text_norms[c] >= 1e-12)) {
            throw Error(ErrorCode::DegenerateSum, "text prototype " + std::to_string(c) + " cancels its residual");
        }
        if (bank.visual_present[c]) {
            out.visual_norms[c] = normalized_sum_into(out.visual, c, bank.visual, bank.visual_residual);
            if (!(out.visual_norms[c] >= 1e-12)) {
                throw Error(ErrorCode::DegenerateSum, "visual prototype " + std::to_string(c) + " cancels its residual");
            }
        } else {
            out.visual.set_row(c, out.text.row(c));
        }
    }
    return out;
}

Logits fused_logits(std::span<const double> z, const Matrix& text, const Matrix& visual,
                    std::span<const std::uint8_t> present, const FusionParams& params) {
    if (z.size() != text.cols() || visual.cols() != text.cols()) {
        throw Error(ErrorCode::DimMismatch,
                    "embedding dim " + std::to_string(z.size()) + " vs prototypes " + std::to_string(text.cols()));
    }
    Logits out(text.rows());
    for (std::size_t c = 0; c < text.rows(); ++c) {
        out[c] = dot(z, text.row(c)) / params.tau;
        if (present[c]) out[c] += modulation(dot(z, visual.row(c)), params.alpha, params.beta);
    }
    return out;
}

Logits fused_logits(std::span<const double> z, const PrototypeBank& bank, const FusionParams& params) {
    const auto protos = effective_prototypes(bank);
    return fused_logits(z, protos.text, protos.visual, bank.visual_present, params);
}

std::vector<ProbVector> score_views(const Matrix& views, const EffectivePrototypes& protos,
                                    std::span<const std::uint8_t> present, const FusionParams& params) {
    check_views(views, protos.text.cols());
    std::vector<ProbVector> out(views.rows());
    for (std::size_t n = 0; n < views.rows(); ++n) {
        out[n] = softmax(fused_logits(views.row(n), protos.text, protos.visual, present, params));
    }
    return out;
}

ViewSelection filter_views(const std::vector<ProbVector>& view_probs, Strategy strategy, const ViewFilter& filter) {
    if (view_probs.empty()) throw Error(ErrorCode::EmptyBatch, "no views to filter");
    const std::size_t V = view_probs.size();
    // confidence score, larger is more confident
    std::vector<double> score(V);
    for (std::size_t n = 0; n < V; ++n) {
        const auto& p = view_probs[n];
        score[n] = strategy == Strategy::Entropy ? -entropy(p) : *std::max_element(p.begin(), p.end());
    }
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    ViewSelection sel;
    if (filter.kind == ViewFilterKind::TopFraction) {
        if (!(filter.rho > 0.0 && filter.rho <= 1.0)) {
            throw Error(ErrorCode::ConfigInvalid, "rho must lie in (0,1], got " + std::to_string(filter.rho));
        }
        // the epsilon keeps e.g. 0.3 * 10 from rounding up to 4
        auto keep = static_cast<std::size_t>(std::ceil(filter.rho * static_cast<double>(V) - 1e-9));
        keep = std::clamp<std::size_t>(keep, 1, V);
        sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    } else {
        for (std::size_t n = 0; n < V; ++n) {
            const bool pass = strategy == Strategy::Entropy ? -score[n] <= filter.fixed_threshold
                                                            : score[n] >= filter.fixed_threshold;
            if (pass) sel.indices.push_back(n);
        }
        if (sel.indices.empty()) sel.indices.push_back(order.front());
    }
    std::sort(sel.indices.begin(), sel.indices.end());

    sel.p_ace.assign(view_probs.front().size(), 0.0);
    for (std::size_t n : sel.indices) {
        for (std::size_t c = 0; c < sel.p_ace.size(); ++c) sel.p_ace[c] += view_probs[n][c];
    }
    for (double& x : sel.p_ace) x /= static_cast<double>(sel.indices.size());
    return sel;
}

double aug_loss(std::span<const double> p_ace) { return entropy(p_ace); }

namespace {

struct AlignTerms {
    std::vector<std::size_t> included;
    Matrix row_softmax;  // R_ab = softmax over b of A_ab
    Matrix col_softmax;  // Q_ab = softmax over a of A_ab
    double value = 0.0;
};

AlignTerms align_terms(const Matrix& text, const Matrix& visual, std::span<const std::uint8_t> present) {
    AlignTerms out;
    for (std::size_t c = 0; c < text.rows(); ++c) {
        if (present[c]) out.included.push_back(c);
    }
    const std::size_t K = out.included.size();
    if (K == 0) return out;
    Matrix sim(K, K);
    for (std::size_t a = 0; a < K; ++a) {
        for (std::size_t b = 0; b < K; ++b) sim(a, b) = dot(text.row(out.included[a]), visual.row(out.included[b]));
    }
    out.row_softmax = Matrix(K, K);
    out.col_softmax = Matrix(K, K);
    std::vector<double> buf(K);
    for (std::size_t a = 0; a < K; ++a) {
        for (std::size_t b = 0; b < K; ++b) buf[b] = sim(a, b);
        const auto p = softmax(buf);
        for (std::size_t b = 0; b < K; ++b) out.row_softmax(a, b) = p[b];
    }
    for (std::size_t b = 0; b < K; ++b) {
        for (std::size_t a = 0; a < K; ++a) buf[a] = sim(a, b);
        const auto p = softmax(buf);
        for (std::size_t a = 0; a < K; ++a) out.col_softmax(a, b) = p[a];
    }
    double total = 0.0;
    for (std::size_t a = 0; a < K; ++a) {
        total -= std::log(std::max(out.row_softmax(a, a), kLogClamp)) + std::log(std::max(out.col_softmax(a, a), kLogClamp));
    }
    out.value = total / static_cast<double>(K);
    return out;
}

}  // namespace

AlignLoss align_loss(const Matrix& text, const Matrix& visual, std::span<const std::uint8_t> present) {
    if (text.rows() != visual.rows() || text.cols() != visual.cols() || present.size() != text.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "text/visual prototype shapes differ");
    }
    const auto terms = align_terms(text, visual, present);
    return {terms.value, terms.included.size(), terms.included.empty()};
}

double objective_for_selection(const Matrix& views, std::span<const std::size_t> selected, const PrototypeBank& bank,
                               const FusionParams& params) {
    check_views(views, bank.dim());
    if (selected.empty()) throw Error(ErrorCode::EmptyBatch, "empty view selection");
    const auto protos = effective_prototypes(bank);
    ProbVector p_ace(bank.class_count(), 0.0);
    for (std::size_t n : selected) {
        const auto p = softmax(fused_logits(views.row(n), protos.text, protos.visual, bank.visual_present, params));
        for (std::size_t c = 0; c < p.size(); ++c) p_ace[c] += p[c];
    }
    for (double& x : p_ace) x /= static_cast<double>(selected.size());
    double value = aug_loss(p_ace);
    if (params.lambda != 0.0) value += params.lambda * align_loss(protos.text, protos.visual, bank.visual_present).value;
    return value;
}

double total_objective(const Matrix& views, const PrototypeBank& bank, Strategy strategy, const ViewFilter& filter,
                       const FusionParams& params) {
    const auto protos = effective_prototypes(bank);
    const auto sel = filter_views(score_views(views, protos, bank.visual_present, params), strategy, filter);
    return objective_for_selection(views, sel.indices, bank, params);
}

ResidualGradients compute_gradients(const Matrix& views, std::span<const std::size_t> selected,
                                    const PrototypeBank& bank, const FusionParams& params) {
    check_views(views, bank.dim());
    if (selected.empty()) throw Error(ErrorCode::EmptyBatch, "empty view selection");
    const std::size_t C = bank.class_count();
    const std::size_t d = bank.dim();
    const auto protos = effective_prototypes(bank);
    const auto& present = bank.visual_present;

    // forward through the selected views
    std::vector<ProbVector> probs;
    std::vector<std::vector<double>> cache_terms;  // F(z . v_c), 0 for absent classes
    probs.reserve(selected.size());
    cache_terms.reserve(selected.size());
    ProbVector p_ace(C, 0.0);
    for (std::size_t n : selected) {
        const auto z = views.row(n);
        Logits logits(C);
        std::vector<double> f(C, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            logits[c] = dot(z, protos.text.row(c)) / params.tau;
            if (present[c]) {
                f[c] = modulation(dot(z, protos.visual.row(c)), params.alpha, params.beta);
                logits[c] += f[c];
            }
        }
        probs.push_back(softmax(logits));
        cache_terms.push_back(std::move(f));
        for (std::size_t c = 0; c < C; ++c) p_ace[c] += probs.back()[c];
    }
    const double inv_count = 1.0 / static_cast<double>(selected.size());
    for (double& x : p_ace) x *= inv_count;

    ResidualGradients out{Matrix(C, d), Matrix(C, d), aug_loss(p_ace)};
    Matrix& gt = out.text;  // gradient w.r.t. the normalized prototypes, then residuals
    Matrix& gv = out.visual;

    std::vector<double> g_p(C);
    for (std::size_t c = 0; c < C; ++c) g_p[c] = entropy_grad(p_ace[c]) * inv_count;

    for (std::size_t i = 0; i < selected.size(); ++i) {
        const auto z = views.row(selected[i]);
        const auto& p = probs[i];
        double mean_g = 0.0;
        for (std::size_t c = 0; c < C; ++c) mean_g += p[c] * g_p[c];
        for (std::size_t c = 0; c < C; ++c) {
            const double g_logit = p[c] * (g_p[c] - mean_g);
            const double wt = g_logit / params.tau;
            auto rt = gt.row(c);
            for (std::size_t k = 0; k < d; ++k) rt[k] += wt * z[k];
            if (present[c]) {
                const double wv = g_logit * params.beta * cache_terms[i][c];
                auto rv = gv.row(c);
                for (std::size_t k = 0; k < d; ++k) rv[k] += wv * z[k];
            }
        }
    }

    if (params.lambda != 0.0) {
        const auto terms = align_terms(protos.text, protos.visual, present);
        const std::size_t K = terms.included.size();
        if (K > 0) {
            out.objective += params.lambda * terms.value;
            const double scale = params.lambda / static_cast<double>(K);
            for (std::size_t a = 0; a < K; ++a) {
                for (std::size_t b = 0; b < K; ++b) {
                    const double g = scale * ((a == b ? -2.0 : 0.0) + terms.row_softmax(a, b) + terms.col_softmax(a, b));
                    const std::size_t ca = terms.included[a];
                    const std::size_t cb = terms.included[b];
                    auto rt = gt.row(ca);
                    auto rv = gv.row(cb);
                    auto ut = protos.text.row(ca);
                    auto uv = protos.visual.row(cb);
                    for (std::size_t k = 0; k < d; ++k) {
                        rt[k] += g * uv[k];
                        rv[k] += g * ut[k];
                    }
                }
            }
        }
    }

    for (std::size_t c = 0; c < C; ++c) {
        normalize_backward(gt.row(c), protos.text.row(c), protos.text_norms[c]);
        if (present[c]) {
            normalize_backward(gv.row(c), protos.visual.row(c), protos.visual_norms[c]);
        }
    }
    if (!std::isfinite(out.objective) || !all_finite(gt.data()) || !all_finite(gv.data())) {
        throw Error(ErrorCode::NonFiniteGradient, "objective or gradient is not finite");
    }
    return out;
}

OptimizerState::OptimizerState(std::size_t classes, std::size_t dim)
    : text_m1(classes, dim), text_m2(classes, dim), visual_m1(classes, dim), visual_m2(classes, dim) {}

void OptimizerState::reset() {
    text_m1.fill(0.0);
    text_m2.fill(0.0);
    visual_m1.fill(0.0);
    visual_m2.fill(0.0);
    step = 0;
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m1, std::span<double> m2,
                  std::uint64_t step, const AdamWParams& hp) {
    if (grads.size() != params.size() || m1.size() != params.size() || m2.size() != params.size()) {
        throw Error(ErrorCode::ShapeMismatch, "parameter, gradient and moment blocks differ in size");
    }
    if (!(hp.lr > 0.0)) throw Error(ErrorCode::InvalidParams, "learning rate must be positive");
    if (step == 0) throw Error(ErrorCode::InvalidParams, "AdamW step index is 1-based");
    const double s = static_cast<double>(step);
    const double bc1 = 1.0 - std::pow(hp.beta1, s);
    const double bc2 = 1.0 - std::pow(hp.beta2, s);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] *= 1.0 - hp.lr * hp.weight_decay;
        m1[i] = hp.beta1 * m1[i] + (1.0 - hp.beta1) * grads[i];
        m2[i] = hp.beta2 * m2[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
        const double m_hat = m1[i] / bc1;
        const double v_hat = m2[i] / bc2;
        params[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
}

void adamw_step(PrototypeBank& bank, const ResidualGradients& grads, OptimizerState& state, const AdamWParams& hp) {
    const auto shape_ok = [&](const Matrix& m) {
        return m.rows() == bank.class_count() && m.cols() == bank.dim();
    };
    if (!shape_ok(grads.text) || !shape_ok(grads.visual) || !shape_ok(state.text_m1) || !shape_ok(state.visual_m1)) {
        throw Error(ErrorCode::ShapeMismatch, "gradient or optimizer state shape differs from the bank");
    }
    ++state.step;
    adamw_update(bank.text_residual.data(), grads.text.data(), state.text_m1.data(), state.text_m2.data(), state.step, hp);
    adamw_update(bank.visual_residual.data(), grads.visual.data(), state.visual_m1.data(), state.visual_m2.data(),
                 state.step, hp);
}

ApplyReport apply_residuals(PrototypeBank& bank) {
    ApplyReport report;
    const std::size_t C = bank.class_count();
    Matrix next(C, bank.dim());
    for (std::size_t c = 0; c < C; ++c) {
        if (normalized_sum_into(next, c, bank.text, bank.text_residual) >= 1e-12) {
            bank.text.set_row(c, next.row(c));
        } else {
            report.degenerate_text.push_back(c);
        }
        if (!bank.visual_present[c]) {
            bank.visual.set_row(c, bank.text.row(c));
            continue;
        }
        if (normalized_sum_into(next, c, bank.visual, bank.visual_residual) >= 1e-12) {
            bank.visual.set_row(c, next.row(c));
        } else {
            report.degenerate_visual.push_back(c);
        }
    }
    bank.zero_residuals();
    return report;
}

}  // namespace ace
