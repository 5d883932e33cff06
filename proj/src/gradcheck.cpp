#include "ace/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ace/error.hpp"
#include "ace/synthetic.hpp"

namespace ace {

GradcheckInstance make_gradcheck_instance(const GradcheckSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2 || spec.dim < 2 || spec.views < 1) {
        throw Error(ErrorCode::InvalidSpec, "gradcheck needs classes >= 2, dim >= 2, views >= 1");
    }
    io::Rng rng(seed);
    const std::size_t C = spec.classes;
    const std::size_t d = spec.dim;

    Matrix text(C, d);
    for (std::size_t c = 0; c < C; ++c) text.set_row(c, rng.unit_vector(d));
    GradcheckInstance inst{PrototypeBank(text), Matrix(spec.views, d), {}, Strategy::Entropy, spec.fusion};

    for (std::size_t c = 0; c < C; ++c) {
        if (rng.uniform() < 0.75) {
            Embedding v(text.row(c).begin(), text.row(c).end());
            for (double& x : v) x += 0.5 * rng.normal() / std::sqrt(static_cast<double>(d));
            inst.bank.set_visual(c, l2_normalize(v));
        }
    }
    if (inst.bank.present_count() == 0) inst.bank.set_visual(0, rng.unit_vector(d));

    // residuals of a few percent of the prototype norm
    for (double& x : inst.bank.text_residual.data()) x = 0.05 * rng.normal() / std::sqrt(static_cast<double>(d));
    for (std::size_t c = 0; c < C; ++c) {
        if (!inst.bank.visual_present[c]) continue;
        for (double& x : inst.bank.visual_residual.row(c)) x = 0.05 * rng.normal() / std::sqrt(static_cast<double>(d));
    }

    // views sit between two classes so the softmax at tau=0.01 is not one-hot
    for (std::size_t n = 0; n < spec.views; ++n) {
        const std::size_t a = rng.below(C);
        const std::size_t b = (a + 1 + rng.below(C - 1)) % C;
        const double mix = 0.4 + 0.2 * rng.uniform();
        Embedding z(d);
        for (std::size_t k = 0; k < d; ++k) {
            z[k] = mix * text(a, k) + (1.0 - mix) * text(b, k) + 0.02 * rng.normal() / std::sqrt(static_cast<double>(d));
        }
        inst.views.set_row(n, l2_normalize(z));
    }

    inst.strategy = rng.uniform() < 0.5 ? Strategy::Entropy : Strategy::Probability;
    const double rhos[] = {0.25, 0.5, 1.0};
    ViewFilter filter{ViewFilterKind::TopFraction, rhos[rng.below(3)], 0.0};
    const auto protos = effective_prototypes(inst.bank);
    inst.selected =
        filter_views(score_views(inst.views, protos, inst.bank.visual_present, inst.fusion), inst.strategy, filter).indices;
    return inst;
}

std::string GradcheckReport::describe() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " max_rel_error=" << max_rel_error << " over " << coordinates
       << " coordinates; worst " << (worst_visual ? "visual" : "text") << "[" << worst_row << "][" << worst_col
       << "] analytic=" << worst_analytic << " numeric=" << worst_numeric;
    return os.str();
}

GradcheckReport finite_difference_check(const GradcheckInstance& inst, const GradcheckSpec& spec,
                                        const std::optional<GradientCorruption>& corruption) {
    auto grads = compute_gradients(inst.views, inst.selected, inst.bank, inst.fusion);
    if (corruption) {
        Matrix& target = corruption->visual ? grads.visual : grads.text;
        target(corruption->row, corruption->col) += corruption->delta;
    }

    struct Probe {
        bool visual;
        std::size_t row, col;
        double analytic, numeric;
    };
    std::vector<Probe> probes;
    PrototypeBank probe = inst.bank;
    auto sweep_block = [&](bool visual) {
        Matrix& residual = visual ? probe.visual_residual : probe.text_residual;
        const Matrix& analytic = visual ? grads.visual : grads.text;
        for (std::size_t r = 0; r < residual.rows(); ++r) {
            if (visual && !probe.visual_present[r]) continue;
            for (std::size_t k = 0; k < residual.cols(); ++k) {
                const double saved = residual(r, k);
                residual(r, k) = saved + spec.step;
                const double up = objective_for_selection(inst.views, inst.selected, probe, inst.fusion);
                residual(r, k) = saved - spec.step;
                const double down = objective_for_selection(inst.views, inst.selected, probe, inst.fusion);
                residual(r, k) = saved;
                probes.push_back({visual, r, k, analytic(r, k), (up - down) / (2.0 * spec.step)});
            }
        }
    };
    sweep_block(false);
    sweep_block(true);

    double scale = 0.0;
    for (const auto& p : probes) scale = std::max(scale, std::abs(p.numeric));
    const double floor = std::max(kRelErrorFloor, kRelErrorScale * scale);

    GradcheckReport report;
    report.coordinates = probes.size();
    for (std::size_t i = 0; i < probes.size(); ++i) {
        const auto& p = probes[i];
        const double denom = std::max({std::abs(p.analytic), std::abs(p.numeric), floor});
        const double rel = std::abs(p.analytic - p.numeric) / denom;
        if (i == 0 || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_visual = p.visual;
            report.worst_row = p.row;
            report.worst_col = p.col;
            report.worst_analytic = p.analytic;
            report.worst_numeric = p.numeric;
        }
    }
    report.passed = report.max_rel_error <= spec.tolerance;
    return report;
}

GradcheckReport finite_difference_check(const GradcheckSpec& spec, std::uint64_t seed,
                                        const std::optional<GradientCorruption>& corruption) {
    return finite_difference_check(make_gradcheck_instance(spec, seed), spec, corruption);
}

}  // namespace ace
