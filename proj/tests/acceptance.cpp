// Acceptance run: one PASS/FAIL line per criterion. Exits 1 when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "ace/adaptive_cache.hpp"
#include "ace/curriculum_thresholds.hpp"
#include "ace/engine.hpp"
#include "ace/error.hpp"
#include "ace/gradcheck.hpp"
#include "ace/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ace;
using namespace ace::io;
using fixtures::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(6);
    s << x;
    return s.str();
}

// 1. analytic gradients against central differences
Outcome gradients() {
    const auto start = Clock::now();
    const std::size_t cs[] = {2, 3, 5}, ds[] = {4, 8}, vs[] = {1, 4, 8};
    double worst = 0.0;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        GradcheckSpec spec;
        spec.classes = cs[i % 3];
        spec.dim = ds[(i / 3) % 2];
        spec.views = vs[(i / 6) % 3];
        const auto r = finite_difference_check(spec, 1000 + i);
        worst = std::max(worst, r.max_rel_error);
        failed += !r.passed;
    }
    const double t = seconds_since(start);
    return {failed == 0 && worst <= 1e-4 && t < 30.0,
            "100 instances, max relative error " + fmt(worst) + ", " + fmt(t) + " s"};
}

// 2. cache contents against the keep-M-lowest oracle
Outcome cache_oracle() {
    const auto start = Clock::now();
    std::mt19937_64 rng(77);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t C = 2 + rng() % 6;
        const std::size_t M = std::vector<std::size_t>{1, 3, 16}[trial % 3];
        const std::size_t n = 1 + rng() % 500;
        AdaptiveCache cache(C, M);
        std::vector<oracle::CacheEvent> log;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = rng() % C;
            ProbVector p(C);
            const double peak = 0.2 + 0.8 * static_cast<double>(rng() % 16) / 15.0;
            for (std::size_t k = 0; k < C; ++k) p[k] = k == c ? peak : (1 - peak) / static_cast<double>(C - 1);
            const double threshold = 0.3 + 0.1 * static_cast<double>(rng() % 8);
            const double key = entropy(p);
            const auto r = cache.try_admit(Embedding{1.0, 0.0}, c, p, threshold, Strategy::Entropy, i);
            log.push_back({c, key, key <= threshold});
            mismatches += (r.outcome != AdmitOutcome::Rejected) != (key <= threshold);
        }
        const auto expect = oracle::cache_contents(log, C, M);
        for (std::size_t c = 0; c < C; ++c) {
            const auto got = cache.entries(c);
            if (got.size() != expect[c].size()) {
                ++mismatches;
                continue;
            }
            for (std::size_t j = 0; j < got.size(); ++j) {
                mismatches += got[j].source != expect[c][j].second || got[j].entropy_key != expect[c][j].first;
            }
        }
    }
    const double t = seconds_since(start);
    return {mismatches == 0 && t < 10.0, "200 sequences, " + std::to_string(mismatches) + " mismatches, " + fmt(t) + " s"};
}

// 3. threshold dynamics
Outcome thresholds() {
    const auto start = Clock::now();
    const ThresholdParams params;
    std::vector<std::string> problems;

    // (a) with nothing recorded every class sits at the floor metric, so the
    // target is fixed and the EMA contracts geometrically toward it
    for (auto strategy : {Strategy::Probability, Strategy::Entropy}) {
        const std::size_t C = 5;
        auto state = ThresholdState::from_stats({0.6, 0.05, 10}, strategy, C, params);
        const double t0 = state.thresholds()[0];
        const double v = strategy == Strategy::Probability ? t0 * params.m_floor : t0 / params.m_floor;
        double worst = 0.0;
        for (int k = 1; k <= 300; ++k) {
            state.refresh_thresholds();
            worst = std::max(worst, std::abs(std::abs(state.thresholds()[0] - v) -
                                             std::pow(params.delta, k) * std::abs(t0 - v)));
        }
        if (worst > 1e-12) problems.push_back("EMA deviation " + fmt(worst));
    }

    // (b) classes never cached relax by (1 - gamma) per step
    for (auto strategy : {Strategy::Probability, Strategy::Entropy}) {
        const std::size_t C = 4;
        auto state = ThresholdState::fallback(strategy, C, params);
        const double t0 = state.thresholds()[0];
        const std::vector<std::uint64_t> empty(C, 0);
        double expect = t0;
        for (int k = 1; k <= 200; ++k) {
            state.apply_rarity_adaptation(empty);
            expect = strategy == Strategy::Probability ? expect * (1 - params.gamma)
                                                       : std::min(expect / (1 - params.gamma), state.cap());
            const double closed = strategy == Strategy::Probability
                                      ? t0 * std::pow(1 - params.gamma, k)
                                      : std::min(t0 / std::pow(1 - params.gamma, k), state.cap());
            if (state.thresholds()[0] != expect) problems.push_back("decay step " + std::to_string(k));
            if (std::abs(state.thresholds()[0] - closed) > 1e-12 * closed) problems.push_back("closed form " + std::to_string(k));
        }
    }

    // (c) random event fuzz stays inside the documented ranges
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t out_of_range = 0;
    for (auto strategy : {Strategy::Probability, Strategy::Entropy}) {
        const std::size_t C = 7;
        auto state = ThresholdState::from_stats({0.7, 0.8, 100}, strategy, C, params);
        std::vector<std::uint64_t> counts(C, 0);
        for (int e = 0; e < 50000; ++e) {
            const auto kind = rng() % 10;
            const std::size_t c = rng() % C;
            if (kind < 6) {
                const double mp = 1.0 / static_cast<double>(C) + u(rng) * (1 - 1.0 / static_cast<double>(C));
                state.record_prediction(c, mp, u(rng) * std::log(static_cast<double>(C)));
            } else if (kind < 8) {
                state.refresh_thresholds();
            } else {
                counts[c] = rng() % 20;
                state.apply_rarity_adaptation(counts);
            }
            for (std::size_t k = 0; k < C; ++k) {
                const double T = state.thresholds()[k];
                const double m = state.metric()[k];
                const double s = state.sigma()[k];
                out_of_range += !(T >= kMinThreshold && T <= state.cap()) || !(m >= params.m_floor && m <= 1.0) ||
                                !(s >= 0.0 && s <= 1.0);
            }
        }
    }
    if (out_of_range) problems.push_back(std::to_string(out_of_range) + " out-of-range values");

    const double t = seconds_since(start);
    std::string detail = "EMA, decay and 1e5-event fuzz, " + fmt(t) + " s";
    if (!problems.empty()) detail += "; first problem: " + problems.front();
    return {problems.empty() && t < 10.0, detail};
}

// 4. mode reduction against the standalone zero-shot classifier
Outcome mode_reduction() {
    const auto spec = fixtures::reference_spec(7);
    const auto s = generate_synthetic_stream(spec);
    const auto text = build_text_prototypes(s.text, spec.prompts_per_class, 0.01);

    EngineConfig zs;
    zs.mode = EngineMode::ZeroShotOnly;
    EngineConfig degenerate;
    degenerate.alpha = 0.0;
    degenerate.cache_size = 0;
    degenerate.refresh_interval = 0;
    degenerate.zs_init = false;

    Engine a(text, zs, std::nullopt), b(text, degenerate, std::nullopt);
    std::size_t zs_diff = 0, degenerate_diff = 0;
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
        Matrix one(1, spec.dim), all(spec.views, spec.dim);
        one.set_row(0, s.views.row(i * spec.views));
        for (std::size_t v = 0; v < spec.views; ++v) all.set_row(v, s.views.row(i * spec.views + v));
        const auto expect = argmax_stable(zeroshot_predict(one.row(0), text));
        zs_diff += a.process_sample(all).predicted != expect;
        degenerate_diff += b.process_sample(one).predicted != expect;
    }
    std::string detail = "zeroshot-only differs on " + std::to_string(zs_diff) + "/400, alpha=0/M=0/V=1 ACE differs on " +
                         std::to_string(degenerate_diff) + "/400";
    if (degenerate_diff) detail += " (text prototypes still evolve under the entropy objective)";
    return {zs_diff == 0 && degenerate_diff == 0, detail};
}

// 5. ACE against the fixed-threshold baseline, zs-init on against off
Outcome efficacy() {
    const auto start = Clock::now();
    TempDir dir("accept");
    int ace_wins = 0, init_wins = 0;
    std::string rows;
    for (std::uint64_t seed : {7, 11, 13, 17, 19}) {
        const auto manifest = load_manifest(fixtures::write_stream(fixtures::reference_spec(seed), dir.path() / std::to_string(seed)));
        EngineConfig cfg;
        const double ace_acc = *run_stream(manifest, cfg).accuracy;
        cfg.mode = EngineMode::FixedThresholdBaseline;
        const double base_acc = *run_stream(manifest, cfg).accuracy;
        cfg.mode = EngineMode::Ace;
        cfg.zs_init = false;
        const double off_acc = *run_stream(manifest, cfg).accuracy;
        ace_wins += ace_acc >= base_acc;
        init_wins += ace_acc >= off_acc;
        rows += " seed " + std::to_string(seed) + ": ace " + fmt(ace_acc) + " base " + fmt(base_acc) + " no-init " +
                fmt(off_acc) + ";";
    }
    const double t = seconds_since(start);
    return {ace_wins >= 4 && init_wins >= 4 && t < 120.0,
            "ace>=baseline " + std::to_string(ace_wins) + "/5, zs-init on>=off " + std::to_string(init_wins) + "/5," +
                rows + " " + fmt(t) + " s"};
}

// 6. invariant suite on the engine
Outcome invariants() {
    TempDir dir("accept");
    const auto spec = fixtures::reference_spec(7);
    const auto manifest = load_manifest(fixtures::write_stream(spec, dir.path()));
    std::vector<std::string> problems;

    // determinism
    EngineConfig cfg;
    std::ostringstream first, second;
    run_stream(manifest, cfg, {&first, std::nullopt});
    run_stream(manifest, cfg, {&second, std::nullopt});
    if (first.str() != second.str()) problems.push_back("JSONL differs between runs");

    // no label leakage
    auto unlabelled = manifest;
    unlabelled.labels.reset();
    const auto with = run_stream(manifest, cfg), without = run_stream(unlabelled, cfg);
    for (std::size_t i = 0; i < with.records.size(); ++i) {
        auto a = to_json(with.records[i], false), b = to_json(without.records[i], false);
        a.erase("correct");
        a.erase("cache_accuracy");
        b.erase("correct");
        b.erase("cache_accuracy");
        if (a != b) {
            problems.push_back("labels changed record " + std::to_string(i));
            break;
        }
    }

    // normalization, unit norms and prefix causality
    const auto s = generate_synthetic_stream(spec);
    const auto text = build_text_prototypes(s.text, spec.prompts_per_class, cfg.tau);
    Matrix clean(s.labels.size(), spec.dim);
    for (std::size_t i = 0; i < clean.rows(); ++i) clean.set_row(i, s.views.row(i * spec.views));
    const auto stats = calibrate_zero_shot_stats(clean, text);
    auto views_of = [&](std::size_t i) {
        Matrix m(spec.views, spec.dim);
        for (std::size_t v = 0; v < spec.views; ++v) m.set_row(v, s.views.row(i * spec.views + v));
        return m;
    };
    Engine engine(text, cfg, stats);
    std::vector<nlohmann::ordered_json> records;
    double worst_sum = 0.0, worst_norm = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto views = views_of(i);
        records.push_back(to_json(engine.process_sample(views), false));
        const auto p = softmax(fused_logits(views.row(0), engine.bank(), cfg.fusion()));
        double sum = 0.0;
        for (double x : p) sum += x;
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        const auto& bank = engine.bank();
        for (std::size_t c = 0; c < spec.classes; ++c) {
            auto norm = [](std::span<const double> r) {
                double q = 0;
                for (double x : r) q += x * x;
                return std::sqrt(q);
            };
            worst_norm = std::max(worst_norm, std::abs(norm(bank.text.row(c)) - 1.0));
            if (bank.visual_present[c]) worst_norm = std::max(worst_norm, std::abs(norm(bank.visual.row(c)) - 1.0));
        }
    }
    if (worst_sum > 1e-6) problems.push_back("probability sum off by " + fmt(worst_sum));
    if (worst_norm > 1e-6) problems.push_back("prototype norm off by " + fmt(worst_norm));
    for (std::size_t n : {1, 10, 37, 64, 100}) {
        Engine prefix(text, cfg, stats);
        nlohmann::ordered_json last;
        for (std::size_t i = 0; i < n; ++i) last = to_json(prefix.process_sample(views_of(i)), false);
        if (last != records[n - 1]) problems.push_back("prefix of " + std::to_string(n) + " differs");
    }

    std::string detail = "normalization, unit norms, determinism, label leakage, prefix causality";
    if (!problems.empty()) detail += "; " + problems.front();
    return {problems.empty(), detail};
}

// 7. entropy bounds and softmax finiteness
Outcome numerics() {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t bad = 0;
    for (int i = 0; i < 100000; ++i) {
        const std::size_t C = 2 + rng() % 200;
        ProbVector p(C, 0.0);
        switch (i % 4) {
            case 0: p[rng() % C] = 1.0; break;
            case 1: std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(C)); break;
            default: {
                const double sharp = 1.0 + 60.0 * u(rng);
                double sum = 0.0;
                for (auto& x : p) sum += (x = std::pow(u(rng), sharp));
                if (sum == 0.0) p[0] = sum = 1.0;
                for (auto& x : p) x /= sum;
            }
        }
        const double h = entropy(p);
        bad += !(h >= 0.0 && h <= std::log(static_cast<double>(C)) + 1e-12);

        Logits sims(C);
        for (auto& x : sims) x = i % 5 == 0 ? (rng() % 2 ? 1.0 : -1.0) : 2.0 * u(rng) - 1.0;
        for (double x : softmax(sims, 0.01)) bad += !std::isfinite(x);
    }
    return {bad == 0, "1e5 distributions and softmax inputs, " + std::to_string(bad) + " violations"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradients},   {"cache oracle equivalence", cache_oracle},
        {"threshold dynamics", thresholds},    {"mode reduction", mode_reduction},
        {"synthetic efficacy", efficacy},      {"invariant suite", invariants},
        {"entropy bounds and numerics", numerics},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
