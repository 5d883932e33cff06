#include "ace/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "ace/error.hpp"

namespace ace {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point start) {
    return std::chrono::duration<double, std::micro>(Clock::now() - start).count();
}

template <typename T>
ordered_json opt(const std::optional<T>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

ThresholdState initial_thresholds(const EngineConfig& config, std::size_t classes,
                                  const std::optional<ZeroShotStats>& stats) {
    const auto params = config.threshold_params();
    if (config.zs_init && config.mode != EngineMode::ZeroShotOnly) {
        if (!stats) throw Error(ErrorCode::ConfigInvalid, "zs_init requires zero-shot statistics");
        return ThresholdState::from_stats(*stats, config.strategy, classes, params);
    }
    return ThresholdState::fallback(config.strategy, classes, params);
}

}  // namespace

ordered_json to_json(const PredictionRecord& r, bool with_timings) {
    ordered_json j;
    j["type"] = "prediction";
    j["index"] = r.index;
    j["predicted"] = r.predicted;
    j["max_prob"] = r.max_prob;
    j["entropy"] = r.entropy;
    j["pseudo_label"] = opt(r.pseudo_label);
    j["admitted"] = r.admitted;
    j["evicted"] = r.evicted;
    j["threshold"] = opt(r.threshold);
    j["correct"] = opt(r.correct);
    j["cache_accuracy"] = opt(r.cache_accuracy);
    j["cache_size"] = r.cache_size;
    j["fault"] = opt(r.fault);
    j["degenerate_residual"] = r.degenerate_residual;
    if (with_timings) {
        j["timings_us"] = {{"score", r.timings.score_us},
                           {"adapt", r.timings.adapt_us},
                           {"admit", r.timings.admit_us},
                           {"predict", r.timings.predict_us}};
    }
    return j;
}

std::vector<ordered_json> trace_json(const PredictionRecord& r) {
    std::vector<ordered_json> out;
    out.reserve(r.trace.size());
    for (const auto& row : r.trace) {
        ordered_json j;
        j["type"] = "threshold";
        j["t"] = row.t;
        j["class"] = row.c;
        j["threshold"] = row.threshold;
        j["sigma"] = row.sigma;
        j["m"] = row.metric;
        out.push_back(std::move(j));
    }
    return out;
}

Engine::Engine(TextPrototypeBank text, const EngineConfig& config, const std::optional<ZeroShotStats>& stats)
    : config_(config),
      initial_text_(std::move(text)),
      bank_(initial_text_.prototypes()),
      cache_(initial_text_.class_count(), config.cache_size),
      thresholds_(initial_thresholds(config, initial_text_.class_count(), stats)),
      optimizer_(initial_text_.class_count(), initial_text_.dim()) {
    config_.validate();
    if (config_.tau != initial_text_.temperature()) {
        throw Error(ErrorCode::ConfigInvalid, "text bank temperature differs from config tau");
    }
}

PredictionRecord Engine::zero_shot_record(const Matrix& views, const Matrix& text) const {
    PredictionRecord rec;
    rec.index = processed_;
    const auto p = softmax(text_similarities(views.row(0), text), config_.tau);
    rec.predicted = argmax_stable(p);
    rec.max_prob = p[rec.predicted];
    rec.entropy = entropy(p);
    return rec;
}

void Engine::finish_metrics(PredictionRecord& rec, std::optional<std::uint32_t> label) {
    if (label) rec.correct = *label == rec.predicted;
    rec.cache_size = cache_.size();
    rec.cache_accuracy = cache_.cache_accuracy([this](std::uint64_t source) -> std::optional<std::uint32_t> {
        return source < labels_.size() ? labels_[source] : std::nullopt;
    });
}

void Engine::update_thresholds(PredictionRecord& rec) {
    const std::uint64_t t = processed_ + 1;
    const std::uint64_t k = config_.refresh_interval;
    bool touched = false;
    if (k == 0) {
        thresholds_.apply_rarity_adaptation(cache_.class_counts());
        touched = true;
    } else if (t % k == 0) {
        thresholds_.refresh_thresholds();
        thresholds_.apply_rarity_adaptation(cache_.class_counts());
        touched = true;
    }
    if (!touched || !config_.trace_thresholds) return;
    for (std::size_t c = 0; c < thresholds_.class_count(); ++c) {
        rec.trace.push_back({t, c, thresholds_.thresholds()[c], thresholds_.sigma()[c], thresholds_.metric()[c]});
    }
}

PredictionRecord Engine::process_sample(const Matrix& views, std::optional<std::uint32_t> label) {
    if (views.rows() == 0) throw Error(ErrorCode::EmptyBatch, "sample has no views");
    if (views.cols() != bank_.dim()) {
        throw Error(ErrorCode::DimMismatch,
                    "views have dim " + std::to_string(views.cols()) + ", prototypes " + std::to_string(bank_.dim()));
    }
    labels_.push_back(label);

    if (config_.mode == EngineMode::ZeroShotOnly) {
        auto rec = zero_shot_record(views, initial_text_.prototypes());
        finish_metrics(rec, label);
        ++processed_;
        return rec;
    }

    const auto fusion = config_.fusion();
    const auto filter = config_.filter();
    PredictionRecord rec;
    rec.index = processed_;

    // (1) score views under the current prototypes, (2) filter, (3) one residual step
    auto start = Clock::now();
    ProbVector zs_probs;
    try {
        zs_probs = softmax(text_similarities(views.row(0), bank_.text), config_.tau);
        const auto before = effective_prototypes(bank_);
        const auto selection = filter_views(score_views(views, before, bank_.visual_present, fusion), config_.strategy, filter);
        rec.timings.score_us = micros_since(start);

        start = Clock::now();
        if (!config_.carry_optimizer_state) optimizer_.reset();
        const auto grads = compute_gradients(views, selection.indices, bank_, fusion);
        adamw_step(bank_, grads, optimizer_, config_.adamw());
        rec.degenerate_residual = apply_residuals(bank_).degenerate();
        rec.timings.adapt_us = micros_since(start);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteGradient && e.code() != ErrorCode::DegenerateSum &&
            e.code() != ErrorCode::InvalidDistribution) {
            throw;
        }
        bank_.zero_residuals();
        optimizer_.reset();
        rec = zero_shot_record(views, bank_.text);
        rec.fault = std::string(to_string(e.code()));
        finish_metrics(rec, label);
        ++processed_;
        return rec;
    }

    // (4) admission with the post-update view average (or the pre-update zero-shot prediction)
    start = Clock::now();
    ProbVector admit_probs;
    if (config_.admission_key == AdmissionKey::PostOptimization) {
        const auto after = effective_prototypes(bank_);
        admit_probs = filter_views(score_views(views, after, bank_.visual_present, fusion), config_.strategy, filter).p_ace;
    } else {
        admit_probs = zs_probs;
    }
    const std::size_t pseudo = argmax_stable(admit_probs);
    const double admit_max = admit_probs[pseudo];
    const double admit_entropy = entropy(admit_probs);
    rec.pseudo_label = pseudo;
    rec.threshold = thresholds_.admission_threshold(pseudo);
    const auto admit = cache_.try_admit(views.row(0), pseudo, admit_probs, *rec.threshold, config_.strategy, processed_);
    rec.admitted = admit.outcome != AdmitOutcome::Rejected && !admit.evicted_self;
    rec.evicted = admit.outcome == AdmitOutcome::AdmittedWithEviction;

    // (5) refresh the visual prototype of the class whose queue changed
    if (rec.admitted) {
        if (auto v = cache_.visual_prototype(pseudo)) {
            bank_.set_visual(pseudo, *v);
        } else {
            bank_.clear_visual(pseudo);
        }
    }
    rec.timings.admit_us = micros_since(start);

    // (6) final prediction on the clean view
    start = Clock::now();
    ProbVector final_probs;
    if (config_.report_pace) {
        const auto now = effective_prototypes(bank_);
        final_probs = filter_views(score_views(views, now, bank_.visual_present, fusion), config_.strategy, filter).p_ace;
    } else {
        final_probs = softmax(fused_logits(views.row(0), bank_, fusion));
    }
    rec.predicted = argmax_stable(final_probs);
    rec.max_prob = final_probs[rec.predicted];
    rec.entropy = entropy(final_probs);
    rec.timings.predict_us = micros_since(start);

    // (7) confidence counting and threshold refinement
    thresholds_.record_prediction(pseudo, admit_max, admit_entropy);
    if (config_.mode == EngineMode::Ace) update_thresholds(rec);

    finish_metrics(rec, label);
    ++processed_;
    return rec;
}

ordered_json RunReport::to_json() const {
    ordered_json j;
    j["samples"] = samples;
    j["accuracy"] = opt(accuracy);
    ordered_json per_class = ordered_json::array();
    for (const auto& a : per_class_accuracy) per_class.push_back(opt(a));
    j["per_class_accuracy"] = per_class;
    j["final_cache_accuracy"] = opt(final_cache_accuracy);
    ordered_json trace = ordered_json::array();
    for (const auto& a : cache_accuracy_trace) trace.push_back(opt(a));
    j["cache_accuracy_trace"] = trace;
    j["final_thresholds"] = final_thresholds;
    j["admissions"] = admissions;
    j["evictions"] = evictions;
    j["faults"] = faults;
    if (calibration) {
        j["calibration"] = {{"mean_max_prob", calibration->mean_max_prob},
                            {"mean_entropy", calibration->mean_entropy},
                            {"sample_count", calibration->sample_count}};
    } else {
        j["calibration"] = nullptr;
    }
    j["config"] = ace::to_json(config);
    j["wall_clock_s"] = wall_clock_s;
    return j;
}

std::optional<std::vector<std::uint32_t>> load_stream_labels(const io::DatasetManifest& manifest) {
    if (!manifest.labels) return std::nullopt;
    auto labels = io::read_labels(*manifest.labels);
    if (labels.empty()) return std::nullopt;
    if (labels.size() != manifest.sample_count) {
        throw Error(ErrorCode::InvalidManifest, "label count differs from sample_count");
    }
    for (auto l : labels) {
        if (l >= manifest.class_count()) throw Error(ErrorCode::InvalidManifest, "label out of class range");
    }
    return labels;
}

ZeroShotStats calibrate_manifest(const io::DatasetManifest& manifest, const TextPrototypeBank& bank, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "calibration fraction outside (0,1]");
    const auto limit = static_cast<std::uint64_t>(
        std::ceil(fraction * static_cast<double>(manifest.sample_count) - 1e-9));
    io::FeatureReader reader(manifest.image_views);
    std::uint64_t seen = 0;
    return calibrate_zero_shot_stats(
        [&](Embedding& z) {
            if (seen >= limit) return false;
            const auto views = reader.read_rows(manifest.views_per_sample);
            z.assign(views.row(0).begin(), views.row(0).end());
            ++seen;
            return true;
        },
        bank);
}

RunReport run_stream(const io::DatasetManifest& manifest, const EngineConfig& config, const RunOutputs& outputs) {
    const auto started = Clock::now();
    config.validate();
    io::validate_manifest(manifest);
    const auto prompts = io::read_feature_file(manifest.text_embeddings);
    auto text = build_text_prototypes(prompts, manifest.prompts_per_class, config.tau);
    const auto labels = load_stream_labels(manifest);

    RunReport report;
    report.config = config;
    if (config.zs_init && config.mode != EngineMode::ZeroShotOnly) {
        report.calibration = calibrate_manifest(manifest, text, config.calib_fraction);
    }

    Engine engine(std::move(text), config, report.calibration);
    const std::size_t C = manifest.class_count();
    std::vector<std::uint64_t> class_total(C, 0), class_hit(C, 0);
    std::uint64_t hits = 0;

    io::FeatureReader reader(manifest.image_views);
    for (std::uint64_t i = 0; i < manifest.sample_count; ++i) {
        const auto views = reader.read_rows(manifest.views_per_sample);
        const std::optional<std::uint32_t> label = labels ? std::optional((*labels)[i]) : std::nullopt;
        auto rec = engine.process_sample(views, label);
        if (label) {
            ++class_total[*label];
            if (rec.predicted == *label) {
                ++class_hit[*label];
                ++hits;
            }
        }
        if (rec.fault) ++report.faults;
        report.cache_accuracy_trace.push_back(rec.cache_accuracy);
        if (outputs.jsonl) {
            *outputs.jsonl << to_json(rec, config.emit_timings).dump() << '\n';
            for (const auto& row : trace_json(rec)) *outputs.jsonl << row.dump() << '\n';
        }
        rec.trace.clear();
        report.records.push_back(std::move(rec));
    }

    report.samples = manifest.sample_count;
    if (labels && report.samples > 0) {
        report.accuracy = static_cast<double>(hits) / static_cast<double>(report.samples);
    }
    report.per_class_accuracy.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (labels && class_total[c] > 0) {
            report.per_class_accuracy[c] = static_cast<double>(class_hit[c]) / static_cast<double>(class_total[c]);
        }
    }
    report.final_cache_accuracy = report.cache_accuracy_trace.empty() ? std::nullopt : report.cache_accuracy_trace.back();
    report.final_thresholds = engine.thresholds().thresholds();
    report.admissions = engine.cache().admissions();
    report.evictions = engine.cache().evictions();
    if (outputs.cache_dump) dump_cache(engine.cache(), manifest.dim, *outputs.cache_dump);
    report.wall_clock_s = std::chrono::duration<double>(Clock::now() - started).count();
    return report;
}

void dump_cache(const AdaptiveCache& cache, std::size_t dim, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    Matrix features(cache.size(), dim);
    std::vector<std::uint32_t> pseudo;
    std::size_t row = 0;
    for (std::size_t c = 0; c < cache.class_count(); ++c) {
        for (const auto& e : cache.entries(c)) {
            features.set_row(row++, e.feature);
            pseudo.push_back(static_cast<std::uint32_t>(e.pseudo_label));
        }
    }
    io::write_feature_file(dir / "cache_features.acef", features);
    io::write_labels(dir / "cache_labels.u32", pseudo);
}

}  // namespace ace
