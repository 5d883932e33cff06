#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ace/adaptive_cache.hpp"
#include "ace/curriculum_thresholds.hpp"
#include "ace/engine_config.hpp"
#include "ace/feature_io.hpp"
#include "ace/prototype_adapter.hpp"
#include "ace/zeroshot.hpp"

namespace ace {

struct StageTimings {
    double score_us = 0.0;
    double adapt_us = 0.0;
    double admit_us = 0.0;
    double predict_us = 0.0;
};

struct ThresholdTraceRow {
    std::uint64_t t = 0;
    std::size_t c = 0;
    double threshold = 0.0;
    double sigma = 0.0;
    double metric = 0.0;
};

struct PredictionRecord {
    std::uint64_t index = 0;
    std::size_t predicted = 0;
    double max_prob = 0.0;
    double entropy = 0.0;
    std::optional<std::size_t> pseudo_label;  // absent in zeroshot-only mode and on faults
    bool admitted = false;
    bool evicted = false;
    std::optional<double> threshold;  // T(pseudo_label) at admission time
    std::optional<bool> correct;      // needs a label
    std::optional<double> cache_accuracy;
    std::uint64_t cache_size = 0;
    std::optional<std::string> fault;  // error code that downgraded this sample to zero-shot
    bool degenerate_residual = false;  // some prototype kept its old value
    StageTimings timings;
    std::vector<ThresholdTraceRow> trace;  // rows emitted by a refresh after this sample
};

/// One object per line; key order is fixed. Timings appear only when asked.
nlohmann::ordered_json to_json(const PredictionRecord& r, bool with_timings);
std::vector<nlohmann::ordered_json> trace_json(const PredictionRecord& r);

/// The online adaptation state for one stream.
class Engine {
  public:
    /// `stats` seeds the thresholds when zs_init is on; it is required then
    /// (outside zeroshot-only mode).
    Engine(TextPrototypeBank text, const EngineConfig& config, const std::optional<ZeroShotStats>& stats);

    /// Runs the per-sample pipeline on one sample's views (row 0 is the clean
    /// view). `label` only feeds metric fields.
    PredictionRecord process_sample(const Matrix& views, std::optional<std::uint32_t> label = std::nullopt);

    const EngineConfig& config() const noexcept { return config_; }
    const PrototypeBank& bank() const noexcept { return bank_; }
    const AdaptiveCache& cache() const noexcept { return cache_; }
    const ThresholdState& thresholds() const noexcept { return thresholds_; }
    const TextPrototypeBank& initial_text() const noexcept { return initial_text_; }
    std::uint64_t processed() const noexcept { return processed_; }

  private:
    PredictionRecord zero_shot_record(const Matrix& views, const Matrix& text) const;
    void finish_metrics(PredictionRecord& rec, std::optional<std::uint32_t> label);
    void update_thresholds(PredictionRecord& rec);

    EngineConfig config_;
    TextPrototypeBank initial_text_;
    PrototypeBank bank_;
    AdaptiveCache cache_;
    ThresholdState thresholds_;
    OptimizerState optimizer_;
    std::vector<std::optional<std::uint32_t>> labels_;  // by stream index, metrics only
    std::uint64_t processed_ = 0;
};

struct RunReport {
    std::uint64_t samples = 0;
    std::optional<double> accuracy;
    std::vector<std::optional<double>> per_class_accuracy;
    std::optional<double> final_cache_accuracy;
    std::vector<std::optional<double>> cache_accuracy_trace;
    std::vector<double> final_thresholds;
    std::uint64_t admissions = 0;
    std::uint64_t evictions = 0;
    std::uint64_t faults = 0;
    std::optional<ZeroShotStats> calibration;
    EngineConfig config;
    double wall_clock_s = 0.0;
    std::vector<PredictionRecord> records;

    nlohmann::ordered_json to_json() const;
};

struct RunOutputs {
    std::ostream* jsonl = nullptr;                      // record stream
    std::optional<std::filesystem::path> cache_dump;    // directory for the cached-feature export
};

/// Calibration pre-pass over the clean views of the first
/// ceil(fraction * N) samples.
ZeroShotStats calibrate_manifest(const io::DatasetManifest& manifest, const TextPrototypeBank& bank,
                                 double fraction = 1.0);

/// Labels of the stream, or nullopt when the manifest has none (or the file
/// is empty).
std::optional<std::vector<std::uint32_t>> load_stream_labels(const io::DatasetManifest& manifest);

/// Full run: optional calibration, then every sample in stream order.
RunReport run_stream(const io::DatasetManifest& manifest, const EngineConfig& config, const RunOutputs& outputs = {});

/// Writes cache_features.acef (class-major, each class in priority order)
/// and cache_labels.u32 (pseudo-labels) into `dir`.
void dump_cache(const AdaptiveCache& cache, std::size_t dim, const std::filesystem::path& dir);

}  // namespace ace
