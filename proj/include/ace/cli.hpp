#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ace/engine.hpp"
#include "ace/error.hpp"

namespace ace::cli {

/// Process exit statuses. These are part of the command-line contract.
enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,
    kExitConfig = 2,
    kExitIo = 3,
    kExitInternal = 4,
};

int exit_code_for(ErrorCode code);

/// A run described as one flat JSON object: every EngineConfig key plus
/// the input manifest and the output paths. Paths are kept as written;
/// relative ones resolve against `base_dir`.
struct RunConfigFile {
    EngineConfig engine;
    std::string manifest;
    std::optional<std::string> jsonl;
    std::optional<std::string> report;
    std::optional<std::string> accuracy_csv;
    std::optional<std::string> threshold_csv;
    std::optional<std::string> cache_dump;

    std::filesystem::path base_dir = ".";
    /// key -> "default" | "file" | "flag"
    std::map<std::string, std::string> sources;

    std::filesystem::path resolve(const std::string& p) const;
    /// Records where `key` got its value.
    void mark(const std::string& key, const std::string& origin) { sources[key] = origin; }
};

/// Keys beyond the EngineConfig ones.
const std::vector<std::string>& path_keys();

/// Unknown keys and wrong types raise ConfigInvalid.
RunConfigFile parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
RunConfigFile load_run_config(const std::filesystem::path& path);
/// Every key, unset paths as null. parse_run_config(to_json(x)) == x.
nlohmann::ordered_json to_json(const RunConfigFile& cfg);
/// Fresh config whose sources all read "default".
RunConfigFile default_run_config();

/// Aggregate of a JSONL record stream.
struct StreamSummary {
    std::uint64_t samples = 0;
    std::uint64_t labelled = 0;
    std::uint64_t hits = 0;
    std::uint64_t admitted = 0;
    std::uint64_t evicted = 0;
    std::uint64_t faults = 0;
    std::optional<double> accuracy;
    std::optional<double> final_cache_accuracy;
    struct Point {
        std::uint64_t index;
        std::optional<double> running_accuracy;
        std::optional<double> cache_accuracy;
    };
    std::vector<Point> curve;
    std::vector<ThresholdTraceRow> thresholds;

    nlohmann::ordered_json to_json() const;
};

/// Reads one record per line. Blank lines are skipped. Anything else that is
/// not a prediction or threshold record raises MalformedRecord naming the
/// 1-based line number.
StreamSummary summarize_jsonl(std::istream& in);
StreamSummary summarize_jsonl_file(const std::filesystem::path& path);

/// index,running_accuracy,cache_accuracy (empty cell = unavailable)
void write_accuracy_csv(const StreamSummary& s, std::ostream& out);
/// t,class,threshold,sigma,m
void write_threshold_csv(const StreamSummary& s, std::ostream& out);

/// Runs the configured stream and writes every requested output.
/// Returns the report document (run report + config echo + sources).
nlohmann::ordered_json execute_run(const RunConfigFile& cfg);

enum class SweepAxis { CacheSize, Strategy, ZsInit };
SweepAxis parse_sweep_axis(const std::string& text);

struct SweepCell {
    std::string value;
    std::optional<double> accuracy;
    std::optional<double> cache_accuracy;
    std::optional<std::string> failure;  // error text when the cell failed
};

/// One run per value; a failing cell is recorded, the rest still run.
/// An empty value list or an unparseable value raises ConfigInvalid.
std::vector<SweepCell> run_sweep(const RunConfigFile& base, SweepAxis axis, const std::vector<std::string>& values);
/// Plain-text table: value | accuracy | cache accuracy.
std::string render_sweep(SweepAxis axis, const std::vector<SweepCell>& cells);

}  // namespace ace::cli
