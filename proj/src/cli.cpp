#include "ace/cli.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace ace::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigInvalid:
        case ErrorCode::InvalidSpec:
        case ErrorCode::InvalidParams:
        case ErrorCode::InvalidThreshold:
            return kExitConfig;
        case ErrorCode::IoError:
        case ErrorCode::BadMagic:
        case ErrorCode::UnsupportedVersion:
        case ErrorCode::TruncatedFile:
        case ErrorCode::ShapeMismatch:
        case ErrorCode::DimMismatch:
        case ErrorCode::InvalidManifest:
        case ErrorCode::MalformedRecord:
            return kExitIo;
        default:
            return kExitInternal;
    }
}

const std::vector<std::string>& path_keys() {
    static const std::vector<std::string> keys{"manifest", "jsonl", "report", "accuracy_csv", "threshold_csv",
                                               "cache_dump"};
    return keys;
}

fs::path RunConfigFile::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

namespace {

std::optional<std::string>* optional_path(RunConfigFile& cfg, const std::string& key) {
    if (key == "jsonl") return &cfg.jsonl;
    if (key == "report") return &cfg.report;
    if (key == "accuracy_csv") return &cfg.accuracy_csv;
    if (key == "threshold_csv") return &cfg.threshold_csv;
    if (key == "cache_dump") return &cfg.cache_dump;
    return nullptr;
}

}  // namespace

RunConfigFile default_run_config() {
    RunConfigFile cfg;
    for (const auto& k : engine_config_keys()) cfg.mark(k, "default");
    for (const auto& k : path_keys()) cfg.mark(k, "default");
    return cfg;
}

RunConfigFile parse_run_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "run config must be a JSON object");
    RunConfigFile cfg = default_run_config();
    cfg.base_dir = base_dir;
    json engine_part = json::object();
    for (const auto& [key, value] : j.items()) {
        if (key == "manifest") {
            if (!value.is_string()) throw Error(ErrorCode::ConfigInvalid, "key 'manifest' must be a string");
            cfg.manifest = value.get<std::string>();
        } else if (auto* slot = optional_path(cfg, key)) {
            if (value.is_null()) {
                slot->reset();
            } else if (value.is_string()) {
                *slot = value.get<std::string>();
            } else {
                throw Error(ErrorCode::ConfigInvalid, "key '" + key + "' must be a string or null");
            }
        } else {
            engine_part[key] = value;
        }
        cfg.mark(key, "file");
    }
    apply_json(cfg.engine, engine_part);
    return cfg;
}

RunConfigFile load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ConfigInvalid, path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

ordered_json to_json(const RunConfigFile& cfg) {
    ordered_json j = ace::to_json(cfg.engine);
    j["manifest"] = cfg.manifest;
    auto put = [&](const char* key, const std::optional<std::string>& v) {
        j[key] = v ? ordered_json(*v) : ordered_json(nullptr);
    };
    put("jsonl", cfg.jsonl);
    put("report", cfg.report);
    put("accuracy_csv", cfg.accuracy_csv);
    put("threshold_csv", cfg.threshold_csv);
    put("cache_dump", cfg.cache_dump);
    return j;
}

ordered_json StreamSummary::to_json() const {
    ordered_json j;
    j["samples"] = samples;
    j["labelled"] = labelled;
    j["accuracy"] = accuracy ? ordered_json(*accuracy) : ordered_json(nullptr);
    j["final_cache_accuracy"] = final_cache_accuracy ? ordered_json(*final_cache_accuracy) : ordered_json(nullptr);
    j["admitted"] = admitted;
    j["evicted"] = evicted;
    j["faults"] = faults;
    j["threshold_rows"] = thresholds.size();
    return j;
}

namespace {

[[noreturn]] void malformed(std::uint64_t line, const std::string& what) {
    throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + what);
}

}  // namespace

StreamSummary summarize_jsonl(std::istream& in) {
    StreamSummary s;
    std::string text;
    std::uint64_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception&) {
            malformed(line, "not valid JSON");
        }
        if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) malformed(line, "missing record type");
        try {
            const auto type = j["type"].get<std::string>();
            if (type == "prediction") {
                const auto index = j.at("index").get<std::uint64_t>();
                if (index != s.samples) malformed(line, "expected index " + std::to_string(s.samples));
                ++s.samples;
                const auto& correct = j.at("correct");
                if (!correct.is_null()) {
                    ++s.labelled;
                    if (correct.get<bool>()) ++s.hits;
                }
                if (j.at("admitted").get<bool>()) ++s.admitted;
                if (j.at("evicted").get<bool>()) ++s.evicted;
                if (!j.at("fault").is_null()) ++s.faults;
                StreamSummary::Point p{index, std::nullopt, std::nullopt};
                if (s.labelled > 0) p.running_accuracy = static_cast<double>(s.hits) / static_cast<double>(s.labelled);
                const auto& ca = j.at("cache_accuracy");
                if (!ca.is_null()) p.cache_accuracy = ca.get<double>();
                s.final_cache_accuracy = p.cache_accuracy;
                s.curve.push_back(p);
            } else if (type == "threshold") {
                s.thresholds.push_back({j.at("t").get<std::uint64_t>(), j.at("class").get<std::size_t>(),
                                        j.at("threshold").get<double>(), j.at("sigma").get<double>(),
                                        j.at("m").get<double>()});
            } else {
                malformed(line, "unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            malformed(line, e.what());
        }
    }
    if (s.labelled > 0) s.accuracy = static_cast<double>(s.hits) / static_cast<double>(s.labelled);
    return s;
}

StreamSummary summarize_jsonl_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return summarize_jsonl(in);
}

namespace {

void cell(std::ostream& out, const std::optional<double>& v) {
    if (v) out << *v;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << std::setprecision(17);
    return out;
}

}  // namespace

void write_accuracy_csv(const StreamSummary& s, std::ostream& out) {
    out << "index,running_accuracy,cache_accuracy\n";
    for (const auto& p : s.curve) {
        out << p.index << ',';
        cell(out, p.running_accuracy);
        out << ',';
        cell(out, p.cache_accuracy);
        out << '\n';
    }
}

void write_threshold_csv(const StreamSummary& s, std::ostream& out) {
    out << "t,class,threshold,sigma,m\n";
    for (const auto& r : s.thresholds) {
        out << r.t << ',' << r.c << ',' << r.threshold << ',' << r.sigma << ',' << r.metric << '\n';
    }
}

ordered_json execute_run(const RunConfigFile& cfg) {
    if (cfg.manifest.empty()) throw Error(ErrorCode::ConfigInvalid, "no manifest given");
    cfg.engine.validate();
    const auto manifest = io::load_manifest(cfg.resolve(cfg.manifest));

    std::ostringstream jsonl;
    RunOutputs outputs;
    outputs.jsonl = &jsonl;
    if (cfg.cache_dump) outputs.cache_dump = cfg.resolve(*cfg.cache_dump);
    const auto report = run_stream(manifest, cfg.engine, outputs);

    if (cfg.jsonl) {
        auto out = open_output(cfg.resolve(*cfg.jsonl));
        out << jsonl.str();
    }
    if (cfg.accuracy_csv || cfg.threshold_csv) {
        std::istringstream replay(jsonl.str());
        const auto summary = summarize_jsonl(replay);
        if (cfg.accuracy_csv) {
            auto out = open_output(cfg.resolve(*cfg.accuracy_csv));
            write_accuracy_csv(summary, out);
        }
        if (cfg.threshold_csv) {
            auto out = open_output(cfg.resolve(*cfg.threshold_csv));
            write_threshold_csv(summary, out);
        }
    }

    ordered_json doc = report.to_json();
    doc["config"] = to_json(cfg);
    ordered_json sources = ordered_json::object();
    for (const auto& k : engine_config_keys()) sources[k] = cfg.sources.count(k) ? cfg.sources.at(k) : "default";
    for (const auto& k : path_keys()) sources[k] = cfg.sources.count(k) ? cfg.sources.at(k) : "default";
    doc["config_sources"] = sources;
    if (cfg.report) {
        auto out = open_output(cfg.resolve(*cfg.report));
        out << doc.dump(2) << '\n';
    }
    return doc;
}

SweepAxis parse_sweep_axis(const std::string& text) {
    if (text == "cache-size") return SweepAxis::CacheSize;
    if (text == "strategy") return SweepAxis::Strategy;
    if (text == "zs-init") return SweepAxis::ZsInit;
    throw Error(ErrorCode::ConfigInvalid, "unknown sweep axis '" + text + "' (cache-size, strategy, zs-init)");
}

namespace {

void apply_axis(EngineConfig& cfg, SweepAxis axis, const std::string& value) {
    switch (axis) {
        case SweepAxis::CacheSize: {
            std::size_t used = 0;
            unsigned long long m = 0;
            try {
                m = std::stoull(value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != value.size() || value.empty() || value[0] == '-') {
                throw Error(ErrorCode::ConfigInvalid, "cache size '" + value + "' is not a non-negative integer");
            }
            cfg.cache_size = m;
            break;
        }
        case SweepAxis::Strategy:
            cfg.strategy = parse_strategy(value);
            break;
        case SweepAxis::ZsInit:
            if (value == "on") {
                cfg.zs_init = true;
            } else if (value == "off") {
                cfg.zs_init = false;
            } else {
                throw Error(ErrorCode::ConfigInvalid, "zs-init value '" + value + "' (expected on/off)");
            }
            break;
    }
}

std::string axis_name(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::CacheSize: return "cache-size";
        case SweepAxis::Strategy: return "strategy";
        case SweepAxis::ZsInit: return "zs-init";
    }
    return "value";
}

std::string fmt(const std::optional<double>& v) {
    if (!v) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << *v;
    return os.str();
}

}  // namespace

std::vector<SweepCell> run_sweep(const RunConfigFile& base, SweepAxis axis, const std::vector<std::string>& values) {
    if (values.empty()) throw Error(ErrorCode::ConfigInvalid, "sweep needs at least one value");
    std::vector<EngineConfig> configs;
    for (const auto& v : values) {
        EngineConfig c = base.engine;
        apply_axis(c, axis, v);
        configs.push_back(c);
    }
    if (base.manifest.empty()) throw Error(ErrorCode::ConfigInvalid, "no manifest given");
    const auto manifest = io::load_manifest(base.resolve(base.manifest));

    std::vector<SweepCell> cells;
    for (std::size_t i = 0; i < values.size(); ++i) {
        SweepCell cell{values[i], std::nullopt, std::nullopt, std::nullopt};
        try {
            const auto report = run_stream(manifest, configs[i]);
            cell.accuracy = report.accuracy;
            cell.cache_accuracy = report.final_cache_accuracy;
        } catch (const Error& e) {
            cell.failure = e.what();
        }
        cells.push_back(std::move(cell));
    }
    return cells;
}

std::string render_sweep(SweepAxis axis, const std::vector<SweepCell>& cells) {
    std::ostringstream os;
    const std::string head = axis_name(axis);
    std::size_t width = head.size();
    for (const auto& c : cells) width = std::max(width, c.value.size());
    os << std::left << std::setw(static_cast<int>(width)) << head << "  accuracy  cache_accuracy\n";
    for (const auto& c : cells) {
        os << std::left << std::setw(static_cast<int>(width)) << c.value << "  ";
        if (c.failure) {
            os << "FAILED    " << *c.failure << '\n';
        } else {
            os << std::setw(8) << fmt(c.accuracy) << "  " << fmt(c.cache_accuracy) << '\n';
        }
    }
    return os.str();
}

}  // namespace ace::cli
