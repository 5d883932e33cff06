// ace: command-line front end for the streaming adaptation engine.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ace/cli.hpp"
#include "ace/gradcheck.hpp"
#include "ace/synthetic.hpp"
#include "ace/zeroshot.hpp"

namespace {

using namespace ace;
using namespace ace::cli;

// Options shared by run, sweep and dump.
struct RunFlags {
    std::string config;
    std::string manifest;
    std::optional<std::string> strategy;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> cache_size;
    bool no_zs_init = false;
    bool literal_adapt = false;
    std::optional<double> rho;
    std::optional<std::uint64_t> refresh_interval;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> jsonl;
    std::optional<std::string> report;
    std::optional<std::string> accuracy_csv;
    std::optional<std::string> threshold_csv;
    std::optional<std::string> cache_dump;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool outputs) {
    cmd->add_option("-c,--config", f.config, "Run config file (JSON)");
    cmd->add_option("-m,--manifest", f.manifest, "Dataset manifest (overrides the config file)");
    cmd->add_option("--strategy", f.strategy, "probability | entropy");
    cmd->add_option("--mode", f.mode, "ace | fixed-threshold-baseline | zeroshot-only");
    cmd->add_option("--cache-size", f.cache_size, "Queue size per class");
    cmd->add_flag("--no-zs-init", f.no_zs_init, "Initialise thresholds from fixed constants");
    cmd->add_flag("--literal-adapt", f.literal_adapt, "Multiply by the relaxation factor under both strategies");
    cmd->add_option("--rho", f.rho, "Fraction of views kept by the view filter");
    cmd->add_option("--refresh-interval", f.refresh_interval, "Samples between threshold refreshes (0 = never)");
    cmd->add_option("--seed", f.seed, "Run seed (echoed in the report)");
    if (!outputs) return;
    cmd->add_option("--jsonl", f.jsonl, "Write the record stream here");
    cmd->add_option("--report", f.report, "Write the report document here");
    cmd->add_option("--accuracy-csv", f.accuracy_csv, "Write running and cache accuracy here");
    cmd->add_option("--threshold-csv", f.threshold_csv, "Write the threshold trace here");
    cmd->add_option("--dump-cache", f.cache_dump, "Export the final cache into this directory");
}

RunConfigFile resolve_run_config(const RunFlags& f) {
    RunConfigFile cfg = f.config.empty() ? default_run_config() : load_run_config(f.config);
    auto flag = [&](const std::string& key) { cfg.mark(key, "flag"); };
    if (!f.manifest.empty()) {
        cfg.manifest = f.manifest;
        cfg.base_dir = ".";
        flag("manifest");
    }
    if (f.strategy) cfg.engine.strategy = parse_strategy(*f.strategy), flag("strategy");
    if (f.mode) cfg.engine.mode = parse_mode(*f.mode), flag("mode");
    if (f.cache_size) cfg.engine.cache_size = *f.cache_size, flag("cache_size");
    if (f.no_zs_init) cfg.engine.zs_init = false, flag("zs_init");
    if (f.literal_adapt) cfg.engine.literal_adapt = true, flag("literal_adapt");
    if (f.rho) cfg.engine.rho = *f.rho, flag("rho");
    if (f.refresh_interval) cfg.engine.refresh_interval = *f.refresh_interval, flag("refresh_interval");
    if (f.seed) cfg.engine.seed = *f.seed, flag("seed");
    // output paths given on the command line are relative to the working directory
    auto out = [&](const std::optional<std::string>& v, std::optional<std::string>& slot, const char* key) {
        if (!v) return;
        slot = std::filesystem::absolute(*v).string();
        flag(key);
    };
    out(f.jsonl, cfg.jsonl, "jsonl");
    out(f.report, cfg.report, "report");
    out(f.accuracy_csv, cfg.accuracy_csv, "accuracy_csv");
    out(f.threshold_csv, cfg.threshold_csv, "threshold_csv");
    out(f.cache_dump, cfg.cache_dump, "cache_dump");
    cfg.engine.validate();
    return cfg;
}

std::string fmt_opt(const nlohmann::ordered_json& v) { return v.is_null() ? "n/a" : v.dump(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming test-time adaptation over precomputed embeddings"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic shifted stream");
    io::SyntheticSpec spec;
    std::string synth_out = "synthetic";
    synth->add_option("--classes", spec.classes);
    synth->add_option("--dim", spec.dim);
    synth->add_option("--per-class", spec.samples_per_class);
    synth->add_option("--views", spec.views);
    synth->add_option("--prompts", spec.prompts_per_class);
    synth->add_option("--separation", spec.separation);
    synth->add_option("--intra-noise", spec.intra_noise);
    synth->add_option("--view-noise", spec.view_noise);
    synth->add_option("--prompt-noise", spec.prompt_noise);
    synth->add_option("--shift", spec.shift);
    synth->add_option("--seed", spec.seed);
    synth->add_option("-o,--out", synth_out, "Output directory");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Zero-shot statistics of a stream");
    std::string calib_manifest;
    double calib_fraction = 1.0;
    double calib_tau = 0.01;
    calibrate->add_option("-m,--manifest", calib_manifest)->required();
    calibrate->add_option("--fraction", calib_fraction, "Leading fraction of the stream to use");
    calibrate->add_option("--tau", calib_tau, "Softmax temperature");

    // run
    auto* run = app.add_subcommand("run", "Adapt over a stream and report");
    RunFlags run_flags;
    add_run_flags(run, run_flags, true);

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numeric residual gradients");
    std::size_t gc_instances = 100;
    std::uint64_t gc_seed = 1;
    std::optional<std::size_t> gc_classes, gc_dim, gc_views;
    GradcheckSpec gc_spec;
    gradcheck->add_option("--instances", gc_instances);
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--classes", gc_classes, "Fix C (default cycles 2,3,5)");
    gradcheck->add_option("--dim", gc_dim, "Fix d (default cycles 4,8)");
    gradcheck->add_option("--views", gc_views, "Fix V (default cycles 1,4,8)");
    gradcheck->add_option("--step", gc_spec.step);
    gradcheck->add_option("--tolerance", gc_spec.tolerance);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "One run per value of an ablation axis");
    RunFlags sweep_flags;
    add_run_flags(sweep, sweep_flags, false);
    std::string sweep_axis;
    std::vector<std::string> sweep_values;
    bool sweep_values_given = false;
    sweep->add_option("--axis", sweep_axis, "cache-size | strategy | zs-init")->required();
    sweep->add_option("--values", sweep_values, "Comma-separated values")->delimiter(',')->expected(0, -1)->each([&](const std::string&) {});
    sweep->callback([&] { sweep_values_given = sweep->count("--values") > 0; });

    // report
    auto* report = app.add_subcommand("report", "Summarise a record stream");
    std::string report_jsonl;
    std::optional<std::string> report_acc_csv, report_thr_csv;
    report->add_option("jsonl", report_jsonl, "Record stream")->required();
    report->add_option("--accuracy-csv", report_acc_csv);
    report->add_option("--threshold-csv", report_thr_csv);

    // dump
    auto* dump = app.add_subcommand("dump", "Run and export the final cache for plotting");
    RunFlags dump_flags;
    add_run_flags(dump, dump_flags, false);
    std::string dump_out;
    dump->add_option("-o,--out", dump_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*synth) {
            auto stream = io::generate_synthetic_stream(spec);
            std::cout << io::write_synthetic_stream(stream, synth_out).string() << '\n';
        } else if (*calibrate) {
            const auto manifest = io::load_manifest(calib_manifest);
            io::validate_manifest(manifest);
            const auto text = build_text_prototypes(io::read_feature_file(manifest.text_embeddings),
                                                    manifest.prompts_per_class, calib_tau);
            const auto stats = calibrate_manifest(manifest, text, calib_fraction);
            nlohmann::ordered_json j;
            j["mean_max_prob"] = stats.mean_max_prob;
            j["mean_entropy"] = stats.mean_entropy;
            j["sample_count"] = stats.sample_count;
            std::cout << j.dump(2) << '\n';
        } else if (*run) {
            const auto cfg = resolve_run_config(run_flags);
            const auto doc = execute_run(cfg);
            std::cout << "samples " << doc["samples"].get<std::uint64_t>() << "  accuracy " << fmt_opt(doc["accuracy"])
                      << "  cache_accuracy " << fmt_opt(doc["final_cache_accuracy"]) << "  admissions "
                      << doc["admissions"].get<std::uint64_t>() << "  evictions "
                      << doc["evictions"].get<std::uint64_t>() << "  faults " << doc["faults"].get<std::uint64_t>()
                      << '\n';
            if (!cfg.report) std::cout << doc.dump(2) << '\n';
        } else if (*gradcheck) {
            const std::size_t cs[] = {2, 3, 5}, ds[] = {4, 8}, vs[] = {1, 4, 8};
            std::size_t failures = 0;
            double worst = 0.0;
            for (std::size_t i = 0; i < gc_instances; ++i) {
                GradcheckSpec s = gc_spec;
                s.classes = gc_classes.value_or(cs[i % 3]);
                s.dim = gc_dim.value_or(ds[(i / 3) % 2]);
                s.views = gc_views.value_or(vs[(i / 6) % 3]);
                const auto r = finite_difference_check(s, gc_seed + i);
                worst = std::max(worst, r.max_rel_error);
                if (!r.passed) {
                    ++failures;
                    std::cout << "instance " << i << " (C=" << s.classes << " d=" << s.dim << " V=" << s.views
                              << "): " << r.describe() << '\n';
                }
            }
            std::cout << (failures == 0 ? "PASS" : "FAIL") << " " << gc_instances - failures << "/" << gc_instances
                      << " instances, max relative error " << worst << '\n';
            return failures == 0 ? kExitOk : kExitCheckFailed;
        } else if (*sweep) {
            if (!sweep_values_given || sweep_values.empty()) {
                std::cerr << "sweep: --values needs at least one value\n";
                return kExitConfig;
            }
            const auto axis = parse_sweep_axis(sweep_axis);
            const auto cfg = resolve_run_config(sweep_flags);
            const auto cells = run_sweep(cfg, axis, sweep_values);
            std::cout << render_sweep(axis, cells);
            for (const auto& c : cells) {
                if (c.failure) return kExitInternal;
            }
        } else if (*report) {
            const auto summary = summarize_jsonl_file(report_jsonl);
            std::cout << summary.to_json().dump(2) << '\n';
            if (report_acc_csv) {
                std::ofstream out(*report_acc_csv);
                if (!out) throw Error(ErrorCode::IoError, "cannot open " + *report_acc_csv + " for writing");
                out.precision(17);
                write_accuracy_csv(summary, out);
            }
            if (report_thr_csv) {
                std::ofstream out(*report_thr_csv);
                if (!out) throw Error(ErrorCode::IoError, "cannot open " + *report_thr_csv + " for writing");
                out.precision(17);
                write_threshold_csv(summary, out);
            }
        } else if (*dump) {
            auto cfg = resolve_run_config(dump_flags);
            cfg.cache_dump = std::filesystem::absolute(dump_out).string();
            cfg.mark("cache_dump", "flag");
            const auto doc = execute_run(cfg);
            const auto dir = std::filesystem::path(*cfg.cache_dump);
            std::cout << (dir / "cache_features.acef").string() << '\n' << (dir / "cache_labels.u32").string() << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return kExitOk;
}
