// darktrack: daily darknet sender embedding, clustering and cluster-evolution tracking.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "darktrack/io.hpp"
#include "darktrack/pipeline.hpp"
#include "darktrack/synth.hpp"

namespace fs = std::filesystem;
using namespace darktrack;

namespace {

enum ExitCode { kOk = 0, kInput = 1, kConfig = 2, kInternal = 3 };

std::string dashed(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

/// Config file plus one flag per config field; flags win over the file.
struct ConfigFlags {
    std::string config_file;
    std::vector<std::string> inputs;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_file, "JSON run configuration");
        cmd->add_option("-i,--input", inputs, "Packet log (CSV, optionally gzipped); repeatable");
        for (const auto& key : config_keys()) {
            if (key == "inputs") continue;
            const std::string name = (key == "output_dir" ? "-o,--" : "--") + dashed(key);
            options[key] = cmd->add_option(name, values[key]);
        }
    }

    RunConfig resolve(const std::optional<fs::path>& fallback_file = std::nullopt) const {
        RunConfig c;
        if (!config_file.empty()) {
            c = load_config(config_file);
        } else if (fallback_file && fs::exists(*fallback_file)) {
            c = load_config(*fallback_file);
        }
        if (!inputs.empty()) c.inputs.assign(inputs.begin(), inputs.end());
        for (const auto& [key, opt] : options) {
            if (opt->count()) set_config_field(c, key, values.at(key));
        }
        return c;
    }
};

void progress(const std::string& line) { std::cerr << line << '\n'; }

void print_score(const ScoreReport& r) {
    for (const auto& [kind, s] : r.kinds) {
        std::cout << kind << ": expected " << s.expected << ", predicted " << s.predicted << ", precision "
                  << format_double(s.precision(), 3) << ", recall " << format_double(s.recall(), 3) << '\n';
    }
    std::cout << "novelty accuracy " << format_double(r.novelty_accuracy(), 3) << " over " << r.novelty_checked
              << " emerged clusters\n";
    std::cout << "purity min " << format_double(r.min_purity, 3) << ", mean " << format_double(r.mean_purity, 3)
              << "; unmatched planted clusters " << r.unmatched_groups << '\n';
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Daily darknet sender embedding, clustering and cluster-evolution tracking"};
    app.require_subcommand(1);

    ConfigFlags run_flags, stats_flags, embed_flags, cluster_flags, track_flags, report_flags;
    bool dump_config = false;

    auto* run = app.add_subcommand("run", "Full pipeline over the input logs");
    run_flags.attach(run);
    run->add_flag("--dump-config", dump_config, "Print the resolved configuration and exit");

    auto* stats = app.add_subcommand("ingest-stats", "Traffic characterization and daily sender counts");
    stats_flags.attach(stats);

    auto* embed = app.add_subcommand("embed", "Incremental embedding training with per-day checkpoints");
    embed_flags.attach(embed);

    auto* cluster = app.add_subcommand("cluster", "Cluster test days from saved checkpoints");
    cluster_flags.attach(cluster);

    std::string partitions_file;
    auto* track = app.add_subcommand("track", "Transition tracking over partition snapshots");
    track_flags.attach(track);
    track->add_option("-p,--partitions", partitions_file, "Partition snapshot (day,sender,cluster)")->required();

    std::string run_dir;
    auto* report = app.add_subcommand("report", "Rebuild reports from a run directory");
    report_flags.attach(report);
    report->add_option("-r,--run", run_dir, "Run directory")->required();

    std::string scenario_file, synth_out;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "Generate a scripted synthetic packet log");
    synth->add_option("-s,--scenario", scenario_file, "Scenario JSON (default: built-in 7-day scenario)");
    synth->add_option("-o,--output-dir", synth_out, "Output directory")->required();
    synth->add_option("--seed", synth_seed, "Override the scenario seed");

    std::string score_run, score_truth;
    auto* score_cmd = app.add_subcommand("score", "Compare a run against a synthetic scenario's script");
    score_cmd->add_option("-r,--run", score_run, "Run directory")->required();
    score_cmd->add_option("-t,--truth", score_truth, "Scenario directory written by synth")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    if (run->parsed()) {
        const auto config = run_flags.resolve();
        validate(config);
        if (dump_config) {
            std::cout << config_to_json(config) << '\n';
            return kOk;
        }
        run_pipeline(config, progress);
    } else if (stats->parsed()) {
        run_ingest_stats(stats_flags.resolve());
    } else if (embed->parsed()) {
        run_embed(embed_flags.resolve(), progress);
    } else if (cluster->parsed()) {
        run_cluster(cluster_flags.resolve(), progress);
    } else if (track->parsed()) {
        const auto config = track_flags.resolve();
        const auto partitions = read_partitions(partitions_file);
        const auto tracker = track_partitions(partitions, config.thresholds(), config.history_horizon);
        fs::create_directories(config.output_dir);
        Manifest manifest(config.output_dir);
        write_tracking(config.output_dir, tracker, partitions, manifest);
        manifest.write("complete");
    } else if (report->parsed()) {
        const auto config = report_flags.resolve(fs::path(run_dir) / "config.json");
        run_report(run_dir, config);
    } else if (synth->parsed()) {
        auto spec = scenario_file.empty() ? reference_scenario() : load_scenario(scenario_file);
        if (synth_seed) spec.seed = *synth_seed;
        fs::create_directories(synth_out);
        write_scenario(synth_out, generate(spec));
        save_scenario(fs::path(synth_out) / "scenario.json", spec);
    } else if (score_cmd->parsed()) {
        const auto config = load_config(fs::path(score_run) / "config.json");
        const auto partitions = read_partitions(fs::path(score_run) / "partitions.csv");
        const auto tracker = track_partitions(partitions, config.thresholds(), config.history_horizon);
        const auto report_data = score(read_expected(score_truth), partitions, tracker.results());
        write_score(fs::path(score_run) / "score.csv", report_data);
        print_score(report_data);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kInput;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ContractViolation& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}
