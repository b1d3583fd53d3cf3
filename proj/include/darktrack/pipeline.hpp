#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "darktrack/cluster.hpp"
#include "darktrack/corpus.hpp"
#include "darktrack/dca.hpp"
#include "darktrack/embed.hpp"
#include "darktrack/gtlabel.hpp"
#include "darktrack/ingest.hpp"
#include "darktrack/report.hpp"

namespace darktrack {

struct RunConfig {
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path output_dir = "darktrack-out";
    std::filesystem::path ground_truth;  // optional sender_ip,label file

    std::size_t dimension = 200;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 1;
    double lr_start = 0.025;
    double lr_end = 1e-4;
    std::size_t max_services = 2500;
    std::size_t max_sentence_len = 10000;
    bool collapse_runs = true;

    std::size_t min_cluster_size = 10;
    double tau0 = 0.65;
    double tau1 = 0.3;
    std::size_t min_packets = kDefaultMinPackets;  // active = strictly more packets than this

    std::size_t bootstrap_days = 0;  // leading days that only train embeddings
    std::uint64_t seed = 1;
    std::size_t history_horizon = 0;  // days kept for backward matching, 0 = all
    unsigned threads = 1;
    bool save_checkpoints = true;
    bool mirai_labels = true;  // label fingerprinted senders as Mirai-like
    bool gt_refresh = false;   // re-apply the fingerprint on every test day

    TrainParams train_params() const;
    CorpusParams corpus_params() const;
    Thresholds thresholds() const;
};

/// Throws ConfigError naming the offending field.
void validate(const RunConfig& config);

/// Strict JSON: unknown keys and wrong types are ConfigErrors.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const std::string& text);
/// Every field except output_dir, keys sorted.
std::string config_to_json(const RunConfig& config);

/// Field names accepted by the config file.
std::vector<std::string> config_keys();
/// Sets one field from command-line text (JSON literal, or a bare string).
void set_config_field(RunConfig& config, const std::string& key, const std::string& text);

/// Parses every input log and batches it by day.
std::vector<DailyBatch> ingest_inputs(const RunConfig& config, std::vector<ParseReject>* rejects = nullptr);

struct DayClustering {
    Partition partition;
    SilhouetteReport silhouette;
    std::vector<Ipv4> rows;  // active senders in row order
};

/// Clusters one day's active senders with the current embeddings.
DayClustering cluster_day(const DailyBatch& batch, const EmbeddingModel& model, const RunConfig& config);

/// Lists every emitted artifact with its row count and digest.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir) : dir_(std::move(dir)) {}
    void add(const std::string& name, std::size_t rows);
    /// Writes manifest.csv; `status` is "complete" or "partial".
    void write(const std::string& status) const;

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::size_t>> entries_;
};

/// Writes transitions, emergences, lineage and breakdown artifacts for tracked partitions.
void write_tracking(const std::filesystem::path& dir, const DcaTracker& tracker, std::span<const Partition> partitions,
                    Manifest& manifest);

/// Feeds partitions (chronological) through a tracker.
DcaTracker track_partitions(const std::vector<Partition>& partitions, const Thresholds& th, std::size_t horizon);

/// Per-day progress line sink; empty = quiet.
using ProgressSink = std::function<void(const std::string&)>;

/// Full pipeline: ingest, per-day corpus + incremental embedding, clustering,
/// transition tracking, labels and reports. Stage failures are rethrown with the
/// stage and day prefixed, after writing a manifest marked partial.
void run_pipeline(const RunConfig& config, const ProgressSink& progress = {});

/// Trains embeddings only, saving a checkpoint per day.
void run_embed(const RunConfig& config, const ProgressSink& progress = {});

/// Clusters the test days from saved checkpoints into partitions.csv and silhouette.csv.
void run_cluster(const RunConfig& config, const ProgressSink& progress = {});

/// Traffic characterization, daily sender series and active-day distribution.
void run_ingest_stats(const RunConfig& config);

/// Reports from an existing run directory (partitions.csv, silhouette.csv, labels.csv).
void run_report(const std::filesystem::path& run_dir, const RunConfig& config);

/// Path of the checkpoint for `day` under a run directory.
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, Day day);

}  // namespace darktrack
