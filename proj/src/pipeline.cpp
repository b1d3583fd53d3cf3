#include "darktrack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "darktrack/io.hpp"

namespace darktrack {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Above this many active senders distances are computed on demand instead of stored.
constexpr std::size_t kDenseLimit = 4000;

template <class T>
T as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + key + "' has the wrong type");
    }
}

std::size_t as_count(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ConfigError("config field '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

double as_real(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config field '" + key + "' must be a number");
    return v.get<double>();
}

using Setter = void (*)(RunConfig&, const json&);
using Getter = json (*)(const RunConfig&);

struct Field {
    Setter set;
    Getter get;
};

#define DT_COUNT(name)                                                                   \
    {#name, {[](RunConfig& c, const json& v) { c.name = as_count(v, #name); },          \
             [](const RunConfig& c) { return json(c.name); }}}
#define DT_REAL(name)                                                                    \
    {#name, {[](RunConfig& c, const json& v) { c.name = as_real(v, #name); },           \
             [](const RunConfig& c) { return json(c.name); }}}
#define DT_BOOL(name)                                                                    \
    {#name, {[](RunConfig& c, const json& v) { c.name = as<bool>(v, #name); },          \
             [](const RunConfig& c) { return json(c.name); }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"inputs", {[](RunConfig& c, const json& v) {
                        c.inputs.clear();
                        if (v.is_string()) {
                            c.inputs.emplace_back(v.get<std::string>());
                            return;
                        }
                        for (const auto& p : as<std::vector<std::string>>(v, "inputs")) c.inputs.emplace_back(p);
                    },
                    [](const RunConfig& c) {
                        json a = json::array();
                        for (const auto& p : c.inputs) a.push_back(p.string());
                        return a;
                    }}},
        {"ground_truth", {[](RunConfig& c, const json& v) { c.ground_truth = as<std::string>(v, "ground_truth"); },
                          [](const RunConfig& c) { return json(c.ground_truth.string()); }}},
        DT_COUNT(dimension),
        DT_COUNT(window),
        DT_COUNT(negatives),
        DT_COUNT(epochs),
        DT_REAL(lr_start),
        DT_REAL(lr_end),
        DT_COUNT(max_services),
        DT_COUNT(max_sentence_len),
        DT_BOOL(collapse_runs),
        DT_COUNT(min_cluster_size),
        DT_REAL(tau0),
        DT_REAL(tau1),
        DT_COUNT(min_packets),
        DT_COUNT(bootstrap_days),
        {"seed", {[](RunConfig& c, const json& v) { c.seed = as_count(v, "seed"); },
                  [](const RunConfig& c) { return json(c.seed); }}},
        DT_COUNT(history_horizon),
        {"threads", {[](RunConfig& c, const json& v) { c.threads = static_cast<unsigned>(as_count(v, "threads")); },
                     [](const RunConfig& c) { return json(c.threads); }}},
        DT_BOOL(save_checkpoints),
        DT_BOOL(mirai_labels),
        DT_BOOL(gt_refresh),
    };
    return table;
}

#undef DT_COUNT
#undef DT_REAL
#undef DT_BOOL

std::string prefix(std::string_view stage, std::optional<Day> day) {
    std::string p = "[" + std::string(stage);
    if (day) p += " " + day->to_string();
    return p + "] ";
}

// Runs `f`, re-raising any library error with the stage and day attached.
template <class F>
auto stage(std::string_view name, std::optional<Day> day, F&& f) {
    try {
        return f();
    } catch (const InputError& e) {
        throw InputError(prefix(name, day) + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(prefix(name, day) + e.what());
    } catch (const ContractViolation& e) {
        throw ContractViolation(prefix(name, day) + e.what());
    }
}

struct InputReject {
    fs::path file;
    ParseReject reject;
};

std::vector<DailyBatch> ingest_with_rejects(const RunConfig& config, std::vector<InputReject>& rejects) {
    if (config.inputs.empty()) throw ConfigError("config field 'inputs' must list at least one packet log");
    std::vector<PacketRecord> records;
    for (const auto& path : config.inputs) {
        auto parsed = parse_packet_log(path);
        records.insert(records.end(), parsed.records.begin(), parsed.records.end());
        for (auto& r : parsed.rejects) rejects.push_back({path, std::move(r)});
    }
    return batch_by_day(std::move(records), config.min_packets);
}

std::size_t write_rejects(const fs::path& path, const std::vector<InputReject>& rejects) {
    CsvWriter out(path, "file,line,reason");
    for (const auto& r : rejects) {
        std::string reason = r.reject.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        out.row(r.file.filename().string(), r.reject.line, reason);
    }
    out.close();
    return out.rows();
}

std::size_t partition_rows(std::span<const Partition> partitions) {
    std::size_t n = 0;
    for (const auto& p : partitions) n += p.size();
    return n;
}

GroundTruth initial_ground_truth(const RunConfig& config) {
    if (config.ground_truth.empty()) return {};
    return load_ground_truth(config.ground_truth);
}

void add_cluster_info(ClusterCatalog& catalog, const DayClustering& dc, const GroundTruth& gt) {
    for (const auto& [c, members] : dc.partition.clusters) {
        const auto label = label_cluster(members, gt);
        double sh = std::numeric_limits<double>::quiet_NaN();
        if (dc.silhouette.defined) sh = dc.silhouette.cluster_means.at(c);
        catalog[{dc.partition.day, c}] = {members.size(), sh, label.label, label.purity};
    }
}

std::vector<Day> days_of(std::span<const Partition> partitions) {
    std::vector<Day> days;
    for (const auto& p : partitions) days.push_back(p.day);
    return days;
}

void write_cluster_reports(const fs::path& dir, std::span<const Partition> partitions, const ClusterCatalog& catalog,
                           const DcaTracker& tracker, Manifest& manifest) {
    manifest.add("labels.csv", write_label_report(dir / "labels.csv", catalog));
    manifest.add("silhouette.csv", write_cluster_silhouettes(dir / "silhouette.csv", catalog));
    manifest.add("cluster_counts.csv", write_cluster_counts(dir / "cluster_counts.csv", partitions));
    manifest.add("silhouette_ecdf.csv", write_silhouette_ecdf(dir / "silhouette_ecdf.csv", catalog));
    manifest.add("cluster_size_ecdf.csv", write_size_ecdf(dir / "cluster_size_ecdf.csv", catalog));
    const auto window = days_of(partitions);
    const auto summary = transition_summary(tracker.results(), catalog, window);
    manifest.add("transition_summary.csv", write_transition_summary(dir / "transition_summary.csv", summary));
}

void write_traffic_reports(const fs::path& dir, const std::vector<DailyBatch>& batches, std::size_t bootstrap,
                           Manifest& manifest) {
    const auto series = daily_sender_series(batches, bootstrap);
    manifest.add("daily_senders.csv", write_daily_senders(dir / "daily_senders.csv", series));
    manifest.add("traffic_stats.csv", write_traffic_stats(dir / "traffic_stats.csv", characterize(batches, true)));
    manifest.add("active_days_eccdf.csv",
                 write_active_days(dir / "active_days_eccdf.csv", active_days_distribution(batches)));
}

void write_config(const fs::path& dir, const RunConfig& config, Manifest& manifest) {
    std::ofstream out(dir / "config.json");
    if (!out) throw InputError("cannot write " + (dir / "config.json").string());
    out << config_to_json(config) << '\n';
    out.close();
    manifest.add("config.json", 1);
}

}  // namespace

TrainParams RunConfig::train_params() const {
    TrainParams p;
    p.window = window;
    p.negatives = negatives;
    p.epochs = epochs;
    p.lr_start = lr_start;
    p.lr_end = lr_end;
    p.threads = threads;
    return p;
}

CorpusParams RunConfig::corpus_params() const { return {max_services, max_sentence_len, collapse_runs}; }

Thresholds RunConfig::thresholds() const { return Thresholds(tau0, tau1); }

void validate(const RunConfig& c) {
    if (c.dimension < 1) throw ConfigError("dimension (E) must be >= 1");
    if (c.min_cluster_size < 2) throw ConfigError("min_cluster_size must be >= 2");
    if (!(c.tau0 >= 0.5 && c.tau0 <= 1.0)) throw ConfigError("tau0 must be in [0.5,1]");
    if (!(c.tau1 > 0.0 && c.tau1 < 0.5)) throw ConfigError("tau1 must be in (0,0.5)");
    if (c.max_services < 1) throw ConfigError("max_services must be >= 1");
    if (c.max_sentence_len < 2) throw ConfigError("max_sentence_len must be >= 2");
    validate(c.train_params());
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    const auto& table = fields();
    for (const auto& [key, value] : j.items()) {
        if (key == "output_dir") {
            c.output_dir = as<std::string>(value, key);
            continue;
        }
        auto it = table.find(key);
        if (it == table.end()) throw ConfigError("unknown config field '" + key + "'");
        it->second.set(c, value);
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& config) {
    json j = json::object();
    for (const auto& [key, f] : fields()) j[key] = f.get(config);
    return j.dump(2);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys{"output_dir"};
    for (const auto& [key, f] : fields()) keys.push_back(key);
    return keys;
}

void set_config_field(RunConfig& config, const std::string& key, const std::string& text) {
    if (key == "output_dir") {
        config.output_dir = text;
        return;
    }
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("unknown config field '" + key + "'");
    json v;
    try {
        v = json::parse(text);
    } catch (const json::exception&) {
        v = text;
    }
    it->second.set(config, v);
}

std::vector<DailyBatch> ingest_inputs(const RunConfig& config, std::vector<ParseReject>* rejects) {
    std::vector<InputReject> all;
    auto batches = ingest_with_rejects(config, all);
    if (rejects) {
        for (auto& r : all) rejects->push_back(std::move(r.reject));
    }
    return batches;
}

DayClustering cluster_day(const DailyBatch& batch, const EmbeddingModel& model, const RunConfig& config) {
    DayClustering out;
    out.rows = batch.active_senders;
    std::vector<std::vector<double>> vectors;
    vectors.reserve(out.rows.size());
    for (Ipv4 ip : out.rows) {
        auto e = model.embedding(ip);
        vectors.emplace_back(e.begin(), e.end());
    }
    HdbscanResult result;
    if (out.rows.size() <= kDenseLimit) {
        const auto d = pairwise_cosine_matrix(out.rows, vectors, config.threads);
        result = hdbscan(d, config.min_cluster_size);
        out.silhouette = silhouette(result.labels, d);
    } else {
        const CosineRows d(out.rows, vectors);
        result = hdbscan(d, config.min_cluster_size);
        out.silhouette = silhouette(result.labels, d);
    }
    out.partition = make_partition(batch.day, out.rows, result.labels, config.min_cluster_size);
    return out;
}

void Manifest::add(const std::string& name, std::size_t rows) {
    for (auto& e : entries_) {
        if (e.first == name) {
            e.second = rows;
            return;
        }
    }
    entries_.emplace_back(name, rows);
}

void Manifest::write(const std::string& status) const {
    CsvWriter out(dir_ / "manifest.csv", "artifact,rows,digest,status");
    for (const auto& [name, rows] : entries_) {
        const auto path = dir_ / name;
        out.row(name, rows, fs::exists(path) ? file_digest(path) : std::string("missing"), status);
    }
    out.close();
}

DcaTracker track_partitions(const std::vector<Partition>& partitions, const Thresholds& th, std::size_t horizon) {
    DcaTracker tracker(th, horizon);
    for (const auto& p : partitions) stage("track", p.day, [&] { return tracker.push(p); });
    return tracker;
}

void write_tracking(const fs::path& dir, const DcaTracker& tracker, std::span<const Partition> partitions,
                    Manifest& manifest) {
    const auto& days = tracker.results();
    std::size_t transitions = 0, emergences = 0;
    for (const auto& d : days) {
        transitions += d.transitions.size();
        emergences += d.emergences.size();
    }
    write_transitions(dir / "transitions.csv", days);
    manifest.add("transitions.csv", transitions);
    write_emergences(dir / "emergences.csv", days);
    manifest.add("emergences.csv", emergences);

    const auto window = days_of(partitions);
    const auto timeline = lineage_timeline(tracker.registry(), window);
    manifest.add("lineage_timeline.csv", write_lineage_timeline(dir / "lineage_timeline.csv", timeline));
    manifest.add("lineage_links.csv", write_lineage_links(dir / "lineage_links.csv", tracker.registry()));
    const auto breakdown = transition_breakdown(days, tracker.registry());
    manifest.add("transition_breakdown.csv", write_transition_breakdown(dir / "transition_breakdown.csv", breakdown));
    manifest.add("emerged_fates.csv", write_emerged_fates(dir / "emerged_fates.csv", breakdown));
}

fs::path checkpoint_path(const fs::path& run_dir, Day day) { return run_dir / "days" / day.to_string() / "model.bin"; }

void run_pipeline(const RunConfig& config, const ProgressSink& progress) {
    validate(config);
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    Manifest manifest(dir);
    write_config(dir, config, manifest);

    std::vector<InputReject> rejects;
    std::vector<DailyBatch> batches;
    std::vector<Partition> partitions;
    ClusterCatalog catalog;
    DcaTracker tracker(config.thresholds(), config.history_horizon);

    auto finalize = [&](const std::string& status) {
        manifest.add("rejects.csv", write_rejects(dir / "rejects.csv", rejects));
        write_partitions(dir / "partitions.csv", partitions);
        manifest.add("partitions.csv", partition_rows(partitions));
        write_tracking(dir, tracker, partitions, manifest);
        write_cluster_reports(dir, partitions, catalog, tracker, manifest);
        write_traffic_reports(dir, batches, config.bootstrap_days, manifest);
        manifest.write(status);
    };

    try {
        batches = stage("ingest", std::nullopt, [&] { return ingest_with_rejects(config, rejects); });
        if (batches.size() <= config.bootstrap_days) {
            throw ConfigError("bootstrap_days (" + std::to_string(config.bootstrap_days) + ") leaves no test day out of " +
                              std::to_string(batches.size()));
        }
        GroundTruth gt = stage("labels", std::nullopt, [&] { return initial_ground_truth(config); });
        EmbeddingModel model = init_model(config.dimension, config.seed);
        const auto tp = config.train_params();
        const auto cp = config.corpus_params();

        for (std::size_t i = 0; i < batches.size(); ++i) {
            const auto& batch = batches[i];
            const bool test_day = i >= config.bootstrap_days;
            const auto corpus = stage("corpus", batch.day, [&] {
                return to_corpus(build_services(batch, batch.active_senders), cp);
            });
            const auto stats = stage("embed", batch.day, [&] {
                model.add_words(batch.active_senders);
                return train_incremental(model, corpus, tp);
            });
            if (config.save_checkpoints) {
                stage("checkpoint", batch.day, [&] {
                    const auto path = checkpoint_path(dir, batch.day);
                    fs::create_directories(path.parent_path());
                    model.save(path);
                    manifest.add(fs::relative(path, dir).generic_string(), model.size());
                    return 0;
                });
            }
            const bool snapshot_day = i < config.bootstrap_days || (config.bootstrap_days == 0 && i == 0);
            if (config.mirai_labels && (snapshot_day || (test_day && config.gt_refresh))) {
                gt = apply_mirai_labels(std::move(gt), batch);
            }
            if (!test_day) {
                if (progress) progress(batch.day.to_string() + " bootstrap: " + std::to_string(corpus.sentences.size()) +
                                       " sentences, " + std::to_string(stats.pairs) + " pairs");
                continue;
            }
            auto dc = stage("cluster", batch.day, [&] {
                auto r = cluster_day(batch, model, config);
                check_partition(r.partition, &batch.active_senders);
                return r;
            });
            stage("label", batch.day, [&] {
                add_cluster_info(catalog, dc, gt);
                return 0;
            });
            stage("track", batch.day, [&] { return tracker.push(dc.partition); });
            if (progress) {
                progress(batch.day.to_string() + ": " + std::to_string(batch.active_senders.size()) + " active, " +
                         std::to_string(dc.partition.clusters.size()) + " clusters, " +
                         std::to_string(dc.partition.noise.size()) + " noise");
            }
            partitions.push_back(std::move(dc.partition));
        }
    } catch (...) {
        try {
            finalize("partial");
        } catch (...) {
        }
        throw;
    }
    stage("report", std::nullopt, [&] {
        finalize("complete");
        return 0;
    });
}

void run_embed(const RunConfig& config, const ProgressSink& progress) {
    validate(config);
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    Manifest manifest(dir);
    write_config(dir, config, manifest);
    const auto batches = stage("ingest", std::nullopt, [&] { return ingest_inputs(config); });
    EmbeddingModel model = init_model(config.dimension, config.seed);
    for (const auto& batch : batches) {
        const auto corpus = stage("corpus", batch.day, [&] {
            return to_corpus(build_services(batch, batch.active_senders), config.corpus_params());
        });
        const auto stats = stage("embed", batch.day, [&] {
            model.add_words(batch.active_senders);
            return train_incremental(model, corpus, config.train_params());
        });
        const auto path = checkpoint_path(dir, batch.day);
        fs::create_directories(path.parent_path());
        model.save(path);
        manifest.add(fs::relative(path, dir).generic_string(), model.size());
        if (progress) progress(batch.day.to_string() + ": vocabulary " + std::to_string(model.size()) + ", " +
                               std::to_string(stats.pairs) + " pairs");
    }
    manifest.write("complete");
}

void run_cluster(const RunConfig& config, const ProgressSink& progress) {
    validate(config);
    const fs::path dir = config.output_dir;
    const auto batches = stage("ingest", std::nullopt, [&] { return ingest_inputs(config); });
    GroundTruth gt = initial_ground_truth(config);
    for (std::size_t i = 0; i < batches.size() && config.mirai_labels; ++i) {
        if (i < config.bootstrap_days || (config.bootstrap_days == 0 && i == 0)) gt = apply_mirai_labels(gt, batches[i]);
    }
    std::vector<Partition> partitions;
    ClusterCatalog catalog;
    for (std::size_t i = config.bootstrap_days; i < batches.size(); ++i) {
        const auto& batch = batches[i];
        auto dc = stage("cluster", batch.day, [&] {
            const auto model = EmbeddingModel::load(checkpoint_path(dir, batch.day));
            auto r = cluster_day(batch, model, config);
            check_partition(r.partition, &batch.active_senders);
            return r;
        });
        if (config.gt_refresh && config.mirai_labels) gt = apply_mirai_labels(gt, batch);
        add_cluster_info(catalog, dc, gt);
        if (progress) progress(batch.day.to_string() + ": " + std::to_string(dc.partition.clusters.size()) + " clusters");
        partitions.push_back(std::move(dc.partition));
    }
    write_partitions(dir / "partitions.csv", partitions);
    write_label_report(dir / "labels.csv", catalog);
    write_cluster_silhouettes(dir / "silhouette.csv", catalog);
}

void run_ingest_stats(const RunConfig& config) {
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    Manifest manifest(dir);
    std::vector<InputReject> rejects;
    const auto batches = stage("ingest", std::nullopt, [&] { return ingest_with_rejects(config, rejects); });
    manifest.add("rejects.csv", write_rejects(dir / "rejects.csv", rejects));
    manifest.add("traffic_stats_all.csv", write_traffic_stats(dir / "traffic_stats_all.csv", characterize(batches)));
    write_traffic_reports(dir, batches, config.bootstrap_days, manifest);
    manifest.write("complete");
}

void run_report(const fs::path& run_dir, const RunConfig& config) {
    Manifest manifest(run_dir);
    const auto partitions = stage("report", std::nullopt, [&] { return read_partitions(run_dir / "partitions.csv"); });
    const auto catalog = stage("report", std::nullopt, [&] {
        return read_cluster_catalog(run_dir / "silhouette.csv", run_dir / "labels.csv");
    });
    const auto tracker = track_partitions(partitions, config.thresholds(), config.history_horizon);
    manifest.add("partitions.csv", partition_rows(partitions));
    write_tracking(run_dir, tracker, partitions, manifest);
    write_cluster_reports(run_dir, partitions, catalog, tracker, manifest);
    if (!config.inputs.empty()) {
        const auto batches = stage("ingest", std::nullopt, [&] { return ingest_inputs(config); });
        write_traffic_reports(run_dir, batches, config.bootstrap_days, manifest);
    }
    manifest.write("complete");
}

}  // namespace darktrack
