#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "darktrack/dca.hpp"
#include "darktrack/gtlabel.hpp"
#include "darktrack/ingest.hpp"

namespace darktrack {

struct DailySenders {
    Day day;
    std::size_t total = 0;   // distinct senders seen
    std::size_t active = 0;  // |V^t|
    std::size_t fresh = 0;   // active senders never seen on any earlier day, bootstrap included
};

/// One row per batch after the first `bootstrap_days` batches.
std::vector<DailySenders> daily_sender_series(const std::vector<DailyBatch>& batches, std::size_t bootstrap_days = 0);

struct EcdfPoint {
    double value = 0;
    double cumulative = 0;  // fraction of samples <= value
};

/// Empirical CDF; one point per distinct value, non-decreasing in both coordinates.
std::vector<EcdfPoint> ecdf(std::vector<double> values);

/// Everything the summaries need to know about one cluster on one day.
struct ClusterInfo {
    std::size_t size = 0;
    double silhouette = 0;  // mean over members; NaN when the day's silhouette is undefined
    std::string label{kUnknownLabel};
    double purity = 1.0;
};

using ClusterCatalog = std::map<std::pair<Day, int>, ClusterInfo>;

enum class EmergedFate { SurvivesNextDay, ReidentifiedLater, NeverReidentified, Indeterminate };
std::string_view to_string(EmergedFate f);

struct DayTransitionCounts {
    Day day;  // day of the target partition
    std::map<TransitionKind, std::size_t> counts;
    std::size_t emerged = 0;
    std::size_t novel = 0;
    std::map<EmergedFate, std::size_t> fates;
};

struct EmergedFateRow {
    Day day;
    int cluster = 0;
    bool novelty = false;
    EmergedFate fate = EmergedFate::Indeterminate;
};

struct TransitionBreakdown {
    std::vector<DayTransitionCounts> per_day;
    std::vector<EmergedFateRow> emerged;
};

/// Fates look ahead through the lineage registry; emerged clusters on the final day are indeterminate.
TransitionBreakdown transition_breakdown(std::span<const Classification> days, const LineageRegistry& registry);

struct SummaryCell {
    std::size_t clusters = 0;
    double percent = 0;  // share of classified sources; kinds only
    double avg_ips = 0;
    double avg_silhouette = 0;
    double avg_purity = 0;
};

struct CohortSummary {
    std::map<TransitionKind, SummaryCell> kinds;
    SummaryCell total;    // every cluster of the window, last day included
    SummaryCell emerged;  // emerged clusters (first day excluded), already part of total
};

/// Labelled vs Unknown cluster evolution table. Kind percentages cover the
/// classified sources only, so clusters of the last day are left out.
struct TransitionSummary {
    CohortSummary labelled;
    CohortSummary unknown;
};

TransitionSummary transition_summary(std::span<const Classification> days, const ClusterCatalog& catalog,
                                     std::span<const Day> window);

struct TimelineRow {
    std::size_t lineage = 0;
    Day day;
    std::string status;  // present | inactive-gap | ended-by-<kind>
    int cluster = kNoiseCluster;  // for present rows
};

/// `days` lists every partition day in order, so gaps and end events land on real batch days.
std::vector<TimelineRow> lineage_timeline(const LineageRegistry& registry, std::span<const Day> days);

struct RasterPoint {
    std::size_t rank = 0;  // dense rank by first appearance
    double timestamp = 0;
    Ipv4 sender;
};

std::vector<RasterPoint> activity_raster(std::span<const DailyBatch> batches, const SenderSet& members);

// CSV writers; each returns the number of data rows written.
std::size_t write_daily_senders(const std::filesystem::path& path, std::span<const DailySenders> rows);
std::size_t write_traffic_stats(const std::filesystem::path& path, const TrafficStats& stats);
std::size_t write_active_days(const std::filesystem::path& path, const ActiveDays& dist);
std::size_t write_transition_breakdown(const std::filesystem::path& path, const TransitionBreakdown& b);
std::size_t write_emerged_fates(const std::filesystem::path& path, const TransitionBreakdown& b);
std::size_t write_transition_summary(const std::filesystem::path& path, const TransitionSummary& s);
std::size_t write_lineage_timeline(const std::filesystem::path& path, std::span<const TimelineRow> rows);
std::size_t write_lineage_links(const std::filesystem::path& path, const LineageRegistry& registry);
std::size_t write_activity_raster(const std::filesystem::path& path, std::span<const RasterPoint> points);
/// Label report: `day,cluster,label,purity,size`.
std::size_t write_label_report(const std::filesystem::path& path, const ClusterCatalog& catalog);
/// Per-cluster mean silhouette: `day,cluster,size,silhouette`.
std::size_t write_cluster_silhouettes(const std::filesystem::path& path, const ClusterCatalog& catalog);
/// Cluster count, silhouette ECDF and size ECDF per day.
std::size_t write_cluster_counts(const std::filesystem::path& path, std::span<const Partition> partitions);
std::size_t write_silhouette_ecdf(const std::filesystem::path& path, const ClusterCatalog& catalog);
std::size_t write_size_ecdf(const std::filesystem::path& path, const ClusterCatalog& catalog);

/// Rebuilds a catalog from a silhouette file and an optional label report.
ClusterCatalog read_cluster_catalog(const std::filesystem::path& silhouettes, const std::filesystem::path& labels);

}  // namespace darktrack
