#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "darktrack/cluster.hpp"

namespace darktrack {

/// Strong (tau0) and loose (tau1) match thresholds.
class Thresholds {
public:
    /// Throws ConfigError unless tau0 in [0.5, 1] and tau1 in (0, 0.5).
    explicit Thresholds(double tau0 = 0.65, double tau1 = 0.3);

    double strong() const { return tau0_; }
    double loose() const { return tau1_; }

private:
    double tau0_;
    double tau1_;
};

/// Set overlap |X n Y| / |X|. Asymmetric. Throws InputError for an empty X.
double overlap(const SenderSet& x, const SenderSet& y);

/// Sum of overlap(X, Y) over every cluster of `next`, noise included.
double activity(const SenderSet& x, const Partition& next);

/// OL(X_i, Y_j) for every source cluster (noise included) against every target (noise included).
struct OverlapTable {
    std::vector<int> sources;  // row labels, noise first
    std::vector<int> targets;  // column labels, noise first
    std::vector<std::vector<double>> ol;
    std::vector<double> activity;  // per row
};

OverlapTable overlap_table(const Partition& current, const Partition& next);

enum class TransitionKind { Inactive, Disappeared, Split, Survived, Absorbed };

std::string_view to_string(TransitionKind kind);
std::optional<TransitionKind> parse_transition_kind(std::string_view text);
inline constexpr TransitionKind kAllTransitionKinds[] = {TransitionKind::Absorbed, TransitionKind::Split,
                                                         TransitionKind::Disappeared, TransitionKind::Survived,
                                                         TransitionKind::Inactive};

struct TargetMatch {
    int cluster = 0;          // kNoiseCluster allowed
    double normalized = 0.0;  // OL(X, Y) / A(X)
};

struct Transition {
    Day day;       // day of the source cluster
    Day next_day;
    int source = 0;
    std::size_t source_size = 0;
    TransitionKind kind = TransitionKind::Inactive;
    double activity = 0.0;
    std::vector<TargetMatch> targets;  // loose-or-better targets, best first
    std::optional<int> principal;      // strongly matched target for Survived / Absorbed
};

struct BackwardMatch {
    Day day;
    int cluster = 0;
    double overlap = 0.0;  // OL(X_past, Y), raw
};

struct EmergenceRecord {
    Day day;
    int cluster = 0;
    std::size_t size = 0;
    bool emerged = false;
    bool novelty = false;
    std::optional<BackwardMatch> match;
};

struct Classification {
    Day day;
    Day next_day;
    std::vector<Transition> transitions;     // one per non-noise source cluster
    std::vector<EmergenceRecord> emergences;  // one per non-noise target cluster
};

/// Classifies every non-noise cluster of `current` against `next` and flags Emerged
/// targets. Novelty is not decided here (see backward_match). Throws
/// ContractViolation unless next.day is after current.day.
Classification classify_transitions(const Partition& current, const Partition& next, const Thresholds& th);

/// Scans `history` (chronological) from the most recent day backwards for a
/// non-noise cluster X with OL(X, Y) >= tau0. Within a day the largest overlap wins,
/// then the lowest index.
std::optional<BackwardMatch> backward_match(const SenderSet& y, std::span<const Partition> history,
                                            const Thresholds& th);

enum class Arrival { Origin, Survived, Novel, Rematched };
std::string_view to_string(Arrival a);

struct LineageEntry {
    Day day;
    int cluster = 0;
    Arrival arrival = Arrival::Origin;
    std::optional<TransitionKind> outcome;  // transition of this cluster into the next day, if any
};

struct LineageLink {
    Day day;  // day of the target cluster
    std::size_t source = 0;
    std::size_t target = 0;
    TransitionKind kind = TransitionKind::Split;
};

/// Persistent cluster identities threaded through survivals and rematches.
class LineageRegistry {
public:
    /// Fresh lineage per cluster of the first partition, in index order.
    void start(const Partition& first);

    /// Applies one day's transitions and emergences (with novelty already decided).
    void update(const Classification& day);

    std::optional<std::size_t> lineage_of(Day day, int cluster) const;
    const std::map<std::size_t, std::vector<LineageEntry>>& histories() const { return histories_; }
    const std::vector<LineageLink>& links() const { return links_; }
    std::size_t size() const { return histories_.size(); }

private:
    std::size_t fresh(Day day, int cluster, Arrival arrival);
    void attach(std::size_t id, Day day, int cluster, Arrival arrival);

    std::size_t next_id_ = 0;
    std::map<std::size_t, std::vector<LineageEntry>> histories_;
    std::map<std::pair<Day, int>, std::size_t> by_cluster_;
    std::vector<LineageLink> links_;
};

/// Day-by-day fold: transitions against the previous partition, backward
/// matching of Emerged clusters against older days, lineage update.
class DcaTracker {
public:
    /// `horizon` caps how many days before the previous one are kept for backward matching (0 = all).
    explicit DcaTracker(Thresholds th, std::size_t horizon = 0);

    /// Returns nothing for the very first partition.
    std::optional<Classification> push(Partition partition);

    const LineageRegistry& registry() const { return registry_; }
    const std::vector<Classification>& results() const { return results_; }
    const Thresholds& thresholds() const { return th_; }

private:
    Thresholds th_;
    std::size_t horizon_;
    std::optional<Partition> previous_;
    std::vector<Partition> older_;
    LineageRegistry registry_;
    std::vector<Classification> results_;
};

void write_transitions(const std::filesystem::path& path, std::span<const Classification> days);
void write_emergences(const std::filesystem::path& path, std::span<const Classification> days);

}  // namespace darktrack
