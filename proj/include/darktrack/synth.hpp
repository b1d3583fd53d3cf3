#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "darktrack/corpus.hpp"
#include "darktrack/dca.hpp"

namespace darktrack {

struct SplitEvent {
    int day = 0;  // first day the parts act separately
    std::size_t parts = 2;
};

struct AbsorbEvent {
    int day = 0;  // first day the members act as part of `into`
    std::string into;
};

/// One coordinated group of scanners. Days are 1-based scenario days.
struct GroupSpec {
    std::string id;
    std::size_t size = 50;
    std::vector<ServiceKey> services;
    double churn = 0.0;  // fraction of members replaced by fresh senders each day
    int emerge_day = 1;
    std::vector<int> silent_days;
    std::optional<int> disappear_day;  // from this day on members scatter over random services
    std::optional<SplitEvent> split;
    std::optional<AbsorbEvent> absorb;
    std::string label;   // ground-truth label; empty = not listed
    bool mirai = false;  // TCP sequence numbers carry the Mirai fingerprint
};

struct ScenarioSpec {
    int days = 7;
    Day start{20000};
    std::uint64_t seed = 1;
    std::size_t noise_senders_per_day = 100;
    std::size_t packets_per_day = 12;  // per active sender
    std::size_t min_packets = kDefaultMinPackets;
    std::vector<GroupSpec> groups;
};

/// Seven days: four persistent groups of 50, one emerging on day 3, one silent on
/// days 4-6, one group of 20 absorbed on day 5, 100 fresh noise senders a day.
ScenarioSpec reference_scenario(std::uint64_t seed = 7);

/// Throws ConfigError for inconsistent schedules or dangling references.
void validate(const ScenarioSpec& spec);

ScenarioSpec load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const ScenarioSpec& spec);

/// One scripted transition of a planted cluster between consecutive days.
struct ExpectedTransition {
    Day day;
    Day next_day;
    std::string group;
    TransitionKind kind = TransitionKind::Survived;
};

struct ExpectedEmergence {
    Day day;
    std::string group;
    bool novelty = false;
};

struct ExpectedOutcome {
    std::vector<ExpectedTransition> transitions;
    std::vector<ExpectedEmergence> emergences;
    /// Planted clusters per day: group (or split part) -> members.
    std::map<Day, std::map<std::string, SenderSet>> membership;
};

struct GeneratedScenario {
    std::vector<PacketRecord> records;  // timestamp order
    ExpectedOutcome expected;
    std::map<Ipv4, std::string> labels;
};

GeneratedScenario generate(const ScenarioSpec& spec);

/// Writes packets.csv, expected.csv, membership.csv and, when any group is labelled, ground_truth.csv.
void write_scenario(const std::filesystem::path& dir, const GeneratedScenario& scenario);

/// Reads expected.csv and membership.csv back from a scenario directory.
ExpectedOutcome read_expected(const std::filesystem::path& dir);

/// Planted clusters as partitions (every other active sender in noise).
std::vector<Partition> planted_partitions(const ExpectedOutcome& expected, const std::vector<DailyBatch>& batches,
                                          std::size_t min_cluster_size);

struct KindScore {
    std::size_t expected = 0;
    std::size_t predicted = 0;
    std::size_t expected_hit = 0;   // expected events the pipeline reproduced
    std::size_t predicted_hit = 0;  // predicted events the script agrees with
    double precision() const;
    double recall() const;
};

struct ScoreReport {
    std::map<std::string, KindScore> kinds;  // transition kinds plus "Emerged"
    std::size_t novelty_checked = 0;
    std::size_t novelty_correct = 0;
    std::size_t unmatched_groups = 0;  // planted (day, group) pairs without a Jaccard >= 0.5 cluster
    double min_purity = 1.0;
    double mean_purity = 1.0;
    double novelty_accuracy() const;
};

/// Matches each planted group to the cluster of maximum Jaccard similarity (>= 0.5)
/// and compares scripted events with the predicted transitions and emergences.
ScoreReport score(const ExpectedOutcome& expected, const std::vector<Partition>& partitions,
                  std::span<const Classification> days);

void write_score(const std::filesystem::path& path, const ScoreReport& report);

}  // namespace darktrack
