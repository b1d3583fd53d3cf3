#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include "darktrack/ingest.hpp"

namespace darktrack {

inline constexpr std::string_view kUnknownLabel = "Unknown";
inline constexpr std::string_view kMiraiLabel = "Mirai-like";

/// Sender labels; unlisted senders resolve to "Unknown".
class GroundTruth {
public:
    const std::string& label(Ipv4 sender) const;
    bool has(Ipv4 sender) const { return labels_.count(sender) != 0; }
    /// Adds a label; returns false if the sender already had one (never overwritten).
    bool add(Ipv4 sender, std::string label);
    std::size_t size() const { return labels_.size(); }
    const std::map<Ipv4, std::string>& entries() const { return labels_; }

private:
    std::map<Ipv4, std::string> labels_;
};

/// CSV `sender_ip,label` (header optional). Conflicting duplicates and malformed
/// lines are collected and reported in a single InputError.
GroundTruth load_ground_truth(const std::filesystem::path& path);

/// TCP packet whose sequence number equals the destination address as a 32-bit integer.
bool mirai_fingerprint(const PacketRecord& record);

using FingerprintRule = std::function<bool(const PacketRecord&)>;

/// Labels unlisted senders with at least one fingerprinted packet as "Mirai-like".
GroundTruth apply_mirai_labels(GroundTruth gt, const DailyBatch& batch,
                               const FingerprintRule& rule = mirai_fingerprint);

struct ClusterLabel {
    std::string label;
    double purity = 0.0;
    std::size_t size = 0;
};

/// Majority vote ("Unknown" votes too); ties go to the lexicographically smallest label.
ClusterLabel label_cluster(const SenderSet& members, const GroundTruth& gt);

}  // namespace darktrack
