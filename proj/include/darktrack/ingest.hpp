#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "darktrack/types.hpp"

namespace darktrack {

/// One unsolicited packet seen by the telescope.
struct PacketRecord {
    double timestamp = 0.0;
    Ipv4 sender;
    Protocol proto = Protocol::TCP;
    std::uint16_t dst_port = 0;  // 0 for ICMP / GRE
    std::uint32_t tcp_seq = 0;   // 0 unless TCP
    Ipv4 dst_ip;
};

struct ParseReject {
    std::size_t line = 0;
    std::string reason;
    std::string text;
};

struct ParseResult {
    std::vector<PacketRecord> records;
    std::vector<ParseReject> rejects;
    std::size_t lines_read = 0;
};

inline constexpr std::string_view kPacketLogHeader = "timestamp,src_ip,proto,dst_port,tcp_seq,dst_ip";

/// Parses a single data line of the packet log. Throws InputError with the reason on failure.
PacketRecord parse_packet_line(std::string_view line);

/// Reads a packet log (plain or .gz). Unreadable file -> InputError; bad lines go to `rejects`.
ParseResult parse_packet_log(const std::filesystem::path& path);

struct DailyBatch {
    Day day;
    std::vector<PacketRecord> records;  // sorted by timestamp, ties in input order
    std::unordered_map<Ipv4, std::size_t> per_sender_counts;
    SenderSet active_senders;

    SenderSet all_senders() const;
};

inline constexpr std::size_t kDefaultMinPackets = 5;

/// Buckets records into UTC days; active sets use `min_packets`.
std::vector<DailyBatch> batch_by_day(std::vector<PacketRecord> records,
                                     std::size_t min_packets = kDefaultMinPackets);

/// { s : count(s) > min_packets }, counting packets of every protocol jointly.
SenderSet filter_active(const DailyBatch& batch, std::size_t min_packets = kDefaultMinPackets);

struct ProtocolStats {
    std::size_t records = 0;
    std::size_t window_ips = 0;
    std::size_t window_ports = 0;  // TCP/UDP only
    double daily_ips_mean = 0, daily_ips_std = 0;
    double daily_ports_mean = 0, daily_ports_std = 0;
};

struct TrafficStats {
    std::size_t days = 0;
    std::size_t total_records = 0;
    std::map<Protocol, ProtocolStats> per_protocol;  // always holds all four protocols
    ProtocolStats total;                             // ports = union of TCP and UDP port numbers
};

/// Characterization table. With `active_only`, only packets of each day's active senders count.
TrafficStats characterize(const std::vector<DailyBatch>& batches, bool active_only = false);

struct ActiveDays {
    std::map<Ipv4, std::size_t> days_per_sender;
    std::vector<std::pair<std::size_t, double>> eccdf;  // (x, fraction with count >= x), x = 1..window
};

ActiveDays active_days_distribution(const std::vector<DailyBatch>& batches);

}  // namespace darktrack
