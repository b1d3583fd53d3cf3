#include "darktrack/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "darktrack/io.hpp"

namespace darktrack {

namespace {

template <class T>
bool parse_uint(std::string_view s, T& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double sum = 0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

}  // namespace

PacketRecord parse_packet_line(std::string_view line) {
    auto f = split_fields(line);
    if (f.size() != 6) throw InputError("expected 6 fields, got " + std::to_string(f.size()));
    for (auto& x : f) x = trim(x);

    PacketRecord r;
    {
        auto [ptr, ec] = std::from_chars(f[0].data(), f[0].data() + f[0].size(), r.timestamp);
        if (ec != std::errc{} || ptr != f[0].data() + f[0].size() || !std::isfinite(r.timestamp)) {
            throw InputError("bad timestamp");
        }
    }
    auto src = Ipv4::parse(f[1]);
    if (!src) throw InputError("bad src_ip");
    r.sender = *src;

    auto proto = parse_protocol(f[2]);
    if (!proto) throw InputError("unknown protocol '" + std::string(f[2]) + "'");
    r.proto = *proto;

    if (has_ports(r.proto)) {
        unsigned port = 0;
        if (!parse_uint(f[3], port) || port > 65535) throw InputError("bad dst_port");
        r.dst_port = static_cast<std::uint16_t>(port);
    } else {
        // ports are meaningless for ICMP/GRE; tolerate a stray value but normalize it away
        unsigned port = 0;
        if (!f[3].empty() && !parse_uint(f[3], port)) throw InputError("bad dst_port");
    }

    if (!f[4].empty()) {
        std::uint32_t seq = 0;
        if (!parse_uint(f[4], seq)) throw InputError("bad tcp_seq");
        if (r.proto == Protocol::TCP) r.tcp_seq = seq;
    }
    if (!f[5].empty()) {
        auto dst = Ipv4::parse(f[5]);
        if (!dst) throw InputError("bad dst_ip");
        r.dst_ip = *dst;
    }
    return r;
}

ParseResult parse_packet_log(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw InputError("cannot open " + path.string());
    LineReader reader(path);
    ParseResult out;
    std::string line;
    bool first = true;
    while (reader.next(line)) {
        ++out.lines_read;
        if (first) {
            first = false;
            if (trim(line) == kPacketLogHeader) continue;
        }
        if (trim(line).empty()) continue;
        try {
            out.records.push_back(parse_packet_line(line));
        } catch (const InputError& e) {
            out.rejects.push_back({reader.line_number(), e.what(), line});
        }
    }
    return out;
}

SenderSet DailyBatch::all_senders() const {
    SenderSet s;
    s.reserve(per_sender_counts.size());
    for (const auto& [ip, n] : per_sender_counts) s.push_back(ip);
    normalize(s);
    return s;
}

std::vector<DailyBatch> batch_by_day(std::vector<PacketRecord> records, std::size_t min_packets) {
    std::stable_sort(records.begin(), records.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });
    std::vector<DailyBatch> batches;
    for (auto& r : records) {
        const Day d = Day::from_timestamp(r.timestamp);
        if (batches.empty() || batches.back().day != d) {
            batches.emplace_back();
            batches.back().day = d;
        }
        auto& b = batches.back();
        ++b.per_sender_counts[r.sender];
        b.records.push_back(r);
    }
    for (auto& b : batches) b.active_senders = filter_active(b, min_packets);
    return batches;
}

SenderSet filter_active(const DailyBatch& batch, std::size_t min_packets) {
    SenderSet out;
    for (const auto& [ip, n] : batch.per_sender_counts) {
        if (n > min_packets) out.push_back(ip);
    }
    normalize(out);
    return out;
}

TrafficStats characterize(const std::vector<DailyBatch>& batches, bool active_only) {
    constexpr std::array kProtocols{Protocol::TCP, Protocol::UDP, Protocol::ICMP, Protocol::GRE};
    struct Acc {
        std::set<Ipv4> ips;
        std::set<std::uint16_t> ports;
        std::vector<double> daily_ips, daily_ports;
        std::size_t records = 0;
    };
    std::map<Protocol, Acc> acc;
    Acc total;

    TrafficStats out;
    out.days = batches.size();
    for (const auto& b : batches) {
        std::map<Protocol, std::pair<std::set<Ipv4>, std::set<std::uint16_t>>> day;
        std::set<Ipv4> day_ips;
        std::set<std::uint16_t> day_ports;
        for (const auto& r : b.records) {
            if (active_only && !contains(b.active_senders, r.sender)) continue;
            auto& a = acc[r.proto];
            ++a.records;
            ++total.records;
            a.ips.insert(r.sender);
            total.ips.insert(r.sender);
            day[r.proto].first.insert(r.sender);
            day_ips.insert(r.sender);
            if (has_ports(r.proto)) {
                a.ports.insert(r.dst_port);
                total.ports.insert(r.dst_port);
                day[r.proto].second.insert(r.dst_port);
                day_ports.insert(r.dst_port);
            }
        }
        for (Protocol p : kProtocols) {
            acc[p].daily_ips.push_back(static_cast<double>(day[p].first.size()));
            acc[p].daily_ports.push_back(static_cast<double>(day[p].second.size()));
        }
        total.daily_ips.push_back(static_cast<double>(day_ips.size()));
        total.daily_ports.push_back(static_cast<double>(day_ports.size()));
    }

    auto finish = [](const Acc& a) {
        ProtocolStats s;
        s.records = a.records;
        s.window_ips = a.ips.size();
        s.window_ports = a.ports.size();
        std::tie(s.daily_ips_mean, s.daily_ips_std) = mean_std(a.daily_ips);
        std::tie(s.daily_ports_mean, s.daily_ports_std) = mean_std(a.daily_ports);
        return s;
    };
    for (Protocol p : kProtocols) out.per_protocol[p] = finish(acc[p]);
    out.total = finish(total);
    out.total_records = total.records;
    return out;
}

ActiveDays active_days_distribution(const std::vector<DailyBatch>& batches) {
    ActiveDays out;
    for (const auto& b : batches) {
        for (Ipv4 ip : b.active_senders) ++out.days_per_sender[ip];
    }
    const std::size_t window = batches.size();
    std::vector<std::size_t> at_least(window + 2, 0);
    for (const auto& [ip, n] : out.days_per_sender) ++at_least[n];
    // suffix sums: at_least[x] = #senders with count >= x
    for (std::size_t x = window; x-- > 1;) at_least[x] += at_least[x + 1];
    const double senders = static_cast<double>(out.days_per_sender.size());
    for (std::size_t x = 1; x <= window; ++x) {
        out.eccdf.emplace_back(x, senders > 0 ? static_cast<double>(at_least[x]) / senders : 0.0);
    }
    return out;
}

}  // namespace darktrack
