#include "darktrack/types.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>

namespace darktrack {

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
    std::uint32_t value = 0;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    for (int octet = 0; octet < 4; ++octet) {
        if (octet > 0) {
            if (p == end || *p != '.') return std::nullopt;
            ++p;
        }
        unsigned part = 0;
        auto [next, ec] = std::from_chars(p, end, part);
        if (ec != std::errc{} || next == p || next - p > 3 || part > 255) return std::nullopt;
        value = (value << 8) | part;
        p = next;
    }
    if (p != end) return std::nullopt;
    return Ipv4(value);
}

std::string Ipv4::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (value >> 24) & 0xFFu, (value >> 16) & 0xFFu,
                  (value >> 8) & 0xFFu, value & 0xFFu);
    return buf;
}

Day Day::from_timestamp(double seconds) {
    return Day(static_cast<std::int32_t>(std::floor(seconds / 86400.0)));
}

std::optional<Day> Day::parse(std::string_view iso) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') return std::nullopt;
    auto field = [&](std::size_t pos, std::size_t len, auto& out) {
        auto [ptr, ec] = std::from_chars(iso.data() + pos, iso.data() + pos + len, out);
        return ec == std::errc{} && ptr == iso.data() + pos + len;
    };
    if (!field(0, 4, y) || !field(5, 2, m) || !field(8, 2, d)) return std::nullopt;
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                          std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return Day(static_cast<std::int32_t>(std::chrono::sys_days{ymd}.time_since_epoch().count()));
}

std::string Day::to_string() const {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{index}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::optional<Protocol> parse_protocol(std::string_view text) {
    if (text == "TCP") return Protocol::TCP;
    if (text == "UDP") return Protocol::UDP;
    if (text == "ICMP") return Protocol::ICMP;
    if (text == "GRE") return Protocol::GRE;
    return std::nullopt;
}

std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::TCP: return "TCP";
        case Protocol::UDP: return "UDP";
        case Protocol::ICMP: return "ICMP";
        case Protocol::GRE: return "GRE";
    }
    return "?";
}

void normalize(SenderSet& set) {
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
}

std::size_t intersection_size(const SenderSet& a, const SenderSet& b) {
    std::size_t n = 0;
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (*i < *j) {
            ++i;
        } else if (*j < *i) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

bool contains(const SenderSet& set, Ipv4 ip) {
    return std::binary_search(set.begin(), set.end(), ip);
}

}  // namespace darktrack
