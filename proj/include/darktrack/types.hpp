#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace darktrack {

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContractViolation : public Error {
public:
    using Error::Error;
};

/// IPv4 address held in host byte order (a.b.c.d == a<<24 | b<<16 | c<<8 | d).
struct Ipv4 {
    std::uint32_t value = 0;

    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t v) : value(v) {}

    static std::optional<Ipv4> parse(std::string_view text);
    std::string to_string() const;

    friend constexpr auto operator<=>(Ipv4, Ipv4) = default;
};

/// Calendar day, counted in days since 1970-01-01 (UTC).
struct Day {
    std::int32_t index = 0;

    constexpr Day() = default;
    constexpr explicit Day(std::int32_t i) : index(i) {}

    static Day from_timestamp(double seconds);
    static std::optional<Day> parse(std::string_view iso);
    std::string to_string() const;
    double start_seconds() const { return static_cast<double>(index) * 86400.0; }

    friend constexpr auto operator<=>(Day, Day) = default;
};

// IANA protocol numbers, so the natural ordering is ICMP < TCP < UDP < GRE.
enum class Protocol : std::uint8_t { ICMP = 1, TCP = 6, UDP = 17, GRE = 47 };

std::optional<Protocol> parse_protocol(std::string_view text);
std::string_view to_string(Protocol p);
inline bool has_ports(Protocol p) { return p == Protocol::TCP || p == Protocol::UDP; }

/// Sorted, duplicate-free set of senders.
using SenderSet = std::vector<Ipv4>;

void normalize(SenderSet& set);
std::size_t intersection_size(const SenderSet& a, const SenderSet& b);
bool contains(const SenderSet& set, Ipv4 ip);

}  // namespace darktrack

template <>
struct std::hash<darktrack::Ipv4> {
    std::size_t operator()(darktrack::Ipv4 ip) const noexcept {
        return std::hash<std::uint32_t>{}(ip.value);
    }
};
