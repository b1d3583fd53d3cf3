#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "darktrack/cluster.hpp"
#include "darktrack/ingest.hpp"

namespace darktrack::testing {

inline Ipv4 ip(std::uint32_t n) { return Ipv4(0x0A000000u + n); }  // 10.0.0.0 + n

inline SenderSet ips(std::uint32_t first, std::uint32_t count) {
    SenderSet s;
    for (std::uint32_t i = 0; i < count; ++i) s.push_back(ip(first + i));
    return s;
}

inline SenderSet join(std::initializer_list<SenderSet> parts) {
    SenderSet s;
    for (const auto& p : parts) s.insert(s.end(), p.begin(), p.end());
    normalize(s);
    return s;
}

inline Partition partition(Day day, std::initializer_list<SenderSet> clusters, SenderSet noise = {}) {
    Partition p;
    p.day = day;
    int i = 0;
    for (const auto& c : clusters) {
        p.clusters[i++] = c;
    }
    normalize(noise);
    p.noise = std::move(noise);
    return p;
}

inline PacketRecord packet(double ts, Ipv4 sender, Protocol proto = Protocol::TCP, std::uint16_t port = 23) {
    PacketRecord r;
    r.timestamp = ts;
    r.sender = sender;
    r.proto = proto;
    r.dst_port = port;
    r.dst_ip = Ipv4(0xC0000205);
    return r;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("darktrack-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace darktrack::testing
