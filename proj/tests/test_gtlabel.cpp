#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "darktrack/gtlabel.hpp"
#include "fixtures.hpp"

using namespace darktrack;
using namespace darktrack::testing;

namespace {

std::filesystem::path gt_file(const std::string& name, const std::string& body) {
    const auto dir = scratch_dir("gt-" + name);
    std::ofstream(dir / "gt.csv") << body;
    return dir / "gt.csv";
}

PacketRecord tcp_to(Ipv4 sender, std::uint32_t dst, std::uint32_t seq, Protocol proto = Protocol::TCP) {
    auto r = packet(1.0, sender, proto, 23);
    r.dst_ip = Ipv4(dst);
    r.tcp_seq = seq;
    return r;
}

GroundTruth labels(std::initializer_list<std::pair<Ipv4, std::string>> entries) {
    GroundTruth gt;
    for (const auto& [ip, l] : entries) gt.add(ip, l);
    return gt;
}

}  // namespace

TEST_CASE("ground truth file with a header") {
    const auto gt = load_ground_truth(gt_file("ok", "sender_ip,label\n10.0.0.1,shadowserver\n10.0.0.2,shadowserver\n"));
    CHECK(gt.size() == 2);
    CHECK(gt.label(ip(1)) == "shadowserver");
    CHECK(gt.label(ip(2)) == "shadowserver");
    CHECK(gt.label(ip(3)) == "Unknown");
}

TEST_CASE("repeated identical entries are fine, conflicts are not") {
    CHECK(load_ground_truth(gt_file("dup", "10.0.0.1,censys\n10.0.0.1,censys\n")).size() == 1);
    try {
        load_ground_truth(gt_file("conflict", "10.0.0.1,censys\n10.0.0.1,shodan\nbogus\n"));
        FAIL("expected InputError");
    } catch (const InputError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("10.0.0.1") != std::string::npos);
        CHECK(msg.find("shodan") != std::string::npos);
        CHECK(msg.find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(load_ground_truth(gt_file("badip", "10.0.0.300,x\n")), InputError);
    CHECK_THROWS_AS(load_ground_truth("/nonexistent/gt.csv"), InputError);
}

TEST_CASE("mirai fingerprint compares the sequence number with the destination address") {
    // 192.0.2.5 as a big-endian integer, assembled byte by byte
    const std::uint32_t dst = (192u << 24) | (0u << 16) | (2u << 8) | 5u;
    CHECK(dst == 3221225989u);
    CHECK(mirai_fingerprint(tcp_to(ip(1), dst, 3221225989u)));
    CHECK_FALSE(mirai_fingerprint(tcp_to(ip(1), dst, 1)));
    CHECK_FALSE(mirai_fingerprint(tcp_to(ip(1), dst, dst, Protocol::UDP)));
}

TEST_CASE("mirai labels never overwrite explicit entries") {
    DailyBatch batch;
    batch.records = {tcp_to(ip(1), 0xC0000201, 0xC0000201), tcp_to(ip(2), 0xC0000202, 0xC0000202),
                     tcp_to(ip(3), 0xC0000203, 7)};
    auto gt = apply_mirai_labels(labels({{ip(2), "censys"}}), batch);
    CHECK(gt.label(ip(1)) == "Mirai-like");
    CHECK(gt.label(ip(2)) == "censys");
    CHECK(gt.label(ip(3)) == "Unknown");
    auto custom = apply_mirai_labels(GroundTruth{}, batch, [](const PacketRecord& r) { return r.tcp_seq == 7; });
    CHECK(custom.label(ip(3)) == "Mirai-like");
    CHECK_FALSE(custom.has(ip(1)));
}

TEST_CASE("cluster labels by majority vote") {
    auto gt = labels({});
    for (std::uint32_t i = 0; i < 9; ++i) gt.add(ip(i), "Mirai-like");
    auto l = label_cluster(ips(0, 10), gt);
    CHECK(l.label == "Mirai-like");
    CHECK(l.purity == doctest::Approx(0.9));
    CHECK(l.size == 10);

    auto unknown = label_cluster(ips(100, 4), gt);
    CHECK(unknown.label == "Unknown");
    CHECK(unknown.purity == 1.0);

    auto tie = labels({});
    for (std::uint32_t i = 0; i < 5; ++i) tie.add(ip(i), "b");
    for (std::uint32_t i = 5; i < 10; ++i) tie.add(ip(i), "a");
    auto t = label_cluster(ips(0, 10), tie);
    CHECK(t.label == "a");
    CHECK(t.purity == 0.5);

    CHECK_THROWS_AS(label_cluster({}, gt), InputError);
}

TEST_CASE("majority label properties on random clusters") {
    std::mt19937_64 rng(12);
    const char* names[] = {"a", "b", "c", "Unknown"};
    for (int trial = 0; trial < 300; ++trial) {
        GroundTruth gt;
        const std::uint32_t n = 1 + static_cast<std::uint32_t>(rng() % 30);
        std::map<std::string, std::size_t> count;
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::string name = names[rng() % 4];
            if (name != "Unknown") gt.add(ip(i), name);
            ++count[name];
        }
        const auto members = ips(0, n);
        const auto got = label_cluster(members, gt);
        CHECK(got.purity > 0.0);
        CHECK(got.purity <= 1.0);
        CHECK((got.purity == 1.0) == (count.size() == 1));
        for (const auto& [name, c] : count) CHECK(count.at(got.label) >= c);
        CHECK(got.purity == doctest::Approx(static_cast<double>(count.at(got.label)) / n));
        // member order does not matter
        SenderSet reversed(members.rbegin(), members.rend());
        CHECK(label_cluster(reversed, gt).label == got.label);
    }
}
