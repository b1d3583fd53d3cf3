#include "darktrack/gtlabel.hpp"

#include <sstream>

#include "darktrack/io.hpp"

namespace darktrack {

namespace {
const std::string kUnknown{kUnknownLabel};
}

const std::string& GroundTruth::label(Ipv4 sender) const {
    auto it = labels_.find(sender);
    return it == labels_.end() ? kUnknown : it->second;
}

bool GroundTruth::add(Ipv4 sender, std::string label) {
    return labels_.emplace(sender, std::move(label)).second;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    LineReader reader(path);
    GroundTruth gt;
    std::vector<std::string> problems;
    std::string line;
    bool first = true;
    while (reader.next(line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto f = split_fields(t);
        if (first) {
            first = false;
            if (f.size() == 2 && trim(f[0]) == "sender_ip") continue;
        }
        const auto where = "line " + std::to_string(reader.line_number());
        if (f.size() != 2 || trim(f[1]).empty()) {
            problems.push_back(where + ": expected sender_ip,label");
            continue;
        }
        auto ip = Ipv4::parse(trim(f[0]));
        if (!ip) {
            problems.push_back(where + ": bad sender_ip");
            continue;
        }
        const std::string label(trim(f[1]));
        if (!gt.add(*ip, label) && gt.label(*ip) != label) {
            problems.push_back(where + ": " + ip->to_string() + " labeled both '" + gt.label(*ip) + "' and '" +
                               label + "'");
        }
    }
    if (!problems.empty()) {
        std::ostringstream msg;
        msg << "ground truth " << path.string() << " rejected:";
        for (const auto& p : problems) msg << "\n  " << p;
        throw InputError(msg.str());
    }
    return gt;
}

bool mirai_fingerprint(const PacketRecord& record) {
    return record.proto == Protocol::TCP && record.tcp_seq == record.dst_ip.value;
}

GroundTruth apply_mirai_labels(GroundTruth gt, const DailyBatch& batch, const FingerprintRule& rule) {
    for (const auto& r : batch.records) {
        if (!gt.has(r.sender) && rule(r)) gt.add(r.sender, std::string(kMiraiLabel));
    }
    return gt;
}

ClusterLabel label_cluster(const SenderSet& members, const GroundTruth& gt) {
    if (members.empty()) throw InputError("label_cluster: empty cluster");
    std::map<std::string, std::size_t> votes;
    for (Ipv4 ip : members) ++votes[gt.label(ip)];
    ClusterLabel out;
    std::size_t best = 0;
    for (const auto& [label, n] : votes) {  // map order makes the first maximum the smallest label
        if (n > best) {
            best = n;
            out.label = label;
        }
    }
    out.size = members.size();
    out.purity = static_cast<double>(best) / static_cast<double>(members.size());
    return out;
}

}  // namespace darktrack
