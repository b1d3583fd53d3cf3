#include "darktrack/dca.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "darktrack/io.hpp"

namespace darktrack {

Thresholds::Thresholds(double tau0, double tau1) : tau0_(tau0), tau1_(tau1) {
    if (!(tau0 >= 0.5 && tau0 <= 1.0)) throw ConfigError("tau0 must be in [0.5,1]");
    if (!(tau1 > 0.0 && tau1 < 0.5)) throw ConfigError("tau1 must be in (0,0.5)");
}

double overlap(const SenderSet& x, const SenderSet& y) {
    if (x.empty()) throw InputError("overlap: empty source set");
    return static_cast<double>(intersection_size(x, y)) / static_cast<double>(x.size());
}

double activity(const SenderSet& x, const Partition& next) {
    double a = overlap(x, next.noise);
    for (const auto& [j, y] : next.clusters) a += overlap(x, y);
    return a;
}

OverlapTable overlap_table(const Partition& current, const Partition& next) {
    OverlapTable t;
    t.sources.push_back(kNoiseCluster);
    for (const auto& [i, x] : current.clusters) t.sources.push_back(i);
    t.targets.push_back(kNoiseCluster);
    for (const auto& [j, y] : next.clusters) t.targets.push_back(j);
    for (int i : t.sources) {
        const auto& x = current.members(i);
        auto& row = t.ol.emplace_back();
        if (x.empty()) {
            row.assign(t.targets.size(), 0.0);
            t.activity.push_back(0.0);
            continue;
        }
        for (int j : t.targets) row.push_back(overlap(x, next.members(j)));
        t.activity.push_back(activity(x, next));
    }
    return t;
}

std::string_view to_string(TransitionKind kind) {
    switch (kind) {
        case TransitionKind::Inactive: return "Inactive";
        case TransitionKind::Disappeared: return "Disappeared";
        case TransitionKind::Split: return "Split";
        case TransitionKind::Survived: return "Survived";
        case TransitionKind::Absorbed: return "Absorbed";
    }
    return "?";
}

std::optional<TransitionKind> parse_transition_kind(std::string_view text) {
    for (auto k : kAllTransitionKinds) {
        if (to_string(k) == text) return k;
    }
    return std::nullopt;
}

std::string_view to_string(Arrival a) {
    switch (a) {
        case Arrival::Origin: return "origin";
        case Arrival::Survived: return "survived";
        case Arrival::Novel: return "novel";
        case Arrival::Rematched: return "rematched";
    }
    return "?";
}

namespace {

struct SourceCounts {
    int index = 0;
    std::size_t size = 0;
    std::size_t active = 0;           // |X n V^{t+1}|
    std::map<int, std::size_t> hits;  // target -> |X n Y|

    // OL(X,Y)/A(X) with |X| cancelled, so values such as 13/20 land exactly on 0.65
    double normalized(int target) const {
        auto it = hits.find(target);
        return it == hits.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(active);
    }
};

}  // namespace

Classification classify_transitions(const Partition& current, const Partition& next, const Thresholds& th) {
    if (!(current.day < next.day)) {
        throw ContractViolation("classify_transitions: partition for " + next.day.to_string() +
                                " does not follow " + current.day.to_string());
    }
    std::unordered_map<Ipv4, int> where;
    for (Ipv4 ip : next.noise) where[ip] = kNoiseCluster;
    for (const auto& [j, y] : next.clusters) {
        for (Ipv4 ip : y) where[ip] = j;
    }

    std::vector<SourceCounts> sources;
    for (const auto& [i, x] : current.clusters) {
        SourceCounts s;
        s.index = i;
        s.size = x.size();
        for (Ipv4 ip : x) {
            auto it = where.find(ip);
            if (it == where.end()) continue;
            ++s.active;
            ++s.hits[it->second];
        }
        sources.push_back(std::move(s));
    }

    // every non-noise source strongly matching each non-noise target
    std::map<int, std::vector<int>> strong_matchers;
    for (const auto& s : sources) {
        if (s.active == 0) continue;
        for (const auto& [j, n] : s.hits) {
            if (j != kNoiseCluster && s.normalized(j) >= th.strong()) strong_matchers[j].push_back(s.index);
        }
    }

    Classification out;
    out.day = current.day;
    out.next_day = next.day;
    for (const auto& s : sources) {
        Transition t;
        t.day = current.day;
        t.next_day = next.day;
        t.source = s.index;
        t.source_size = s.size;
        t.activity = s.size == 0 ? 0.0 : static_cast<double>(s.active) / static_cast<double>(s.size);

        if (s.size == 0 || t.activity < th.loose()) {
            t.kind = TransitionKind::Inactive;
            out.transitions.push_back(std::move(t));
            continue;
        }
        for (const auto& [j, n] : s.hits) {
            const double r = s.normalized(j);
            if (r >= th.loose()) t.targets.push_back({j, r});
        }
        std::sort(t.targets.begin(), t.targets.end(), [](const TargetMatch& a, const TargetMatch& b) {
            if (a.normalized != b.normalized) return a.normalized > b.normalized;
            return a.cluster < b.cluster;
        });

        std::optional<int> strong_target;
        bool loose_target = false;
        for (const auto& m : t.targets) {
            if (m.cluster == kNoiseCluster) continue;
            if (!strong_target && m.normalized >= th.strong()) strong_target = m.cluster;
            loose_target = true;
        }

        if (s.normalized(kNoiseCluster) >= th.strong()) {
            t.kind = TransitionKind::Disappeared;
        } else if (strong_target) {
            const int y = *strong_target;
            t.principal = y;
            const bool sole = strong_matchers[y].size() == 1;
            const double backward =
                static_cast<double>(s.hits.at(y)) / static_cast<double>(next.members(y).size());
            t.kind = (sole || backward >= th.strong()) ? TransitionKind::Survived : TransitionKind::Absorbed;
        } else if (loose_target) {
            t.kind = TransitionKind::Split;
        } else {
            t.kind = TransitionKind::Disappeared;
        }
        out.transitions.push_back(std::move(t));
    }

    std::map<int, int> survivor_of;
    for (const auto& t : out.transitions) {
        if (t.kind == TransitionKind::Survived) survivor_of.emplace(*t.principal, t.source);
    }
    for (const auto& [j, y] : next.clusters) {
        EmergenceRecord e;
        e.day = next.day;
        e.cluster = j;
        e.size = y.size();
        e.emerged = survivor_of.count(j) == 0;
        out.emergences.push_back(e);
    }
    return out;
}

std::optional<BackwardMatch> backward_match(const SenderSet& y, std::span<const Partition> history,
                                            const Thresholds& th) {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        std::optional<BackwardMatch> best;
        for (const auto& [i, x] : it->clusters) {
            if (x.empty()) continue;
            const double ol = overlap(x, y);
            if (ol < th.strong()) continue;
            if (!best || ol > best->overlap) best = BackwardMatch{it->day, i, ol};
        }
        if (best) return best;
    }
    return std::nullopt;
}

std::size_t LineageRegistry::fresh(Day day, int cluster, Arrival arrival) {
    const std::size_t id = next_id_++;
    attach(id, day, cluster, arrival);
    return id;
}

void LineageRegistry::attach(std::size_t id, Day day, int cluster, Arrival arrival) {
    histories_[id].push_back({day, cluster, arrival, std::nullopt});
    by_cluster_[{day, cluster}] = id;
}

void LineageRegistry::start(const Partition& first) {
    for (const auto& [i, x] : first.clusters) fresh(first.day, i, Arrival::Origin);
}

std::optional<std::size_t> LineageRegistry::lineage_of(Day day, int cluster) const {
    auto it = by_cluster_.find({day, cluster});
    if (it == by_cluster_.end()) return std::nullopt;
    return it->second;
}

void LineageRegistry::update(const Classification& day) {
    std::map<int, std::size_t> survivor_lineage;
    for (const auto& t : day.transitions) {
        const auto id = lineage_of(day.day, t.source);
        if (!id) {
            throw ContractViolation("no lineage for cluster " + std::to_string(t.source) + " on " +
                                    day.day.to_string());
        }
        for (auto& e : histories_[*id]) {
            if (e.day == day.day && e.cluster == t.source) e.outcome = t.kind;
        }
        if (t.kind == TransitionKind::Survived) {
            if (!survivor_lineage.emplace(*t.principal, *id).second) {
                throw ContractViolation("cluster " + std::to_string(*t.principal) + " on " +
                                        day.next_day.to_string() + " claimed by two surviving sources");
            }
        }
    }
    for (const auto& e : day.emergences) {
        if (!e.emerged) {
            auto it = survivor_lineage.find(e.cluster);
            if (it == survivor_lineage.end()) {
                throw ContractViolation("non-emerged cluster " + std::to_string(e.cluster) + " has no survivor");
            }
            attach(it->second, e.day, e.cluster, Arrival::Survived);
        } else if (e.match) {
            const auto id = lineage_of(e.match->day, e.match->cluster);
            if (!id) throw ContractViolation("backward match points at an untracked cluster");
            attach(*id, e.day, e.cluster, Arrival::Rematched);
        } else {
            fresh(e.day, e.cluster, Arrival::Novel);
        }
    }
    for (const auto& t : day.transitions) {
        if (t.kind != TransitionKind::Split && t.kind != TransitionKind::Absorbed) continue;
        const std::size_t src = *lineage_of(day.day, t.source);
        for (const auto& m : t.targets) {
            if (m.cluster == kNoiseCluster) continue;
            if (t.kind == TransitionKind::Absorbed && m.cluster != *t.principal) continue;
            links_.push_back({day.next_day, src, *lineage_of(day.next_day, m.cluster), t.kind});
        }
    }
}

DcaTracker::DcaTracker(Thresholds th, std::size_t horizon) : th_(th), horizon_(horizon) {}

std::optional<Classification> DcaTracker::push(Partition partition) {
    if (!previous_) {
        registry_.start(partition);
        previous_ = std::move(partition);
        return std::nullopt;
    }
    Classification c = classify_transitions(*previous_, partition, th_);
    for (auto& e : c.emergences) {
        if (!e.emerged) continue;
        e.match = backward_match(partition.members(e.cluster), older_, th_);
        e.novelty = !e.match.has_value();
    }
    registry_.update(c);
    older_.push_back(std::move(*previous_));
    if (horizon_ > 0 && older_.size() > horizon_) older_.erase(older_.begin());
    previous_ = std::move(partition);
    results_.push_back(c);
    return c;
}

void write_transitions(const std::filesystem::path& path, std::span<const Classification> days) {
    CsvWriter out(path, "day,next_day,source,size,kind,activity,principal,targets");
    for (const auto& d : days) {
        for (const auto& t : d.transitions) {
            std::ostringstream targets;
            for (std::size_t k = 0; k < t.targets.size(); ++k) {
                if (k) targets << ';';
                targets << t.targets[k].cluster << ':' << format_double(t.targets[k].normalized);
            }
            out.row(t.day.to_string(), t.next_day.to_string(), t.source, t.source_size, to_string(t.kind),
                    t.activity, t.principal ? std::to_string(*t.principal) : std::string(), targets.str());
        }
    }
    out.close();
}

void write_emergences(const std::filesystem::path& path, std::span<const Classification> days) {
    CsvWriter out(path, "day,cluster,size,emerged,novelty,match_day,match_cluster,match_overlap");
    for (const auto& d : days) {
        for (const auto& e : d.emergences) {
            if (e.match) {
                out.row(e.day.to_string(), e.cluster, e.size, e.emerged, e.novelty, e.match->day.to_string(),
                        e.match->cluster, e.match->overlap);
            } else {
                out.row(e.day.to_string(), e.cluster, e.size, e.emerged, e.novelty, "", "", "");
            }
        }
    }
    out.close();
}

}  // namespace darktrack
