#include "darktrack/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <cctype>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "darktrack/io.hpp"

namespace darktrack {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CellAccumulator {
    std::size_t n = 0;
    double ips = 0;
    double sh = 0;
    std::size_t sh_n = 0;
    double purity = 0;

    void add(const ClusterInfo& c) {
        ++n;
        ips += static_cast<double>(c.size);
        if (!std::isnan(c.silhouette)) {
            sh += c.silhouette;
            ++sh_n;
        }
        purity += c.purity;
    }
    SummaryCell finish() const {
        SummaryCell s;
        s.clusters = n;
        s.avg_ips = n ? ips / static_cast<double>(n) : kNaN;
        s.avg_silhouette = sh_n ? sh / static_cast<double>(sh_n) : kNaN;
        s.avg_purity = n ? purity / static_cast<double>(n) : kNaN;
        return s;
    }
};

const ClusterInfo& info_for(const ClusterCatalog& catalog, Day day, int cluster) {
    static const ClusterInfo kMissing{0, kNaN, std::string(kUnknownLabel), kNaN};
    auto it = catalog.find({day, cluster});
    return it == catalog.end() ? kMissing : it->second;
}

bool is_labelled(const ClusterInfo& c) { return c.label != kUnknownLabel; }

}  // namespace

std::vector<DailySenders> daily_sender_series(const std::vector<DailyBatch>& batches, std::size_t bootstrap_days) {
    std::unordered_set<Ipv4> seen;
    std::vector<DailySenders> out;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const auto& b = batches[i];
        if (i >= bootstrap_days) {
            DailySenders row;
            row.day = b.day;
            row.total = b.per_sender_counts.size();
            row.active = b.active_senders.size();
            for (Ipv4 ip : b.active_senders) {
                if (!seen.count(ip)) ++row.fresh;
            }
            out.push_back(row);
        }
        for (const auto& [ip, n] : b.per_sender_counts) seen.insert(ip);
    }
    return out;
}

std::vector<EcdfPoint> ecdf(std::vector<double> values) {
    values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }),
                 values.end());
    std::sort(values.begin(), values.end());
    std::vector<EcdfPoint> out;
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
        out.push_back({values[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

std::string_view to_string(EmergedFate f) {
    switch (f) {
        case EmergedFate::SurvivesNextDay: return "survives-next-day";
        case EmergedFate::ReidentifiedLater: return "reidentified-later";
        case EmergedFate::NeverReidentified: return "never-reidentified";
        case EmergedFate::Indeterminate: return "indeterminate";
    }
    return "?";
}

TransitionBreakdown transition_breakdown(std::span<const Classification> days, const LineageRegistry& registry) {
    TransitionBreakdown out;
    // outcome of each (day, cluster) as a source
    std::map<std::pair<Day, int>, TransitionKind> outcome;
    for (const auto& d : days) {
        for (const auto& t : d.transitions) outcome[{t.day, t.source}] = t.kind;
    }
    for (std::size_t i = 0; i < days.size(); ++i) {
        const auto& d = days[i];
        DayTransitionCounts row;
        row.day = d.next_day;
        for (auto k : kAllTransitionKinds) row.counts[k] = 0;
        for (const auto& t : d.transitions) ++row.counts[t.kind];
        for (const auto& e : d.emergences) {
            if (!e.emerged) continue;
            ++row.emerged;
            if (e.novelty) ++row.novel;
            EmergedFateRow f{e.day, e.cluster, e.novelty, EmergedFate::Indeterminate};
            if (i + 1 < days.size()) {
                auto oc = outcome.find({e.day, e.cluster});
                if (oc != outcome.end() && oc->second == TransitionKind::Survived) {
                    f.fate = EmergedFate::SurvivesNextDay;
                } else {
                    f.fate = EmergedFate::NeverReidentified;
                    if (auto id = registry.lineage_of(e.day, e.cluster)) {
                        for (const auto& entry : registry.histories().at(*id)) {
                            if (entry.day > e.day) f.fate = EmergedFate::ReidentifiedLater;
                        }
                    }
                }
            }
            ++row.fates[f.fate];
            out.emerged.push_back(f);
        }
        out.per_day.push_back(std::move(row));
    }
    return out;
}

TransitionSummary transition_summary(std::span<const Classification> days, const ClusterCatalog& catalog,
                                     std::span<const Day> window) {
    struct Cohort {
        std::map<TransitionKind, CellAccumulator> kinds;
        CellAccumulator total, emerged;
    };
    Cohort lab, unk;
    auto cohort = [&](const ClusterInfo& c) -> Cohort& { return is_labelled(c) ? lab : unk; };

    for (const auto& d : days) {
        for (const auto& t : d.transitions) {
            const auto& c = info_for(catalog, t.day, t.source);
            cohort(c).kinds[t.kind].add(c);
        }
        for (const auto& e : d.emergences) {
            if (!e.emerged) continue;
            const auto& c = info_for(catalog, e.day, e.cluster);
            cohort(c).emerged.add(c);
        }
    }
    const std::set<Day> in_window(window.begin(), window.end());
    for (const auto& [key, c] : catalog) {
        if (in_window.count(key.first)) cohort(c).total.add(c);
    }

    auto finish = [](const Cohort& co) {
        CohortSummary s;
        std::size_t sources = 0;
        for (const auto& [k, acc] : co.kinds) sources += acc.n;
        for (auto k : kAllTransitionKinds) {
            auto it = co.kinds.find(k);
            SummaryCell cell = it == co.kinds.end() ? CellAccumulator{}.finish() : it->second.finish();
            cell.percent = sources ? 100.0 * static_cast<double>(cell.clusters) / static_cast<double>(sources) : 0.0;
            s.kinds[k] = cell;
        }
        s.total = co.total.finish();
        s.emerged = co.emerged.finish();
        return s;
    };
    return {finish(lab), finish(unk)};
}

std::vector<TimelineRow> lineage_timeline(const LineageRegistry& registry, std::span<const Day> days) {
    std::map<Day, std::size_t> position;
    for (std::size_t i = 0; i < days.size(); ++i) position[days[i]] = i;

    std::vector<TimelineRow> rows;
    for (const auto& [id, history] : registry.histories()) {
        std::map<std::size_t, std::vector<const LineageEntry*>> by_pos;
        for (const auto& e : history) {
            auto it = position.find(e.day);
            if (it == position.end()) throw InputError("lineage day " + e.day.to_string() + " not in the window");
            by_pos[it->second].push_back(&e);
        }
        const std::size_t first = by_pos.begin()->first;
        std::size_t last = by_pos.rbegin()->first;
        const auto* final_entry = by_pos.rbegin()->second.back();
        if (final_entry->outcome && *final_entry->outcome != TransitionKind::Survived && last + 1 < days.size()) {
            ++last;
        }
        std::optional<TransitionKind> pending_end;
        for (std::size_t p = first; p <= last; ++p) {
            auto it = by_pos.find(p);
            if (it != by_pos.end()) {
                pending_end.reset();
                for (const auto* e : it->second) {
                    rows.push_back({id, days[p], "present", e->cluster});
                    if (e->outcome && *e->outcome != TransitionKind::Survived) pending_end = e->outcome;
                }
                continue;
            }
            if (pending_end) {
                std::string kind(to_string(*pending_end));
                std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char ch) { return std::tolower(ch); });
                rows.push_back({id, days[p], "ended-by-" + kind, kNoiseCluster});
                pending_end.reset();
            } else {
                rows.push_back({id, days[p], "inactive-gap", kNoiseCluster});
            }
        }
    }
    return rows;
}

std::vector<RasterPoint> activity_raster(std::span<const DailyBatch> batches, const SenderSet& members) {
    std::vector<RasterPoint> points;
    for (const auto& b : batches) {
        for (const auto& r : b.records) {
            if (contains(members, r.sender)) points.push_back({0, r.timestamp, r.sender});
        }
    }
    std::stable_sort(points.begin(), points.end(),
                     [](const RasterPoint& a, const RasterPoint& b) { return a.timestamp < b.timestamp; });
    std::unordered_map<Ipv4, std::size_t> rank;
    for (auto& p : points) {
        auto [it, fresh] = rank.try_emplace(p.sender, rank.size());
        p.rank = it->second;
    }
    return points;
}

std::size_t write_daily_senders(const std::filesystem::path& path, std::span<const DailySenders> rows) {
    CsvWriter out(path, "day,total,active,new");
    for (const auto& r : rows) out.row(r.day.to_string(), r.total, r.active, r.fresh);
    out.close();
    return out.rows();
}

std::size_t write_traffic_stats(const std::filesystem::path& path, const TrafficStats& stats) {
    CsvWriter out(path,
                  "protocol,records,window_ips,window_ports,daily_ips_mean,daily_ips_std,daily_ports_mean,daily_ports_std");
    auto emit = [&](std::string_view name, const ProtocolStats& s, bool ports) {
        if (ports) {
            out.row(name, s.records, s.window_ips, s.window_ports, s.daily_ips_mean, s.daily_ips_std,
                    s.daily_ports_mean, s.daily_ports_std);
        } else {
            out.row(name, s.records, s.window_ips, "", s.daily_ips_mean, s.daily_ips_std, "", "");
        }
    };
    for (const auto& [p, s] : stats.per_protocol) emit(to_string(p), s, has_ports(p));
    emit("Total", stats.total, true);
    out.close();
    return out.rows();
}

std::size_t write_active_days(const std::filesystem::path& path, const ActiveDays& dist) {
    CsvWriter out(path, "active_days,eccdf");
    for (const auto& [x, f] : dist.eccdf) out.row(x, f);
    out.close();
    return out.rows();
}

std::size_t write_transition_breakdown(const std::filesystem::path& path, const TransitionBreakdown& b) {
    CsvWriter out(path,
                  "day,Absorbed,Split,Disappeared,Survived,Inactive,emerged,novel,survives_next_day,"
                  "reidentified_later,never_reidentified,indeterminate");
    for (const auto& d : b.per_day) {
        auto fate = [&](EmergedFate f) {
            auto it = d.fates.find(f);
            return it == d.fates.end() ? std::size_t{0} : it->second;
        };
        out.row(d.day.to_string(), d.counts.at(TransitionKind::Absorbed), d.counts.at(TransitionKind::Split),
                d.counts.at(TransitionKind::Disappeared), d.counts.at(TransitionKind::Survived),
                d.counts.at(TransitionKind::Inactive), d.emerged, d.novel, fate(EmergedFate::SurvivesNextDay),
                fate(EmergedFate::ReidentifiedLater), fate(EmergedFate::NeverReidentified),
                fate(EmergedFate::Indeterminate));
    }
    out.close();
    return out.rows();
}

std::size_t write_emerged_fates(const std::filesystem::path& path, const TransitionBreakdown& b) {
    CsvWriter out(path, "day,cluster,novelty,fate");
    for (const auto& e : b.emerged) out.row(e.day.to_string(), e.cluster, e.novelty, to_string(e.fate));
    out.close();
    return out.rows();
}

std::size_t write_transition_summary(const std::filesystem::path& path, const TransitionSummary& s) {
    CsvWriter out(path,
                  "row,labelled_clusters,labelled_pct,labelled_avg_ips,labelled_avg_sh,labelled_avg_purity,"
                  "unknown_clusters,unknown_pct,unknown_avg_ips,unknown_avg_sh");
    // averages over an empty cohort are left blank
    auto avg = [](const SummaryCell& c, double v) { return c.clusters && !std::isnan(v) ? format_double(v) : std::string(); };
    auto emit = [&](std::string_view name, const SummaryCell& l, const SummaryCell& u, bool pct) {
        out.row(name, l.clusters, pct ? format_double(l.percent, 1) : std::string(), avg(l, l.avg_ips),
                avg(l, l.avg_silhouette), avg(l, l.avg_purity), u.clusters,
                pct ? format_double(u.percent, 1) : std::string(), avg(u, u.avg_ips), avg(u, u.avg_silhouette));
    };
    for (auto k : kAllTransitionKinds) emit(to_string(k), s.labelled.kinds.at(k), s.unknown.kinds.at(k), true);
    emit("Total", s.labelled.total, s.unknown.total, false);
    emit("Emerged", s.labelled.emerged, s.unknown.emerged, false);
    out.close();
    return out.rows();
}

std::size_t write_lineage_timeline(const std::filesystem::path& path, std::span<const TimelineRow> rows) {
    CsvWriter out(path, "lineage,day,status,cluster");
    for (const auto& r : rows) {
        if (r.status == "present") {
            out.row(r.lineage, r.day.to_string(), r.status, r.cluster);
        } else {
            out.row(r.lineage, r.day.to_string(), r.status, "");
        }
    }
    out.close();
    return out.rows();
}

std::size_t write_lineage_links(const std::filesystem::path& path, const LineageRegistry& registry) {
    CsvWriter out(path, "day,source_lineage,target_lineage,kind");
    for (const auto& l : registry.links()) out.row(l.day.to_string(), l.source, l.target, to_string(l.kind));
    out.close();
    return out.rows();
}

std::size_t write_activity_raster(const std::filesystem::path& path, std::span<const RasterPoint> points) {
    CsvWriter out(path, "rank,timestamp,sender");
    for (const auto& p : points) out.row(p.rank, format_double(p.timestamp, 3), p.sender.to_string());
    out.close();
    return out.rows();
}

std::size_t write_label_report(const std::filesystem::path& path, const ClusterCatalog& catalog) {
    CsvWriter out(path, "day,cluster,label,purity,size");
    for (const auto& [key, c] : catalog) out.row(key.first.to_string(), key.second, c.label, c.purity, c.size);
    out.close();
    return out.rows();
}

std::size_t write_cluster_silhouettes(const std::filesystem::path& path, const ClusterCatalog& catalog) {
    CsvWriter out(path, "day,cluster,size,silhouette");
    for (const auto& [key, c] : catalog) out.row(key.first.to_string(), key.second, c.size, c.silhouette);
    out.close();
    return out.rows();
}

std::size_t write_cluster_counts(const std::filesystem::path& path, std::span<const Partition> partitions) {
    CsvWriter out(path, "day,clusters,clustered_senders,noise_senders");
    for (const auto& p : partitions) {
        out.row(p.day.to_string(), p.clusters.size(), p.size() - p.noise.size(), p.noise.size());
    }
    out.close();
    return out.rows();
}

namespace {

std::size_t write_daily_ecdf(const std::filesystem::path& path, const ClusterCatalog& catalog, bool sizes) {
    std::map<Day, std::vector<double>> per_day;
    for (const auto& [key, c] : catalog) {
        per_day[key.first].push_back(sizes ? static_cast<double>(c.size) : c.silhouette);
    }
    CsvWriter out(path, sizes ? "day,size,cumulative" : "day,silhouette,cumulative");
    for (auto& [day, values] : per_day) {
        for (const auto& p : ecdf(std::move(values))) out.row(day.to_string(), p.value, p.cumulative);
    }
    out.close();
    return out.rows();
}

}  // namespace

std::size_t write_silhouette_ecdf(const std::filesystem::path& path, const ClusterCatalog& catalog) {
    return write_daily_ecdf(path, catalog, false);
}

std::size_t write_size_ecdf(const std::filesystem::path& path, const ClusterCatalog& catalog) {
    return write_daily_ecdf(path, catalog, true);
}

ClusterCatalog read_cluster_catalog(const std::filesystem::path& silhouettes, const std::filesystem::path& labels) {
    ClusterCatalog catalog;
    auto read = [&](const std::filesystem::path& path, std::size_t fields, auto&& apply) {
        LineReader reader(path);
        std::string line;
        bool header = true;
        while (reader.next(line)) {
            if (header) {
                header = false;
                continue;
            }
            if (trim(line).empty()) continue;
            const auto f = split_fields(line);
            auto day = f.empty() ? std::nullopt : Day::parse(f[0]);
            if (f.size() != fields || !day) {
                throw InputError(path.string() + ":" + std::to_string(reader.line_number()) + ": malformed row");
            }
            apply(catalog[{*day, std::stoi(std::string(f[1]))}], f);
        }
    };
    read(silhouettes, 4, [](ClusterInfo& c, const auto& f) {
        c.size = std::stoul(std::string(f[2]));
        c.silhouette = f[3] == "nan" ? kNaN : std::stod(std::string(f[3]));
    });
    if (!labels.empty() && std::filesystem::exists(labels)) {
        read(labels, 5, [](ClusterInfo& c, const auto& f) {
            c.label = std::string(f[2]);
            c.purity = std::stod(std::string(f[3]));
            c.size = std::stoul(std::string(f[4]));
        });
    }
    return catalog;
}

}  // namespace darktrack
