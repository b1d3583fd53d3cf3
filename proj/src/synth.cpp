#include "darktrack/synth.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>
#include <utility>

#include <json.hpp>

#include "darktrack/io.hpp"

namespace darktrack {

namespace {

using nlohmann::json;

constexpr std::uint32_t kGroupBase = 0x10000001;    // 16.0.0.1
constexpr std::uint32_t kNoiseBase = 0x80000001;    // 128.0.0.1
constexpr std::uint32_t kTelescope = 0xC0000200;    // 192.0.2.0/24
constexpr std::uint16_t kSplitPortBase = 50000;

std::optional<ServiceKey> parse_service(std::string_view text) {
    const auto slash = text.find('/');
    auto proto = parse_protocol(text.substr(0, slash));
    if (!proto) return std::nullopt;
    if (!has_ports(*proto)) {
        if (slash != std::string_view::npos) return std::nullopt;
        return ServiceKey{*proto, 0};
    }
    if (slash == std::string_view::npos) return std::nullopt;
    const std::string port(text.substr(slash + 1));
    if (port.empty() || port.size() > 5 || !std::all_of(port.begin(), port.end(), ::isdigit)) return std::nullopt;
    const int p = std::stoi(port);
    if (p < 1 || p > 65535) return std::nullopt;
    return ServiceKey{*proto, static_cast<std::uint16_t>(p)};
}

template <class T>
T field(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "field '" + key + "': " + e.what());
    }
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t next() { return engine_(); }
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

enum class Mode { Off, Coordinated, Scattered };

struct Cell {
    std::string entity;
    std::vector<ServiceKey> services;
    std::vector<std::pair<Ipv4, bool>> members;  // (sender, mirai)
    std::size_t slot = 0;                          // time slot of the owner group
};

struct GroupState {
    Mode mode = Mode::Off;
    std::vector<std::string> entities;
};

class Planner {
public:
    explicit Planner(const ScenarioSpec& spec) : spec_(spec) {
        std::uint16_t port = kSplitPortBase;
        for (std::size_t g = 0; g < spec.groups.size(); ++g) {
            const auto& grp = spec.groups[g];
            index_[grp.id] = g;
            if (grp.split) {
                auto& parts = part_services_[grp.id];
                for (std::size_t k = 0; k < grp.split->parts; ++k) {
                    auto& svc = parts.emplace_back();
                    for (std::size_t s = 0; s < grp.services.size(); ++s) svc.push_back({Protocol::TCP, port++});
                }
            }
        }
    }

    GroupState state(std::size_t g, int day) const {
        const auto& grp = spec_.groups[g];
        GroupState s;
        if (day < grp.emerge_day ||
            std::find(grp.silent_days.begin(), grp.silent_days.end(), day) != grp.silent_days.end()) {
            return s;
        }
        if (grp.disappear_day && day >= *grp.disappear_day) {
            s.mode = Mode::Scattered;
            return s;
        }
        s.mode = Mode::Coordinated;
        if (grp.absorb && day >= grp.absorb->day) {
            s.entities.push_back(grp.absorb->into);
        } else if (grp.split && day >= grp.split->day) {
            for (std::size_t k = 0; k < grp.split->parts; ++k) s.entities.push_back(part_name(grp.id, k));
        } else {
            s.entities.push_back(grp.id);
        }
        return s;
    }

    static std::string part_name(const std::string& id, std::size_t k) { return id + "." + std::to_string(k + 1); }

    const std::vector<ServiceKey>& services_of(const std::string& entity) const {
        const auto dot = entity.rfind('.');
        if (auto it = index_.find(entity); it != index_.end()) return spec_.groups[it->second].services;
        const auto parent = entity.substr(0, dot);
        return part_services_.at(parent).at(std::stoul(entity.substr(dot + 1)) - 1);
    }

    std::size_t owner_slot(const std::string& entity) const {
        if (auto it = index_.find(entity); it != index_.end()) return it->second;
        return index_.at(entity.substr(0, entity.rfind('.')));
    }

    /// Entities present on `day`, each with its owner's name.
    std::set<std::string> entities(int day) const {
        std::set<std::string> out;
        for (std::size_t g = 0; g < spec_.groups.size(); ++g) {
            auto s = state(g, day);
            if (s.mode == Mode::Coordinated) out.insert(s.entities.begin(), s.entities.end());
        }
        return out;
    }

    /// Group whose members define `entity`'s fate (split parts belong to their parent).
    std::size_t fate_group(const std::string& entity) const { return owner_slot(entity); }

private:
    const ScenarioSpec& spec_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::vector<std::vector<ServiceKey>>> part_services_;
};

}  // namespace

ScenarioSpec reference_scenario(std::uint64_t seed) {
    ScenarioSpec s;
    s.days = 7;
    s.seed = seed;
    auto group = [&](std::string id, std::size_t size, std::vector<ServiceKey> services) -> GroupSpec& {
        GroupSpec g;
        g.id = std::move(id);
        g.size = size;
        g.services = std::move(services);
        return s.groups.emplace_back(std::move(g));
    };
    group("telnet", 50, {{Protocol::TCP, 23}, {Protocol::TCP, 2323}}).label = "Mirai-like";
    s.groups.back().mirai = true;
    group("web", 50, {{Protocol::TCP, 80}, {Protocol::TCP, 8080}, {Protocol::TCP, 443}}).label = "Censys";
    group("ssh", 50, {{Protocol::TCP, 22}, {Protocol::TCP, 2222}});
    group("dns", 50, {{Protocol::UDP, 53}, {Protocol::UDP, 5353}});
    group("smb", 50, {{Protocol::TCP, 445}, {Protocol::TCP, 139}}).emerge_day = 3;
    group("rdp", 50, {{Protocol::TCP, 3389}, {Protocol::UDP, 3389}}).silent_days = {4, 5, 6};
    group("sql", 20, {{Protocol::TCP, 1433}, {Protocol::TCP, 3306}}).absorb = AbsorbEvent{5, "web"};
    return s;
}

void validate(const ScenarioSpec& spec) {
    if (spec.days < 2) throw ConfigError("scenario: days must be >= 2");
    if (spec.packets_per_day <= spec.min_packets) {
        throw ConfigError("scenario: packets_per_day must exceed min_packets so planted senders stay active");
    }
    std::map<std::string, const GroupSpec*> by_id;
    for (const auto& g : spec.groups) {
        if (g.id.empty() || g.id.find_first_of(".,") != std::string::npos) {
            throw ConfigError("scenario: group id '" + g.id + "' must be non-empty without '.' or ','");
        }
        if (!by_id.emplace(g.id, &g).second) throw ConfigError("scenario: duplicate group id '" + g.id + "'");
    }
    auto in_range = [&](int d) { return d >= 1 && d <= spec.days; };
    for (const auto& g : spec.groups) {
        const std::string where = "scenario group '" + g.id + "': ";
        if (g.size == 0) throw ConfigError(where + "size must be >= 1");
        if (g.services.empty()) throw ConfigError(where + "needs at least one service");
        if (!(g.churn >= 0.0 && g.churn < 1.0)) throw ConfigError(where + "churn must be in [0,1)");
        if (!in_range(g.emerge_day)) throw ConfigError(where + "emerge_day outside the scenario");
        for (int d : g.silent_days) {
            if (!in_range(d)) throw ConfigError(where + "silent day " + std::to_string(d) + " outside the scenario");
        }
        if (g.disappear_day && (*g.disappear_day <= g.emerge_day || !in_range(*g.disappear_day))) {
            throw ConfigError(where + "disappear_day must fall after emerge_day inside the scenario");
        }
        if (g.split && g.absorb) throw ConfigError(where + "cannot both split and be absorbed");
        if (g.split) {
            if (g.split->parts < 2 || g.split->parts > g.size) throw ConfigError(where + "split needs 2..size parts");
            if (g.split->day <= g.emerge_day || !in_range(g.split->day)) {
                throw ConfigError(where + "split day must fall after emerge_day inside the scenario");
            }
        }
        if (g.absorb) {
            auto it = by_id.find(g.absorb->into);
            if (it == by_id.end()) throw ConfigError(where + "absorbs into unknown group '" + g.absorb->into + "'");
            const auto& into = *it->second;
            if (&into == &g) throw ConfigError(where + "cannot absorb into itself");
            if (into.split || into.absorb || into.disappear_day) {
                throw ConfigError(where + "absorbing group '" + into.id + "' must not split, disappear or be absorbed");
            }
            if (g.absorb->day <= g.emerge_day || !in_range(g.absorb->day)) {
                throw ConfigError(where + "absorb day must fall after emerge_day inside the scenario");
            }
        }
    }
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("scenario " + path.string() + ": " + e.what());
    }
    ScenarioSpec s;
    s.days = field(j, "days", s.days, "scenario ");
    if (j.contains("start_date")) {
        auto d = Day::parse(field<std::string>(j, "start_date", "", "scenario "));
        if (!d) throw ConfigError("scenario field 'start_date': expected YYYY-MM-DD");
        s.start = *d;
    }
    s.seed = field(j, "seed", s.seed, "scenario ");
    s.noise_senders_per_day = field(j, "noise_senders_per_day", s.noise_senders_per_day, "scenario ");
    s.packets_per_day = field(j, "packets_per_day", s.packets_per_day, "scenario ");
    s.min_packets = field(j, "min_packets", s.min_packets, "scenario ");
    for (const auto& jg : field(j, "groups", json::array(), "scenario ")) {
        GroupSpec g;
        g.id = field<std::string>(jg, "id", "", "scenario group ");
        const std::string where = "scenario group '" + g.id + "' ";
        g.size = field(jg, "size", g.size, where);
        for (const auto& text : field(jg, "services", std::vector<std::string>{}, where)) {
            auto key = parse_service(text);
            if (!key) throw ConfigError(where + "bad service '" + text + "'");
            g.services.push_back(*key);
        }
        g.churn = field(jg, "churn", g.churn, where);
        g.emerge_day = field(jg, "emerge_day", g.emerge_day, where);
        g.silent_days = field(jg, "silent_days", g.silent_days, where);
        if (jg.contains("disappear_day")) g.disappear_day = field(jg, "disappear_day", 0, where);
        if (jg.contains("split")) {
            const auto& js = jg.at("split");
            g.split = SplitEvent{field(js, "day", 0, where), field<std::size_t>(js, "parts", 2, where)};
        }
        if (jg.contains("absorb")) {
            const auto& ja = jg.at("absorb");
            g.absorb = AbsorbEvent{field(ja, "day", 0, where), field<std::string>(ja, "into", "", where)};
        }
        g.label = field<std::string>(jg, "label", "", where);
        g.mirai = field(jg, "mirai", false, where);
        s.groups.push_back(std::move(g));
    }
    validate(s);
    return s;
}

void save_scenario(const std::filesystem::path& path, const ScenarioSpec& spec) {
    json j;
    j["days"] = spec.days;
    j["start_date"] = spec.start.to_string();
    j["seed"] = spec.seed;
    j["noise_senders_per_day"] = spec.noise_senders_per_day;
    j["packets_per_day"] = spec.packets_per_day;
    j["min_packets"] = spec.min_packets;
    j["groups"] = json::array();
    for (const auto& g : spec.groups) {
        json jg;
        jg["id"] = g.id;
        jg["size"] = g.size;
        std::vector<std::string> services;
        for (const auto& s : g.services) services.push_back(s.to_string());
        jg["services"] = services;
        jg["churn"] = g.churn;
        jg["emerge_day"] = g.emerge_day;
        jg["silent_days"] = g.silent_days;
        if (g.disappear_day) jg["disappear_day"] = *g.disappear_day;
        if (g.split) jg["split"] = {{"day", g.split->day}, {"parts", g.split->parts}};
        if (g.absorb) jg["absorb"] = {{"day", g.absorb->day}, {"into", g.absorb->into}};
        if (!g.label.empty()) jg["label"] = g.label;
        if (g.mirai) jg["mirai"] = true;
        j["groups"].push_back(jg);
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

GeneratedScenario generate(const ScenarioSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    Planner plan(spec);
    GeneratedScenario out;

    std::uint32_t next_group_ip = kGroupBase;
    std::uint32_t next_noise_ip = kNoiseBase;
    std::vector<std::vector<Ipv4>> members(spec.groups.size());
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        for (std::size_t m = 0; m < spec.groups[g].size; ++m) members[g].push_back(Ipv4(next_group_ip++));
    }

    auto packet = [&](double ts, Ipv4 sender, ServiceKey svc, bool mirai) {
        PacketRecord r;
        r.timestamp = ts;
        r.sender = sender;
        r.proto = svc.proto;
        r.dst_port = svc.port;
        r.dst_ip = Ipv4(kTelescope | static_cast<std::uint32_t>(1 + rng.below(254)));
        if (svc.proto == Protocol::TCP) {
            r.tcp_seq = mirai ? r.dst_ip.value : static_cast<std::uint32_t>(rng.next());
            if (!mirai && r.tcp_seq == r.dst_ip.value) r.tcp_seq ^= 1u;
        }
        out.records.push_back(r);
    };
    auto random_service = [&]() {
        const auto proto = rng.below(4) == 0 ? Protocol::UDP : Protocol::TCP;
        return ServiceKey{proto, static_cast<std::uint16_t>(1 + rng.below(65535))};
    };
    auto scatter = [&](double day_start, Ipv4 sender, bool mirai) {
        for (std::size_t p = 0; p < spec.packets_per_day; ++p) {
            packet(day_start + rng.unit() * 86400.0, sender, random_service(), mirai);
        }
    };

    for (int d = 1; d <= spec.days; ++d) {
        const Day day(spec.start.index + d - 1);
        const double day_start = day.start_seconds();

        std::map<std::string, Cell> cells;
        std::vector<std::pair<Ipv4, bool>> scattered;
        for (std::size_t g = 0; g < spec.groups.size(); ++g) {
            const auto& grp = spec.groups[g];
            if (d > grp.emerge_day && grp.churn > 0.0) {
                const auto swaps = static_cast<std::size_t>(grp.churn * static_cast<double>(grp.size) + 0.5);
                for (std::size_t k = 0; k < swaps; ++k) members[g][rng.below(members[g].size())] = Ipv4(next_group_ip++);
            }
            const auto state = plan.state(g, d);
            if (state.mode == Mode::Off) continue;
            if (!grp.label.empty()) {
                for (Ipv4 ip : members[g]) out.labels.emplace(ip, grp.label);
            }
            if (state.mode == Mode::Scattered) {
                for (Ipv4 ip : members[g]) scattered.emplace_back(ip, grp.mirai);
                continue;
            }
            const std::size_t parts = state.entities.size();
            for (std::size_t m = 0; m < members[g].size(); ++m) {
                const auto& entity = state.entities[m * parts / members[g].size()];
                auto& cell = cells[entity];
                cell.entity = entity;
                cell.members.emplace_back(members[g][m], grp.mirai);
            }
        }

        for (auto& [entity, cell] : cells) {
            cell.services = plan.services_of(entity);
            cell.slot = plan.owner_slot(entity);
            // each group scans inside its own hour of the day, members interleaved
            const double window_start = day_start + static_cast<double>((cell.slot * 5400) % 79200);
            for (const auto& [ip, mirai] : cell.members) {
                for (std::size_t p = 0; p < spec.packets_per_day; ++p) {
                    packet(window_start + rng.unit() * 3600.0, ip, cell.services[p % cell.services.size()], mirai);
                }
            }
            auto& planted = out.expected.membership[day][entity];
            for (const auto& m : cell.members) planted.push_back(m.first);
            normalize(planted);
        }
        for (const auto& [ip, mirai] : scattered) scatter(day_start, ip, mirai);
        for (std::size_t n = 0; n < spec.noise_senders_per_day; ++n) scatter(day_start, Ipv4(next_noise_ip++), false);
    }
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.timestamp < b.timestamp; });

    // scripted outcome
    for (int d = 1; d < spec.days; ++d) {
        const Day day(spec.start.index + d - 1), next(spec.start.index + d);
        const auto today = plan.entities(d);
        const auto tomorrow = plan.entities(d + 1);
        for (const auto& e : today) {
            const auto after = plan.state(plan.fate_group(e), d + 1);
            ExpectedTransition t{day, next, e, TransitionKind::Survived};
            if (after.mode == Mode::Off) {
                t.kind = TransitionKind::Inactive;
            } else if (after.mode == Mode::Scattered) {
                t.kind = TransitionKind::Disappeared;
            } else if (std::find(after.entities.begin(), after.entities.end(), e) == after.entities.end()) {
                t.kind = after.entities.size() > 1 ? TransitionKind::Split : TransitionKind::Absorbed;
            }
            out.expected.transitions.push_back(t);
        }
        for (const auto& e : tomorrow) {
            if (today.count(e)) continue;
            bool seen = false;
            for (int past = 1; past < d; ++past) seen = seen || plan.entities(past).count(e);
            out.expected.emergences.push_back({next, e, !seen});
        }
    }
    return out;
}

void write_scenario(const std::filesystem::path& dir, const GeneratedScenario& scenario) {
    std::filesystem::create_directories(dir);
    {
        CsvWriter out(dir / "packets.csv", kPacketLogHeader);
        for (const auto& r : scenario.records) {
            out.row(format_double(r.timestamp, 6), r.sender.to_string(), to_string(r.proto),
                    has_ports(r.proto) ? std::to_string(r.dst_port) : std::string(),
                    r.proto == Protocol::TCP ? std::to_string(r.tcp_seq) : std::string(), r.dst_ip.to_string());
        }
        out.close();
    }
    {
        CsvWriter out(dir / "expected.csv", "day,next_day,group,event,novelty");
        for (const auto& t : scenario.expected.transitions) {
            out.row(t.day.to_string(), t.next_day.to_string(), t.group, to_string(t.kind), "");
        }
        for (const auto& e : scenario.expected.emergences) {
            out.row(Day(e.day.index - 1).to_string(), e.day.to_string(), e.group, "Emerged", e.novelty);
        }
        out.close();
    }
    {
        CsvWriter out(dir / "membership.csv", "day,sender,group");
        for (const auto& [day, groups] : scenario.expected.membership) {
            for (const auto& [g, senders] : groups) {
                for (Ipv4 ip : senders) out.row(day.to_string(), ip.to_string(), g);
            }
        }
        out.close();
    }
    if (!scenario.labels.empty()) {
        CsvWriter out(dir / "ground_truth.csv", "sender_ip,label");
        for (const auto& [ip, label] : scenario.labels) out.row(ip.to_string(), label);
        out.close();
    }
}

ExpectedOutcome read_expected(const std::filesystem::path& dir) {
    ExpectedOutcome out;
    auto each_row = [](const std::filesystem::path& path, std::size_t fields, auto&& apply) {
        LineReader reader(path);
        std::string line;
        bool header = true;
        while (reader.next(line)) {
            if (std::exchange(header, false) || trim(line).empty()) continue;
            const auto f = split_fields(line);
            const auto where = path.string() + ":" + std::to_string(reader.line_number());
            if (f.size() != fields) throw InputError(where + ": expected " + std::to_string(fields) + " fields");
            auto day = Day::parse(f[0]);
            if (!day) throw InputError(where + ": bad day");
            apply(*day, f, where);
        }
    };
    each_row(dir / "expected.csv", 5, [&](Day day, const auto& f, const std::string& where) {
        auto next = Day::parse(f[1]);
        if (!next) throw InputError(where + ": bad next_day");
        if (f[3] == "Emerged") {
            out.emergences.push_back({*next, std::string(f[2]), f[4] == "1"});
            return;
        }
        auto kind = parse_transition_kind(f[3]);
        if (!kind) throw InputError(where + ": unknown event '" + std::string(f[3]) + "'");
        out.transitions.push_back({day, *next, std::string(f[2]), *kind});
    });
    each_row(dir / "membership.csv", 3, [&](Day day, const auto& f, const std::string& where) {
        auto ip = Ipv4::parse(f[1]);
        if (!ip) throw InputError(where + ": bad sender");
        out.membership[day][std::string(f[2])].push_back(*ip);
    });
    for (auto& [day, groups] : out.membership) {
        for (auto& [g, senders] : groups) normalize(senders);
    }
    return out;
}

std::vector<Partition> planted_partitions(const ExpectedOutcome& expected, const std::vector<DailyBatch>& batches,
                                          std::size_t min_cluster_size) {
    std::vector<Partition> out;
    for (const auto& b : batches) {
        Partition p;
        p.day = b.day;
        p.min_cluster_size = min_cluster_size;
        std::set<Ipv4> clustered;
        if (auto it = expected.membership.find(b.day); it != expected.membership.end()) {
            int index = 0;
            for (const auto& [g, senders] : it->second) {
                p.clusters[index++] = senders;
                clustered.insert(senders.begin(), senders.end());
            }
        }
        for (Ipv4 ip : b.active_senders) {
            if (!clustered.count(ip)) p.noise.push_back(ip);
        }
        out.push_back(std::move(p));
    }
    return out;
}

double KindScore::precision() const {
    return predicted ? static_cast<double>(predicted_hit) / static_cast<double>(predicted) : 1.0;
}

double KindScore::recall() const {
    return expected ? static_cast<double>(expected_hit) / static_cast<double>(expected) : 1.0;
}

double ScoreReport::novelty_accuracy() const {
    return novelty_checked ? static_cast<double>(novelty_correct) / static_cast<double>(novelty_checked) : 1.0;
}

namespace {

double jaccard(const SenderSet& a, const SenderSet& b) {
    const auto inter = intersection_size(a, b);
    const auto uni = a.size() + b.size() - inter;
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

constexpr double kMatchJaccard = 0.5;

}  // namespace

ScoreReport score(const ExpectedOutcome& expected, const std::vector<Partition>& partitions,
                  std::span<const Classification> days) {
    ScoreReport report;
    std::map<Day, const Partition*> by_day;
    for (const auto& p : partitions) by_day[p.day] = &p;

    std::map<std::pair<Day, std::string>, int> group_to_cluster;
    std::map<std::pair<Day, int>, std::string> cluster_to_group;
    double purity_sum = 0.0;
    std::size_t purity_n = 0;
    for (const auto& [day, groups] : expected.membership) {
        auto pit = by_day.find(day);
        for (const auto& [g, members] : groups) {
            std::optional<int> best;
            double best_j = 0.0;
            if (pit != by_day.end()) {
                for (const auto& [c, senders] : pit->second->clusters) {
                    const double j = jaccard(members, senders);
                    if (j >= kMatchJaccard && j > best_j) {
                        best = c;
                        best_j = j;
                    }
                }
            }
            if (!best) {
                ++report.unmatched_groups;
                continue;
            }
            group_to_cluster[{day, g}] = *best;
            const auto& cluster = pit->second->clusters.at(*best);
            const double purity =
                static_cast<double>(intersection_size(cluster, members)) / static_cast<double>(cluster.size());
            report.min_purity = std::min(report.min_purity, purity);
            purity_sum += purity;
            ++purity_n;
        }
    }
    report.mean_purity = purity_n ? purity_sum / static_cast<double>(purity_n) : 1.0;
    for (const auto& [key, c] : group_to_cluster) cluster_to_group[{key.first, c}] = key.second;

    std::map<std::pair<Day, std::string>, TransitionKind> scripted;
    for (const auto& t : expected.transitions) scripted[{t.day, t.group}] = t.kind;
    std::map<std::pair<Day, std::string>, bool> scripted_emergence;
    for (const auto& e : expected.emergences) scripted_emergence[{e.day, e.group}] = e.novelty;

    std::map<std::pair<Day, int>, TransitionKind> predicted;
    std::map<std::pair<Day, int>, const EmergenceRecord*> predicted_emergence;
    for (const auto& d : days) {
        for (const auto& t : d.transitions) predicted[{t.day, t.source}] = t.kind;
        for (const auto& e : d.emergences) predicted_emergence[{e.day, e.cluster}] = &e;
    }

    for (auto k : kAllTransitionKinds) report.kinds[std::string(to_string(k))];
    auto& emerged = report.kinds["Emerged"];

    for (const auto& t : expected.transitions) {
        auto& ks = report.kinds[std::string(to_string(t.kind))];
        ++ks.expected;
        auto c = group_to_cluster.find({t.day, t.group});
        if (c == group_to_cluster.end()) continue;
        auto p = predicted.find({t.day, c->second});
        if (p != predicted.end() && p->second == t.kind) ++ks.expected_hit;
    }
    for (const auto& [key, kind] : predicted) {
        auto& ks = report.kinds[std::string(to_string(kind))];
        ++ks.predicted;
        auto g = cluster_to_group.find(key);
        if (g == cluster_to_group.end()) continue;
        auto s = scripted.find({key.first, g->second});
        if (s != scripted.end() && s->second == kind) ++ks.predicted_hit;
    }
    for (const auto& e : expected.emergences) {
        ++emerged.expected;
        auto c = group_to_cluster.find({e.day, e.group});
        if (c == group_to_cluster.end()) continue;
        auto p = predicted_emergence.find({e.day, c->second});
        if (p == predicted_emergence.end() || !p->second->emerged) continue;
        ++emerged.expected_hit;
        ++report.novelty_checked;
        if (p->second->novelty == e.novelty) ++report.novelty_correct;
    }
    for (const auto& [key, e] : predicted_emergence) {
        if (!e->emerged) continue;
        ++emerged.predicted;
        auto g = cluster_to_group.find(key);
        if (g != cluster_to_group.end() && scripted_emergence.count({key.first, g->second})) ++emerged.predicted_hit;
    }
    return report;
}

void write_score(const std::filesystem::path& path, const ScoreReport& report) {
    CsvWriter out(path, "metric,kind,value");
    for (const auto& [kind, s] : report.kinds) {
        out.row("expected", kind, s.expected);
        out.row("predicted", kind, s.predicted);
        out.row("precision", kind, s.precision());
        out.row("recall", kind, s.recall());
    }
    out.row("novelty_accuracy", "", report.novelty_accuracy());
    out.row("novelty_checked", "", report.novelty_checked);
    out.row("unmatched_groups", "", report.unmatched_groups);
    out.row("min_purity", "", report.min_purity);
    out.row("mean_purity", "", report.mean_purity);
    out.close();
}

}  // namespace darktrack
