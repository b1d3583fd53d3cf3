#include "darktrack/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include "darktrack/embed.hpp"
#include "darktrack/io.hpp"

namespace darktrack {

namespace {

// Zero mutual-reachability distances would give infinite density levels.
constexpr double kMinLinkDistance = 1e-12;

double norm_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct LinkageNode {
    std::size_t left = 0, right = 0;
    double distance = 0;
    std::size_t size = 1;
};

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void attach(std::size_t child, std::size_t root) { parent_[child] = root; }

private:
    std::vector<std::size_t> parent_;
};

template <class D>
std::vector<double> core_distances(const D& dist, std::size_t k) {
    const std::size_t n = dist.size();
    std::vector<double> core(n);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row[j] = i == j ? 0.0 : dist(i, j);
        // k-th nearest neighbour, the point itself counted as the first
        std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
        core[i] = row[k - 1];
    }
    return core;
}

struct Edge {
    std::size_t a, b;
    double w;
};

// Prim's algorithm on the dense mutual-reachability graph.
template <class D>
std::vector<Edge> mutual_reachability_mst(const D& dist, const std::vector<double>& core) {
    const std::size_t n = dist.size();
    std::vector<Edge> edges;
    edges.reserve(n - 1);
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    std::size_t current = 0;
    in_tree[0] = true;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double next_w = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (in_tree[j]) continue;
            const double mr = std::max({core[current], core[j], dist(current, j)});
            if (mr < best[j]) {
                best[j] = mr;
                from[j] = current;
            }
            if (best[j] < next_w || next == n) {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push_back({std::min(from[next], next), std::max(from[next], next), next_w});
        current = next;
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        if (x.w != y.w) return x.w < y.w;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    return edges;
}

// Nodes 0..n-1 are points; node n+i is the i-th merge. The root is the last node.
std::vector<LinkageNode> single_linkage(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<LinkageNode> nodes(2 * n - 1);
    UnionFind uf(2 * n - 1);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::size_t ra = uf.find(edges[i].a);
        const std::size_t rb = uf.find(edges[i].b);
        const std::size_t id = n + i;
        nodes[id] = {ra, rb, edges[i].w, nodes[ra].size + nodes[rb].size};
        uf.attach(ra, id);
        uf.attach(rb, id);
    }
    return nodes;
}

struct CondensedTree {
    std::vector<std::size_t> cluster_parent;  // parent cluster id; root (0) points to itself
    std::vector<double> birth_lambda;
    std::vector<double> stability;
    std::vector<std::size_t> point_cluster;   // cluster a point fell out of
};

CondensedTree condense(const std::vector<LinkageNode>& nodes, std::size_t n, std::size_t min_size) {
    CondensedTree t;
    t.point_cluster.assign(n, 0);
    t.cluster_parent.push_back(0);
    t.birth_lambda.push_back(0.0);
    t.stability.push_back(0.0);

    auto lambda_of = [](double d) { return 1.0 / std::max(d, kMinLinkDistance); };
    auto fall_out = [&](std::size_t subtree, std::size_t cluster, double lambda) {
        std::vector<std::size_t> stack{subtree};
        while (!stack.empty()) {
            const std::size_t x = stack.back();
            stack.pop_back();
            if (x < n) {
                t.point_cluster[x] = cluster;
                t.stability[cluster] += lambda - t.birth_lambda[cluster];
            } else {
                stack.push_back(nodes[x].left);
                stack.push_back(nodes[x].right);
            }
        }
    };

    const std::size_t root = nodes.size() - 1;
    if (n == 1) {
        t.point_cluster[0] = 0;
        return t;
    }
    // (linkage node, cluster it currently belongs to)
    std::vector<std::pair<std::size_t, std::size_t>> queue{{root, 0}};
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const auto [node, cluster] = queue[qi];
        const auto& nd = nodes[node];
        const double lambda = lambda_of(nd.distance);
        const std::size_t ls = nodes[nd.left].size;
        const std::size_t rs = nodes[nd.right].size;
        const bool left_big = ls >= min_size;
        const bool right_big = rs >= min_size;
        if (left_big && right_big) {
            for (std::size_t child : {nd.left, nd.right}) {
                const std::size_t id = t.cluster_parent.size();
                t.cluster_parent.push_back(cluster);
                t.birth_lambda.push_back(lambda);
                t.stability.push_back(0.0);
                t.stability[cluster] += (lambda - t.birth_lambda[cluster]) * static_cast<double>(nodes[child].size);
                queue.emplace_back(child, id);
            }
            continue;
        }
        for (std::size_t child : {nd.left, nd.right}) {
            if (nodes[child].size >= min_size) {
                queue.emplace_back(child, cluster);
            } else {
                fall_out(child, cluster, lambda);
            }
        }
    }
    return t;
}

template <class D>
HdbscanResult run_hdbscan(const D& dist, std::size_t min_cluster_size) {
    if (min_cluster_size < 2) throw ConfigError("minClusterSize must be >= 2");
    const std::size_t n = dist.size();
    HdbscanResult out;
    out.labels.assign(n, kNoiseCluster);
    if (n < min_cluster_size || n < 2) {
        out.too_few_points = n < min_cluster_size;
        return out;
    }

    const auto core = core_distances(dist, min_cluster_size);
    const auto nodes = single_linkage(n, mutual_reachability_mst(dist, core));
    auto tree = condense(nodes, n, min_cluster_size);

    // Excess of mass: clusters are created after their parents, so walking ids
    // downward visits children first. The root is never selected.
    const std::size_t nc = tree.cluster_parent.size();
    std::vector<std::vector<std::size_t>> children(nc);
    for (std::size_t c = 1; c < nc; ++c) children[tree.cluster_parent[c]].push_back(c);
    std::vector<bool> selected(nc, false);
    std::vector<double> score = tree.stability;
    for (std::size_t c = nc; c-- > 1;) {
        double child_sum = 0;
        for (std::size_t ch : children[c]) child_sum += score[ch];
        if (!children[c].empty() && child_sum > score[c]) {
            score[c] = child_sum;
        } else {
            selected[c] = true;
            std::vector<std::size_t> stack(children[c].begin(), children[c].end());
            while (!stack.empty()) {
                const std::size_t x = stack.back();
                stack.pop_back();
                selected[x] = false;
                stack.insert(stack.end(), children[x].begin(), children[x].end());
            }
        }
    }

    std::vector<long> owner(n, -1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t c = tree.point_cluster[p]; c != 0; c = tree.cluster_parent[c]) {
            if (selected[c]) {
                owner[p] = static_cast<long>(c);
                break;
            }
        }
    }
    std::map<long, int> renumber;
    for (std::size_t p = 0; p < n; ++p) {
        if (owner[p] < 0) continue;
        auto [it, fresh] = renumber.try_emplace(owner[p], static_cast<int>(renumber.size()));
        out.labels[p] = it->second;
    }
    out.num_clusters = renumber.size();
    return out;
}

template <class D>
SilhouetteReport run_silhouette(std::span<const int> labels, const D& dist) {
    const std::size_t n = labels.size();
    if (dist.size() != n) throw InputError("silhouette: label count does not match distance matrix");
    SilhouetteReport rep;
    rep.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::map<int, std::size_t> sizes;
    for (int l : labels) {
        if (l != kNoiseCluster) ++sizes[l];
    }
    if (sizes.size() < 2) return rep;
    rep.defined = true;

    std::vector<int> ids;
    for (const auto& [l, s] : sizes) ids.push_back(l);
    std::map<int, std::size_t> slot;
    for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;

    std::vector<double> sums(ids.size());
    std::map<int, double> cluster_sum;
    double total = 0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == kNoiseCluster) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || labels[j] == kNoiseCluster) continue;
            sums[slot[labels[j]]] += dist(i, j);
        }
        const int own = labels[i];
        double s = 0.0;
        if (sizes[own] > 1) {
            const double a = sums[slot[own]] / static_cast<double>(sizes[own] - 1);
            double b = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (ids[k] == own) continue;
                b = std::min(b, sums[k] / static_cast<double>(sizes[ids[k]]));
            }
            const double m = std::max(a, b);
            s = m > 0 ? (b - a) / m : 0.0;
        }
        rep.values[i] = s;
        cluster_sum[own] += s;
        total += s;
        ++counted;
    }
    for (const auto& [l, sum] : cluster_sum) rep.cluster_means[l] = sum / static_cast<double>(sizes[l]);
    rep.mean = total / static_cast<double>(counted);
    return rep;
}

}  // namespace

CosineRows::CosineRows(std::span<const Ipv4> ids, std::span<const std::vector<double>> vectors) {
    if (ids.size() != vectors.size()) throw InputError("CosineRows: ids and vectors differ in length");
    unit_.reserve(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const double nv = norm_of(vectors[i]);
        if (nv == 0.0) throw InputError("zero embedding vector for sender " + ids[i].to_string());
        auto& u = unit_.emplace_back(vectors[i]);
        for (double& x : u) x /= nv;
    }
}

double CosineRows::operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    const auto& a = unit_[i];
    const auto& b = unit_[j];
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return std::clamp(1.0 - s, 0.0, 2.0);
}

DistanceMatrix pairwise_cosine_matrix(std::span<const Ipv4> ids, std::span<const std::vector<double>> vectors,
                                      unsigned threads) {
    if (ids.size() != vectors.size()) throw InputError("pairwise_cosine_matrix: ids and vectors differ in length");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (norm_of(vectors[i]) == 0.0) throw InputError("zero embedding vector for sender " + ids[i].to_string());
    }
    const std::size_t n = ids.size();
    DistanceMatrix m(n);
    auto rows = [&](std::size_t shard, std::size_t shards) {
        for (std::size_t i = shard; i < n; i += shards) {
            for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, cosine_distance(vectors[i], vectors[j]));
        }
    };
    if (threads <= 1) {
        rows(0, 1);
    } else {
        // each (i, j) pair with i < j is written by exactly one shard
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(rows, t, threads);
    }
    return m;
}

HdbscanResult hdbscan(const DistanceMatrix& distances, std::size_t min_cluster_size) {
    return run_hdbscan(distances, min_cluster_size);
}

HdbscanResult hdbscan(const CosineRows& distances, std::size_t min_cluster_size) {
    return run_hdbscan(distances, min_cluster_size);
}

SilhouetteReport silhouette(std::span<const int> labels, const DistanceMatrix& distances) {
    return run_silhouette(labels, distances);
}

SilhouetteReport silhouette(std::span<const int> labels, const CosineRows& distances) {
    return run_silhouette(labels, distances);
}

const SenderSet& Partition::members(int index) const {
    if (index == kNoiseCluster) return noise;
    auto it = clusters.find(index);
    if (it == clusters.end()) throw InputError("no cluster " + std::to_string(index) + " on " + day.to_string());
    return it->second;
}

SenderSet Partition::senders() const {
    SenderSet all = noise;
    for (const auto& [i, m] : clusters) all.insert(all.end(), m.begin(), m.end());
    normalize(all);
    return all;
}

std::size_t Partition::size() const {
    std::size_t n = noise.size();
    for (const auto& [i, m] : clusters) n += m.size();
    return n;
}

Partition make_partition(Day day, std::span<const Ipv4> senders, std::span<const int> labels,
                         std::size_t min_cluster_size) {
    if (senders.size() != labels.size()) throw InputError("make_partition: senders and labels differ in length");
    Partition p;
    p.day = day;
    p.min_cluster_size = min_cluster_size;
    for (std::size_t i = 0; i < senders.size(); ++i) {
        if (labels[i] == kNoiseCluster) {
            p.noise.push_back(senders[i]);
        } else {
            p.clusters[labels[i]].push_back(senders[i]);
        }
    }
    normalize(p.noise);
    for (auto& [i, m] : p.clusters) normalize(m);
    return p;
}

void check_partition(const Partition& p, const SenderSet* active) {
    const SenderSet all = p.senders();
    if (all.size() != p.size()) throw ContractViolation("partition " + p.day.to_string() + ": overlapping clusters");
    for (const auto& [i, m] : p.clusters) {
        if (i < 0) throw ContractViolation("partition " + p.day.to_string() + ": negative non-noise index");
        if (p.min_cluster_size > 0 && m.size() < p.min_cluster_size) {
            throw ContractViolation("partition " + p.day.to_string() + ": cluster " + std::to_string(i) +
                                    " smaller than minClusterSize");
        }
    }
    if (active != nullptr && all != *active) {
        throw ContractViolation("partition " + p.day.to_string() + " does not cover the active senders exactly");
    }
}

void write_partitions(const std::filesystem::path& path, const std::vector<Partition>& partitions) {
    CsvWriter out(path, "day,sender,cluster");
    for (const auto& p : partitions) {
        std::vector<std::pair<Ipv4, int>> rows;
        for (Ipv4 ip : p.noise) rows.emplace_back(ip, kNoiseCluster);
        for (const auto& [i, m] : p.clusters) {
            for (Ipv4 ip : m) rows.emplace_back(ip, i);
        }
        std::sort(rows.begin(), rows.end());
        const std::string day = p.day.to_string();
        for (const auto& [ip, c] : rows) out.row(day, ip.to_string(), c);
    }
    out.close();
}

std::vector<Partition> read_partitions(const std::filesystem::path& path) {
    LineReader reader(path);
    std::map<Day, Partition> by_day;
    std::map<Day, std::size_t> raw_rows;
    std::size_t min_size = 0;
    std::string line;
    bool header_seen = false;
    while (reader.next(line)) {
        const auto t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            auto pos = t.find("min_cluster_size=");
            if (pos != std::string_view::npos) min_size = std::stoul(std::string(t.substr(pos + 17)));
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (t == "day,sender,cluster") continue;
        }
        const auto f = split_fields(t);
        const auto where = path.string() + ":" + std::to_string(reader.line_number());
        if (f.size() != 3) throw InputError(where + ": expected day,sender,cluster");
        auto day = Day::parse(trim(f[0]));
        auto ip = Ipv4::parse(trim(f[1]));
        if (!day || !ip) throw InputError(where + ": bad day or sender");
        int cluster = 0;
        try {
            cluster = std::stoi(std::string(trim(f[2])));
        } catch (const std::exception&) {
            throw InputError(where + ": bad cluster index");
        }
        if (cluster < kNoiseCluster) throw InputError(where + ": cluster index below -1");
        auto& p = by_day[*day];
        p.day = *day;
        ++raw_rows[*day];
        if (cluster == kNoiseCluster) {
            p.noise.push_back(*ip);
        } else {
            p.clusters[cluster].push_back(*ip);
        }
    }
    std::vector<Partition> out;
    for (auto& [d, p] : by_day) {
        p.min_cluster_size = min_size;
        normalize(p.noise);
        for (auto& [i, m] : p.clusters) normalize(m);
        if (p.senders().size() != raw_rows[d]) throw InputError("sender listed twice on " + d.to_string() + " in " + path.string());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace darktrack
