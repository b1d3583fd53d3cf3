#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "darktrack/cluster.hpp"
#include "fixtures.hpp"

using namespace darktrack;
using namespace darktrack::testing;

namespace doctest {
template <>
struct StringMaker<std::set<std::vector<std::size_t>>> {
    static String convert(const std::set<std::vector<std::size_t>>& sets) {
        std::string out = "{";
        for (const auto& s : sets) {
            out += "[";
            for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
            out += "]";
        }
        return (out + "}").c_str();
    }
};
}  // namespace doctest

namespace {

using Clusters = std::set<std::vector<std::size_t>>;

Clusters as_sets(const std::vector<int>& labels) {
    std::map<int, std::vector<std::size_t>> m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kNoiseCluster) m[labels[i]].push_back(i);
    }
    Clusters out;
    for (auto& [l, v] : m) out.insert(v);
    return out;
}

DistanceMatrix euclidean(const std::vector<std::vector<double>>& pts) {
    DistanceMatrix d(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            double s = 0;
            for (std::size_t k = 0; k < pts[i].size(); ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
            d.set(i, j, std::sqrt(s));
        }
    }
    return d;
}

/// Textbook HDBSCAN: walk density levels top-down, removing every edge at a level at once.
class ReferenceHdbscan {
public:
    ReferenceHdbscan(const DistanceMatrix& d, std::size_t m) : d_(d), m_(m), core_(d.size()) {
        const std::size_t n = d.size();
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(d.row(i).begin(), d.row(i).end());
            std::sort(row.begin(), row.end());
            core_[i] = row[m - 1];  // row[0] is the point itself
        }
    }

    struct Selected {
        std::vector<std::size_t> points;
        double birth_level;  // distance at which the cluster split off
    };

    std::vector<Selected> run() {
        std::vector<std::size_t> all(d_.size());
        std::iota(all.begin(), all.end(), 0);
        nodes_.push_back({all, 0.0, 0.0, {}});
        grow(0);
        std::vector<Selected> out;
        for (std::size_t c : nodes_[0].children) collect(c, out);
        return out;
    }

    double core(std::size_t i) const { return core_[i]; }

private:
    struct Node {
        std::vector<std::size_t> points;
        double birth;
        double stability;
        std::vector<std::size_t> children;
        double level = 0;  // split distance, kept exactly
        double value = 0;
        bool keep = false;
    };

    double mr(std::size_t i, std::size_t j) const { return std::max({core_[i], core_[j], d_(i, j)}); }

    // Largest edge of the minimum spanning tree of `s`: the level at which `s` first comes apart.
    double split_level(const std::vector<std::size_t>& s) const {
        std::vector<double> best(s.size(), std::numeric_limits<double>::infinity());
        std::vector<bool> in(s.size(), false);
        best[0] = 0;
        double worst = 0;
        for (std::size_t step = 0; step < s.size(); ++step) {
            std::size_t u = s.size();
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (!in[i] && (u == s.size() || best[i] < best[u])) u = i;
            }
            in[u] = true;
            worst = std::max(worst, best[u]);
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (!in[i]) best[i] = std::min(best[i], mr(s[u], s[i]));
            }
        }
        return worst;
    }

    std::vector<std::vector<std::size_t>> components(const std::vector<std::size_t>& s, double below) const {
        std::vector<int> comp(s.size(), -1);
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t start = 0; start < s.size(); ++start) {
            if (comp[start] >= 0) continue;
            const int id = static_cast<int>(out.size());
            out.emplace_back();
            std::vector<std::size_t> stack{start};
            comp[start] = id;
            while (!stack.empty()) {
                const std::size_t u = stack.back();
                stack.pop_back();
                out.back().push_back(s[u]);
                for (std::size_t v = 0; v < s.size(); ++v) {
                    if (comp[v] < 0 && mr(s[u], s[v]) < below) {
                        comp[v] = id;
                        stack.push_back(v);
                    }
                }
            }
            std::sort(out.back().begin(), out.back().end());
        }
        return out;
    }

    void grow(std::size_t id) {
        std::vector<std::size_t> live = nodes_[id].points;
        const double birth = nodes_[id].birth;
        double stability = 0;
        while (live.size() >= 2) {
            const double w = split_level(live);
            const double lambda = 1.0 / w;
            std::vector<std::vector<std::size_t>> big;
            for (auto& c : components(live, w)) {
                if (c.size() >= m_) {
                    big.push_back(std::move(c));
                } else {
                    stability += static_cast<double>(c.size()) * (lambda - birth);
                }
            }
            if (big.size() >= 2) {
                for (auto& c : big) {
                    stability += static_cast<double>(c.size()) * (lambda - birth);
                    const std::size_t child = nodes_.size();
                    nodes_.push_back({std::move(c), lambda, 0.0, {}, w});
                    nodes_[id].children.push_back(child);
                    grow(child);
                }
                live.clear();
            } else if (big.size() == 1) {
                live = std::move(big[0]);
            } else {
                live.clear();
            }
        }
        nodes_[id].stability = stability;
        // excess of mass, children already settled
        double child_sum = 0;
        for (std::size_t c : nodes_[id].children) child_sum += nodes_[c].value;
        if (!nodes_[id].children.empty() && child_sum > stability) {
            nodes_[id].value = child_sum;
        } else {
            nodes_[id].value = stability;
            nodes_[id].keep = true;
        }
    }

    void collect(std::size_t id, std::vector<Selected>& out) const {
        if (nodes_[id].keep) {
            out.push_back({nodes_[id].points, nodes_[id].level});
            return;
        }
        for (std::size_t c : nodes_[id].children) collect(c, out);
    }

    const DistanceMatrix& d_;
    std::size_t m_;
    std::vector<double> core_;
    std::vector<Node> nodes_;
};

std::vector<std::vector<double>> blob_points(std::mt19937_64& rng, std::size_t& n_out) {
    std::uniform_real_distribution<double> pos(0.0, 30.0);
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::vector<std::vector<double>> pts;
    const int blobs = 2 + static_cast<int>(rng() % 3);
    for (int b = 0; b < blobs; ++b) {
        const double cx = pos(rng), cy = pos(rng), spread = 0.3 + (rng() % 100) / 100.0;
        const std::size_t size = 5 + rng() % 25;
        for (std::size_t i = 0; i < size; ++i) pts.push_back({cx + spread * jitter(rng), cy + spread * jitter(rng)});
    }
    const std::size_t outliers = rng() % 8;
    for (std::size_t i = 0; i < outliers; ++i) pts.push_back({pos(rng), pos(rng)});
    std::shuffle(pts.begin(), pts.end(), rng);
    n_out = pts.size();
    return pts;
}

/// Each blob is a regular simplex: equal distances inside a blob, distance 1 across blobs.
std::vector<std::vector<double>> simplex_blobs(const std::vector<std::size_t>& sizes, const std::vector<double>& eps) {
    const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    const std::size_t dim = sizes.size() + total;
    std::vector<std::vector<double>> v;
    std::size_t next = sizes.size();
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        for (std::size_t i = 0; i < sizes[b]; ++i) {
            std::vector<double> x(dim, 0.0);
            x[b] = 1.0;
            x[next++] = eps[b];
            v.push_back(std::move(x));
        }
    }
    return v;
}

DistanceMatrix cosine_of(const std::vector<std::vector<double>>& v) {
    std::vector<Ipv4> ids;
    for (std::size_t i = 0; i < v.size(); ++i) ids.push_back(ip(static_cast<std::uint32_t>(i)));
    return pairwise_cosine_matrix(ids, v);
}

void check_numbering(const std::vector<int>& labels) {
    int next = 0;
    for (int l : labels) {
        if (l == kNoiseCluster) continue;
        CHECK(l <= next);
        if (l == next) ++next;
    }
}

}  // namespace

TEST_CASE("hdbscan agrees with a level-by-level reference on random blobs") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 60; ++trial) {
        std::size_t n = 0;
        const auto pts = blob_points(rng, n);
        const auto d = euclidean(pts);
        const std::size_t mcs = 3 + rng() % 6;
        CAPTURE(trial);
        CAPTURE(mcs);
        const auto got = hdbscan(d, mcs);
        ReferenceHdbscan ref(d, mcs);
        const auto want = ref.run();
        const auto have = as_sets(got.labels);
        REQUIRE(have.size() == want.size());
        // Edges are removed one at a time, so a point whose core distance equals the level
        // at which a cluster splits off stays with that cluster. Nothing else may differ.
        for (const auto& w : want) {
            auto it = std::find_if(have.begin(), have.end(), [&](const auto& h) {
                return std::includes(h.begin(), h.end(), w.points.begin(), w.points.end());
            });
            REQUIRE(it != have.end());
            std::vector<std::size_t> extra;
            std::set_difference(it->begin(), it->end(), w.points.begin(), w.points.end(), std::back_inserter(extra));
            for (std::size_t p : extra) CHECK(ref.core(p) == w.birth_level);
        }
        CHECK(got.num_clusters == as_sets(got.labels).size());
        check_numbering(got.labels);
    }
}

TEST_CASE("with min cluster size 2 every blob is its own cluster") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<std::size_t> sizes;
        std::vector<double> eps;
        const int blobs = 3 + static_cast<int>(rng() % 5);
        for (int b = 0; b < blobs; ++b) {
            sizes.push_back(2 + rng() % 5);
            eps.push_back(0.05 + (rng() % 25) / 100.0);
        }
        auto v = simplex_blobs(sizes, eps);
        std::vector<std::size_t> blob_of;
        for (std::size_t b = 0; b < sizes.size(); ++b) blob_of.insert(blob_of.end(), sizes[b], b);
        std::vector<std::size_t> perm(v.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<std::vector<double>> shuffled;
        Clusters expect;
        std::map<std::size_t, std::vector<std::size_t>> rows_of_blob;
        for (std::size_t r = 0; r < perm.size(); ++r) {
            shuffled.push_back(v[perm[r]]);
            rows_of_blob[blob_of[perm[r]]].push_back(r);
        }
        for (auto& [b, rows] : rows_of_blob) {
            expect.insert(rows);
        }
        CAPTURE(trial);
        CHECK(as_sets(hdbscan(cosine_of(shuffled), 2).labels) == expect);
    }
}

TEST_CASE("two tight blobs with outliers") {
    auto v = simplex_blobs({20, 20, 1, 1, 1, 1, 1}, {0.1, 0.15, 0.1, 0.1, 0.1, 0.1, 0.1});
    const auto d = cosine_of(v);
    const auto r = hdbscan(d, 10);
    CHECK(r.num_clusters == 2);
    CHECK(std::count(r.labels.begin(), r.labels.end(), kNoiseCluster) == 5);
    CHECK(r.labels[0] == 0);
    CHECK(r.labels[20] == 1);

    auto only_blobs = simplex_blobs({20, 20}, {0.1, 0.15});
    const auto r2 = hdbscan(cosine_of(only_blobs), 10);
    CHECK(r2.num_clusters == 2);
    CHECK(std::count(r2.labels.begin(), r2.labels.end(), kNoiseCluster) == 0);
}

TEST_CASE("a single dense group is never reported as the root cluster") {
    auto v = simplex_blobs({30}, {0.1});
    const auto r = hdbscan(cosine_of(v), 5);
    CHECK(r.num_clusters == 0);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l == kNoiseCluster; }));
}

TEST_CASE("fewer points than the minimum cluster size are all noise") {
    auto v = simplex_blobs({3, 3}, {0.1, 0.1});
    const auto r = hdbscan(cosine_of(v), 10);
    CHECK(r.too_few_points);
    CHECK(r.num_clusters == 0);
    CHECK_THROWS_AS(hdbscan(cosine_of(v), 1), ConfigError);
}

TEST_CASE("on-demand cosine rows give the same clustering as the dense matrix") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<std::vector<double>> v;
        std::vector<Ipv4> ids;
        for (std::uint32_t i = 0; i < 80; ++i) {
            const int c = static_cast<int>(i % 4);
            std::vector<double> x(8);
            for (std::size_t k = 0; k < 8; ++k) x[k] = 0.15 * g(rng) + (static_cast<int>(k) % 4 == c ? 1.0 : 0.0);
            v.push_back(x);
            ids.push_back(ip(i));
        }
        const auto dense = pairwise_cosine_matrix(ids, v);
        const CosineRows rows(ids, v);
        for (std::size_t i = 0; i < 80; i += 7) {
            for (std::size_t j = 0; j < 80; j += 5) CHECK(rows(i, j) == doctest::Approx(dense(i, j)).epsilon(1e-12));
        }
        CHECK(hdbscan(dense, 6).labels == hdbscan(rows, 6).labels);
        const auto threaded = pairwise_cosine_matrix(ids, v, 4);
        for (std::size_t i = 0; i < 80; ++i) {
            for (std::size_t j = 0; j < 80; ++j) CHECK(threaded(i, j) == dense(i, j));
        }
    }
}

TEST_CASE("a zero embedding names the sender") {
    std::vector<std::vector<double>> v{{1, 0}, {0, 0}};
    std::vector<Ipv4> ids{ip(1), ip(2)};
    try {
        pairwise_cosine_matrix(ids, v);
        FAIL("expected InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("10.0.0.2") != std::string::npos);
    }
    CHECK_THROWS_AS(CosineRows(ids, v), InputError);
}

TEST_CASE("silhouette matches the direct formula") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 5 + rng() % 30;
        std::vector<std::vector<double>> pts;
        std::vector<int> labels;
        for (std::size_t i = 0; i < n; ++i) {
            pts.push_back({u(rng), u(rng), u(rng)});
            labels.push_back(static_cast<int>(rng() % 5) - 1);
        }
        const auto d = euclidean(pts);
        const auto rep = silhouette(labels, d);
        std::map<int, std::size_t> size;
        for (int l : labels) {
            if (l != kNoiseCluster) ++size[l];
        }
        CHECK(rep.defined == (size.size() >= 2));
        if (!rep.defined) continue;
        double total = 0;
        std::size_t counted = 0;
        std::map<int, double> sum;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == kNoiseCluster) {
                CHECK(std::isnan(rep.values[i]));
                continue;
            }
            double s = 0;
            if (size[labels[i]] > 1) {
                double a = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j != i && labels[j] == labels[i]) a += d(i, j);
                }
                a /= static_cast<double>(size[labels[i]] - 1);
                double b = std::numeric_limits<double>::infinity();
                for (const auto& [l, cnt] : size) {
                    if (l == labels[i]) continue;
                    double m = 0;
                    for (std::size_t j = 0; j < n; ++j) {
                        if (labels[j] == l) m += d(i, j);
                    }
                    b = std::min(b, m / static_cast<double>(cnt));
                }
                s = (b - a) / std::max(a, b);
            }
            CHECK(rep.values[i] == doctest::Approx(s).epsilon(1e-12));
            CHECK(rep.values[i] >= -1.0);
            CHECK(rep.values[i] <= 1.0);
            sum[labels[i]] += s;
            total += s;
            ++counted;
        }
        CHECK(rep.mean == doctest::Approx(total / static_cast<double>(counted)).epsilon(1e-12));
        for (const auto& [l, s] : sum) {
            CHECK(rep.cluster_means.at(l) == doctest::Approx(s / static_cast<double>(size[l])).epsilon(1e-12));
        }
    }
}

TEST_CASE("silhouette needs two clusters") {
    auto v = simplex_blobs({4, 4}, {0.1, 0.1});
    const auto d = cosine_of(v);
    CHECK_FALSE(silhouette(std::vector<int>{0, 0, 0, 0, -1, -1, -1, -1}, d).defined);
    const auto r = silhouette(std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1}, d);
    CHECK(r.defined);
    CHECK(r.mean > 0.9);
    CHECK_THROWS_AS(silhouette(std::vector<int>{0, 1}, d), InputError);
}

TEST_CASE("partitions from labels and their checks") {
    const Day day(100);
    const std::vector<Ipv4> senders{ip(3), ip(1), ip(2), ip(4)};
    const std::vector<int> labels{0, kNoiseCluster, 0, kNoiseCluster};
    auto p = make_partition(day, senders, labels, 2);
    CHECK(p.clusters.at(0) == SenderSet{ip(2), ip(3)});
    CHECK(p.noise == SenderSet{ip(1), ip(4)});
    CHECK(p.members(kNoiseCluster) == p.noise);
    CHECK_THROWS_AS(p.members(5), InputError);
    CHECK(p.senders() == ips(1, 4));
    CHECK(p.size() == 4);

    const SenderSet active = ips(1, 4);
    CHECK_NOTHROW(check_partition(p, &active));
    const SenderSet more = ips(1, 5);
    CHECK_THROWS_AS(check_partition(p, &more), ContractViolation);
    auto overlap = p;
    overlap.noise.push_back(ip(3));
    normalize(overlap.noise);
    CHECK_THROWS_AS(check_partition(overlap), ContractViolation);
    auto small = partition(day, {SenderSet{ip(9)}});
    small.min_cluster_size = 2;
    CHECK_THROWS_AS(check_partition(small), ContractViolation);
}

TEST_CASE("partition snapshots round-trip") {
    const auto dir = scratch_dir("cluster-snap");
    std::vector<Partition> ps{partition(Day(10), {ips(0, 3), ips(10, 2)}, ips(20, 2)),
                              partition(Day(11), {ips(0, 4)}, {})};
    write_partitions(dir / "p.csv", ps);
    const auto back = read_partitions(dir / "p.csv");
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].day == ps[i].day);
        CHECK(back[i].clusters == ps[i].clusters);
        CHECK(back[i].noise == ps[i].noise);
    }

    auto bad = [&](const std::string& body) {
        std::ofstream(dir / "bad.csv") << "day,sender,cluster\n" << body;
        return dir / "bad.csv";
    };
    CHECK_THROWS_AS(read_partitions(bad("1970-01-11,10.0.0.1,-2\n")), InputError);
    CHECK_THROWS_AS(read_partitions(bad("1970-01-11,10.0.0.1,x\n")), InputError);
    CHECK_THROWS_AS(read_partitions(bad("1970-01-11,10.0.0.1\n")), InputError);
    CHECK_THROWS_AS(read_partitions(bad("1970-01-11,10.0.0.1,0\n1970-01-11,10.0.0.1,-1\n")), InputError);
}
