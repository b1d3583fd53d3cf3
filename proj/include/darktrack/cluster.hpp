#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "darktrack/types.hpp"

namespace darktrack {

inline constexpr int kNoiseCluster = -1;

/// Dense symmetric n x n matrix of pairwise distances.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        d_[i * n_ + j] = v;
        d_[j * n_ + i] = v;
    }
    std::span<const double> row(std::size_t i) const { return {&d_[i * n_], n_}; }

private:
    std::size_t n_;
    std::vector<double> d_;
};

/// Cosine distances computed on demand from the vectors; bounds memory to O(n * E).
class CosineRows {
public:
    CosineRows(std::span<const Ipv4> ids, std::span<const std::vector<double>> vectors);

    std::size_t size() const { return unit_.size(); }
    double operator()(std::size_t i, std::size_t j) const;

private:
    std::vector<std::vector<double>> unit_;
};

/// Rows follow the order of `ids`. A zero vector raises InputError naming its sender.
DistanceMatrix pairwise_cosine_matrix(std::span<const Ipv4> ids, std::span<const std::vector<double>> vectors,
                                      unsigned threads = 1);

struct HdbscanResult {
    std::vector<int> labels;  // per row; kNoiseCluster for noise
    std::size_t num_clusters = 0;
    bool too_few_points = false;  // n < minClusterSize, everything is noise
};

/// HDBSCAN with min_samples tied to min_cluster_size and excess-of-mass selection.
/// Cluster indices are numbered 0,1,2,... in order of each cluster's lowest row.
HdbscanResult hdbscan(const DistanceMatrix& distances, std::size_t min_cluster_size);
HdbscanResult hdbscan(const CosineRows& distances, std::size_t min_cluster_size);

/// Non-overlapping assignment of one day's active senders; noise has index -1.
struct Partition {
    Day day;
    std::map<int, SenderSet> clusters;
    SenderSet noise;
    std::size_t min_cluster_size = 0;
    std::string metric = "cosine";

    /// Members of cluster `index` (kNoiseCluster returns the noise set).
    const SenderSet& members(int index) const;
    /// Union of clusters and noise.
    SenderSet senders() const;
    std::size_t size() const;
};

Partition make_partition(Day day, std::span<const Ipv4> senders, std::span<const int> labels,
                         std::size_t min_cluster_size);

/// Throws ContractViolation if clusters overlap, a cluster is below min_cluster_size,
/// or (when given) the union differs from `active`.
void check_partition(const Partition& p, const SenderSet* active = nullptr);

struct SilhouetteReport {
    bool defined = false;               // needs >= 2 non-noise clusters
    std::vector<double> values;         // per row; NaN for noise rows
    std::map<int, double> cluster_means;
    double mean = 0.0;
};

SilhouetteReport silhouette(std::span<const int> labels, const DistanceMatrix& distances);
SilhouetteReport silhouette(std::span<const int> labels, const CosineRows& distances);

/// Snapshot format: `day,sender,cluster` rows, optional leading `# key=value` comment.
void write_partitions(const std::filesystem::path& path, const std::vector<Partition>& partitions);
std::vector<Partition> read_partitions(const std::filesystem::path& path);

}  // namespace darktrack
