#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "darktrack/corpus.hpp"

namespace darktrack {

struct TrainParams {
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 1;
    double lr_start = 0.025;
    double lr_end = 1e-4;
    double unigram_power = 0.75;
    /// 1 = deterministic single-threaded; >1 = lock-free asynchronous updates (nondeterministic).
    unsigned threads = 1;
};

void validate(const TrainParams& params);

/// Sender vocabulary with input (embedding) and output (context) vectors.
///
/// The vocabulary only grows. Vectors of senders absent from a training corpus
/// are never touched, so a sender that goes quiet keeps its last embedding.
class EmbeddingModel {
public:
    /// Empty model of the given dimension. Throws ConfigError when dimension == 0.
    EmbeddingModel(std::size_t dimension, std::uint64_t seed);

    std::size_t dimension() const { return dim_; }
    std::size_t size() const { return words_.size(); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t rounds() const { return rounds_; }
    const std::vector<Ipv4>& words() const { return words_; }

    std::optional<std::size_t> index_of(Ipv4 sender) const;
    bool contains(Ipv4 sender) const { return index_.count(sender) != 0; }

    /// Input vector of `sender`; throws InputError for an unknown sender.
    /// The span is invalidated by add_words().
    std::span<const double> embedding(Ipv4 sender) const;

    std::span<const double> input_row(std::size_t i) const { return {&input_[i * dim_], dim_}; }
    std::span<const double> output_row(std::size_t i) const { return {&output_[i * dim_], dim_}; }
    std::span<double> input_row(std::size_t i) { return {&input_[i * dim_], dim_}; }
    std::span<double> output_row(std::size_t i) { return {&output_[i * dim_], dim_}; }
    const std::vector<double>& unigram_table() const { return unigram_; }

    /// Appends unseen senders. New input components are drawn uniformly from
    /// [-0.5/E, 0.5/E] with a per-index stream derived from the seed; outputs start at zero.
    std::size_t add_words(std::span<const Ipv4> senders);

    void save(const std::filesystem::path& path) const;
    static EmbeddingModel load(const std::filesystem::path& path);

    /// Bitwise equality of every field.
    friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b);

private:
    friend struct TrainerAccess;

    std::size_t dim_;
    std::uint64_t seed_;
    std::uint64_t rounds_ = 0;
    std::vector<Ipv4> words_;
    std::unordered_map<Ipv4, std::size_t> index_;
    std::vector<double> input_;
    std::vector<double> output_;
    std::vector<double> unigram_;  // cumulative, normalized to 1, over the last training corpus
};

EmbeddingModel init_model(std::size_t dimension, std::uint64_t seed);

struct TrainStats {
    std::size_t new_words = 0;
    std::size_t pairs = 0;
    bool empty_corpus = false;  // model returned unchanged
};

/// Warm-started skip-gram with negative sampling over one day's corpus.
TrainStats train_incremental(EmbeddingModel& model, const Corpus& corpus, const TrainParams& params = {});

/// 1 - u.v / (|u||v|). Throws InputError when either vector is all zeros or lengths differ.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Skip-gram negative-sampling objective for one (center, context, negatives) triple:
//   loss = -log s(u.w_ctx) - sum_k log s(-u.w_k)
double sgns_loss(std::span<const double> center, std::span<const double> context,
                 std::span<const std::vector<double>> negatives);

struct SgnsGradient {
    std::vector<double> center;
    std::vector<double> context;
    std::vector<std::vector<double>> negatives;
};

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           std::span<const std::vector<double>> negatives);

/// One SGD step on the triple, in place: every parameter moves by -lr * gradient.
void sgns_step(std::span<double> center, std::span<double> context,
               std::span<const std::span<double>> negatives, double lr);

}  // namespace darktrack
