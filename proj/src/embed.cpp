#include "darktrack/embed.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <thread>

namespace darktrack {

namespace {

constexpr char kMagic[8] = {'D', 'K', 'T', 'R', 'E', 'M', 'B', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

double unit_interval(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct PlainAccess {
    static double load(const double& x) { return x; }
    static void store(double& x, double v) { x = v; }
};

// Lock-free asynchronous mode: racing updates are tolerated, but every access is atomic.
struct RelaxedAccess {
    static double load(const double& x) {
        return std::atomic_ref<double>(const_cast<double&>(x)).load(std::memory_order_relaxed);
    }
    static void store(double& x, double v) {
        std::atomic_ref<double>(x).store(v, std::memory_order_relaxed);
    }
};

// word2vec-style update: each output row moves by g*u with g = lr*(label - s(u.w)),
// the center accumulates g*w and is applied last, which equals a simultaneous SGD step.
template <class Access>
void update_triple(double* u, double* ctx, std::span<double* const> negs, double lr, std::size_t dim,
                   std::vector<double>& accum) {
    std::fill(accum.begin(), accum.end(), 0.0);
    auto apply = [&](double* w, double label) {
        double d = 0;
        for (std::size_t k = 0; k < dim; ++k) d += Access::load(u[k]) * Access::load(w[k]);
        const double g = lr * (label - sigmoid(d));
        for (std::size_t k = 0; k < dim; ++k) {
            const double wk = Access::load(w[k]);
            accum[k] += g * wk;
            Access::store(w[k], wk + g * Access::load(u[k]));
        }
    };
    apply(ctx, 1.0);
    for (double* w : negs) apply(w, 0.0);
    for (std::size_t k = 0; k < dim; ++k) Access::store(u[k], Access::load(u[k]) + accum[k]);
}

std::size_t pairs_in(std::size_t len, std::size_t window) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < len; ++i) {
        const std::size_t lo = i >= window ? i - window : 0;
        const std::size_t hi = std::min(len - 1, i + window);
        n += hi - lo;
    }
    return n;
}

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw InputError("truncated model checkpoint");
}

}  // namespace

void validate(const TrainParams& p) {
    if (p.window == 0) throw ConfigError("window must be >= 1");
    if (p.epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(p.lr_start > 0) || !(p.lr_end >= 0) || p.lr_end > p.lr_start) {
        throw ConfigError("learning rates must satisfy 0 <= lr_end <= lr_start, lr_start > 0");
    }
    if (p.threads == 0) throw ConfigError("threads must be >= 1");
}

struct TrainerAccess {
    static void set_unigram(EmbeddingModel& m, std::vector<double> table) { m.unigram_ = std::move(table); }
    static std::uint64_t next_round(EmbeddingModel& m) { return m.rounds_++; }
    static double* input(EmbeddingModel& m, std::size_t i) { return &m.input_[i * m.dim_]; }
    static double* output(EmbeddingModel& m, std::size_t i) { return &m.output_[i * m.dim_]; }
};

EmbeddingModel::EmbeddingModel(std::size_t dimension, std::uint64_t seed) : dim_(dimension), seed_(seed) {
    if (dimension == 0) throw ConfigError("embedding dimension E must be >= 1");
}

EmbeddingModel init_model(std::size_t dimension, std::uint64_t seed) {
    return EmbeddingModel(dimension, seed);
}

std::optional<std::size_t> EmbeddingModel::index_of(Ipv4 sender) const {
    auto it = index_.find(sender);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::span<const double> EmbeddingModel::embedding(Ipv4 sender) const {
    auto idx = index_of(sender);
    if (!idx) throw InputError("sender " + sender.to_string() + " not in embedding vocabulary");
    return input_row(*idx);
}

std::size_t EmbeddingModel::add_words(std::span<const Ipv4> senders) {
    std::size_t added = 0;
    const double scale = 1.0 / static_cast<double>(dim_);
    for (Ipv4 ip : senders) {
        if (index_.count(ip)) continue;
        const std::size_t idx = words_.size();
        index_.emplace(ip, idx);
        words_.push_back(ip);
        std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(idx)));
        for (std::size_t k = 0; k < dim_; ++k) input_.push_back((unit_interval(rng) - 0.5) * scale);
        output_.resize(output_.size() + dim_, 0.0);
        ++added;
    }
    return added;
}

bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
    auto bits_equal = [](const std::vector<double>& x, const std::vector<double>& y) {
        return x.size() == y.size() &&
               (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    };
    return a.dim_ == b.dim_ && a.seed_ == b.seed_ && a.rounds_ == b.rounds_ && a.words_ == b.words_ &&
           bits_equal(a.input_, b.input_) && bits_equal(a.output_, b.output_) &&
           bits_equal(a.unigram_, b.unigram_);
}

// Checkpoint layout (little-endian):
//   char[8] magic "DKTREMB\0" | u32 version | u32 dimension | u64 seed | u64 rounds
//   u64 vocab size V | u32[V] sender addresses | f64[V*E] input | f64[V*E] output
//   u64 unigram length U | f64[U] cumulative unigram table
void EmbeddingModel::save(const std::filesystem::path& path) const {
    static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_pod(out, kFormatVersion);
    write_pod(out, static_cast<std::uint32_t>(dim_));
    write_pod(out, seed_);
    write_pod(out, rounds_);
    write_pod(out, static_cast<std::uint64_t>(words_.size()));
    for (Ipv4 ip : words_) write_pod(out, ip.value);
    out.write(reinterpret_cast<const char*>(input_.data()), static_cast<std::streamsize>(input_.size() * 8));
    out.write(reinterpret_cast<const char*>(output_.data()), static_cast<std::streamsize>(output_.size() * 8));
    write_pod(out, static_cast<std::uint64_t>(unigram_.size()));
    out.write(reinterpret_cast<const char*>(unigram_.data()), static_cast<std::streamsize>(unigram_.size() * 8));
    if (!out) throw InputError("failed writing " + path.string());
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw InputError("not a model checkpoint: " + path.string());
    std::uint32_t version = 0, dim = 0;
    read_pod(in, version);
    if (version != kFormatVersion) throw InputError("unsupported checkpoint version " + std::to_string(version));
    read_pod(in, dim);
    std::uint64_t seed = 0, rounds = 0, vocab = 0;
    read_pod(in, seed);
    read_pod(in, rounds);
    read_pod(in, vocab);
    EmbeddingModel m(dim, seed);
    m.rounds_ = rounds;
    m.words_.resize(vocab);
    for (auto& ip : m.words_) read_pod(in, ip.value);
    for (std::size_t i = 0; i < vocab; ++i) m.index_.emplace(m.words_[i], i);
    if (m.index_.size() != vocab) throw InputError("duplicate sender in checkpoint vocabulary");
    m.input_.resize(vocab * dim);
    m.output_.resize(vocab * dim);
    in.read(reinterpret_cast<char*>(m.input_.data()), static_cast<std::streamsize>(m.input_.size() * 8));
    in.read(reinterpret_cast<char*>(m.output_.data()), static_cast<std::streamsize>(m.output_.size() * 8));
    std::uint64_t ulen = 0;
    read_pod(in, ulen);
    m.unigram_.resize(ulen);
    in.read(reinterpret_cast<char*>(m.unigram_.data()), static_cast<std::streamsize>(ulen * 8));
    if (!in) throw InputError("truncated model checkpoint");
    return m;
}

TrainStats train_incremental(EmbeddingModel& model, const Corpus& corpus, const TrainParams& params) {
    validate(params);
    TrainStats stats;
    if (corpus.vocab.empty() || corpus.sentences.empty()) {
        stats.empty_corpus = true;
        return stats;
    }
    stats.new_words = model.add_words(corpus.vocab);
    const std::size_t dim = model.dimension();

    // sentences as vocabulary indices, plus today's unigram counts
    std::vector<std::vector<std::size_t>> sentences;
    sentences.reserve(corpus.sentences.size());
    std::vector<double> counts(model.size(), 0.0);
    std::size_t pairs_per_epoch = 0;
    for (const auto& s : corpus.sentences) {
        auto& ids = sentences.emplace_back();
        ids.reserve(s.words.size());
        for (Ipv4 ip : s.words) {
            const std::size_t i = *model.index_of(ip);
            ids.push_back(i);
            counts[i] += 1.0;
        }
        pairs_per_epoch += pairs_in(ids.size(), params.window);
    }
    std::vector<double> cumulative(model.size(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) acc += std::pow(counts[i], params.unigram_power);
        cumulative[i] = acc;
    }
    for (auto& c : cumulative) c /= acc;
    cumulative.back() = 1.0;
    TrainerAccess::set_unigram(model, cumulative);

    const std::uint64_t round = TrainerAccess::next_round(model);
    const double total_pairs = static_cast<double>(pairs_per_epoch * params.epochs);
    std::atomic<std::size_t> processed{0};

    auto worker = [&]<class Access>(Access, unsigned shard, unsigned shards) {
        std::mt19937_64 rng(splitmix64(model.seed() ^ splitmix64(round * 0x100000001B3ull + shard + 1)));
        std::vector<double> accum(dim);
        std::vector<double*> negs;
        negs.reserve(params.negatives);
        for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
            for (std::size_t si = shard; si < sentences.size(); si += shards) {
                const auto& ids = sentences[si];
                const std::size_t len = ids.size();
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t lo = i >= params.window ? i - params.window : 0;
                    const std::size_t hi = std::min(len - 1, i + params.window);
                    for (std::size_t j = lo; j <= hi; ++j) {
                        if (j == i) continue;
                        negs.clear();
                        for (std::size_t k = 0; k < params.negatives; ++k) {
                            const double r = unit_interval(rng);
                            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
                            const std::size_t neg = std::min<std::size_t>(
                                static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
                            if (neg == ids[j]) continue;
                            negs.push_back(TrainerAccess::output(model, neg));
                        }
                        const std::size_t done = processed.fetch_add(1, std::memory_order_relaxed);
                        const double lr = params.lr_start - (params.lr_start - params.lr_end) *
                                                                static_cast<double>(done) / total_pairs;
                        update_triple<Access>(TrainerAccess::input(model, ids[i]),
                                              TrainerAccess::output(model, ids[j]), negs, lr, dim, accum);
                    }
                }
            }
        }
    };

    if (params.threads <= 1) {
        worker(PlainAccess{}, 0u, 1u);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < params.threads; ++t) {
            pool.emplace_back([&, t] { worker(RelaxedAccess{}, t, params.threads); });
        }
    }
    stats.pairs = processed.load();
    return stats;
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw InputError("cosine_distance: dimension mismatch");
    const double nu = std::sqrt(dot(u, u));
    const double nv = std::sqrt(dot(v, v));
    if (nu == 0.0 || nv == 0.0) throw InputError("cosine_distance: zero vector");
    const double c = dot(u, v) / (nu * nv);
    return std::clamp(1.0 - c, 0.0, 2.0);
}

double sgns_loss(std::span<const double> center, std::span<const double> context,
                 std::span<const std::vector<double>> negatives) {
    double loss = -log_sigmoid(dot(center, context));
    for (const auto& w : negatives) loss -= log_sigmoid(-dot(center, w));
    return loss;
}

SgnsGradient sgns_gradient(std::span<const double> center, std::span<const double> context,
                           std::span<const std::vector<double>> negatives) {
    const std::size_t dim = center.size();
    SgnsGradient g;
    g.center.assign(dim, 0.0);
    // d/dx of -log s(x) is s(x) - 1; of -log s(-x) is s(x)
    const double c_pos = sigmoid(dot(center, context)) - 1.0;
    g.context.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        g.context[k] = c_pos * center[k];
        g.center[k] += c_pos * context[k];
    }
    for (const auto& w : negatives) {
        const double c_neg = sigmoid(dot(center, w));
        auto& gw = g.negatives.emplace_back(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            gw[k] = c_neg * center[k];
            g.center[k] += c_neg * w[k];
        }
    }
    return g;
}

void sgns_step(std::span<double> center, std::span<double> context, std::span<const std::span<double>> negatives,
               double lr) {
    std::vector<double*> negs;
    for (auto n : negatives) negs.push_back(n.data());
    std::vector<double> accum(center.size());
    update_triple<PlainAccess>(center.data(), context.data(), negs, lr, center.size(), accum);
}

}  // namespace darktrack
