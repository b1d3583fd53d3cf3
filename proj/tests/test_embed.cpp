#include <doctest.h>

#include <cmath>
#include <random>

#include "darktrack/embed.hpp"
#include "fixtures.hpp"

using namespace darktrack;
using namespace darktrack::testing;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

Corpus corpus_of(std::initializer_list<std::vector<Ipv4>> sentences) {
    Corpus c;
    for (const auto& s : sentences) {
        c.sentences.push_back({{Protocol::TCP, 23}, s});
        c.vocab.insert(c.vocab.end(), s.begin(), s.end());
    }
    normalize(c.vocab);
    return c;
}

/// Two groups that never share a sentence.
Corpus two_groups(std::mt19937_64& rng, int sentences) {
    Corpus c;
    for (int i = 0; i < sentences; ++i) {
        const std::uint32_t base = (i % 2) ? 100 : 0;
        std::vector<Ipv4> words;
        for (int k = 0; k < 30; ++k) words.push_back(ip(base + static_cast<std::uint32_t>(rng() % 10)));
        c.sentences.push_back({{Protocol::TCP, static_cast<std::uint16_t>(i % 2)}, words});
        c.vocab.insert(c.vocab.end(), words.begin(), words.end());
    }
    normalize(c.vocab);
    return c;
}

}  // namespace

TEST_CASE("cosine distance") {
    const std::vector<double> a{1, 0}, b{0, 1}, c{-2, 0}, d{3, 0};
    CHECK(cosine_distance(a, b) == doctest::Approx(1.0));
    CHECK(cosine_distance(a, c) == doctest::Approx(2.0));
    CHECK(cosine_distance(a, d) == doctest::Approx(0.0));
    CHECK_THROWS_AS(cosine_distance(a, std::vector<double>{0, 0}), InputError);
    CHECK_THROWS_AS(cosine_distance(a, std::vector<double>{1, 0, 0}), InputError);
}

TEST_CASE("sgns gradient matches central finite differences") {
    std::mt19937_64 rng(21);
    const std::size_t dim = 6;
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_vec(rng, dim);
        auto w = random_vec(rng, dim);
        std::vector<std::vector<double>> negs{random_vec(rng, dim), random_vec(rng, dim), random_vec(rng, dim)};
        const auto g = sgns_gradient(u, w, negs);
        const double h = 1e-6;
        auto numeric = [&](std::vector<double>& param, std::size_t k) {
            const double keep = param[k];
            param[k] = keep + h;
            const double up = sgns_loss(u, w, negs);
            param[k] = keep - h;
            const double down = sgns_loss(u, w, negs);
            param[k] = keep;
            return (up - down) / (2 * h);
        };
        for (std::size_t k = 0; k < dim; ++k) {
            CHECK(g.center[k] == doctest::Approx(numeric(u, k)).epsilon(1e-6));
            CHECK(g.context[k] == doctest::Approx(numeric(w, k)).epsilon(1e-6));
            for (std::size_t n = 0; n < negs.size(); ++n) {
                CHECK(g.negatives[n][k] == doctest::Approx(numeric(negs[n], k)).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("one sgd step moves every parameter against its gradient") {
    std::mt19937_64 rng(8);
    const std::size_t dim = 5;
    auto u = random_vec(rng, dim), w = random_vec(rng, dim), n1 = random_vec(rng, dim);
    const auto g = sgns_gradient(u, w, std::vector<std::vector<double>>{n1});
    const double lr = 0.05;
    auto u2 = u, w2 = w, n2 = n1;
    std::vector<std::span<double>> negs{n2};
    sgns_step(u2, w2, negs, lr);
    for (std::size_t k = 0; k < dim; ++k) {
        CHECK(u2[k] == doctest::Approx(u[k] - lr * g.center[k]).epsilon(1e-12));
        CHECK(w2[k] == doctest::Approx(w[k] - lr * g.context[k]).epsilon(1e-12));
        CHECK(n2[k] == doctest::Approx(n1[k] - lr * g.negatives[0][k]).epsilon(1e-12));
    }
    CHECK(sgns_loss(u2, w2, std::vector<std::vector<double>>{n2}) <
          sgns_loss(u, w, std::vector<std::vector<double>>{n1}));
}

TEST_CASE("new words get small random inputs and zero outputs") {
    EmbeddingModel m(8, 3);
    const SenderSet words = ips(0, 20);
    CHECK(m.add_words(words) == 20);
    CHECK(m.add_words(words) == 0);
    CHECK(m.size() == 20);
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (double x : m.input_row(i)) CHECK(std::abs(x) <= 0.5 / 8);
        for (double x : m.output_row(i)) CHECK(x == 0.0);
    }
    EmbeddingModel other(8, 3);
    other.add_words(words);
    CHECK(m == other);
    CHECK_THROWS_AS(EmbeddingModel(0, 1), ConfigError);
    CHECK_THROWS_AS(m.embedding(ip(999)), InputError);
}

TEST_CASE("training parameters are validated") {
    CHECK_THROWS_AS(validate(TrainParams{.window = 0}), ConfigError);
    CHECK_THROWS_AS(validate(TrainParams{.epochs = 0}), ConfigError);
    CHECK_THROWS_AS(validate(TrainParams{.lr_start = 0.0}), ConfigError);
    CHECK_NOTHROW(validate(TrainParams{}));
}

TEST_CASE("empty corpus leaves the model untouched") {
    EmbeddingModel m(4, 1);
    m.add_words(ips(0, 3));
    const EmbeddingModel before = m;
    auto stats = train_incremental(m, Corpus{});
    CHECK(stats.empty_corpus);
    CHECK(m == before);
}

TEST_CASE("senders absent from the corpus keep their vectors bit for bit") {
    std::mt19937_64 rng(4);
    EmbeddingModel m(16, 9);
    train_incremental(m, two_groups(rng, 40));
    const std::vector<double> quiet(m.embedding(ip(105)).begin(), m.embedding(ip(105)).end());
    const auto idx = *m.index_of(ip(105));
    const std::vector<double> quiet_out(m.output_row(idx).begin(), m.output_row(idx).end());

    // next day only the first group and some newcomers are active
    Corpus day2 = corpus_of({{ip(0), ip(1), ip(2), ip(500)}, {ip(3), ip(501), ip(4)}});
    auto stats = train_incremental(m, day2);
    CHECK(stats.new_words == 2);
    const auto after = m.embedding(ip(105));
    CHECK(std::equal(after.begin(), after.end(), quiet.begin()));
    const auto after_out = m.output_row(idx);
    CHECK(std::equal(after_out.begin(), after_out.end(), quiet_out.begin()));
}

TEST_CASE("single-threaded training is reproducible") {
    std::mt19937_64 r1(5), r2(5);
    EmbeddingModel a(12, 2), b(12, 2);
    train_incremental(a, two_groups(r1, 30));
    train_incremental(b, two_groups(r2, 30));
    CHECK(a == b);
    EmbeddingModel c(12, 3);
    std::mt19937_64 r3(5);
    train_incremental(c, two_groups(r3, 30));
    CHECK_FALSE(a == c);
}

TEST_CASE("co-occurring senders end up closer than strangers") {
    std::mt19937_64 rng(6);
    EmbeddingModel m(24, 1);
    train_incremental(m, two_groups(rng, 200), {.epochs = 5});
    double within = 0, across = 0;
    int nw = 0, na = 0;
    for (std::uint32_t i = 0; i < 10; ++i) {
        for (std::uint32_t j = 0; j < 10; ++j) {
            if (i != j) {
                within += cosine_distance(m.embedding(ip(i)), m.embedding(ip(j)));
                ++nw;
            }
            across += cosine_distance(m.embedding(ip(i)), m.embedding(ip(100 + j)));
            ++na;
        }
    }
    CHECK(within / nw + 0.3 < across / na);
}

TEST_CASE("pair count equals the skip-gram window arithmetic") {
    EmbeddingModel m(4, 1);
    // length 4, window 2: 2+3+3+2 = 10 pairs per epoch
    auto stats = train_incremental(m, corpus_of({{ip(0), ip(1), ip(2), ip(3)}}), {.window = 2, .epochs = 3});
    CHECK(stats.pairs == 30);
}

TEST_CASE("checkpoint round-trip is bitwise") {
    std::mt19937_64 rng(2);
    EmbeddingModel m(10, 4);
    train_incremental(m, two_groups(rng, 20));
    const auto dir = scratch_dir("embed-ckpt");
    m.save(dir / "model.bin");
    const auto back = EmbeddingModel::load(dir / "model.bin");
    CHECK(back == m);
    CHECK(back.rounds() == m.rounds());

    {
        std::ofstream junk(dir / "junk.bin", std::ios::binary);
        junk << "not a model";
    }
    CHECK_THROWS_AS(EmbeddingModel::load(dir / "junk.bin"), InputError);
    CHECK_THROWS_AS(EmbeddingModel::load(dir / "missing.bin"), InputError);
}

TEST_CASE("multi-threaded training runs and keeps vectors finite") {
    std::mt19937_64 rng(7);
    EmbeddingModel m(16, 1);
    auto stats = train_incremental(m, two_groups(rng, 60), {.threads = 4});
    CHECK(stats.pairs > 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (double x : m.input_row(i)) CHECK(std::isfinite(x));
    }
}
