#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "flamewatch/embedding.hpp"
#include "flamewatch/error.hpp"
#include "oracles.hpp"

using namespace flamewatch;

namespace {

using Sentences = std::vector<std::vector<std::string>>;

Sentences corpus(std::uint64_t seed, std::size_t tokens = 10000) {
    Rng rng(seed);
    return oracle::template_corpus(rng, tokens);
}

EmbedConfig small_config(std::uint64_t seed = 1) {
    EmbedConfig c;
    c.dim = 16;
    c.window = 3;
    c.epochs = 5;
    c.min_count = 1;
    c.seed = seed;
    return c;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("fw_embed_" + name);
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(q * static_cast<double>(v.size() - 1))];
}

}  // namespace

TEST_CASE("vocabulary: min_count and ordering") {
    const Sentences s{{"a", "a", "b"}};
    const auto v2 = Vocabulary::build(s, 2);
    CHECK(v2.words() == std::vector<std::string>{"a"});
    const auto v1 = Vocabulary::build(s, 1);
    CHECK(v1.words() == std::vector<std::string>{"a", "b"});
    CHECK(v1.id("b") == 1);
    CHECK(v1.id("zzz") == -1);
    CHECK(Vocabulary::build(s, 1) == v1);
    const Sentences ties{{"c", "b", "a", "b", "c"}};
    CHECK(Vocabulary::build(ties, 1).words() == std::vector<std::string>{"b", "c", "a"});
    CHECK_THROWS_AS(Vocabulary::build(Sentences{}, 1), InputError);
    CHECK_THROWS_AS(Vocabulary::build(Sentences{{}}, 1), InputError);
}

TEST_CASE("negative sampling distribution") {
    const Sentences s{{"a", "a", "a", "a", "b", "b", "c"}};
    const auto v = Vocabulary::build(s, 1);
    const auto p = negative_sampling_distribution(v);
    double sum = 0, z = 0;
    for (double x : p) sum += x;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) z += std::pow(static_cast<double>(v.count(i)), 0.75);
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(std::abs(p[i] - std::pow(static_cast<double>(v.count(i)), 0.75) / z) <= 1e-12);
}

TEST_CASE("config validation") {
    EmbedConfig c;
    CHECK_NOTHROW(c.validate());
    c.dim = 0;
    CHECK_THROWS_AS(c.validate(), InputError);
    c = EmbedConfig{};
    c.subword = SubwordConfig{5, 3, 100};
    CHECK_THROWS_AS(c.validate(), InputError);
    CHECK_THROWS_AS(train_fasttext(corpus(1, 200), c), InputError);
}

TEST_CASE("char n-grams and hashing") {
    auto g = char_ngrams("ab", 1, 3);
    std::sort(g.begin(), g.end());
    CHECK(g == std::vector<std::string>{"<a", "<ab", "a", "ab", "ab>", "b", "b>"});
    CHECK(fnv1a_32("") == 2166136261u);
    CHECK(fnv1a_32("a") == 0xe40c292cu);
    for (auto b : subword_buckets("happy", SubwordConfig{3, 6, 1000})) CHECK(b < 1000);
}

TEST_CASE("word2vec: loss decreases and training is reproducible") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto s = corpus(100 + seed);
        const auto a = train_word2vec(s, small_config(seed));
        REQUIRE(a.epoch_loss.size() == 5);
        CHECK(a.epoch_loss.back() < a.epoch_loss.front());
        for (double x : a.matrix.rows) CHECK(std::isfinite(x));
        if (seed == 1) {
            const auto b = train_word2vec(s, small_config(seed));
            CHECK(a.vocab == b.vocab);
            CHECK(a.matrix.rows == b.matrix.rows);
        }
    }
}

TEST_CASE("word2vec: always co-occurring words end up close") {
    const auto s = corpus(7, 20000);
    const auto t = train_word2vec(s, small_config(3));
    const auto ab = oracle::cosine(lookup(t.matrix, "alpha", LookupMode::Word), lookup(t.matrix, "beta", LookupMode::Word));
    Rng rng(1);
    std::vector<double> random_pairs;
    for (int i = 0; i < 500; ++i) {
        const auto x = rng.below(t.matrix.size());
        const auto y = rng.below(t.matrix.size());
        if (x == y) continue;
        random_pairs.push_back(oracle::cosine(lookup(t.matrix, t.matrix.words[x], LookupMode::Word),
                                              lookup(t.matrix, t.matrix.words[y], LookupMode::Word)));
    }
    CHECK(ab > percentile(random_pairs, 0.95));
}

TEST_CASE("word2vec: dim 1 and tiny corpora") {
    auto c = small_config();
    c.dim = 1;
    const auto t = train_word2vec(corpus(2, 500), c);
    for (double x : t.matrix.rows) CHECK(std::isfinite(x));
    CHECK_THROWS_AS(train_word2vec(Sentences{{"a"}, {"b"}}, small_config()), InputError);
}

TEST_CASE("fasttext: OOV variant lands near its base word") {
    auto c = small_config(4);
    c.subword = SubwordConfig{3, 6, 1u << 16};
    const auto t = train_fasttext(corpus(9, 10000), c);
    const auto happyy = lookup(t.matrix, "happyy", LookupMode::Subword);
    CHECK(std::any_of(happyy.begin(), happyy.end(), [](double x) { return x != 0.0; }));
    const double sim = oracle::cosine(happyy, lookup(t.matrix, "happy", LookupMode::Subword));
    Rng rng(2);
    std::vector<double> random_pairs;
    for (int i = 0; i < 400; ++i) {
        const auto x = rng.below(t.matrix.size());
        const auto y = rng.below(t.matrix.size());
        if (x == y) continue;
        random_pairs.push_back(oracle::cosine(lookup(t.matrix, t.matrix.words[x], LookupMode::Subword),
                                              lookup(t.matrix, t.matrix.words[y], LookupMode::Subword)));
    }
    CHECK(sim > percentile(random_pairs, 0.5));
}

TEST_CASE("fasttext: composition is the mean of word and n-gram rows") {
    auto c = small_config(5);
    c.subword = SubwordConfig{3, 5, 5003};
    auto t = train_fasttext(corpus(10, 3000), c);
    const auto& m = t.matrix;
    for (const std::string w : {"happy", "storm", "unseenword"}) {
        std::vector<double> want(m.dim, 0.0);
        std::size_t parts = 0;
        if (const long id = m.find(w); id >= 0) {
            for (std::size_t d = 0; d < m.dim; ++d) want[d] += m.row(static_cast<std::size_t>(id))[d];
            ++parts;
        }
        for (auto b : subword_buckets(w, *c.subword)) {
            if (const double* r = m.bucket_row(b))
                for (std::size_t d = 0; d < m.dim; ++d) want[d] += r[d];
            ++parts;
        }
        for (auto& x : want) x /= static_cast<double>(parts);
        const auto got = lookup(m, w, LookupMode::Subword);
        for (std::size_t d = 0; d < m.dim; ++d) CHECK(std::abs(got[d] - want[d]) <= 1e-12);
    }

    // perturbing one of its buckets moves the composed vector
    const auto before = lookup(t.matrix, "happy", LookupMode::Subword);
    const auto buckets = subword_buckets("happy", *c.subword);
    auto& table = *t.matrix.subwords;
    const auto slot = table.slot_of.at(buckets.front());
    table.rows[slot * m.dim] += 1.0;
    CHECK(lookup(t.matrix, "happy", LookupMode::Subword) != before);
}

TEST_CASE("lookup modes") {
    EmbeddingMatrix m;
    m.dim = 3;
    m.add_word("known", std::vector<double>{1, 2, 3});
    CHECK(lookup(m, "known", LookupMode::Word) == std::vector<double>{1, 2, 3});
    CHECK(lookup(m, "unknown", LookupMode::Word) == std::vector<double>{0, 0, 0});
    CHECK(lookup(m, "unknown", LookupMode::Subword) == std::vector<double>{0, 0, 0});
}

TEST_CASE("save and load round trip") {
    auto c = small_config(6);
    c.subword = SubwordConfig{3, 4, 997};
    const auto t = train_fasttext(corpus(11, 2000), c);
    const auto path = temp_path("rt.txt");
    save_embeddings(t.matrix, path);
    const auto back = load_embeddings(path);
    REQUIRE(back.words == t.matrix.words);
    REQUIRE(back.rows.size() == t.matrix.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) CHECK(std::abs(back.rows[i] - t.matrix.rows[i]) <= 1e-6);
    REQUIRE(back.subwords.has_value());
    CHECK(back.subwords->slot_of.size() == t.matrix.subwords->slot_of.size());
    const auto a = lookup(back, "happyy", LookupMode::Subword);
    const auto b = lookup(t.matrix, "happyy", LookupMode::Subword);
    for (std::size_t d = 0; d < a.size(); ++d) CHECK(std::abs(a[d] - b[d]) <= 1e-6);
}

TEST_CASE("load errors name the line, empty matrix round trips") {
    const auto bad = temp_path("bad.txt");
    std::ofstream(bad) << "2 3\nfoo 1 2 3\nbar 1 2\n";
    try {
        load_embeddings(bad);
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    const auto short_file = temp_path("short.txt");
    std::ofstream(short_file) << "3 2\nfoo 1 2\n";
    CHECK_THROWS_AS(load_embeddings(short_file), InputError);

    EmbeddingMatrix empty;
    empty.dim = 4;
    const auto p = temp_path("empty.txt");
    save_embeddings(empty, p);
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "0 4");
    const auto back = load_embeddings(p);
    CHECK(back.size() == 0);
    CHECK(back.dim == 4);
}
