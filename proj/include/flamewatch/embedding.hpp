#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flamewatch/corpus.hpp"

namespace flamewatch {

struct SubwordConfig {
    int min_n = 3;
    int max_n = 6;
    std::uint32_t buckets = 1u << 21;
};

/// Defaults follow the published word2vec / fastText defaults.
struct EmbedConfig {
    int dim = 100;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double initial_lr = 0.025;
    std::size_t min_count = 2;
    std::uint64_t seed = 1;
    /// > 1 enables lock-free parallel SGD. Results then depend on thread
    /// scheduling and are not reproducible.
    unsigned threads = 1;
    std::optional<SubwordConfig> subword;

    /// Throws InputError on a non-positive field or min_n > max_n.
    void validate() const;
};

class Vocabulary {
public:
    /// Ids are assigned by (count desc, token asc). Throws InputError when
    /// the corpus has no tokens at all.
    static Vocabulary build(std::span<const std::vector<std::string>> sentences, std::size_t min_count);

    std::size_t size() const { return words_.size(); }
    /// -1 when absent.
    long id(std::string_view word) const;
    const std::string& word(std::size_t id) const { return words_[id]; }
    std::uint64_t count(std::size_t id) const { return counts_[id]; }
    std::size_t min_count() const { return min_count_; }
    const std::vector<std::string>& words() const { return words_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.words_ == b.words_ && a.counts_ == b.counts_ && a.min_count_ == b.min_count_;
    }

private:
    std::vector<std::string> words_;
    std::vector<std::uint64_t> counts_;
    std::unordered_map<std::string, std::size_t> ids_;
    std::size_t min_count_ = 1;
};

/// P(w) proportional to count(w)^0.75.
std::vector<double> negative_sampling_distribution(const Vocabulary& vocab);

std::uint32_t fnv1a_32(std::string_view bytes);

/// Character n-grams (by codepoint) of "<word>", lengths min_n..max_n,
/// hashed into [0, buckets). Lone boundary markers are skipped.
std::vector<std::string> char_ngrams(std::string_view word, int min_n, int max_n);
std::vector<std::uint32_t> subword_buckets(std::string_view word, const SubwordConfig& config);

struct SubwordTable {
    SubwordConfig config;
    /// Only buckets reached by some training-vocabulary n-gram are stored;
    /// every other bucket reads as a zero vector.
    std::unordered_map<std::uint32_t, std::size_t> slot_of;
    std::vector<double> rows;  // slots x dim
};

struct EmbeddingMatrix {
    std::size_t dim = 0;
    std::vector<std::string> words;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<double> rows;  // words x dim
    std::optional<SubwordTable> subwords;

    std::size_t size() const { return words.size(); }
    std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {rows.data() + i * dim, dim}; }
    /// -1 when absent.
    long find(std::string_view word) const;
    /// nullptr for buckets that were never materialized.
    const double* bucket_row(std::uint32_t bucket) const;
    void add_word(std::string word, std::span<const double> vector);
};

enum class LookupMode {
    Word,     // stored row, zero vector when out of vocabulary
    Subword,  // mean of the word row (if any) and its n-gram bucket rows
};

/// Falls back to Word mode when the matrix has no subword table.
std::vector<double> lookup(const EmbeddingMatrix& matrix, std::string_view word, LookupMode mode);

struct TrainedEmbedding {
    Vocabulary vocab;
    EmbeddingMatrix matrix;
    /// Mean skip-gram negative-sampling loss per (center, context) pair, per epoch.
    std::vector<double> epoch_loss;
};

/// Skip-gram with negative sampling, linear learning-rate decay.
/// Throws InputError when no (center, context) pair can be formed.
TrainedEmbedding train_word2vec(std::span<const std::vector<std::string>> sentences, const EmbedConfig& config);
/// Same objective, with the center word represented by the mean of its word
/// vector and its character n-gram vectors. Requires config.subword.
TrainedEmbedding train_fasttext(std::span<const std::vector<std::string>> sentences, const EmbedConfig& config);

std::vector<std::vector<std::string>> token_sequences(std::span<const CleanComment> comments);

/// word2vec text format ("|V| dim" header, then "word v1 .. vdim"). The
/// subword table, when present, goes to `path` + ".subword" (binary).
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
/// Throws InputError with the offending line number on format violations.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

std::filesystem::path subword_sidecar_path(const std::filesystem::path& path);

}  // namespace flamewatch
