#include "flamewatch/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"
#include "flamewatch/random.hpp"
#include "flamewatch/utf8.hpp"

namespace flamewatch {

void EmbedConfig::validate() const {
    if (dim < 1) throw InputError("embedding dim must be >= 1");
    if (window < 1) throw InputError("window must be >= 1");
    if (negatives < 1) throw InputError("negatives must be >= 1");
    if (epochs < 1) throw InputError("epochs must be >= 1");
    if (!(initial_lr > 0.0)) throw InputError("learning rate must be positive");
    if (min_count < 1) throw InputError("min_count must be >= 1");
    if (threads < 1) throw InputError("threads must be >= 1");
    if (subword) {
        if (subword->min_n < 1) throw InputError("subword min_n must be >= 1");
        if (subword->max_n < subword->min_n) throw InputError("subword max_n must be >= min_n");
        if (subword->buckets < 1) throw InputError("subword buckets must be >= 1");
    }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> sentences, std::size_t min_count) {
    std::unordered_map<std::string, std::uint64_t> counts;
    std::size_t total = 0;
    for (const auto& s : sentences) {
        for (const auto& t : s) {
            ++counts[t];
            ++total;
        }
    }
    if (total == 0) throw InputError("cannot build a vocabulary from an empty corpus");
    std::vector<std::pair<std::string, std::uint64_t>> kept;
    for (auto& [w, c] : counts)
        if (c >= min_count) kept.emplace_back(w, c);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary v;
    v.min_count_ = min_count;
    for (auto& [w, c] : kept) {
        v.ids_.emplace(w, v.words_.size());
        v.words_.push_back(w);
        v.counts_.push_back(c);
    }
    return v;
}

long Vocabulary::id(std::string_view word) const {
    const auto it = ids_.find(std::string(word));
    return it == ids_.end() ? -1 : static_cast<long>(it->second);
}

std::vector<double> negative_sampling_distribution(const Vocabulary& vocab) {
    std::vector<double> p(vocab.size());
    double z = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        p[i] = std::pow(static_cast<double>(vocab.count(i)), 0.75);
        z += p[i];
    }
    for (auto& x : p) x /= z;
    return p;
}

std::uint32_t fnv1a_32(std::string_view bytes) {
    std::uint32_t h = 2166136261u;
    for (char c : bytes) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 16777619u;
    }
    return h;
}

std::vector<std::string> char_ngrams(std::string_view word, int min_n, int max_n) {
    std::u32string w = U"<";
    w += utf8::decode(word);
    w += U">";
    std::vector<std::string> out;
    const int len = static_cast<int>(w.size());
    for (int i = 0; i < len; ++i) {
        for (int n = min_n; n <= max_n && i + n <= len; ++n) {
            if (n == 1 && (i == 0 || i == len - 1)) continue;
            out.push_back(utf8::encode(std::u32string_view(w).substr(static_cast<std::size_t>(i),
                                                                     static_cast<std::size_t>(n))));
        }
    }
    return out;
}

std::vector<std::uint32_t> subword_buckets(std::string_view word, const SubwordConfig& config) {
    std::vector<std::uint32_t> out;
    for (const auto& g : char_ngrams(word, config.min_n, config.max_n)) out.push_back(fnv1a_32(g) % config.buckets);
    return out;
}

long EmbeddingMatrix::find(std::string_view word) const {
    const auto it = index.find(std::string(word));
    return it == index.end() ? -1 : static_cast<long>(it->second);
}

const double* EmbeddingMatrix::bucket_row(std::uint32_t bucket) const {
    if (!subwords) return nullptr;
    const auto it = subwords->slot_of.find(bucket);
    return it == subwords->slot_of.end() ? nullptr : subwords->rows.data() + it->second * dim;
}

void EmbeddingMatrix::add_word(std::string word, std::span<const double> vector) {
    if (vector.size() != dim) throw InputError("vector dimension mismatch for '" + word + "'");
    index.emplace(word, words.size());
    words.push_back(std::move(word));
    rows.insert(rows.end(), vector.begin(), vector.end());
}

std::vector<double> lookup(const EmbeddingMatrix& matrix, std::string_view word, LookupMode mode) {
    std::vector<double> out(matrix.dim, 0.0);
    const long id = matrix.find(word);
    if (mode == LookupMode::Word || !matrix.subwords) {
        if (id >= 0) {
            const auto r = matrix.row(static_cast<std::size_t>(id));
            std::copy(r.begin(), r.end(), out.begin());
        }
        return out;
    }
    std::size_t parts = 0;
    if (id >= 0) {
        const auto r = matrix.row(static_cast<std::size_t>(id));
        for (std::size_t d = 0; d < matrix.dim; ++d) out[d] += r[d];
        ++parts;
    }
    for (std::uint32_t b : subword_buckets(word, matrix.subwords->config)) {
        if (const double* r = matrix.bucket_row(b)) {
            for (std::size_t d = 0; d < matrix.dim; ++d) out[d] += r[d];
        }
        ++parts;
    }
    if (parts > 0) {
        for (auto& x : out) x /= static_cast<double>(parts);
    }
    return out;
}

std::vector<std::vector<std::string>> token_sequences(std::span<const CleanComment> comments) {
    std::vector<std::vector<std::string>> out;
    out.reserve(comments.size());
    for (const auto& c : comments) out.push_back(c.tokens);
    return out;
}

namespace {

struct PlainAccess {
    static double load(const double& x) { return x; }
    static void add(double& x, double v) { x += v; }
};

// Hogwild updates: relaxed atomic loads/stores, lost updates are tolerated.
struct RacyAccess {
    static double load(const double& x) {
        return std::atomic_ref<double>(const_cast<double&>(x)).load(std::memory_order_relaxed);
    }
    static void add(double& x, double v) {
        std::atomic_ref<double> ref(x);
        ref.store(ref.load(std::memory_order_relaxed) + v, std::memory_order_relaxed);
    }
};

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }
double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

class SkipGramTrainer {
public:
    SkipGramTrainer(const Vocabulary& vocab, const EmbedConfig& config)
        : vocab_(vocab), config_(config), dim_(static_cast<std::size_t>(config.dim)) {
        const auto p = negative_sampling_distribution(vocab);
        cumulative_.resize(p.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            cumulative_[i] = acc;
        }
        Rng rng(config.seed);
        const double scale = 0.5 / static_cast<double>(dim_);
        input_.resize(vocab.size() * dim_);
        for (auto& x : input_) x = rng.uniform(-scale, scale);
        output_.assign(vocab.size() * dim_, 0.0);

        // one component list per word: the word row, then its bucket slots
        components_.resize(vocab.size());
        if (config.subword) {
            for (std::size_t w = 0; w < vocab.size(); ++w) {
                for (std::uint32_t b : subword_buckets(vocab.word(w), *config.subword)) {
                    auto [it, inserted] = slot_of_.try_emplace(b, slot_of_.size());
                    if (inserted) {
                        for (std::size_t d = 0; d < dim_; ++d) buckets_.push_back(rng.uniform(-scale, scale));
                    }
                    components_[w].push_back(it->second);
                }
            }
        }
    }

    std::vector<double> train(std::span<const std::vector<std::string>> sentences) {
        std::vector<std::vector<std::size_t>> encoded;
        std::size_t total_tokens = 0;
        bool any_pair = false;
        for (const auto& s : sentences) {
            std::vector<std::size_t> ids;
            for (const auto& t : s) {
                const long id = vocab_.id(t);
                if (id >= 0) ids.push_back(static_cast<std::size_t>(id));
            }
            if (ids.size() >= 2) any_pair = true;
            total_tokens += ids.size();
            encoded.push_back(std::move(ids));
        }
        if (!any_pair) throw InputError("corpus too small: no sentence has two in-vocabulary tokens");

        total_work_ = static_cast<double>(total_tokens) * config_.epochs;
        processed_.store(0);
        std::vector<double> losses;
        for (int epoch = 0; epoch < config_.epochs; ++epoch) {
            double loss = 0.0;
            std::uint64_t pairs = 0;
            if (config_.threads <= 1) {
                Rng rng(config_.seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(epoch + 1));
                run_range<PlainAccess>(encoded, 0, encoded.size(), rng, loss, pairs);
            } else {
                const unsigned workers = config_.threads;
                std::vector<double> part_loss(workers, 0.0);
                std::vector<std::uint64_t> part_pairs(workers, 0);
                {
                    std::vector<std::jthread> pool;
                    for (unsigned w = 0; w < workers; ++w) {
                        pool.emplace_back([&, w] {
                            Rng rng(config_.seed + 0x9E3779B97F4A7C15ull * (epoch + 1) + w);
                            const std::size_t lo = encoded.size() * w / workers;
                            const std::size_t hi = encoded.size() * (w + 1) / workers;
                            run_range<RacyAccess>(encoded, lo, hi, rng, part_loss[w], part_pairs[w]);
                        });
                    }
                }
                for (unsigned w = 0; w < workers; ++w) {
                    loss += part_loss[w];
                    pairs += part_pairs[w];
                }
            }
            losses.push_back(pairs ? loss / static_cast<double>(pairs) : 0.0);
            check_finite(epoch);
        }
        return losses;
    }

    EmbeddingMatrix export_matrix() const {
        EmbeddingMatrix m;
        m.dim = dim_;
        for (std::size_t w = 0; w < vocab_.size(); ++w)
            m.add_word(vocab_.word(w), std::span<const double>(input_.data() + w * dim_, dim_));
        if (config_.subword) {
            SubwordTable table;
            table.config = *config_.subword;
            table.slot_of.insert(slot_of_.begin(), slot_of_.end());
            table.rows = buckets_;
            m.subwords = std::move(table);
        }
        return m;
    }

private:
    std::size_t sample_negative(Rng& rng) const {
        const double u = rng.uniform();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return static_cast<std::size_t>(it - cumulative_.begin());
    }

    double learning_rate() const {
        const double progress = static_cast<double>(processed_.load(std::memory_order_relaxed)) / total_work_;
        return std::max(config_.initial_lr * (1.0 - progress), config_.initial_lr * 1e-4);
    }

    template <typename Access>
    void run_range(const std::vector<std::vector<std::size_t>>& encoded, std::size_t lo, std::size_t hi, Rng& rng,
                   double& loss, std::uint64_t& pairs) {
        std::vector<double> hidden(dim_), grad(dim_);
        for (std::size_t s = lo; s < hi; ++s) {
            const auto& ids = encoded[s];
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const double lr = learning_rate();
                processed_.fetch_add(1, std::memory_order_relaxed);
                const auto reduced = static_cast<std::size_t>(config_.window) -
                                     static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(config_.window)));
                const std::size_t begin = i >= reduced ? i - reduced : 0;
                const std::size_t end = std::min(ids.size(), i + reduced + 1);
                for (std::size_t j = begin; j < end; ++j) {
                    if (j == i) continue;
                    loss += update<Access>(ids[i], ids[j], lr, rng, hidden, grad);
                    ++pairs;
                }
            }
        }
    }

    template <typename Access>
    double update(std::size_t center, std::size_t context, double lr, Rng& rng, std::vector<double>& hidden,
                  std::vector<double>& grad) {
        const auto& parts = components_[center];
        const double inv = 1.0 / static_cast<double>(1 + parts.size());
        double* word_row = input_.data() + center * dim_;
        for (std::size_t d = 0; d < dim_; ++d) hidden[d] = Access::load(word_row[d]);
        for (std::size_t slot : parts) {
            const double* r = buckets_.data() + slot * dim_;
            for (std::size_t d = 0; d < dim_; ++d) hidden[d] += Access::load(r[d]);
        }
        if (!parts.empty()) {
            for (auto& x : hidden) x *= inv;
        }
        std::fill(grad.begin(), grad.end(), 0.0);

        double loss = 0.0;
        for (int k = 0; k <= config_.negatives; ++k) {
            std::size_t target = context;
            double label = 1.0;
            if (k > 0) {
                target = sample_negative(rng);
                if (target == context) continue;
                label = 0.0;
            }
            double* out = output_.data() + target * dim_;
            double f = 0.0;
            for (std::size_t d = 0; d < dim_; ++d) f += hidden[d] * Access::load(out[d]);
            loss -= label > 0.0 ? log_sigmoid(f) : log_sigmoid(-f);
            const double g = (label - sigmoid(f)) * lr;
            for (std::size_t d = 0; d < dim_; ++d) {
                grad[d] += g * Access::load(out[d]);
                Access::add(out[d], g * hidden[d]);
            }
        }
        for (std::size_t d = 0; d < dim_; ++d) Access::add(word_row[d], grad[d]);
        for (std::size_t slot : parts) {
            double* r = buckets_.data() + slot * dim_;
            for (std::size_t d = 0; d < dim_; ++d) Access::add(r[d], grad[d]);
        }
        return loss;
    }

    void check_finite(int epoch) const {
        auto finite = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
        };
        if (!finite(input_) || !finite(output_) || !finite(buckets_))
            throw NumericError("embedding training diverged in epoch " + std::to_string(epoch + 1));
    }

    const Vocabulary& vocab_;
    EmbedConfig config_;
    std::size_t dim_;
    std::vector<double> cumulative_;
    std::vector<double> input_;
    std::vector<double> output_;
    std::vector<double> buckets_;
    std::unordered_map<std::uint32_t, std::size_t> slot_of_;
    std::vector<std::vector<std::size_t>> components_;
    std::atomic<std::uint64_t> processed_{0};
    double total_work_ = 1.0;
};

TrainedEmbedding train_impl(std::span<const std::vector<std::string>> sentences, const EmbedConfig& config) {
    config.validate();
    TrainedEmbedding out;
    out.vocab = Vocabulary::build(sentences, config.min_count);
    if (out.vocab.size() == 0) throw InputError("no token reaches min_count; vocabulary is empty");
    SkipGramTrainer trainer(out.vocab, config);
    out.epoch_loss = trainer.train(sentences);
    out.matrix = trainer.export_matrix();
    return out;
}

}  // namespace

TrainedEmbedding train_word2vec(std::span<const std::vector<std::string>> sentences, const EmbedConfig& config) {
    EmbedConfig c = config;
    c.subword.reset();
    return train_impl(sentences, c);
}

TrainedEmbedding train_fasttext(std::span<const std::vector<std::string>> sentences, const EmbedConfig& config) {
    if (!config.subword) throw InputError("fastText training needs a subword configuration");
    return train_impl(sentences, config);
}

std::filesystem::path subword_sidecar_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    p += ".subword";
    return p;
}

namespace {

constexpr char kSubwordMagic[8] = {'F', 'W', 'S', 'U', 'B', 'W', 'D', '\0'};
constexpr std::uint32_t kSubwordVersion = 1;

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::endian::native == std::endian::little);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view& in, const std::string& what) {
    if (in.size() < sizeof(T)) throw InputError(what + ": truncated subword file");
    T v;
    std::memcpy(&v, in.data(), sizeof(T));
    in.remove_prefix(sizeof(T));
    return v;
}

}  // namespace

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
    std::string text = std::to_string(matrix.size()) + " " + std::to_string(matrix.dim) + "\n";
    char buf[40];
    for (std::size_t w = 0; w < matrix.size(); ++w) {
        text += matrix.words[w];
        for (double v : matrix.row(w)) {
            std::snprintf(buf, sizeof buf, " %.9g", v);
            text += buf;
        }
        text += "\n";
    }
    if (matrix.subwords) {
        const auto& sw = *matrix.subwords;
        std::string bin(kSubwordMagic, sizeof kSubwordMagic);
        put<std::uint32_t>(bin, kSubwordVersion);
        put<std::uint32_t>(bin, static_cast<std::uint32_t>(matrix.dim));
        put<std::uint32_t>(bin, static_cast<std::uint32_t>(sw.config.min_n));
        put<std::uint32_t>(bin, static_cast<std::uint32_t>(sw.config.max_n));
        put<std::uint32_t>(bin, sw.config.buckets);
        std::map<std::uint32_t, std::size_t> ordered(sw.slot_of.begin(), sw.slot_of.end());
        put<std::uint64_t>(bin, ordered.size());
        for (const auto& [bucket, slot] : ordered) {
            put<std::uint32_t>(bin, bucket);
            for (std::size_t d = 0; d < matrix.dim; ++d) put<double>(bin, sw.rows[slot * matrix.dim + d]);
        }
        write_file_atomic(subword_sidecar_path(path), bin);
    } else {
        std::error_code ec;
        std::filesystem::remove(subword_sidecar_path(path), ec);
    }
    write_file_atomic(path, text);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::istringstream in(content);
    std::string line;
    const std::string name = path.string();
    auto fail = [&](std::size_t line_no, const std::string& msg) -> InputError {
        return InputError(name + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (!std::getline(in, line)) throw fail(1, "missing header '|V| dim'");
    std::size_t count = 0, dim = 0;
    {
        std::istringstream header(line);
        std::string extra;
        if (!(header >> count >> dim) || (header >> extra)) throw fail(1, "header must be '|V| dim'");
        if (dim == 0) throw fail(1, "dim must be positive");
    }
    EmbeddingMatrix m;
    m.dim = dim;
    std::size_t line_no = 1;
    std::vector<double> values(dim);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (m.size() == count) throw fail(line_no, "header declares " + std::to_string(count) + " vectors but more follow");
        std::istringstream row(line);
        std::string word;
        row >> word;
        for (std::size_t d = 0; d < dim; ++d) {
            if (!(row >> values[d]) || !std::isfinite(values[d]))
                throw fail(line_no, "expected " + std::to_string(dim) + " finite values for '" + word + "'");
        }
        std::string extra;
        if (row >> extra) throw fail(line_no, "more than " + std::to_string(dim) + " values for '" + word + "'");
        if (m.index.contains(word)) throw fail(line_no, "duplicate word '" + word + "'");
        m.add_word(word, values);
    }
    if (m.size() != count)
        throw fail(line_no, "header declares " + std::to_string(count) + " vectors but file has " +
                                std::to_string(m.size()));

    const auto sidecar = subword_sidecar_path(path);
    if (std::filesystem::exists(sidecar)) {
        const std::string bin = read_file(sidecar);
        std::string_view v(bin);
        const std::string what = sidecar.string();
        if (v.size() < sizeof kSubwordMagic || std::memcmp(v.data(), kSubwordMagic, sizeof kSubwordMagic) != 0)
            throw InputError(what + ": bad magic bytes");
        v.remove_prefix(sizeof kSubwordMagic);
        if (get<std::uint32_t>(v, what) != kSubwordVersion) throw InputError(what + ": unsupported version");
        if (get<std::uint32_t>(v, what) != dim) throw InputError(what + ": dim differs from " + name);
        SubwordTable table;
        table.config.min_n = static_cast<int>(get<std::uint32_t>(v, what));
        table.config.max_n = static_cast<int>(get<std::uint32_t>(v, what));
        table.config.buckets = get<std::uint32_t>(v, what);
        const auto n = get<std::uint64_t>(v, what);
        table.rows.reserve(n * dim);
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto bucket = get<std::uint32_t>(v, what);
            table.slot_of.emplace(bucket, static_cast<std::size_t>(i));
            for (std::size_t d = 0; d < dim; ++d) table.rows.push_back(get<double>(v, what));
        }
        if (!v.empty()) throw InputError(what + ": trailing bytes");
        m.subwords = std::move(table);
    }
    return m;
}

}  // namespace flamewatch
