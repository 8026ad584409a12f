#include "flamewatch/lexicon.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <thread>

#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"
#include "flamewatch/json_io.hpp"

namespace flamewatch {

std::string_view label_name(SentimentLabel label) {
    switch (label) {
        case SentimentLabel::VeryNegative: return "VeryNegative";
        case SentimentLabel::Negative: return "Negative";
        case SentimentLabel::Neutral: return "Neutral";
        case SentimentLabel::Positive: return "Positive";
        case SentimentLabel::VeryPositive: return "VeryPositive";
    }
    return "?";
}

SentimentLabel label_from_code(int code) {
    if (code < 0 || code >= static_cast<int>(kNumClasses))
        throw InputError("sentiment label out of range: " + std::to_string(code));
    return static_cast<SentimentLabel>(code);
}

namespace {

std::string phrase_key(std::span<const std::string> phrase) {
    std::string key;
    for (const auto& t : phrase) {
        key += t;
        key.push_back('\x1f');
    }
    return key;
}

std::vector<std::string_view> split_lines(std::string_view content) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    return lines;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::size_t raw_word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = c == ' ' || c == '\t';
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

}  // namespace

bool Lexicon::add(LexiconEntry entry) {
    if (entry.phrase.empty() || entry.phrase.size() > kMaxPhraseTokens)
        throw InputError("lexicon phrase must have 1.." + std::to_string(kMaxPhraseTokens) + " tokens");
    if (!(entry.score >= -1.0 && entry.score <= 1.0)) throw InputError("lexicon score outside [-1, 1]");
    std::string key = phrase_key(entry.phrase);
    if (by_phrase_.contains(key)) return false;
    const std::size_t idx = entries_.size();
    by_phrase_.emplace(std::move(key), idx);
    auto& bucket = by_first_token_[entry.phrase.front()];
    entries_.push_back(std::move(entry));
    bucket.push_back(idx);
    std::stable_sort(bucket.begin(), bucket.end(), [this](std::size_t a, std::size_t b) {
        return entries_[a].phrase.size() > entries_[b].phrase.size();
    });
    return true;
}

std::span<const std::size_t> Lexicon::starting_with(const std::string& token) const {
    const auto it = by_first_token_.find(token);
    if (it == by_first_token_.end()) return {};
    return it->second;
}

std::size_t Lexicon::find(std::span<const std::string> phrase) const {
    const auto it = by_phrase_.find(phrase_key(phrase));
    return it == by_phrase_.end() ? npos : it->second;
}

LexiconLoad parse_lexicon(std::string_view content) {
    LexiconLoad result;
    std::vector<std::string> problems;
    const auto lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        const std::string_view line = lines[i];
        if (trim(line).empty() || trim(line).front() == '#') continue;
        const std::size_t tab = line.rfind('\t');
        if (tab == std::string_view::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected 'phrase<TAB>score'");
            continue;
        }
        const std::string_view raw_phrase = trim(line.substr(0, tab));
        double score = 0.0;
        if (!parse_double(line.substr(tab + 1), score)) {
            problems.push_back("line " + std::to_string(line_no) + ": score is not a number");
            continue;
        }
        if (score < -1.0 || score > 1.0) {
            problems.push_back("line " + std::to_string(line_no) + ": score outside [-1, 1]");
            continue;
        }
        if (raw_word_count(raw_phrase) > kMaxPhraseTokens) {
            problems.push_back("line " + std::to_string(line_no) + ": phrase has more than 4 words");
            continue;
        }
        LexiconEntry entry;
        for (auto& t : analyze_phrase(raw_phrase)) entry.phrase.push_back(std::move(t.text));
        entry.score = score;
        if (entry.phrase.empty()) {
            problems.push_back("line " + std::to_string(line_no) + ": phrase is empty after preprocessing");
            continue;
        }
        if (entry.phrase.size() > kMaxPhraseTokens) {
            problems.push_back("line " + std::to_string(line_no) + ": phrase has more than 4 tokens after stemming");
            continue;
        }
        if (!result.lexicon.add(std::move(entry))) result.duplicate_lines.push_back(line_no);
    }
    if (!problems.empty()) {
        std::string msg = "invalid lexicon:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw InputError(msg);
    }
    return result;
}

LexiconLoad load_lexicon(const std::filesystem::path& path) {
    try {
        return parse_lexicon(read_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void EmojiTable::set(std::string emoji, int polarity) {
    if (polarity != 1 && polarity != -1) throw InputError("emoji polarity must be +1 or -1");
    polarity_[std::move(emoji)] = polarity;
}

int EmojiTable::polarity(const std::string& emoji) const {
    const auto it = polarity_.find(emoji);
    return it == polarity_.end() ? 0 : it->second;
}

EmojiTable parse_emoji_table(std::string_view content) {
    EmojiTable table;
    const auto lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string_view line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const std::size_t tab = line.find('\t');
        const std::string where = "emoji table line " + std::to_string(i + 1);
        if (tab == std::string_view::npos) throw InputError(where + ": expected 'emoji<TAB>+1|-1'");
        const std::string_view value = trim(line.substr(tab + 1));
        int polarity = 0;
        if (value == "+1" || value == "1")
            polarity = 1;
        else if (value == "-1")
            polarity = -1;
        else
            throw InputError(where + ": polarity must be +1 or -1");
        table.set(std::string(trim(line.substr(0, tab))), polarity);
    }
    return table;
}

EmojiTable load_emoji_table(const std::filesystem::path& path) { return parse_emoji_table(read_file(path)); }

std::vector<LexiconMatch> match_lexicons(std::span<const std::string> tokens, const Lexicon& lexicon,
                                         std::size_t max_n) {
    std::vector<LexiconMatch> matches;
    std::size_t i = 0;
    while (i < tokens.size()) {
        bool matched = false;
        for (std::size_t idx : lexicon.starting_with(tokens[i])) {
            const LexiconEntry& e = lexicon.entries()[idx];
            const std::size_t len = e.phrase.size();
            if (len > max_n || i + len > tokens.size()) continue;
            if (std::equal(e.phrase.begin(), e.phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
                matches.push_back({idx, i, i + len, e.score});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return matches;
}

namespace {
int sign(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }
}  // namespace

int compute_caps_term(std::span<const LexiconMatch> matches, const std::vector<bool>& caps_flags) {
    int c = 0;
    for (const auto& m : matches) {
        bool all_caps = m.end > m.begin && m.end <= caps_flags.size();
        for (std::size_t t = m.begin; all_caps && t < m.end; ++t) all_caps = caps_flags[t];
        if (all_caps) c += sign(m.score);
    }
    return c;
}

int compute_exclaim_term(std::span<const LexiconMatch> matches, const std::vector<bool>& exclaim_flags) {
    int s = 0;
    for (const auto& m : matches) {
        if (m.end >= 1 && m.end <= exclaim_flags.size() && exclaim_flags[m.end - 1]) s += sign(m.score);
    }
    return s;
}

int compute_emoji_term(std::span<const std::string> emojis, const EmojiTable& table) {
    int e = 0;
    for (const auto& em : emojis) e += table.polarity(em);
    return e;
}

ScoreBreakdown score_breakdown(const CleanComment& comment, const Lexicon& lexicon, const EmojiTable& emoji,
                               std::size_t max_n) {
    ScoreBreakdown b;
    b.matches = match_lexicons(comment.tokens, lexicon, max_n);
    b.n = b.matches.size();
    for (const auto& m : b.matches) b.sum_l += m.score;
    b.caps = compute_caps_term(b.matches, comment.caps_flags);
    b.exclaim = compute_exclaim_term(b.matches, comment.exclaim_flags);
    b.emoji = compute_emoji_term(comment.emojis, emoji);
    return b;
}

double senti_score(const ScoreBreakdown& b, Denominator denominator) {
    const double numerator = b.sum_l + b.caps + b.exclaim + b.emoji;
    if (denominator == Denominator::Absolute) {
        const double denom =
            static_cast<double>(b.n) + std::abs(b.caps) + std::abs(b.exclaim) + std::abs(b.emoji);
        return denom == 0.0 ? 0.0 : numerator / denom;
    }
    const double denom = static_cast<double>(b.n) + b.caps + b.exclaim + b.emoji;
    if (denom == 0.0) {
        if (b.n == 0 && b.caps == 0 && b.exclaim == 0 && b.emoji == 0) return 0.0;
        throw NumericError("literal SentiScore denominator N + C + S + E is zero");
    }
    return numerator / denom;
}

SentimentLabel classify(double score) {
    if (score >= 0.5) return SentimentLabel::VeryPositive;
    if (score > 0.0) return SentimentLabel::Positive;
    if (score == 0.0) return SentimentLabel::Neutral;
    if (score > -0.5) return SentimentLabel::Negative;
    return SentimentLabel::VeryNegative;
}

std::array<std::size_t, kNumClasses> label_distribution(std::span<const LabeledComment> items) {
    std::array<std::size_t, kNumClasses> d{};
    for (const auto& it : items) ++d[static_cast<std::size_t>(label_code(it.label))];
    return d;
}

LabeledDataset label_corpus(std::span<const CleanComment> comments, const Lexicon& lexicon, const EmojiTable& emoji,
                            const ScoringOptions& options, unsigned threads) {
    LabeledDataset out;
    out.items.resize(comments.size());
    auto work = [&](std::size_t i) {
        const ScoreBreakdown b = score_breakdown(comments[i], lexicon, emoji, options.max_n);
        const double s = senti_score(b, options.denominator);
        out.items[i] = LabeledComment{comments[i], s, classify(s)};
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(comments.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < comments.size(); ++i) work(i);
    } else {
        std::vector<std::exception_ptr> failures(workers);
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t i = w; i < comments.size(); i += workers) work(i);
                    } catch (...) {
                        failures[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto& f : failures)
            if (f) std::rethrow_exception(f);
    }
    out.distribution = label_distribution(out.items);
    return out;
}

std::string labeled_to_jsonl(std::span<const LabeledComment> items) {
    std::string out;
    for (const auto& it : items) {
        json j = clean_to_json(it.comment);
        j["score"] = it.score;
        j["label"] = label_code(it.label);
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<LabeledComment> load_labeled_jsonl(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::vector<LabeledComment> out;
    std::size_t line_no = 0;
    std::istringstream in(content);
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            LabeledComment lc;
            lc.comment = clean_from_json(j);
            lc.score = j.at("score").get<double>();
            lc.label = label_from_code(j.at("label").get<int>());
            out.push_back(std::move(lc));
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace flamewatch
