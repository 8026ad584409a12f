#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flamewatch/corpus.hpp"

namespace flamewatch {

enum class SentimentLabel : int {
    VeryNegative = 0,
    Negative = 1,
    Neutral = 2,
    Positive = 3,
    VeryPositive = 4,
};

inline constexpr std::size_t kNumClasses = 5;

std::string_view label_name(SentimentLabel label);
/// Throws InputError for codes outside 0..4.
SentimentLabel label_from_code(int code);
inline int label_code(SentimentLabel label) { return static_cast<int>(label); }

struct LexiconEntry {
    std::vector<std::string> phrase;  // stemmed tokens, 1..4
    double score = 0.0;               // in [-1, 1]
};

inline constexpr std::size_t kMaxPhraseTokens = 4;

class Lexicon {
public:
    Lexicon() = default;

    /// Adds an entry whose phrase is already analyzed. Returns false (and
    /// leaves the lexicon unchanged) when the phrase is already present.
    /// Throws InputError on invariant violations.
    bool add(LexiconEntry entry);

    const std::vector<LexiconEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    /// Entry indices whose first token is `token`, longest phrase first.
    std::span<const std::size_t> starting_with(const std::string& token) const;
    /// Index of the entry with exactly this phrase, or npos.
    std::size_t find(std::span<const std::string> phrase) const;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    std::vector<LexiconEntry> entries_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_first_token_;
    std::unordered_map<std::string, std::size_t> by_phrase_;
};

struct LexiconLoad {
    Lexicon lexicon;
    /// Lines whose analyzed phrase repeats an earlier one; the first wins.
    std::vector<std::size_t> duplicate_lines;
};

/// Parses "phrase<TAB>score" lines ('#' comments and blank lines allowed).
/// Phrases go through the same normalize/tokenize/stem pipeline as comments.
/// Any invalid line (bad score, score outside [-1,1], empty phrase, more than
/// four words) fails the whole load with an InputError listing every bad line.
LexiconLoad parse_lexicon(std::string_view content);
LexiconLoad load_lexicon(const std::filesystem::path& path);

class EmojiTable {
public:
    /// polarity must be +1 or -1
    void set(std::string emoji, int polarity);
    /// 0 for unlisted emoji
    int polarity(const std::string& emoji) const;
    std::size_t size() const { return polarity_.size(); }

private:
    std::map<std::string, int> polarity_;
};

/// "emoji<TAB>+1|-1" lines, '#' comments allowed.
EmojiTable parse_emoji_table(std::string_view content);
EmojiTable load_emoji_table(const std::filesystem::path& path);

struct LexiconMatch {
    std::size_t entry = 0;
    std::size_t begin = 0;  // token span [begin, end)
    std::size_t end = 0;
    double score = 0.0;

    friend bool operator==(const LexiconMatch&, const LexiconMatch&) = default;
};

/// Greedy left-to-right longest match over token n-grams, n = max_n .. 1.
/// Spans never overlap.
std::vector<LexiconMatch> match_lexicons(std::span<const std::string> tokens, const Lexicon& lexicon,
                                         std::size_t max_n = kMaxPhraseTokens);

/// +1/-1 per match whose whole span is uppercase, by the sign of its score.
int compute_caps_term(std::span<const LexiconMatch> matches, const std::vector<bool>& caps_flags);
/// +1/-1 per match whose last token is directly followed by '!'.
int compute_exclaim_term(std::span<const LexiconMatch> matches, const std::vector<bool>& exclaim_flags);
/// Sum of emoji polarities; unlisted emoji count 0.
int compute_emoji_term(std::span<const std::string> emojis, const EmojiTable& table);

struct ScoreBreakdown {
    std::vector<LexiconMatch> matches;
    std::size_t n = 0;  // number of matched lexicon phrases
    double sum_l = 0.0;
    int caps = 0;
    int exclaim = 0;
    int emoji = 0;
};

enum class Denominator {
    /// N + |C| + |S| + |E|: bounded, never zero unless nothing contributed.
    Absolute,
    /// N + C + S + E taken literally; a zero denominator with a non-zero
    /// numerator is reported as an error instead of guessed around.
    Literal,
};

struct ScoringOptions {
    std::size_t max_n = kMaxPhraseTokens;
    Denominator denominator = Denominator::Absolute;
};

ScoreBreakdown score_breakdown(const CleanComment& comment, const Lexicon& lexicon, const EmojiTable& emoji,
                               std::size_t max_n = kMaxPhraseTokens);

/// (sum_L + C + S + E) / (N + |C| + |S| + |E|), or 0 when nothing contributed.
double senti_score(const ScoreBreakdown& b, Denominator denominator = Denominator::Absolute);

/// >= 0.5 VeryPositive, (0, 0.5) Positive, 0 Neutral, (-0.5, 0) Negative, <= -0.5 VeryNegative.
SentimentLabel classify(double score);

struct LabeledComment {
    CleanComment comment;
    double score = 0.0;
    SentimentLabel label = SentimentLabel::Neutral;
};

struct LabeledDataset {
    std::vector<LabeledComment> items;
    std::array<std::size_t, kNumClasses> distribution{};
};

/// Scores every comment. Parallel over `threads` workers; output is
/// independent of the thread count.
LabeledDataset label_corpus(std::span<const CleanComment> comments, const Lexicon& lexicon, const EmojiTable& emoji,
                            const ScoringOptions& options = {}, unsigned threads = 1);

std::array<std::size_t, kNumClasses> label_distribution(std::span<const LabeledComment> items);

std::string labeled_to_jsonl(std::span<const LabeledComment> items);
std::vector<LabeledComment> load_labeled_jsonl(const std::filesystem::path& path);

}  // namespace flamewatch
