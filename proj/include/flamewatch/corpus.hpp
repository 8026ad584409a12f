#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flamewatch/timestamp.hpp"

namespace flamewatch {

struct RawComment {
    std::string post_id;
    std::string comment_id;
    Timestamp created_time;
    std::string text;
    /// Optional page / account grouping; empty when the input has none.
    std::string page;
};

struct CleanComment {
    std::string post_id;
    std::string comment_id;
    Timestamp created_time;
    std::vector<std::string> tokens;
    std::vector<std::string> emojis;
    std::vector<bool> caps_flags;
    std::vector<bool> exclaim_flags;
    std::string original_text;
    std::string page;

    friend bool operator==(const CleanComment&, const CleanComment&) = default;
};

struct LineError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct JsonlLoad {
    std::vector<RawComment> comments;
    std::vector<LineError> errors;
};

/// Reads comment JSONL (keys post_id, comment_id, created_time, message; an
/// optional "page" key is carried through). Malformed lines are skipped and
/// reported, never fatal. Throws InputError only when the file can't be read.
JsonlLoad load_jsonl(const std::filesystem::path& path);
JsonlLoad parse_jsonl(std::string_view content);

/// Text cleanup applied before tokenization:
///  - URLs (http://, https://, ftp://, www.) become a space
///  - @mentions and #hashtags are removed as whole tokens, as are "RT" markers
///  - every character other than letters, digits, emoji and '!' becomes a space
///  - runs of 3+ identical letters collapse to one letter ("haaappy" -> "happy")
///  - 3+ single letters separated by spaces/dots merge ("h a p p y" -> "happy")
///  - whitespace runs collapse to one space, ends trimmed
/// The rule set is iterated to a fixed point, so the function is idempotent.
std::string normalize_text(std::string_view text);

struct Token {
    std::string text;  // lowercased surface form
    bool caps = false;
    bool exclaim = false;

    friend bool operator==(const Token&, const Token&) = default;
};

/// Whitespace tokenization of normalized text. Emoji are split into their own
/// tokens; '!' is never a token but marks the token right before it.
std::vector<Token> tokenize(std::string_view normalized);

std::string stem(std::string_view token);

/// normalize -> tokenize -> stem. Returns nullopt (dropped) when no token survives.
std::optional<CleanComment> preprocess(const RawComment& raw);

/// The same pipeline applied to a bare phrase, e.g. a lexicon entry.
std::vector<Token> analyze_phrase(std::string_view text);

struct CorpusCounts {
    std::size_t loaded = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t malformed_lines = 0;
};

struct Corpus {
    std::vector<CleanComment> comments;
    std::filesystem::path source_path;
    CorpusCounts counts;
    std::vector<LineError> load_errors;
};

/// Preprocesses raw comments, optionally across `threads` workers; output
/// order always follows input order.
Corpus build_corpus(const std::vector<RawComment>& raw, unsigned threads = 1);
Corpus load_corpus(const std::filesystem::path& raw_jsonl, unsigned threads = 1);

std::string to_jsonl(const std::vector<CleanComment>& comments);
/// Reads the preprocessed JSONL written by to_jsonl. Throws InputError naming
/// the first bad line.
std::vector<CleanComment> load_clean_jsonl(const std::filesystem::path& path);

}  // namespace flamewatch
