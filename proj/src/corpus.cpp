#include "flamewatch/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"
#include "flamewatch/json_io.hpp"
#include "flamewatch/porter.hpp"
#include "flamewatch/utf8.hpp"

namespace flamewatch {

namespace {

using utf8::is_digit;
using utf8::is_emoji;
using utf8::is_letter;
using utf8::is_space;

bool is_word_char(char32_t cp) { return is_letter(cp) || is_digit(cp); }

bool starts_with_ci(const std::u32string& s, std::size_t pos, std::string_view prefix) {
    if (pos + prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (utf8::to_lower(s[pos + i]) != static_cast<char32_t>(prefix[i])) return false;
    }
    return true;
}

bool at_boundary(const std::u32string& s, std::size_t pos) { return pos == 0 || !is_word_char(s[pos - 1]); }

// URLs, mentions, hashtags and special characters -> spaces.
std::u32string strip_markup(const std::u32string& in) {
    std::u32string out;
    out.reserve(in.size());
    std::size_t i = 0;
    while (i < in.size()) {
        const char32_t cp = in[i];
        if (at_boundary(in, i) && (starts_with_ci(in, i, "http://") || starts_with_ci(in, i, "https://") ||
                                   starts_with_ci(in, i, "ftp://") || starts_with_ci(in, i, "www."))) {
            while (i < in.size() && !is_space(in[i]) && !is_emoji(in[i])) ++i;
            out.push_back(U' ');
            continue;
        }
        if ((cp == U'@' || cp == U'#') && at_boundary(in, i) && i + 1 < in.size() &&
            (is_word_char(in[i + 1]) || in[i + 1] == U'_')) {
            ++i;
            while (i < in.size() && (is_word_char(in[i]) || in[i] == U'_' || in[i] == U'.')) ++i;
            out.push_back(U' ');
            continue;
        }
        if (is_word_char(cp) || is_emoji(cp) || cp == U'!')
            out.push_back(cp);
        else
            out.push_back(U' ');
        ++i;
    }
    return out;
}

std::vector<std::u32string> split_spaces(const std::u32string& s) {
    std::vector<std::u32string> parts;
    std::u32string cur;
    for (char32_t cp : s) {
        if (cp == U' ') {
            if (!cur.empty()) parts.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(cp);
        }
    }
    if (!cur.empty()) parts.push_back(std::move(cur));
    return parts;
}

std::u32string collapse_letter_runs(const std::u32string& w) {
    std::u32string out;
    out.reserve(w.size());
    std::size_t i = 0;
    while (i < w.size()) {
        std::size_t j = i;
        while (j < w.size() && w[j] == w[i]) ++j;
        const std::size_t run = j - i;
        if (is_letter(w[i]) && run >= 3)
            out.push_back(w[i]);
        else
            out.append(w, i, run);
        i = j;
    }
    return out;
}

bool is_single_letter(const std::u32string& w) { return w.size() == 1 && is_letter(w[0]); }

std::u32string normalize_once(const std::u32string& in) {
    std::vector<std::u32string> words = split_spaces(strip_markup(in));

    std::vector<std::u32string> kept;
    kept.reserve(words.size());
    for (auto& w : words) {
        if (w == U"RT") continue;
        kept.push_back(collapse_letter_runs(w));
    }

    std::vector<std::u32string> merged;
    std::size_t i = 0;
    while (i < kept.size()) {
        std::size_t j = i;
        while (j < kept.size() && is_single_letter(kept[j])) ++j;
        if (j - i >= 3) {
            std::u32string word;
            for (std::size_t k = i; k < j; ++k) word += kept[k];
            merged.push_back(collapse_letter_runs(word));
            i = j;
        } else if (j > i) {
            for (std::size_t k = i; k < j; ++k) merged.push_back(kept[k]);
            i = j;
        } else {
            merged.push_back(kept[i]);
            ++i;
        }
    }

    std::u32string out;
    for (const auto& w : merged) {
        if (!out.empty()) out.push_back(U' ');
        out += w;
    }
    return out;
}

}  // namespace

std::string normalize_text(std::string_view text) {
    std::u32string cur = utf8::decode(text);
    // Each rewrite only shortens the text, so this terminates.
    while (true) {
        std::u32string next = normalize_once(cur);
        if (next == cur) break;
        cur = std::move(next);
    }
    return utf8::encode(cur);
}

std::vector<Token> tokenize(std::string_view normalized) {
    const std::u32string cps = utf8::decode(normalized);
    std::vector<Token> tokens;
    std::u32string word;
    // true while the previous codepoint ended a token or was a '!' directly after one
    bool adjacent_to_token = false;

    auto flush = [&] {
        if (word.empty()) return;
        Token t;
        bool all_upper = word.size() >= 2;
        std::u32string lower;
        lower.reserve(word.size());
        for (char32_t cp : word) {
            if (!(is_letter(cp) && utf8::is_upper(cp))) all_upper = false;
            lower.push_back(utf8::to_lower(cp));
        }
        t.text = utf8::encode(lower);
        t.caps = all_upper;
        tokens.push_back(std::move(t));
        word.clear();
        adjacent_to_token = true;
    };

    for (char32_t cp : cps) {
        if (is_emoji(cp)) {
            flush();
            tokens.push_back(Token{utf8::encode(cp), false, false});
            adjacent_to_token = true;
        } else if (cp == U'!') {
            flush();
            if (adjacent_to_token && !tokens.empty()) tokens.back().exclaim = true;
        } else if (is_word_char(cp)) {
            word.push_back(cp);
        } else {
            flush();
            adjacent_to_token = false;
        }
    }
    flush();
    return tokens;
}

std::string stem(std::string_view token) { return porter_stem(token); }

std::vector<Token> analyze_phrase(std::string_view text) {
    std::vector<Token> tokens = tokenize(normalize_text(text));
    for (auto& t : tokens) t.text = stem(t.text);
    return tokens;
}

std::optional<CleanComment> preprocess(const RawComment& raw) {
    std::vector<Token> tokens = analyze_phrase(raw.text);
    if (tokens.empty()) return std::nullopt;
    CleanComment c;
    c.post_id = raw.post_id;
    c.comment_id = raw.comment_id;
    c.created_time = raw.created_time;
    c.original_text = raw.text;
    c.page = raw.page;
    c.tokens.reserve(tokens.size());
    for (auto& t : tokens) {
        const std::u32string cps = utf8::decode(t.text);
        if (cps.size() == 1 && is_emoji(cps[0])) c.emojis.push_back(t.text);
        c.caps_flags.push_back(t.caps);
        c.exclaim_flags.push_back(t.exclaim);
        c.tokens.push_back(std::move(t.text));
    }
    return c;
}

namespace {

std::string id_field(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw InputError(std::string("missing key '") + key + "'");
    std::string v;
    if (it->is_string())
        v = it->get<std::string>();
    else if (it->is_number_integer())
        v = std::to_string(it->get<long long>());
    else
        throw InputError(std::string("key '") + key + "' must be a string");
    if (v.empty()) throw InputError(std::string("key '") + key + "' is empty");
    return v;
}

RawComment raw_from_json(const json& obj) {
    if (!obj.is_object()) throw InputError("line is not a JSON object");
    RawComment r;
    r.post_id = id_field(obj, "post_id");
    r.comment_id = id_field(obj, "comment_id");
    const auto ts = obj.find("created_time");
    if (ts == obj.end() || !ts->is_string()) throw InputError("missing or non-string 'created_time'");
    r.created_time = parse_iso8601(ts->get<std::string>());
    const auto msg = obj.find("message");
    if (msg == obj.end()) throw InputError("missing key 'message'");
    if (msg->is_string())
        r.text = msg->get<std::string>();
    else if (!msg->is_null())
        throw InputError("'message' must be a string");
    if (const auto page = obj.find("page"); page != obj.end() && page->is_string()) r.page = page->get<std::string>();
    return r;
}

template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        fn(line_no, line);
        pos = end + 1;
    }
}

bool blank(std::string_view line) {
    return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

JsonlLoad parse_jsonl(std::string_view content) {
    JsonlLoad result;
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (blank(line)) return;
        try {
            result.comments.push_back(raw_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            result.errors.push_back({line_no, e.what()});
        } catch (const InputError& e) {
            result.errors.push_back({line_no, e.what()});
        }
    });
    return result;
}

JsonlLoad load_jsonl(const std::filesystem::path& path) { return parse_jsonl(read_file(path)); }

Corpus build_corpus(const std::vector<RawComment>& raw, unsigned threads) {
    std::vector<std::optional<CleanComment>> slots(raw.size());
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(raw.size())));
    if (workers <= 1) {
        for (std::size_t i = 0; i < raw.size(); ++i) slots[i] = preprocess(raw[i]);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < raw.size(); i += workers) slots[i] = preprocess(raw[i]);
            });
        }
    }
    Corpus corpus;
    corpus.counts.loaded = raw.size();
    for (auto& s : slots) {
        if (s) {
            corpus.comments.push_back(std::move(*s));
            ++corpus.counts.kept;
        } else {
            ++corpus.counts.dropped;
        }
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& raw_jsonl, unsigned threads) {
    JsonlLoad load = load_jsonl(raw_jsonl);
    Corpus corpus = build_corpus(load.comments, threads);
    corpus.source_path = raw_jsonl;
    corpus.counts.malformed_lines = load.errors.size();
    corpus.load_errors = std::move(load.errors);
    return corpus;
}

json clean_to_json(const CleanComment& c) {
    json j;
    j["post_id"] = c.post_id;
    j["comment_id"] = c.comment_id;
    j["created_time"] = format_iso8601(c.created_time);
    j["tokens"] = c.tokens;
    j["emojis"] = c.emojis;
    j["caps_flags"] = c.caps_flags;
    j["exclaim_flags"] = c.exclaim_flags;
    j["original_text"] = c.original_text;
    if (!c.page.empty()) j["page"] = c.page;
    return j;
}

CleanComment clean_from_json(const json& j) {
    if (!j.is_object()) throw InputError("record is not a JSON object");
    try {
        CleanComment c;
        c.post_id = j.at("post_id").get<std::string>();
        c.comment_id = j.at("comment_id").get<std::string>();
        c.created_time = parse_iso8601(j.at("created_time").get<std::string>());
        c.tokens = j.at("tokens").get<std::vector<std::string>>();
        c.emojis = j.at("emojis").get<std::vector<std::string>>();
        c.caps_flags = j.at("caps_flags").get<std::vector<bool>>();
        c.exclaim_flags = j.at("exclaim_flags").get<std::vector<bool>>();
        c.original_text = j.at("original_text").get<std::string>();
        if (const auto p = j.find("page"); p != j.end() && p->is_string()) c.page = p->get<std::string>();
        if (c.tokens.empty()) throw InputError("empty token list");
        if (c.caps_flags.size() != c.tokens.size() || c.exclaim_flags.size() != c.tokens.size())
            throw InputError("flag lists differ in length from tokens");
        return c;
    } catch (const json::exception& e) {
        throw InputError(e.what());
    }
}

std::string to_jsonl(const std::vector<CleanComment>& comments) {
    std::string out;
    for (const auto& c : comments) {
        out += clean_to_json(c).dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<CleanComment> load_clean_jsonl(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::vector<CleanComment> out;
    for_each_line(content, [&](std::size_t line_no, std::string_view line) {
        if (blank(line)) return;
        try {
            out.push_back(clean_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const InputError& e) {
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    });
    return out;
}

}  // namespace flamewatch
