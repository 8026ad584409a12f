#include "flamewatch/flaming.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"

namespace flamewatch {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

bool counts_toward_target(SentimentLabel label, bool include_negative) {
    return label == SentimentLabel::VeryNegative || (include_negative && label == SentimentLabel::Negative);
}

}  // namespace

std::vector<TimeBucket> aggregate(std::span<const LabeledComment> comments, BucketWidth width) {
    if (comments.empty()) return {};
    const std::int64_t w = width == BucketWidth::Day ? 86400 : 3600;
    std::int64_t lo = floor_div(comments.front().comment.created_time.seconds, w);
    std::int64_t hi = lo;
    for (const auto& c : comments) {
        const std::int64_t b = floor_div(c.comment.created_time.seconds, w);
        lo = std::min(lo, b);
        hi = std::max(hi, b);
    }
    std::vector<TimeBucket> buckets(static_cast<std::size_t>(hi - lo + 1));
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        buckets[i].start = Timestamp{(lo + static_cast<std::int64_t>(i)) * w};
        buckets[i].width_seconds = w;
    }
    for (const auto& c : comments) {
        const auto idx = static_cast<std::size_t>(floor_div(c.comment.created_time.seconds, w) - lo);
        ++buckets[idx].counts[static_cast<std::size_t>(label_code(c.label))];
    }
    return buckets;
}

std::vector<PostStats> post_stats(std::span<const LabeledComment> comments) {
    std::map<std::string, PostStats> by_post;
    for (const auto& c : comments) {
        auto [it, inserted] = by_post.try_emplace(c.comment.post_id);
        PostStats& s = it->second;
        if (inserted) {
            s.post_id = c.comment.post_id;
            s.page = c.comment.page;
            s.first_comment = c.comment.created_time;
        }
        s.first_comment = std::min(s.first_comment, c.comment.created_time);
        ++s.total;
        ++s.counts[static_cast<std::size_t>(label_code(c.label))];
    }
    std::vector<PostStats> out;
    out.reserve(by_post.size());
    for (auto& [id, s] : by_post) {
        s.vn_count = s.counts[static_cast<std::size_t>(label_code(SentimentLabel::VeryNegative))];
        s.vn_share = s.total == 0 ? 0.0 : static_cast<double>(s.vn_count) / static_cast<double>(s.total);
        out.push_back(std::move(s));
    }
    return out;
}

ZScoreStats zscores(std::span<const double> values, SigmaKind sigma) {
    if (values.size() < 2) throw InputError("z-scores need at least 2 posts");
    ZScoreStats out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double denom = sigma == SigmaKind::Population ? static_cast<double>(values.size())
                                                        : static_cast<double>(values.size() - 1);
    out.stddev = std::sqrt(ss / denom);
    out.z.resize(values.size(), 0.0);
    if (out.stddev > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) out.z[i] = (values[i] - out.mean) / out.stddev;
    }
    return out;
}

BurstRecord burst_profile(std::span<const Timestamp> times, double window_hours) {
    if (times.empty()) throw InputError("burst profile needs at least one comment");
    if (!(window_hours > 0.0)) throw InputError("burst window must be positive");
    std::vector<Timestamp> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());
    const auto window = static_cast<std::int64_t>(std::llround(window_hours * 3600.0));
    std::size_t best_count = 0;
    std::size_t best_start = 0;
    std::size_t hi = 0;
    for (std::size_t lo = 0; lo < sorted.size(); ++lo) {
        if (lo > 0 && sorted[lo] == sorted[lo - 1]) continue;
        hi = std::max(hi, lo);
        while (hi < sorted.size() && sorted[hi].seconds < sorted[lo].seconds + window) ++hi;
        if (hi - lo > best_count) {
            best_count = hi - lo;
            best_start = lo;
        }
    }
    BurstRecord r;
    r.window_start = sorted[best_start];
    r.window_hours = window_hours;
    r.count = best_count;
    r.fraction = static_cast<double>(best_count) / static_cast<double>(sorted.size());
    return r;
}

namespace {

std::size_t target_count(const PostStats& s, bool include_negative) {
    std::size_t n = s.vn_count;
    if (include_negative) n += s.counts[static_cast<std::size_t>(label_code(SentimentLabel::Negative))];
    return n;
}

void sort_events(std::vector<FlamingEvent>& events) {
    std::sort(events.begin(), events.end(), [](const FlamingEvent& a, const FlamingEvent& b) {
        if (a.z != b.z) return a.z > b.z;
        return a.post_id < b.post_id;
    });
}

std::vector<FlamingEvent> detect_pool(std::span<const PostStats> stats, const DetectOptions& options,
                                      ZScoreStats* z_out) {
    std::vector<double> x;
    x.reserve(stats.size());
    for (const auto& s : stats) x.push_back(static_cast<double>(target_count(s, options.include_negative)));
    ZScoreStats z = zscores(x, options.sigma);
    std::vector<FlamingEvent> events;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (!(z.z[i] > options.z_threshold)) continue;
        FlamingEvent e;
        e.post_id = stats[i].post_id;
        e.page = stats[i].page;
        e.z = z.z[i];
        e.vn_count = target_count(stats[i], options.include_negative);
        e.total = stats[i].total;
        e.vn_share = e.total == 0 ? 0.0 : static_cast<double>(e.vn_count) / static_cast<double>(e.total);
        e.share_exceeded = e.vn_share > options.share_threshold;
        events.push_back(std::move(e));
    }
    if (z_out) *z_out = std::move(z);
    return events;
}

}  // namespace

std::vector<FlamingEvent> detect(std::span<const PostStats> stats, const DetectOptions& options) {
    auto events = detect_pool(stats, options, nullptr);
    sort_events(events);
    return events;
}

DetectionResult detect_events(std::span<const LabeledComment> comments, const DetectOptions& options) {
    DetectionResult result;
    result.stats = post_stats(comments);

    std::map<std::string, std::vector<PostStats>> groups;
    for (const auto& s : result.stats) groups[s.page].push_back(s);

    for (auto& [page, stats] : groups) {
        GroupSummary g;
        g.page = page;
        g.posts = stats.size();
        if (stats.size() < 2) {
            g.skipped = true;
            result.groups.push_back(g);
            continue;
        }
        ZScoreStats z;
        auto events = detect_pool(stats, options, &z);
        g.mean = z.mean;
        g.stddev = z.stddev;
        result.groups.push_back(g);
        for (auto& e : events) result.events.push_back(std::move(e));
    }

    for (auto& e : result.events) {
        std::vector<Timestamp> times;
        for (const auto& c : comments) {
            if (c.comment.post_id == e.post_id && counts_toward_target(c.label, options.include_negative))
                times.push_back(c.comment.created_time);
        }
        if (!times.empty()) e.burst = burst_profile(times, options.window_hours);
    }
    sort_events(result.events);
    return result;
}

namespace {

nlohmann::json event_json(const FlamingEvent& e) {
    nlohmann::json j = {{"post_id", e.post_id},   {"page", e.page},         {"z", e.z},
                        {"vn_count", e.vn_count}, {"total", e.total},       {"vn_share", e.vn_share},
                        {"share_exceeded", e.share_exceeded}};
    if (e.burst) {
        j["burst"] = {{"window_start", format_iso8601(e.burst->window_start)},
                      {"window_hours", e.burst->window_hours},
                      {"count", e.burst->count},
                      {"fraction", e.burst->fraction}};
    } else {
        j["burst"] = nullptr;
    }
    return j;
}

}  // namespace

nlohmann::json report_json(const DetectionResult& result, const DetectOptions& options) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : result.events) events.push_back(event_json(e));
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& g : result.groups) {
        groups.push_back({{"page", g.page},
                          {"posts", g.posts},
                          {"mean", g.mean},
                          {"stddev", g.stddev},
                          {"skipped", g.skipped}});
    }
    return {{"version", 1},
            {"options",
             {{"z_threshold", options.z_threshold},
              {"share_threshold", options.share_threshold},
              {"sigma", options.sigma == SigmaKind::Population ? "population" : "sample"},
              {"include_negative", options.include_negative},
              {"window_hours", options.window_hours}}},
            {"posts", result.stats.size()},
            {"groups", groups},
            {"events", events}};
}

std::vector<FlamingEvent> events_from_json(const nlohmann::json& report) {
    std::vector<FlamingEvent> out;
    try {
        for (const auto& j : report.at("events")) {
            FlamingEvent e;
            e.post_id = j.at("post_id").get<std::string>();
            e.page = j.at("page").get<std::string>();
            e.z = j.at("z").get<double>();
            e.vn_count = j.at("vn_count").get<std::size_t>();
            e.total = j.at("total").get<std::size_t>();
            e.vn_share = j.at("vn_share").get<double>();
            e.share_exceeded = j.at("share_exceeded").get<bool>();
            if (!j.at("burst").is_null()) {
                const auto& b = j.at("burst");
                e.burst = BurstRecord{parse_iso8601(b.at("window_start").get<std::string>()),
                                      b.at("window_hours").get<double>(), b.at("count").get<std::size_t>(),
                                      b.at("fraction").get<double>()};
            }
            out.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad flaming report: ") + e.what());
    }
    return out;
}

std::string timeseries_csv(std::span<const TimeBucket> buckets) {
    std::string out = "bucket_start,label0,label1,label2,label3,label4\n";
    for (const auto& b : buckets) {
        out += format_iso8601(b.start);
        for (std::size_t c : b.counts) out += "," + std::to_string(c);
        out += "\n";
    }
    return out;
}

void write_report(const std::filesystem::path& dir, const DetectionResult& result,
                  std::span<const TimeBucket> buckets, const DetectOptions& options) {
    write_file_atomic(dir / "flaming_report.json", report_json(result, options).dump(2) + "\n");
    write_file_atomic(dir / "timeseries.csv", timeseries_csv(buckets));
}

}  // namespace flamewatch
