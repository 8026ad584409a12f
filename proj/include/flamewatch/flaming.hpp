#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flamewatch/lexicon.hpp"
#include "flamewatch/timestamp.hpp"

namespace flamewatch {

enum class BucketWidth { Day, Hour };

struct TimeBucket {
    Timestamp start;
    std::int64_t width_seconds = 86400;
    std::array<std::size_t, kNumClasses> counts{};
};

/// Label counts per UTC day/hour, including empty buckets between the first
/// and last comment. Empty input gives no buckets.
std::vector<TimeBucket> aggregate(std::span<const LabeledComment> comments, BucketWidth width);

struct PostStats {
    std::string post_id;
    std::string page;
    Timestamp first_comment;
    std::size_t total = 0;
    std::array<std::size_t, kNumClasses> counts{};
    std::size_t vn_count = 0;
    double vn_share = 0.0;
};

/// One entry per post, ordered by post_id.
std::vector<PostStats> post_stats(std::span<const LabeledComment> comments);

enum class SigmaKind { Population, Sample };

struct ZScoreStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> z;
};

/// z_i = (x_i - mean) / sigma; all zeros when sigma is 0. Needs >= 2 values.
ZScoreStats zscores(std::span<const double> values, SigmaKind sigma = SigmaKind::Population);

struct BurstRecord {
    Timestamp window_start;
    double window_hours = 3.0;
    std::size_t count = 0;
    double fraction = 0.0;
};

/// Best window [start, start + window) anchored at a comment time, maximizing
/// the number of contained timestamps; earliest start wins ties. Throws
/// InputError on empty input or a non-positive window.
BurstRecord burst_profile(std::span<const Timestamp> times, double window_hours = 3.0);

struct DetectOptions {
    double z_threshold = 5.0;
    double share_threshold = 0.20;
    SigmaKind sigma = SigmaKind::Population;
    /// Count Negative as well as Very Negative comments.
    bool include_negative = false;
    double window_hours = 3.0;
};

struct FlamingEvent {
    std::string post_id;
    std::string page;
    double z = 0.0;
    std::size_t vn_count = 0;
    std::size_t total = 0;
    double vn_share = 0.0;
    bool share_exceeded = false;
    std::optional<BurstRecord> burst;
};

/// Posts with z strictly above the threshold, sorted by z descending (post_id
/// breaks ties). All posts form one pool; see detect_events for grouping.
std::vector<FlamingEvent> detect(std::span<const PostStats> stats, const DetectOptions& options = {});

struct GroupSummary {
    std::string page;
    std::size_t posts = 0;
    double mean = 0.0;
    double stddev = 0.0;
    bool skipped = false;  // fewer than 2 posts
};

struct DetectionResult {
    std::vector<PostStats> stats;
    std::vector<GroupSummary> groups;
    std::vector<FlamingEvent> events;
};

/// Full detection: per-post stats, z-scores per page (pooled when no comment
/// carries a page), thresholding and a burst profile for every event.
DetectionResult detect_events(std::span<const LabeledComment> comments, const DetectOptions& options = {});

nlohmann::json report_json(const DetectionResult& result, const DetectOptions& options);
std::string timeseries_csv(std::span<const TimeBucket> buckets);
std::vector<FlamingEvent> events_from_json(const nlohmann::json& report);

/// Writes flaming_report.json and timeseries.csv into `dir`.
void write_report(const std::filesystem::path& dir, const DetectionResult& result,
                  std::span<const TimeBucket> buckets, const DetectOptions& options);

}  // namespace flamewatch
