#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"
#include "flamewatch/flaming.hpp"
#include "oracles.hpp"

using namespace flamewatch;

namespace {

Timestamp at(const std::string& iso) { return parse_iso8601(iso); }

LabeledComment lc(const std::string& post, const std::string& time, int label, const std::string& page = "") {
    LabeledComment c;
    c.comment.post_id = post;
    c.comment.comment_id = post + "_" + time + "_" + std::to_string(label);
    c.comment.created_time = at(time);
    c.comment.tokens = {"x"};
    c.comment.caps_flags = {false};
    c.comment.exclaim_flags = {false};
    c.comment.page = page;
    c.label = label_from_code(label);
    return c;
}

PostStats stats_with(const std::string& id, std::size_t vn, std::size_t total) {
    PostStats s;
    s.post_id = id;
    s.total = total;
    s.vn_count = vn;
    s.counts[0] = vn;
    s.counts[2] = total - vn;
    s.vn_share = total ? static_cast<double>(vn) / static_cast<double>(total) : 0.0;
    return s;
}

}  // namespace

TEST_CASE("aggregate: same-day comments share a bucket") {
    const std::vector<LabeledComment> v{lc("p", "2018-02-14T01:00:00Z", 0), lc("p", "2018-02-14T05:00:00Z", 0),
                                        lc("p", "2018-02-14T23:59:59Z", 0)};
    const auto b = aggregate(v, BucketWidth::Day);
    REQUIRE(b.size() == 1);
    CHECK(b[0].counts[0] == 3);
    CHECK(format_iso8601(b[0].start) == "2018-02-14T00:00:00Z");
}

TEST_CASE("aggregate: gap days are filled with empty buckets") {
    const std::vector<LabeledComment> v{lc("p", "2018-02-14T01:00:00Z", 1), lc("p", "2018-02-16T05:00:00Z", 3)};
    const auto b = aggregate(v, BucketWidth::Day);
    REQUIRE(b.size() == 3);
    std::size_t mid = 0;
    for (auto n : b[1].counts) mid += n;
    CHECK(mid == 0);
    CHECK(aggregate(v, BucketWidth::Hour).size() == 2 * 24 + 5);
}

TEST_CASE("aggregate: bucket totals equal corpus label totals") {
    Rng rng(4);
    std::vector<LabeledComment> v;
    std::array<std::size_t, 5> want{};
    for (int i = 0; i < 500; ++i) {
        const int label = static_cast<int>(rng.below(5));
        Timestamp t = at("2018-02-01T00:00:00Z");
        t.seconds += static_cast<std::int64_t>(rng.below(28 * 86400));
        auto c = lc("p" + std::to_string(rng.below(10)), "2018-02-01T00:00:00Z", label);
        c.comment.created_time = t;
        v.push_back(c);
        ++want[static_cast<std::size_t>(label)];
    }
    for (auto w : {BucketWidth::Day, BucketWidth::Hour}) {
        std::array<std::size_t, 5> got{};
        const auto b = aggregate(v, w);
        for (std::size_t i = 0; i < b.size(); ++i) {
            for (std::size_t c = 0; c < 5; ++c) got[c] += b[i].counts[c];
            if (i > 0) CHECK(b[i].start.seconds == b[i - 1].start.seconds + b[i].width_seconds);
        }
        CHECK(got == want);
    }
    CHECK(aggregate(std::vector<LabeledComment>{}, BucketWidth::Day).empty());
}

TEST_CASE("post_stats: counts and shares") {
    const std::vector<LabeledComment> v{lc("b", "2018-02-14T01:00:00Z", 0), lc("b", "2018-02-14T02:00:00Z", 0),
                                        lc("b", "2018-02-14T03:00:00Z", 2), lc("a", "2018-02-14T04:00:00Z", 3)};
    const auto s = post_stats(v);
    REQUIRE(s.size() == 2);
    CHECK(s[0].post_id == "a");
    CHECK(s[0].vn_share == 0.0);
    CHECK(s[1].vn_count == 2);
    CHECK(s[1].total == 3);
    CHECK(s[1].vn_share == doctest::Approx(2.0 / 3));
    CHECK(format_iso8601(s[1].first_comment) == "2018-02-14T01:00:00Z");
}

TEST_CASE("post_stats: shares match a brute-force recount") {
    Rng rng(6);
    std::vector<LabeledComment> v;
    for (int i = 0; i < 400; ++i)
        v.push_back(lc("p" + std::to_string(rng.below(20)), "2018-02-14T01:00:00Z", static_cast<int>(rng.below(5))));
    for (const auto& s : post_stats(v)) {
        std::size_t vn = 0, total = 0;
        for (const auto& c : v) {
            if (c.comment.post_id != s.post_id) continue;
            ++total;
            vn += c.label == SentimentLabel::VeryNegative;
        }
        CHECK(s.total == total);
        CHECK(s.vn_count == vn);
        CHECK(s.vn_share == doctest::Approx(static_cast<double>(vn) / static_cast<double>(total)));
        std::size_t sum = 0;
        for (auto n : s.counts) sum += n;
        CHECK(sum == s.total);
    }
}

TEST_CASE("zscores: hand arithmetic") {
    const std::vector<double> x{1, 1, 1, 1, 6};
    const auto z = zscores(x);
    CHECK(z.mean == doctest::Approx(2.0));
    CHECK(z.stddev == doctest::Approx(2.0));
    CHECK(z.z[4] == doctest::Approx(2.0));
    const std::vector<double> same{3, 3, 3};
    for (double v : zscores(same).z) CHECK(v == 0.0);
    const std::vector<double> one{3};
    CHECK_THROWS_AS(zscores(one), InputError);
}

TEST_CASE("zscores: two-pass oracle, centering and affine invariance") {
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x;
        const auto n = 2 + rng.below(300);
        for (std::uint64_t i = 0; i < n; ++i) x.push_back(static_cast<double>(rng.below(40)));
        const auto got = zscores(x);
        const auto want = oracle::two_pass_z(x);
        const auto sample = zscores(x, SigmaKind::Sample);
        const auto want_sample = oracle::two_pass_z(x, true);
        double sum = 0, sq = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(std::abs(got.z[i] - want[i]) <= 1e-12);
            CHECK(std::abs(sample.z[i] - want_sample[i]) <= 1e-12);
            sum += got.z[i];
            sq += got.z[i] * got.z[i];
        }
        CHECK(std::abs(sum) <= 1e-9 * static_cast<double>(x.size()));
        if (got.stddev > 0) CHECK(sq / static_cast<double>(x.size()) == doctest::Approx(1.0));
        std::vector<double> y;
        for (double v : x) y.push_back(3.5 * v + 11.0);
        const auto zy = zscores(y);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(zy.z[i] - got.z[i]) <= 1e-9);
    }
}

TEST_CASE("detect: planted outliers are recovered") {
    Rng rng(21);
    std::vector<PostStats> s;
    for (int i = 0; i < 200; ++i) s.push_back(stats_with("p" + std::to_string(1000 + i), rng.below(4), 30));
    s[17] = stats_with("p1017", 70, 100);
    s[90] = stats_with("p1090", 65, 400);
    s[150] = stats_with("p1150", 80, 120);
    const auto ev = detect(s);
    REQUIRE(ev.size() == 3);
    CHECK(ev[0].post_id == "p1150");
    CHECK(ev[1].post_id == "p1017");
    CHECK(ev[2].post_id == "p1090");
    CHECK(ev[0].share_exceeded);
    CHECK_FALSE(ev[2].share_exceeded);
    for (const auto& e : ev) CHECK(e.z > 5.0);
}

TEST_CASE("detect: uniform counts flag nothing") {
    std::vector<PostStats> s;
    for (int i = 0; i < 50; ++i) s.push_back(stats_with("p" + std::to_string(i), 4, 10));
    CHECK(detect(s).empty());
}

TEST_CASE("detect: raising the threshold never adds events") {
    Rng rng(31);
    std::vector<PostStats> s;
    for (int i = 0; i < 100; ++i) s.push_back(stats_with("p" + std::to_string(i), rng.below(30) * rng.below(3), 90));
    std::size_t prev = s.size() + 1;
    for (double t = -2.0; t <= 6.0; t += 0.25) {
        DetectOptions o;
        o.z_threshold = t;
        const auto n = detect(s, o).size();
        CHECK(n <= prev);
        prev = n;
    }
}

TEST_CASE("detect: a post shaped like the published 63.54% share") {
    std::vector<PostStats> s;
    Rng rng(8);
    for (int i = 0; i < 300; ++i) s.push_back(stats_with("p" + std::to_string(i), 20 + rng.below(30), 400));
    s.push_back(stats_with("flamed", 2614, 4114));
    const auto ev = detect(s);
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].post_id == "flamed");
    CHECK(ev[0].vn_share * 100 == doctest::Approx(63.54).epsilon(1e-4));
    CHECK(ev[0].share_exceeded);
}

TEST_CASE("burst_profile") {
    const Timestamp t0 = at("2018-02-14T10:00:00Z");
    std::vector<Timestamp> close;
    for (int i = 0; i < 10; ++i) close.push_back({t0.seconds + i * 300});
    auto b = burst_profile(close, 3.0);
    CHECK(b.fraction == 1.0);
    CHECK(b.count == 10);

    const std::vector<Timestamp> single{t0};
    b = burst_profile(single, 3.0);
    CHECK(b.fraction == 1.0);
    CHECK(b.window_start == t0);

    // 30 comments spread evenly over 30 hours: a 3h window holds 3 of them
    std::vector<Timestamp> spread;
    for (int i = 0; i < 30; ++i) spread.push_back({t0.seconds + i * 3600});
    b = burst_profile(spread, 3.0);
    std::size_t brute = 0;
    for (const auto& s : spread) {
        std::size_t n = 0;
        for (const auto& u : spread) n += (u.seconds >= s.seconds && u.seconds < s.seconds + 3 * 3600);
        brute = std::max(brute, n);
    }
    CHECK(b.count == brute);
    CHECK(std::abs(b.fraction - 0.1) <= 1.0 / 30 + 1e-12);
    CHECK(b.window_start == t0);

    CHECK_THROWS_AS(burst_profile(std::vector<Timestamp>{}, 3.0), InputError);
}

TEST_CASE("burst_profile: widening the window never lowers the count") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Timestamp> ts;
        for (int i = 0; i < 25; ++i) ts.push_back({static_cast<std::int64_t>(rng.below(86400 * 2))});
        std::size_t prev = 0;
        for (double w = 0.5; w <= 48; w *= 2) {
            const auto b = burst_profile(ts, w);
            CHECK(b.count >= prev);
            CHECK(b.fraction > 0.0);
            CHECK(b.fraction <= 1.0);
            prev = b.count;
        }
    }
}

TEST_CASE("detect_events: pages are scored separately") {
    std::vector<LabeledComment> v;
    for (int p = 0; p < 40; ++p) {
        const std::string post = "a" + std::to_string(p);
        const int vn = p == 7 ? 40 : p % 2;
        for (int i = 0; i < vn; ++i) v.push_back(lc(post, "2018-02-14T10:00:00Z", 0, "A"));
        for (int i = 0; i < 5; ++i) v.push_back(lc(post, "2018-02-14T11:00:00Z", 3, "A"));
    }
    for (int p = 0; p < 10; ++p) {
        const std::string post = "b" + std::to_string(p);
        for (int i = 0; i < 30; ++i) v.push_back(lc(post, "2018-02-15T10:00:00Z", 0, "B"));
    }
    const auto r = detect_events(v);
    REQUIRE(r.groups.size() == 2);
    REQUIRE(r.events.size() == 1);
    CHECK(r.events[0].post_id == "a7");
    CHECK(r.events[0].page == "A");
    REQUIRE(r.events[0].burst.has_value());
    CHECK(r.events[0].burst->fraction == 1.0);
}

TEST_CASE("report: JSON round trip, CSV shape, empty events") {
    std::vector<LabeledComment> v;
    for (int p = 0; p < 30; ++p)
        for (int i = 0; i < (p == 3 ? 50 : 1); ++i) v.push_back(lc("p" + std::to_string(p), "2018-02-14T10:00:00Z", 0));
    v.push_back(lc("p1", "2018-02-17T10:00:00Z", 4));
    const auto r = detect_events(v);
    REQUIRE(r.events.size() == 1);
    const auto buckets = aggregate(v, BucketWidth::Day);
    const auto dir = std::filesystem::temp_directory_path() / "fw_report_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_report(dir, r, buckets, {});
    const auto j = nlohmann::json::parse(read_file(dir / "flaming_report.json"));
    const auto back = events_from_json(j);
    REQUIRE(back.size() == r.events.size());
    CHECK(back[0].post_id == r.events[0].post_id);
    CHECK(back[0].z == r.events[0].z);
    CHECK(back[0].vn_count == r.events[0].vn_count);
    CHECK(back[0].burst->window_start == r.events[0].burst->window_start);

    const std::string csv = read_file(dir / "timeseries.csv");
    CHECK(csv.rfind("bucket_start,label0,label1,label2,label3,label4\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == buckets.size() + 1);

    DetectionResult empty;
    const auto ej = report_json(empty, {});
    CHECK(ej.at("events").is_array());
    CHECK(ej.at("events").empty());
    CHECK(events_from_json(ej).empty());
}
