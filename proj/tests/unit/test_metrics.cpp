#include "mvlabel/errors.hpp"
#include "mvlabel/metrics.hpp"

#include "oracles.hpp"

#include <cmath>
#include <random>

#include <doctest.h>

using namespace mvlabel;

namespace {

DetectionSet make_set(const std::string& id, std::initializer_list<WorldPoint> points) {
    DetectionSet set;
    set.frame_id = id;
    for (const WorldPoint& p : points) set.detections.push_back({p, 1.0});
    return set;
}

DetectionSet random_set(std::mt19937_64& rng, const std::string& id, int max_points,
                        double extent) {
    std::uniform_real_distribution<double> u(0.0, extent);
    DetectionSet set;
    set.frame_id = id;
    const int n = static_cast<int>(rng() % (max_points + 1));
    for (int i = 0; i < n; ++i) set.detections.push_back({{u(rng), u(rng)}, 1.0});
    return set;
}

double total_matched_distance(const FrameMatching& m) {
    double sum = 0.0;
    for (const MatchedPair& p : m.pairs) sum += p.distance_m;
    return sum;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("identical sets match perfectly at distance zero") {
    const DetectionSet gts = make_set("f", {{1.0, 2.0}, {3.0, 4.0}, {5.5, 0.25}});
    const FrameMatching m = match_frame(gts, gts, 0.5);
    REQUIRE(m.pairs.size() == 3);
    CHECK(m.fp_indices.empty());
    CHECK(m.fn_indices.empty());
    for (const MatchedPair& p : m.pairs) {
        CHECK(p.det_index == p.gt_index);
        CHECK(p.distance_m == 0.0);
    }
}

TEST_CASE("the only both-in-range assignment is found") {
    const DetectionSet gts = make_set("f", {{0.0, 0.0}, {1.0, 0.0}});
    const DetectionSet dets = make_set("f", {{0.3, 0.0}, {0.7, 0.0}});
    const FrameMatching m = match_frame(dets, gts, 0.5);
    REQUIRE(m.pairs.size() == 2);
    CHECK(m.pairs[0].det_index == 0);
    CHECK(m.pairs[0].gt_index == 0);
    CHECK(m.pairs[0].distance_m == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(m.pairs[1].det_index == 1);
    CHECK(m.pairs[1].gt_index == 1);
    CHECK(m.pairs[1].distance_m == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("forced cardinality one picks the closer detection") {
    const DetectionSet gts = make_set("f", {{0.0, 0.0}});
    const DetectionSet dets = make_set("f", {{0.1, 0.0}, {0.4, 0.0}});
    const FrameMatching m = match_frame(dets, gts, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].det_index == 0);
    CHECK(m.pairs[0].distance_m == doctest::Approx(0.1).epsilon(1e-12));
    REQUIRE(m.fp_indices.size() == 1);
    CHECK(m.fp_indices[0] == 1);
}

TEST_CASE("exact ties resolve to the lowest detection index") {
    const DetectionSet gts = make_set("f", {{0.0, 0.0}});
    const DetectionSet dets = make_set("f", {{0.3, 0.0}, {-0.3, 0.0}});
    const FrameMatching m = match_frame(dets, gts, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].det_index == 0);
}

TEST_CASE("a pair at exactly the radius still matches (inclusive)") {
    const DetectionSet gts = make_set("f", {{0.0, 0.0}});
    const DetectionSet dets = make_set("f", {{0.5, 0.0}});
    const FrameMatching m = match_frame(dets, gts, 0.5);
    REQUIRE(m.pairs.size() == 1);
    CHECK(m.pairs[0].distance_m == 0.5);
}

TEST_CASE("empty inputs produce an empty matching") {
    const DetectionSet empty = make_set("f", {});
    const DetectionSet some = make_set("f", {{1, 1}});
    CHECK(match_frame(empty, empty, 0.5).pairs.empty());
    const FrameMatching m = match_frame(empty, some, 0.5);
    CHECK(m.pairs.empty());
    REQUIRE(m.fn_indices.size() == 1);
    const FrameMatching m2 = match_frame(some, empty, 0.5);
    REQUIRE(m2.fp_indices.size() == 1);
}

TEST_CASE("matching structure is internally consistent") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const DetectionSet dets = random_set(rng, "f", 8, 2.0);
        const DetectionSet gts = random_set(rng, "f", 8, 2.0);
        const FrameMatching m = match_frame(dets, gts, 0.5);
        REQUIRE(m.pairs.size() + m.fp_indices.size() == dets.detections.size());
        REQUIRE(m.pairs.size() + m.fn_indices.size() == gts.detections.size());
        std::vector<char> det_seen(dets.detections.size(), 0), gt_seen(gts.detections.size(), 0);
        for (const MatchedPair& p : m.pairs) {
            REQUIRE(p.distance_m <= 0.5);
            REQUIRE(!det_seen[p.det_index]);
            REQUIRE(!gt_seen[p.gt_index]);
            det_seen[p.det_index] = 1;
            gt_seen[p.gt_index] = 1;
        }
        for (int i : m.fp_indices) REQUIRE(!det_seen[i]);
        for (int j : m.fn_indices) REQUIRE(!gt_seen[j]);
    }
}

TEST_CASE("Hungarian matching equals brute force on random small frames") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 400; ++trial) {
        // Tight extent so in-radius pairs are plentiful and contested.
        const double extent = 0.6 + (trial % 5) * 0.4;
        DetectionSet dets = random_set(rng, "f", 6, extent);
        DetectionSet gts = random_set(rng, "f", 6, extent);
        const FrameMatching m = match_frame(dets, gts, 0.5);
        const mvtest::BruteMatchResult brute = mvtest::brute_force_match(dets, gts, 0.5);
        REQUIRE(static_cast<int>(m.pairs.size()) == brute.cardinality);
        REQUIRE(std::abs(total_matched_distance(m) - brute.total_distance) <= 1e-9);
    }
}

TEST_CASE("matching is invariant under a global rigid transform") {
    std::mt19937_64 rng(13);
    const double theta = 0.77;
    const double c = std::cos(theta), s = std::sin(theta);
    auto transform = [&](DetectionSet set) {
        for (Detection& d : set.detections) {
            const WorldPoint p = d.location;
            d.location = {c * p.x - s * p.y + 4.0, s * p.x + c * p.y - 2.5};
        }
        return set;
    };
    for (int trial = 0; trial < 50; ++trial) {
        const DetectionSet dets = random_set(rng, "f", 6, 1.5);
        const DetectionSet gts = random_set(rng, "f", 6, 1.5);
        const FrameMatching a = match_frame(dets, gts, 0.5);
        const FrameMatching b = match_frame(transform(dets), transform(gts), 0.5);
        REQUIRE(a.pairs.size() == b.pairs.size());
        REQUIRE(std::abs(total_matched_distance(a) - total_matched_distance(b)) <= 1e-9);
    }
}

TEST_CASE("perfect detections give all metrics 1.0") {
    std::vector<FramePair> frames;
    const DetectionSet f0 = make_set("f0", {{1, 1}, {2, 2}});
    const DetectionSet f1 = make_set("f1", {{3, 3}});
    frames.push_back({"f0", f0, f0});
    frames.push_back({"f1", f1, f1});
    const EvalReport r = evaluate(frames, 0.5);
    CHECK(r.moda == 1.0);
    CHECK(r.modp == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.flags.empty());
    CHECK(r.per_frame.size() == 2);
}

TEST_CASE("the 10-GT / 8-TP / 1-FP / 2-FN fixture") {
    DetectionSet gts;
    gts.frame_id = "f0";
    for (int i = 0; i < 10; ++i) gts.detections.push_back({{1.0 * i, 0.0}, 1.0});
    DetectionSet dets;
    dets.frame_id = "f0";
    for (int i = 0; i < 8; ++i) dets.detections.push_back(gts.detections[i]);
    dets.detections.push_back({{100.0, 100.0}, 1.0}); // far spurious detection

    std::vector<FramePair> frames{{"f0", dets, gts}};
    const EvalReport r = evaluate(frames, 0.5);
    CHECK(r.tp == 8);
    CHECK(r.fp == 1);
    CHECK(r.fn == 2);
    CHECK(r.n_gt == 10);
    CHECK(r.moda == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(std::abs(r.precision - 8.0 / 9.0) <= 1e-12);
    CHECK(r.recall == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.modp == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("MODP reflects matched distances: two pairs at 0.3 m") {
    const DetectionSet gts = make_set("f0", {{0.0, 0.0}, {5.0, 0.0}});
    const DetectionSet dets = make_set("f0", {{0.3, 0.0}, {5.3, 0.0}});
    std::vector<FramePair> frames{{"f0", dets, gts}};
    const EvalReport r = evaluate(frames, 0.5);
    CHECK(std::abs(r.modp - 0.4) <= 1e-12); // 1 - 0.3/0.5
    CHECK(r.moda == 1.0);
}

TEST_CASE("duplicating every frame leaves aggregate metrics unchanged") {
    std::mt19937_64 rng(19);
    std::vector<FramePair> frames;
    for (int f = 0; f < 6; ++f)
        frames.push_back({"f" + std::to_string(f), random_set(rng, "d", 5, 1.2),
                          random_set(rng, "g", 5, 1.2)});
    std::vector<FramePair> doubled = frames;
    for (const FramePair& fp : frames) doubled.push_back(fp);
    const EvalReport a = evaluate(frames, 0.5);
    const EvalReport b = evaluate(doubled, 0.5);
    CHECK(a.moda == doctest::Approx(b.moda).epsilon(1e-12));
    CHECK(a.modp == doctest::Approx(b.modp).epsilon(1e-12));
    CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
    CHECK(a.recall == doctest::Approx(b.recall).epsilon(1e-12));
}

TEST_CASE("one far unmatched detection costs exactly 1/GT of MODA") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        DetectionSet dets = random_set(rng, "d", 5, 1.0);
        const DetectionSet gts = make_set("g", {{0.1, 0.1}, {0.9, 0.4}, {0.3, 0.8}});
        std::vector<FramePair> frames{{"f0", dets, gts}};
        const EvalReport before = evaluate(frames, 0.5);
        dets.detections.push_back({{50.0, 50.0}, 1.0});
        frames[0].dets = dets;
        const EvalReport after = evaluate(frames, 0.5);
        REQUIRE(after.moda ==
                doctest::Approx(before.moda - 1.0 / before.n_gt).epsilon(1e-12));
        REQUIRE(after.precision <= before.precision + 1e-12);
    }
}

TEST_CASE("removing a matched detection converts one TP into one FN") {
    const DetectionSet gts = make_set("f", {{0.0, 0.0}, {2.0, 0.0}});
    DetectionSet dets = make_set("f", {{0.1, 0.0}, {2.1, 0.0}});
    std::vector<FramePair> frames{{"f", dets, gts}};
    const EvalReport before = evaluate(frames, 0.5);
    dets.detections.pop_back();
    frames[0].dets = dets;
    const EvalReport after = evaluate(frames, 0.5);
    CHECK(after.tp == before.tp - 1);
    CHECK(after.fn == before.fn + 1);
    CHECK(after.fp == before.fp);
}

TEST_CASE("MODA never exceeds 1 and equals 1 only without errors") {
    std::mt19937_64 rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<FramePair> frames{
            {"f", random_set(rng, "d", 6, 1.0), random_set(rng, "g", 6, 1.0)}};
        const EvalReport r = evaluate(frames, 0.5);
        if (r.n_gt == 0) continue;
        REQUIRE(r.moda <= 1.0 + 1e-12);
        if (r.moda == 1.0) REQUIRE((r.fp == 0 && r.fn == 0));
        REQUIRE(r.precision >= 0.0);
        REQUIRE(r.precision <= 1.0);
        REQUIRE(r.recall >= 0.0);
        REQUIRE(r.recall <= 1.0);
    }
}

TEST_CASE("degenerate frames contribute pure FPs or FNs") {
    const DetectionSet none = make_set("f", {});
    const DetectionSet three = make_set("f", {{1, 1}, {2, 2}, {3, 3}});
    std::vector<FramePair> fp_only{{"f", three, none}};
    std::vector<FramePair> fn_only{{"f", none, three}};
    const EvalReport a = evaluate(fp_only, 0.5);
    CHECK(a.fp == 3);
    CHECK(a.n_gt == 0);
    CHECK_FALSE(a.moda_defined);
    CHECK(std::find(a.flags.begin(), a.flags.end(), "moda_undefined") != a.flags.end());
    const EvalReport b = evaluate(fn_only, 0.5);
    CHECK(b.fn == 3);
    CHECK(b.moda == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(b.recall == 0.0);
}

TEST_CASE("an evaluation with nothing at all reports 1.0 with a warning flag") {
    const DetectionSet none = make_set("f", {});
    std::vector<FramePair> frames{{"f", none, none}};
    const EvalReport r = evaluate(frames, 0.5);
    CHECK(r.moda == 1.0);
    CHECK(r.modp == 1.0);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    REQUIRE(r.flags.size() == 1);
    CHECK(r.flags[0] == "empty_evaluation");
}

TEST_CASE("evaluate rejects empty input and bad radii") {
    std::vector<FramePair> frames;
    CHECK_THROWS_AS(evaluate(frames, 0.5), ConfigError);
    frames.push_back({"f", make_set("f", {}), make_set("f", {})});
    CHECK_THROWS_AS(evaluate(frames, 0.0), ConfigError);
}

TEST_CASE("report JSON round trip, including the -inf sentinel") {
    const DetectionSet none = make_set("f", {});
    const DetectionSet one = make_set("f", {{1, 1}});
    std::vector<FramePair> frames{{"f", one, none}};
    const EvalReport r = evaluate(frames, 0.5);
    const nlohmann::ordered_json doc = report_to_json(r);
    CHECK(doc["moda"].is_string());
    CHECK(doc["moda"].get<std::string>() == "-inf");
    const EvalReport back = report_from_json(nlohmann::json::parse(doc.dump()), "mem");
    CHECK_FALSE(back.moda_defined);
    CHECK(back.tp == r.tp);
    CHECK(back.fp == r.fp);
    CHECK(back.per_frame.size() == r.per_frame.size());

    std::vector<FramePair> ok_frames{{"f", one, one}};
    const EvalReport r2 = evaluate(ok_frames, 0.5);
    const EvalReport back2 = report_from_json(nlohmann::json::parse(report_to_json(r2).dump()), "mem");
    CHECK(back2.moda == r2.moda);
    CHECK(back2.modp == r2.modp);
}

TEST_CASE("CSV has one row per frame") {
    const DetectionSet a = make_set("f0", {{1, 1}});
    const DetectionSet b = make_set("f1", {{2, 2}});
    std::vector<FramePair> frames{{"f0", a, a}, {"f1", b, b}};
    const std::string csv = report_to_csv(evaluate(frames, 0.5));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3); // header + 2 rows
    CHECK(csv.rfind("frame_id,n_gt,n_det,tp,fp,fn,moda,modp,precision,recall\n", 0) == 0);
}

} // TEST_SUITE
