#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include <graspall/grasp.hpp>
#include <graspall/rng.hpp>
#include <graspall/synth.hpp>

using namespace graspall;
using namespace graspall::grasp;

namespace {

SemanticMask random_mask(int w, int h, int max_class, double background_frac, Rng& rng) {
    SemanticMask m(w, h, 0);
    for (auto& c : m.classes)
        if (rng.uniform() >= background_frac)
            c = static_cast<std::uint8_t>(1 + rng.index(max_class));
    return m;
}

DepthMap random_depth(int w, int h, Rng& rng, double valid_frac = 1.0) {
    DepthMap d(w, h, 0.0, true);
    for (int i = 0; i < d.pixels(); ++i) {
        d.depth[i] = rng.uniform(0.5, 1.5);
        d.valid[i] = rng.uniform() < valid_frac ? 1 : 0;
    }
    return d;
}

// exhaustive restatement of the two-stage search, used as the oracle
GraspPoint brute_force_grasp(const SemanticMask& mask, const DepthMap& d, int k) {
    std::vector<int> areas(256, 0);
    for (auto c : mask.classes) ++areas[c];
    int best_class = 0;
    for (int c = 1; c < 256; ++c)
        if (areas[c] > 0 && (best_class == 0 || areas[c] > areas[best_class])) best_class = c;
    REQUIRE(best_class > 0);
    if (k <= 0) k = std::max(1, static_cast<int>(std::ceil(0.01 * areas[best_class])));

    int rmin = mask.height, rmax = -1, cmin = mask.width, cmax = -1;
    std::vector<std::tuple<double, int, int, int>> candidates; // depth, idx, row, col
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            if (mask.at(r, c) != best_class) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
            int i = r * mask.width + c;
            if (!d.is_hole(i)) candidates.emplace_back(d.depth[i], i, r, c);
        }
    REQUIRE(!candidates.empty());
    std::sort(candidates.begin(), candidates.end());
    candidates.resize(std::min<std::size_t>(k, candidates.size()));
    double cr = (rmin + rmax) / 2, cc = (cmin + cmax) / 2;
    GraspPoint best;
    double best_d2 = 1e300;
    long best_idx = -1;
    for (auto [depth, idx, r, c] : candidates) {
        double d2 = (r - cr) * (r - cr) + (c - cc) * (c - cc);
        if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
            best_d2 = d2;
            best_idx = idx;
            best = GraspPoint{best_class, r, c, depth};
        }
    }
    return best;
}

} // namespace

TEST_CASE("extract_regions: background only gives no regions") {
    SemanticMask m(8, 8, 0);
    CHECK(extract_regions(m).empty());
}

TEST_CASE("extract_regions counts class pixels") {
    SemanticMask m(10, 4, 0);
    for (int i = 0; i < 10; ++i) m.classes[i] = 3;
    for (int i = 10; i < 30; ++i) m.classes[i] = 7;
    auto regions = extract_regions(m);
    REQUIRE(regions.size() == 2);
    CHECK(regions[0].class_id == 3);
    CHECK(regions[0].area() == 10);
    CHECK(regions[1].class_id == 7);
    CHECK(regions[1].area() == 20);
}

TEST_CASE("extract_regions areas match the per-class counting oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        SemanticMask m = random_mask(12, 9, 8, 0.5, rng);
        std::vector<int> count(9, 0);
        for (auto c : m.classes) ++count[c];
        auto regions = extract_regions(m);
        std::set<int> seen;
        for (const auto& r : regions) {
            CHECK(r.area() == count[r.class_id]);
            seen.insert(r.class_id);
        }
        for (int c = 1; c <= 8; ++c) CHECK(seen.count(c) == (count[c] > 0 ? 1 : 0));
    }
}

TEST_CASE("largest_region and its tie rule") {
    SemanticMask m(6, 6, 0);
    for (int i = 0; i < 4; ++i) m.classes[i] = 5;
    for (int i = 6; i < 10; ++i) m.classes[i] = 2;
    auto regions = extract_regions(m);
    CHECK(largest_region(regions).class_id == 2); // equal areas, lower class wins

    std::vector<Region> empty;
    CHECK_THROWS_AS(largest_region(empty), InvalidArgument);

    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        SemanticMask mm = random_mask(10, 10, 6, 0.4, rng);
        auto rs = extract_regions(mm);
        if (rs.empty()) continue;
        const Region& got = largest_region(rs);
        for (const auto& r : rs) {
            CHECK(got.area() >= r.area());
            if (r.area() == got.area()) CHECK(got.class_id <= r.class_id);
        }
    }
}

TEST_CASE("depth_top_k: tie and ordering rules") {
    SemanticMask m(5, 5, 0);
    for (auto& c : m.classes) c = 1;
    auto regions = extract_regions(m);

    DepthMap flat(5, 5, 1.0, true);
    auto top = depth_top_k(regions[0], flat, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0] == std::make_pair(0, 0)); // uniform depth: first three row-major
    CHECK(top[1] == std::make_pair(0, 1));
    CHECK(top[2] == std::make_pair(0, 2));

    DepthMap dimple = flat;
    dimple.depth_at(3, 2) = 0.5;
    CHECK(depth_top_k(regions[0], dimple, 4)[0] == std::make_pair(3, 2));
}

TEST_CASE("depth_top_k equals the full-sort oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        SemanticMask m = random_mask(9, 9, 3, 0.3, rng);
        DepthMap d = random_depth(9, 9, rng, 0.9);
        auto regions = extract_regions(m);
        if (regions.empty()) continue;
        const Region& region = largest_region(regions);
        std::vector<std::tuple<double, int, int, int>> all;
        for (auto [r, c] : region.pixels) {
            int i = r * 9 + c;
            if (!d.is_hole(i)) all.emplace_back(d.depth[i], i, r, c);
        }
        if (all.empty()) {
            CHECK_THROWS_AS(depth_top_k(region, d, 8), InvalidArgument);
            continue;
        }
        std::sort(all.begin(), all.end());
        auto got = depth_top_k(region, d, 8);
        REQUIRE(got.size() == std::min<std::size_t>(8, all.size()));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == std::get<2>(all[i]));
            CHECK(got[i].second == std::get<3>(all[i]));
        }
    }
}

TEST_CASE("region_center basics and the min/max scan oracle") {
    Region single{4, {{5, 7}}};
    CHECK(region_center(single) == std::make_pair(5, 7));

    Region span{1, {}};
    for (int r = 0; r <= 10; ++r) span.pixels.emplace_back(r, 0);
    for (int c = 0; c <= 4; ++c) span.pixels.emplace_back(0, c);
    CHECK(region_center(span) == std::make_pair(5, 2));

    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        Region blob{2, {}};
        std::set<std::pair<int, int>> used;
        int n = 1 + rng.index(40);
        for (int i = 0; i < n; ++i) {
            auto p = std::make_pair(rng.index(15), rng.index(15));
            if (used.insert(p).second) blob.pixels.push_back(p);
        }
        int rmin = 99, rmax = -1, cmin = 99, cmax = -1;
        for (auto [r, c] : blob.pixels) {
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
        CHECK(region_center(blob) == std::make_pair((rmin + rmax) / 2, (cmin + cmax) / 2));
    }
}

TEST_CASE("select_grasp_point: dimple and k=1 degenerate cases") {
    SemanticMask m(9, 9, 0);
    for (int r = 2; r < 7; ++r)
        for (int c = 2; c < 7; ++c) m.set(r, c, 4);
    DepthMap d(9, 9, 1.0, true);
    d.depth_at(4, 4) = 0.6; // single central dimple
    GraspPoint gp = select_grasp_point(m, d, 3);
    CHECK(gp.class_id == 4);
    CHECK(gp.row == 4);
    CHECK(gp.col == 4);
    CHECK(gp.depth_m == 0.6);

    d.depth_at(2, 6) = 0.5; // new global minimum away from the center
    GraspPoint g1 = select_grasp_point(m, d, 1);
    CHECK(g1.row == 2);
    CHECK(g1.col == 6);
}

TEST_CASE("select_grasp_point equals brute force on random scenes") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        SemanticMask m = random_mask(14, 11, 5, 0.45, rng);
        if (extract_regions(m).empty()) continue;
        DepthMap d = random_depth(14, 11, rng);
        GraspPoint got = select_grasp_point(m, d, 0);
        GraspPoint expect = brute_force_grasp(m, d, 0);
        CHECK(got.class_id == expect.class_id);
        CHECK(got.row == expect.row);
        CHECK(got.col == expect.col);
        CHECK(got.depth_m == expect.depth_m);
    }
}

TEST_CASE("grasp point invariants: membership, top-k, center optimality, k monotone") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        SemanticMask m = random_mask(12, 12, 4, 0.4, rng);
        auto regions = extract_regions(m);
        if (regions.empty()) continue;
        DepthMap d = random_depth(12, 12, rng);
        const Region& region = largest_region(regions);
        int k1 = 1 + rng.index(6), k2 = k1 + 1 + rng.index(6);
        GraspPoint a = select_grasp_point(m, d, k1);
        GraspPoint b = select_grasp_point(m, d, k2);

        auto topk = depth_top_k(region, d, k1);
        CHECK(std::find(topk.begin(), topk.end(), std::make_pair(a.row, a.col)) != topk.end());
        auto [cr, cc] = region_center(region);
        auto dist2 = [&](const GraspPoint& p) {
            return static_cast<double>(p.row - cr) * (p.row - cr) +
                   static_cast<double>(p.col - cc) * (p.col - cc);
        };
        for (auto [r, c] : topk) {
            double d2 = static_cast<double>(r - cr) * (r - cr) +
                        static_cast<double>(c - cc) * (c - cc);
            CHECK(dist2(a) <= d2);
        }
        CHECK(dist2(b) <= dist2(a)); // larger candidate pools never move away from the center
    }
}

TEST_CASE("plan_grasp_sequence ordering and coverage") {
    SemanticMask m(12, 12, 0);
    for (int i = 0; i < 30; ++i) m.classes[i] = 2;
    for (int i = 40; i < 60; ++i) m.classes[i] = 7;
    for (int i = 70; i < 80; ++i) m.classes[i] = 1;
    DepthMap d(12, 12, 1.0, true);
    GraspPlan plan = plan_grasp_sequence(m, d);
    REQUIRE(plan.points.size() == 3);
    CHECK(plan.points[0].class_id == 2); // descending area: 30, 20, 10
    CHECK(plan.points[1].class_id == 7);
    CHECK(plan.points[2].class_id == 1);

    SemanticMask empty(4, 4, 0);
    CHECK(plan_grasp_sequence(empty, d).points.empty());

    SemanticMask one(6, 6, 0);
    one.set(2, 2, 3);
    one.set(2, 3, 3);
    CHECK(plan_grasp_sequence(one, d).points.size() == 1);
}

TEST_CASE("plan_grasp_sequence matches an iterative oracle replay") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        SemanticMask m = random_mask(13, 10, 6, 0.5, rng);
        DepthMap d = random_depth(13, 10, rng);
        GraspPlan plan = plan_grasp_sequence(m, d, 0);

        SemanticMask work = m;
        std::vector<GraspPoint> expect;
        while (!extract_regions(work).empty()) {
            GraspPoint gp = brute_force_grasp(work, d, 0);
            expect.push_back(gp);
            for (auto& c : work.classes)
                if (c == gp.class_id) c = 0;
        }
        REQUIRE(plan.points.size() == expect.size());
        std::set<int> classes;
        int prev_area = 1 << 30;
        SemanticMask replay = m;
        for (std::size_t i = 0; i < plan.points.size(); ++i) {
            CHECK(plan.points[i].class_id == expect[i].class_id);
            CHECK(plan.points[i].row == expect[i].row);
            CHECK(plan.points[i].col == expect[i].col);
            CHECK(classes.insert(plan.points[i].class_id).second); // each class once
            int area = 0;
            for (auto c : replay.classes) area += (c == plan.points[i].class_id);
            CHECK(area <= prev_area); // nonincreasing at selection time
            prev_area = area;
            for (auto& c : replay.classes)
                if (c == plan.points[i].class_id) c = 0;
        }
    }
}

TEST_CASE("grasp plan JSON uses the documented key order") {
    SemanticMask m(4, 4, 0);
    m.set(1, 2, 6);
    DepthMap d(4, 4, 0.75, true);
    GraspPlan plan = plan_grasp_sequence(m, d);
    std::string json = plan_to_json(plan).dump();
    CHECK(json == R"([{"class":6,"row":1,"col":2,"depth_m":0.75}])");
}
