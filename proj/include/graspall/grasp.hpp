#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "types.hpp"

namespace graspall::grasp {

/// All pixels of one nonbackground class. Grouping is by class, not by
/// connected component: the grasp protocol assigns one basket per category.
struct Region {
    int class_id = 0;
    std::vector<std::pair<int, int>> pixels; // (row, col), row-major order
    int area() const { return static_cast<int>(pixels.size()); }
};

struct GraspPoint {
    int class_id = 0;
    int row = 0;
    int col = 0;
    double depth_m = 0.0;
};

struct GraspPlan {
    std::vector<GraspPoint> points;
};

inline std::vector<Region> extract_regions(const SemanticMask& mask) {
    std::vector<Region> regions;
    std::vector<int> index(256, -1);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            int cls = mask.at(r, c);
            if (cls == 0) continue;
            if (index[cls] < 0) {
                index[cls] = static_cast<int>(regions.size());
                regions.push_back(Region{cls, {}});
            }
            regions[index[cls]].pixels.emplace_back(r, c);
        }
    std::sort(regions.begin(), regions.end(),
              [](const Region& a, const Region& b) { return a.class_id < b.class_id; });
    return regions;
}

/// Largest area; equal areas keep the smallest class id.
inline const Region& largest_region(const std::vector<Region>& regions) {
    if (regions.empty()) throw InvalidArgument("largest_region: no regions");
    const Region* best = &regions[0];
    for (const Region& r : regions)
        if (r.area() > best->area() ||
            (r.area() == best->area() && r.class_id < best->class_id))
            best = &r;
    return *best;
}

/// The k region pixels closest to the camera (smallest valid depth). Depth
/// ties keep row-major order. Invalid pixels are excluded; a region with no
/// valid depth at all is an error (run fill_holes first).
inline std::vector<std::pair<int, int>> depth_top_k(const Region& region, const DepthMap& d,
                                                    int k) {
    require(k >= 1, "depth_top_k: k must be >= 1");
    struct Entry {
        double depth;
        int idx;
        int row, col;
    };
    std::vector<Entry> entries;
    entries.reserve(region.pixels.size());
    for (auto [r, c] : region.pixels) {
        int i = r * d.width + c;
        if (d.is_hole(i)) continue;
        entries.push_back({d.depth[i], i, r, c});
    }
    if (entries.empty())
        throw InvalidArgument("depth_top_k: region has no valid depth");
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.idx < b.idx;
    });
    std::vector<std::pair<int, int>> out;
    int n = std::min<int>(k, static_cast<int>(entries.size()));
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.emplace_back(entries[i].row, entries[i].col);
    return out;
}

/// Center of the axis-aligned bounding rectangle, rounded half-down.
inline std::pair<int, int> region_center(const Region& region) {
    require(!region.pixels.empty(), "region_center: empty region");
    int rmin = region.pixels[0].first, rmax = rmin;
    int cmin = region.pixels[0].second, cmax = cmin;
    for (auto [r, c] : region.pixels) {
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
    }
    return {(rmin + rmax) / 2, (cmin + cmax) / 2};
}

/// Default candidate-pool policy: 1% of the region area, at least one pixel.
inline int default_k(int area) {
    return std::max(1, static_cast<int>(std::ceil(0.01 * area)));
}

/// Depth-optimal search on the largest region: among the k closest-to-camera
/// pixels, take the one nearest the bounding-rectangle center. Ties keep the
/// smallest linear index.
inline GraspPoint select_grasp_point(const SemanticMask& mask, const DepthMap& d, int k = 0) {
    auto regions = extract_regions(mask);
    const Region& region = largest_region(regions);
    if (k <= 0) k = default_k(region.area());
    auto candidates = depth_top_k(region, d, k);
    auto [cr, cc] = region_center(region);
    GraspPoint best;
    double best_d2 = 0.0;
    long best_idx = -1;
    for (auto [r, c] : candidates) {
        double d2 = static_cast<double>(r - cr) * (r - cr) + static_cast<double>(c - cc) * (c - cc);
        long idx = static_cast<long>(r) * d.width + c;
        if (best_idx < 0 || d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
            best_d2 = d2;
            best_idx = idx;
            best = GraspPoint{region.class_id, r, c, d.depth[idx]};
        }
    }
    return best;
}

/// Grasps the current largest class, removes it, repeats. Empty masks give
/// an empty plan.
inline GraspPlan plan_grasp_sequence(const SemanticMask& mask, const DepthMap& d, int k = 0) {
    GraspPlan plan;
    SemanticMask work = mask;
    for (;;) {
        auto regions = extract_regions(work);
        if (regions.empty()) break;
        GraspPoint gp = select_grasp_point(work, d, k);
        plan.points.push_back(gp);
        for (auto& cls : work.classes)
            if (cls == gp.class_id) cls = 0;
    }
    return plan;
}

inline nlohmann::ordered_json plan_to_json(const GraspPlan& plan) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const GraspPoint& p : plan.points) {
        nlohmann::ordered_json o;
        o["class"] = p.class_id;
        o["row"] = p.row;
        o["col"] = p.col;
        o["depth_m"] = p.depth_m;
        arr.push_back(o);
    }
    return arr;
}

} // namespace graspall::grasp
