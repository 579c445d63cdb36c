#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "grasp.hpp"
#include "types.hpp"

namespace graspall::eval {

/// Mean-luma buckets used to stratify evaluation by illumination.
inline std::string band_key(double mean_luma) {
    static const char* keys[4] = {"0-30", "30-60", "60-90", "90-120"};
    int b = std::clamp(static_cast<int>(mean_luma / 30.0), 0, 3);
    return keys[b];
}

/// Dataset-level IoU: intersections and unions accumulate per class across
/// images; background (class 0) is excluded from the mean.
struct IouAccumulator {
    std::map<int, double> inter, uni;

    void add(const SemanticMask& pred, const SemanticMask& gt) {
        require(pred.width == gt.width && pred.height == gt.height,
                "IouAccumulator: size mismatch");
        for (int i = 0; i < pred.pixels(); ++i) {
            int p = pred.classes[i], g = gt.classes[i];
            if (p == 0 && g == 0) continue;
            if (p == g) {
                inter[p] += 1.0;
                uni[p] += 1.0;
            } else {
                if (p != 0) uni[p] += 1.0;
                if (g != 0) uni[g] += 1.0;
            }
        }
    }

    double miou() const {
        double sum = 0.0;
        int n = 0;
        for (const auto& [cls, u] : uni) {
            if (u <= 0.0) continue;
            auto it = inter.find(cls);
            sum += (it != inter.end() ? it->second : 0.0) / u;
            ++n;
        }
        return n > 0 ? sum / n : 0.0;
    }
};

/// Desk-scale grasp protocol: an attempt succeeds when the planned pixel
/// really belongs to the planned class and the planned depth is within 1 cm
/// of the true depth there.
struct GraspTally {
    int attempts = 0;
    int successes = 0;

    void add(const grasp::GraspPlan& plan, const SemanticMask& gt_mask, const DepthMap& gt_depth) {
        for (const auto& p : plan.points) {
            ++attempts;
            int i = p.row * gt_mask.width + p.col;
            bool class_ok = gt_mask.classes[i] == p.class_id;
            bool depth_ok = !gt_depth.is_hole(i) && std::abs(p.depth_m - gt_depth.depth[i]) < 0.01;
            if (class_ok && depth_ok) ++successes;
        }
    }

    double rate() const { return attempts > 0 ? static_cast<double>(successes) / attempts : 0.0; }
};

struct BandMetrics {
    IouAccumulator iou;
    GraspTally grasps;
    int images = 0;
};

struct EvalReport {
    IouAccumulator iou;
    GraspTally grasps;
    std::map<std::string, BandMetrics> bands;

    void add(double mean_luma, const SemanticMask& pred, const SemanticMask& gt,
             const grasp::GraspPlan& plan, const DepthMap& gt_depth) {
        iou.add(pred, gt);
        grasps.add(plan, gt, gt_depth);
        BandMetrics& b = bands[band_key(mean_luma)];
        b.iou.add(pred, gt);
        b.grasps.add(plan, gt, gt_depth);
        b.images += 1;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["mIoU"] = iou.miou();
        j["mGSR"] = grasps.rate();
        j["grasp_attempts"] = grasps.attempts;
        nlohmann::ordered_json jb;
        for (const char* key : {"0-30", "30-60", "60-90", "90-120"}) {
            auto it = bands.find(key);
            nlohmann::ordered_json e;
            if (it == bands.end()) {
                e["images"] = 0;
            } else {
                e["images"] = it->second.images;
                e["mIoU"] = it->second.iou.miou();
                e["mGSR"] = it->second.grasps.rate();
            }
            jb[key] = e;
        }
        j["bands"] = jb;
        return j;
    }
};

} // namespace graspall::eval
