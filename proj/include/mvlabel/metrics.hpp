#ifndef MVLABEL_METRICS_HPP
#define MVLABEL_METRICS_HPP

#include "mvlabel/heatmap.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mvlabel {

struct MatchedPair {
    int det_index = 0;
    int gt_index = 0;
    double distance_m = 0.0;
};

// Result of matching one frame's detections against its ground truth.
// pairs is sorted by detection index; fp/fn indices are ascending.
struct FrameMatching {
    std::vector<MatchedPair> pairs;
    std::vector<int> fp_indices;
    std::vector<int> fn_indices;
};

// Hungarian assignment restricted to pairs within radius_m (inclusive).
// Maximizes the number of matched pairs; among maximum-cardinality
// matchings, minimizes total distance. Ties prefer lower detection
// indices.
FrameMatching match_frame(const DetectionSet& dets, const DetectionSet& gts, double radius_m);

struct FrameStats {
    std::string frame_id;
    long tp = 0, fp = 0, fn = 0, n_gt = 0;
    double matched_quality_sum = 0.0; // sum of (1 - d/radius) over pairs
    double moda = 0.0, modp = 0.0, precision = 0.0, recall = 0.0;
    bool moda_defined = true;
};

struct EvalReport {
    long tp = 0, fp = 0, fn = 0, n_gt = 0;
    double moda = 0.0, modp = 0.0, precision = 0.0, recall = 0.0;
    bool moda_defined = true;           // false => moda is the -inf sentinel
    std::vector<std::string> flags;     // empty_evaluation, moda_undefined, vacuous_*
    std::vector<FrameStats> per_frame;
};

struct FramePair {
    std::string frame_id;
    DetectionSet dets;
    DetectionSet gts;
};

// Micro-averaged aggregation over frames: counts are summed, then
//   MODA      = 1 - (FN + FP) / GT
//   MODP      = sum over matched pairs of (1 - d/radius), divided by TP
//   precision = TP / (TP + FP),  recall = TP / GT
// Degenerate cases: an evaluation with no ground truth and no detections
// reports every metric as 1.0 with an "empty_evaluation" flag; no ground
// truth with detections present leaves MODA undefined (-inf sentinel).
// Other vacuous ratios report 1.0 with a vacuous_* flag.
EvalReport evaluate(std::span<const FramePair> frames, double radius_m);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc, const std::string& context);
std::string report_to_csv(const EvalReport& report);

} // namespace mvlabel

#endif
