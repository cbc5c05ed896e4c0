#ifndef MVLABEL_SIMULATOR_HPP
#define MVLABEL_SIMULATOR_HPP

#include "mvlabel/dataio.hpp"
#include "mvlabel/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mvlabel {

// Synthetic ground-plane scene: per frame the person count is
// Poisson(mean_people) clipped to what min_separation lets the area hold,
// positions are uniform with pairwise separation enforced by rejection
// sampling. Fully determined by the seed.
struct SceneParams {
    GroundGrid grid;
    int n_frames = 0;
    double mean_people = 0.0;
    double min_separation = 0.0; // meters; 0 disables the constraint
    std::uint64_t seed = 0;
};

// Draw order per frame (part of the reproducibility contract; see rng.hpp):
// 1 uniform for the count, then 2 uniforms per placement attempt.
std::vector<AnnotatedFrame> gen_scene(const SceneParams& params);

// Synthetic detector: drops each ground truth with p_miss, jitters
// survivors with isotropic Gaussian noise, and adds Poisson(fp_per_frame)
// false positives uniform in the given area. Jittered detections may leave
// the area; they are kept.
struct NoiseModel {
    double p_miss = 0.0;
    double fp_per_frame = 0.0;
    double loc_sigma = 0.0; // meters, per axis
    bool uniform_scores = false;
    double score_lo = 1.0;
    double score_hi = 1.0;
};

// Draw order per frame: 1 uniform for the false-positive count; per false
// positive 2 uniforms for the position (+1 for the score under uniform
// scoring); then per ground truth 1 uniform miss flip and, for survivors,
// one Box-Muller pair for the jitter (consumed even when loc_sigma is 0,
// so the stream layout does not depend on parameter values) followed by
// the score draw under uniform scoring.
std::vector<DetectionSet> simulate_detector(std::span<const AnnotatedFrame> frames,
                                            const NoiseModel& noise, const GroundGrid& area,
                                            std::uint64_t seed);

} // namespace mvlabel

#endif
