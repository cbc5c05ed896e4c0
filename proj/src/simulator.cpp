#include "mvlabel/simulator.hpp"

#include "mvlabel/errors.hpp"
#include "mvlabel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mvlabel {

namespace {

std::string frame_name(int index, int n_frames) {
    int width = 4;
    for (int v = n_frames - 1; v >= 10000 && width < 10; v /= 10) ++width;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%0*d", width, index);
    return buf;
}

// Disk-packing bound: points with pairwise separation d own disjoint disks
// of radius d/2, and disk packings cover at most ~90.7% of the plane. Half
// of that keeps rejection sampling comfortable.
long packing_cap(const GroundGrid& grid, double min_sep) {
    if (min_sep <= 0.0) return std::numeric_limits<long>::max() / 2;
    const double area = grid.extent_x() * grid.extent_y();
    const double per_point = M_PI * 0.25 * min_sep * min_sep;
    return static_cast<long>(std::floor(0.5 * 0.9069 * area / per_point));
}

bool strictly_inside(const WorldPoint& p, const GroundGrid& grid) {
    return p.x > grid.origin().x && p.x < grid.origin().x + grid.extent_x() &&
           p.y > grid.origin().y && p.y < grid.origin().y + grid.extent_y();
}

} // namespace

std::vector<AnnotatedFrame> gen_scene(const SceneParams& params) {
    if (params.n_frames <= 0) throw ConfigError("n_frames must be positive");
    if (!(params.mean_people >= 0.0)) throw ConfigError("mean_people must be >= 0");
    if (params.min_separation < 0.0) throw ConfigError("min_separation must be >= 0");

    const long cap = packing_cap(params.grid, params.min_separation);
    if (params.mean_people > static_cast<double>(cap)) {
        std::ostringstream msg;
        msg << "mean_people " << params.mean_people << " with min_separation "
            << params.min_separation << " m exceeds what the " << params.grid.extent_x() << "x"
            << params.grid.extent_y() << " m area can hold (~" << cap << ")";
        throw InfeasibleSceneError(msg.str());
    }
    const int poisson_cap = static_cast<int>(
        std::min<double>(std::ceil(params.mean_people + 12.0 * std::sqrt(params.mean_people) + 20.0),
                         1e9));

    Xoshiro256ss rng(params.seed);
    std::vector<AnnotatedFrame> frames;
    frames.reserve(static_cast<size_t>(params.n_frames));
    for (int f = 0; f < params.n_frames; ++f) {
        AnnotatedFrame frame;
        frame.frame_id = frame_name(f, params.n_frames);
        frame.gts.frame_id = frame.frame_id;

        long count = rng.poisson(params.mean_people, poisson_cap);
        count = std::min(count, cap);

        std::vector<WorldPoint> points;
        long attempts_left = 1000 + 400 * count;
        while (static_cast<long>(points.size()) < count) {
            if (attempts_left-- <= 0) {
                std::ostringstream msg;
                msg << "frame " << frame.frame_id << ": placed " << points.size() << " of " << count
                    << " people before exhausting the retry budget (min_separation "
                    << params.min_separation << " m)";
                throw InfeasibleSceneError(msg.str());
            }
            WorldPoint p;
            p.x = params.grid.origin().x + rng.uniform01() * params.grid.extent_x();
            p.y = params.grid.origin().y + rng.uniform01() * params.grid.extent_y();
            if (!strictly_inside(p, params.grid)) continue;
            bool ok = true;
            if (params.min_separation > 0.0) {
                for (const WorldPoint& q : points) {
                    if (distance(p, q) < params.min_separation) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;
            points.push_back(p);
        }
        for (const WorldPoint& p : points) frame.gts.detections.push_back({p, 1.0});
        frames.push_back(std::move(frame));
    }
    return frames;
}

std::vector<DetectionSet> simulate_detector(std::span<const AnnotatedFrame> frames,
                                            const NoiseModel& noise, const GroundGrid& area,
                                            std::uint64_t seed) {
    if (noise.p_miss < 0.0 || noise.p_miss > 1.0) throw ConfigError("p_miss must be in [0, 1]");
    if (noise.fp_per_frame < 0.0) throw ConfigError("fp_per_frame must be >= 0");
    if (noise.loc_sigma < 0.0) throw ConfigError("loc_sigma must be >= 0");
    if (noise.uniform_scores &&
        (noise.score_lo < 0.0 || noise.score_hi > 1.0 || noise.score_lo > noise.score_hi))
        throw ConfigError("uniform score range must satisfy 0 <= lo <= hi <= 1");

    const int fp_cap = static_cast<int>(
        std::ceil(noise.fp_per_frame + 12.0 * std::sqrt(noise.fp_per_frame) + 20.0));

    Xoshiro256ss rng(seed);
    std::vector<DetectionSet> out;
    out.reserve(frames.size());
    for (const AnnotatedFrame& frame : frames) {
        DetectionSet dets;
        dets.frame_id = frame.frame_id;

        // False positives first (count, then positions), then per-GT flips.
        const int n_fp = rng.poisson(noise.fp_per_frame, fp_cap);
        for (int k = 0; k < n_fp; ++k) {
            Detection d;
            d.location.x = area.origin().x + rng.uniform01() * area.extent_x();
            d.location.y = area.origin().y + rng.uniform01() * area.extent_y();
            d.score = noise.uniform_scores ? rng.uniform(noise.score_lo, noise.score_hi) : 1.0;
            dets.detections.push_back(d);
        }

        for (const Detection& gt : frame.gts.detections) {
            const double flip = rng.uniform01();
            if (flip < noise.p_miss) continue;
            Detection d = gt;
            const auto [dx, dy] = rng.normal_pair();
            d.location.x += dx * noise.loc_sigma;
            d.location.y += dy * noise.loc_sigma;
            d.score = noise.uniform_scores ? rng.uniform(noise.score_lo, noise.score_hi) : 1.0;
            dets.detections.push_back(d);
        }
        out.push_back(std::move(dets));
    }
    return out;
}

} // namespace mvlabel
