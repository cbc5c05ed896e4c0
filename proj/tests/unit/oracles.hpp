#ifndef MVLABEL_TEST_ORACLES_HPP
#define MVLABEL_TEST_ORACLES_HPP

// Independent reference implementations used only by tests. These stay
// deliberately naive (exhaustive enumeration, dense double loops) so the
// production algorithms are checked against a different computational
// route.

#include "mvlabel/geometry.hpp"
#include "mvlabel/heatmap.hpp"

#include <algorithm>
#include <vector>

namespace mvtest {

struct BruteMatchResult {
    int cardinality = 0;
    double total_distance = 0.0;
};

// Enumerates every injective partial assignment of detections to ground
// truths with pairwise distance <= radius; maximizes cardinality, then
// minimizes total distance. Exponential; keep inputs small (<= ~7x7).
inline BruteMatchResult brute_force_match(const mvlabel::DetectionSet& dets,
                                          const mvlabel::DetectionSet& gts, double radius) {
    const int nd = static_cast<int>(dets.detections.size());
    const int ng = static_cast<int>(gts.detections.size());
    std::vector<std::vector<double>> dist(nd, std::vector<double>(ng));
    for (int i = 0; i < nd; ++i)
        for (int j = 0; j < ng; ++j)
            dist[i][j] =
                mvlabel::distance(dets.detections[i].location, gts.detections[j].location);

    BruteMatchResult best;
    best.cardinality = -1;
    std::vector<char> used(ng, 0);

    auto consider = [&](int card, double total) {
        if (card > best.cardinality ||
            (card == best.cardinality && total < best.total_distance)) {
            best.cardinality = card;
            best.total_distance = total;
        }
    };

    // Recurse over detections: match det i to any free in-radius gt, or skip.
    auto rec = [&](auto&& self, int i, int card, double total) -> void {
        if (i == nd) {
            consider(card, total);
            return;
        }
        self(self, i + 1, card, total); // leave detection i unmatched
        for (int j = 0; j < ng; ++j) {
            if (used[j] || dist[i][j] > radius) continue;
            used[j] = 1;
            self(self, i + 1, card + 1, total + dist[i][j]);
            used[j] = 0;
        }
    };
    rec(rec, 0, 0, 0.0);
    return best;
}

// Dense zero-padded 2D convolution, gather form: for every output cell,
// sum input * kernel over the window (ascending input order).
inline mvlabel::Heatmap naive_convolve(const mvlabel::Heatmap& input,
                                       const mvlabel::GaussianKernel& kernel) {
    const mvlabel::GroundGrid& grid = input.grid();
    mvlabel::Heatmap out(grid, input.frame_id());
    const int n_rows = grid.n_rows();
    const int n_cols = grid.n_cols();
    const int c = kernel.radius();
    for (int r = 0; r < n_rows; ++r) {
        for (int q = 0; q < n_cols; ++q) {
            double acc = 0.0;
            for (int u = -c; u <= c; ++u) {
                const int rr = r + u;
                if (rr < 0 || rr >= n_rows) continue;
                for (int v = -c; v <= c; ++v) {
                    const int cc = q + v;
                    if (cc < 0 || cc >= n_cols) continue;
                    acc += input.at(rr, cc) * kernel.at(c - u, c - v);
                }
            }
            out.at(r, q) = acc;
        }
    }
    return out;
}

// Checks the greedy-NMS contract: returned detections pairwise farther
// apart than the radius, and every above-threshold cell is either returned
// or within the radius of a returned detection with >= value.
inline bool nms_result_valid(const mvlabel::Heatmap& h, const mvlabel::DetectionSet& result,
                             double min_prob, double radius) {
    for (size_t a = 0; a < result.detections.size(); ++a)
        for (size_t b = a + 1; b < result.detections.size(); ++b)
            if (mvlabel::distance(result.detections[a].location,
                                  result.detections[b].location) <= radius)
                return false;

    const mvlabel::GroundGrid& grid = h.grid();
    for (int r = 0; r < grid.n_rows(); ++r) {
        for (int q = 0; q < grid.n_cols(); ++q) {
            const double v = h.at(r, q);
            if (v < min_prob) continue;
            const mvlabel::WorldPoint p = mvlabel::cell_to_world({r, q}, grid);
            bool covered = false;
            for (const mvlabel::Detection& det : result.detections) {
                const double dv = std::min(v, 1.0);
                if (mvlabel::distance(p, det.location) <= radius && det.score >= dv) {
                    covered = true;
                    break;
                }
                if (det.location.x == p.x && det.location.y == p.y) {
                    covered = true;
                    break;
                }
            }
            if (!covered) return false;
        }
    }
    return true;
}

} // namespace mvtest

#endif
