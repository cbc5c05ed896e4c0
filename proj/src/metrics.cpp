#include "mvlabel/metrics.hpp"

#include "mvlabel/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mvlabel {

namespace {

// Minimum-cost perfect assignment on a square cost matrix (shortest
// augmenting paths with potentials, O(n^3)). Column n acts as the virtual
// start column; p[j] is the row assigned to column j, n meaning none.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(n) + 1, n);
    std::vector<int> way(static_cast<size_t>(n) + 1, n);
    for (int i = 0; i < n; ++i) {
        p[n] = i;
        int j0 = n;
        std::vector<double> minv(static_cast<size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<size_t>(n) + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = -1;
            double delta = inf;
            for (int j = 0; j < n; ++j) {
                if (used[j]) continue;
                const double cur = cost[static_cast<size_t>(i0) * n + j] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != n);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != n);
    }
    std::vector<int> row_to_col(static_cast<size_t>(n), -1);
    for (int j = 0; j < n; ++j)
        if (p[j] != n) row_to_col[p[j]] = j;
    return row_to_col;
}

} // namespace

FrameMatching match_frame(const DetectionSet& dets, const DetectionSet& gts, double radius_m) {
    if (!(radius_m > 0.0)) throw ConfigError("match radius must be > 0");

    const int nd = static_cast<int>(dets.detections.size());
    const int ng = static_cast<int>(gts.detections.size());
    FrameMatching out;
    if (nd == 0 || ng == 0) {
        for (int i = 0; i < nd; ++i) out.fp_indices.push_back(i);
        for (int j = 0; j < ng; ++j) out.fn_indices.push_back(j);
        return out;
    }

    // Square matrix padded with a prohibitive cost. Any matching with one
    // more in-radius pair beats any with fewer, because k feasible pairs
    // cost at most k*radius < radius*(n+1); so the min-cost solution has
    // maximum cardinality and, within that, minimum total distance. The
    // tiny per-detection-index term breaks exact ties toward low indices
    // without disturbing distances at meaningful precision.
    const int n = std::max(nd, ng);
    const double big = radius_m * (n + 1);
    const double tie_eps = radius_m * 1e-13;
    std::vector<double> cost(static_cast<size_t>(n) * n, big);
    for (int i = 0; i < nd; ++i) {
        for (int j = 0; j < ng; ++j) {
            const double d = distance(dets.detections[i].location, gts.detections[j].location);
            if (d <= radius_m) cost[static_cast<size_t>(i) * n + j] = d + tie_eps * i;
        }
    }

    const std::vector<int> row_to_col = solve_assignment(cost, n);
    std::vector<char> gt_matched(static_cast<size_t>(ng), 0);
    for (int i = 0; i < nd; ++i) {
        const int j = row_to_col[i];
        bool matched = false;
        if (j >= 0 && j < ng) {
            const double d = distance(dets.detections[i].location, gts.detections[j].location);
            if (d <= radius_m) {
                out.pairs.push_back({i, j, d});
                gt_matched[j] = 1;
                matched = true;
            }
        }
        if (!matched) out.fp_indices.push_back(i);
    }
    for (int j = 0; j < ng; ++j)
        if (!gt_matched[j]) out.fn_indices.push_back(j);
    return out;
}

namespace {

// One ratio convention for all degenerate denominators: an undefined ratio
// with nothing measured reports 1.0 and raises a flag. MODA is the
// exception (see evaluate).
double vacuous_ratio(double num, double den, bool* vacuous) {
    if (den > 0) return num / den;
    if (vacuous) *vacuous = true;
    return 1.0;
}

void fill_frame_metrics(FrameStats& f, double /*radius_m*/) {
    if (f.n_gt > 0) {
        f.moda = 1.0 - static_cast<double>(f.fn + f.fp) / static_cast<double>(f.n_gt);
        f.moda_defined = true;
    } else if (f.fp == 0) {
        f.moda = 1.0;
        f.moda_defined = true;
    } else {
        f.moda = -std::numeric_limits<double>::infinity();
        f.moda_defined = false;
    }
    f.modp = vacuous_ratio(f.matched_quality_sum, static_cast<double>(f.tp), nullptr);
    f.precision = vacuous_ratio(static_cast<double>(f.tp), static_cast<double>(f.tp + f.fp), nullptr);
    f.recall = vacuous_ratio(static_cast<double>(f.tp), static_cast<double>(f.n_gt), nullptr);
}

} // namespace

EvalReport evaluate(std::span<const FramePair> frames, double radius_m) {
    if (!(radius_m > 0.0)) throw ConfigError("match radius must be > 0");
    if (frames.empty()) throw ConfigError("evaluation requires at least one frame");

    EvalReport report;
    double quality_sum = 0.0;
    long n_det = 0;
    for (const FramePair& frame : frames) {
        const FrameMatching m = match_frame(frame.dets, frame.gts, radius_m);
        FrameStats f;
        f.frame_id = frame.frame_id;
        f.tp = static_cast<long>(m.pairs.size());
        f.fp = static_cast<long>(m.fp_indices.size());
        f.fn = static_cast<long>(m.fn_indices.size());
        f.n_gt = static_cast<long>(frame.gts.detections.size());
        for (const MatchedPair& pair : m.pairs)
            f.matched_quality_sum += 1.0 - pair.distance_m / radius_m;
        fill_frame_metrics(f, radius_m);

        report.tp += f.tp;
        report.fp += f.fp;
        report.fn += f.fn;
        report.n_gt += f.n_gt;
        quality_sum += f.matched_quality_sum;
        n_det += static_cast<long>(frame.dets.detections.size());
        report.per_frame.push_back(std::move(f));
    }

    if (report.n_gt == 0 && n_det == 0) {
        report.moda = report.modp = report.precision = report.recall = 1.0;
        report.moda_defined = true;
        report.flags.push_back("empty_evaluation");
        return report;
    }

    if (report.n_gt > 0) {
        report.moda = 1.0 - static_cast<double>(report.fn + report.fp) /
                                static_cast<double>(report.n_gt);
        report.moda_defined = true;
    } else {
        // Detections but no ground truth anywhere: refusing to fabricate a
        // denominator, MODA stays undefined.
        report.moda = -std::numeric_limits<double>::infinity();
        report.moda_defined = false;
        report.flags.push_back("moda_undefined");
    }

    bool vac_modp = false, vac_precision = false, vac_recall = false;
    report.modp = vacuous_ratio(quality_sum, static_cast<double>(report.tp), &vac_modp);
    report.precision = vacuous_ratio(static_cast<double>(report.tp),
                                     static_cast<double>(report.tp + report.fp), &vac_precision);
    report.recall = vacuous_ratio(static_cast<double>(report.tp),
                                  static_cast<double>(report.n_gt), &vac_recall);
    if (vac_modp) report.flags.push_back("vacuous_modp");
    if (vac_precision) report.flags.push_back("vacuous_precision");
    if (vac_recall) report.flags.push_back("vacuous_recall");
    return report;
}

namespace {

nlohmann::ordered_json moda_json(double moda, bool defined) {
    if (defined) return moda;
    return "-inf"; // JSON has no -infinity; flagged via moda_undefined
}

} // namespace

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json doc;
    doc["moda"] = moda_json(report.moda, report.moda_defined);
    doc["modp"] = report.modp;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["tp"] = report.tp;
    doc["fp"] = report.fp;
    doc["fn"] = report.fn;
    doc["n_gt"] = report.n_gt;
    doc["flags"] = report.flags;
    nlohmann::ordered_json frames = nlohmann::ordered_json::array();
    for (const FrameStats& f : report.per_frame) {
        nlohmann::ordered_json fr;
        fr["frame_id"] = f.frame_id;
        fr["moda"] = moda_json(f.moda, f.moda_defined);
        fr["modp"] = f.modp;
        fr["precision"] = f.precision;
        fr["recall"] = f.recall;
        fr["tp"] = f.tp;
        fr["fp"] = f.fp;
        fr["fn"] = f.fn;
        fr["n_gt"] = f.n_gt;
        frames.push_back(std::move(fr));
    }
    doc["per_frame"] = std::move(frames);
    return doc;
}

EvalReport report_from_json(const nlohmann::json& doc, const std::string& context) {
    auto fail = [&](const std::string& msg) -> ParseError { return ParseError(context, 0, msg); };
    if (!doc.is_object()) throw fail("evaluation report must be a JSON object");
    auto read_counts = [&](const nlohmann::json& obj, long& tp, long& fp, long& fn, long& n_gt) {
        for (const char* key : {"tp", "fp", "fn", "n_gt"})
            if (!obj.contains(key) || !obj[key].is_number_integer())
                throw fail(std::string("report missing integer \"") + key + "\"");
        tp = obj["tp"].get<long>();
        fp = obj["fp"].get<long>();
        fn = obj["fn"].get<long>();
        n_gt = obj["n_gt"].get<long>();
    };
    auto read_moda = [&](const nlohmann::json& obj, double& moda, bool& defined) {
        if (!obj.contains("moda")) throw fail("report missing \"moda\"");
        if (obj["moda"].is_string()) {
            if (obj["moda"].get<std::string>() != "-inf")
                throw fail("moda string sentinel must be \"-inf\"");
            moda = -std::numeric_limits<double>::infinity();
            defined = false;
        } else if (obj["moda"].is_number()) {
            moda = obj["moda"].get<double>();
            defined = true;
        } else {
            throw fail("moda must be a number or the \"-inf\" sentinel");
        }
    };
    auto read_ratio = [&](const nlohmann::json& obj, const char* key) {
        if (!obj.contains(key) || !obj[key].is_number())
            throw fail(std::string("report missing numeric \"") + key + "\"");
        return obj[key].get<double>();
    };

    EvalReport report;
    read_counts(doc, report.tp, report.fp, report.fn, report.n_gt);
    read_moda(doc, report.moda, report.moda_defined);
    report.modp = read_ratio(doc, "modp");
    report.precision = read_ratio(doc, "precision");
    report.recall = read_ratio(doc, "recall");
    if (doc.contains("flags")) {
        if (!doc["flags"].is_array()) throw fail("\"flags\" must be an array");
        for (const auto& f : doc["flags"]) report.flags.push_back(f.get<std::string>());
    }
    if (doc.contains("per_frame")) {
        if (!doc["per_frame"].is_array()) throw fail("\"per_frame\" must be an array");
        for (const auto& fr : doc["per_frame"]) {
            FrameStats f;
            if (!fr.contains("frame_id") || !fr["frame_id"].is_string())
                throw fail("per-frame entries need a string \"frame_id\"");
            f.frame_id = fr["frame_id"].get<std::string>();
            read_counts(fr, f.tp, f.fp, f.fn, f.n_gt);
            read_moda(fr, f.moda, f.moda_defined);
            f.modp = read_ratio(fr, "modp");
            f.precision = read_ratio(fr, "precision");
            f.recall = read_ratio(fr, "recall");
            report.per_frame.push_back(std::move(f));
        }
    }
    return report;
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "frame_id,n_gt,n_det,tp,fp,fn,moda,modp,precision,recall\n";
    auto num = [](double v, bool defined) {
        if (!defined) return std::string("-inf");
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    for (const FrameStats& f : report.per_frame) {
        out << f.frame_id << ',' << f.n_gt << ',' << (f.tp + f.fp) << ',' << f.tp << ',' << f.fp
            << ',' << f.fn << ',' << num(f.moda, f.moda_defined) << ',' << num(f.modp, true) << ','
            << num(f.precision, true) << ',' << num(f.recall, true) << '\n';
    }
    return out.str();
}

} // namespace mvlabel
