#include "mvlabel/dataio.hpp"

#include "mvlabel/errors.hpp"
#include "mvlabel/rng.hpp"
#include "mvlabel/util.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

namespace mvlabel {

namespace {

using ojson = nlohmann::ordered_json;

bool is_blank(std::string_view line) {
    return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

double number_field(const nlohmann::json& obj, const char* key, const std::string& context,
                    long line) {
    if (!obj.contains(key) || !obj[key].is_number())
        throw ParseError(context, line, std::string("detection missing numeric \"") + key + "\"");
    const double v = obj[key].get<double>();
    if (!std::isfinite(v))
        throw ParseError(context, line, std::string("\"") + key + "\" is not finite");
    return v;
}

DetectionSet parse_frame_record(const nlohmann::json& rec, const std::string& context, long line,
                                bool scores_required, std::optional<double>* timestamp = nullptr) {
    if (!rec.is_object())
        throw ParseError(context, line, "record must be a JSON object");
    if (!rec.contains("frame_id") || !rec["frame_id"].is_string())
        throw ParseError(context, line, "record missing string \"frame_id\"");
    DetectionSet set;
    set.frame_id = rec["frame_id"].get<std::string>();
    if (set.frame_id.empty())
        throw ParseError(context, line, "frame_id must be non-empty");
    if (timestamp && rec.contains("timestamp")) {
        if (!rec["timestamp"].is_number())
            throw ParseError(context, line, "\"timestamp\" must be a number (seconds)");
        *timestamp = rec["timestamp"].get<double>();
    }
    if (!rec.contains("detections") || !rec["detections"].is_array())
        throw ParseError(context, line, "record missing array \"detections\"");

    std::set<std::pair<double, double>> seen;
    for (const auto& d : rec["detections"]) {
        if (!d.is_object())
            throw ParseError(context, line, "detections entries must be objects");
        Detection det;
        det.location.x = number_field(d, "x", context, line);
        det.location.y = number_field(d, "y", context, line);
        if (d.contains("score")) {
            if (!d["score"].is_number())
                throw ParseError(context, line, "\"score\" must be a number");
            det.score = d["score"].get<double>();
        } else if (scores_required) {
            throw ParseError(context, line, "detection missing numeric \"score\"");
        } else {
            det.score = 1.0;
        }
        if (!std::isfinite(det.score) || det.score < 0.0 || det.score > 1.0)
            throw ParseError(context, line, "score must lie in [0, 1]");
        if (!scores_required && det.score != 1.0)
            throw ParseError(context, line,
                             "annotation scores must be 1.0 (is this a detections file?)");
        if (!seen.insert({det.location.x, det.location.y}).second) {
            std::ostringstream msg;
            msg << "frame \"" << set.frame_id << "\" has two detections at identical coordinates ("
                << det.location.x << ", " << det.location.y << ")";
            throw ParseError(context, line, msg.str());
        }
        set.detections.push_back(det);
    }
    return set;
}

struct FrameRecord {
    DetectionSet set;
    std::optional<double> timestamp;
};

std::vector<FrameRecord> decode_jsonl(std::string_view text, const std::string& context,
                                      bool scores_required) {
    std::vector<FrameRecord> frames;
    std::unordered_set<std::string> frame_ids;
    size_t pos = 0;
    long line_no = 0;
    while (pos < text.size()) {
        size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (is_blank(line)) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(context, line_no, std::string("invalid JSON: ") + e.what());
        }
        FrameRecord record;
        record.set = parse_frame_record(rec, context, line_no, scores_required, &record.timestamp);
        if (!frame_ids.insert(record.set.frame_id).second)
            throw DuplicateFrameError(context, line_no, record.set.frame_id);
        frames.push_back(std::move(record));
    }
    return frames;
}

} // namespace

std::vector<DetectionSet> decode_detections(std::string_view text, const std::string& context) {
    std::vector<DetectionSet> out;
    for (FrameRecord& record : decode_jsonl(text, context, /*scores_required=*/true))
        out.push_back(std::move(record.set));
    return out;
}

std::vector<DetectionSet> read_detections(const std::filesystem::path& path) {
    return decode_detections(read_file(path), path.string());
}

std::string encode_detections(std::span<const DetectionSet> frames) {
    std::string out;
    for (const DetectionSet& frame : frames) {
        ojson rec;
        rec["frame_id"] = frame.frame_id;
        ojson dets = ojson::array();
        for (const Detection& d : frame.detections) {
            ojson obj;
            obj["x"] = d.location.x;
            obj["y"] = d.location.y;
            obj["score"] = d.score;
            dets.push_back(std::move(obj));
        }
        rec["detections"] = std::move(dets);
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void write_detections(const std::filesystem::path& path, std::span<const DetectionSet> frames) {
    atomic_write_file(path, encode_detections(frames));
}

AnnotationFormat parse_annotation_format(const std::string& name) {
    if (name == "canonical") return AnnotationFormat::Canonical;
    if (name == "wildtrack-json") return AnnotationFormat::WildtrackJson;
    if (name == "multiviewx-json") return AnnotationFormat::MultiviewxJson;
    throw ConfigError("unknown annotation format \"" + name +
                      "\" (expected canonical|wildtrack-json|multiviewx-json)");
}

namespace {

// Assumed positionID decoding for the upstream per-frame JSON layouts:
// row-major index on a 2.5 cm grid anchored at our preset origin (0, 0);
// WILDTRACK uses 480 columns along x, MultiviewX 640. Validated against
// synthetic fixtures only; see README.
struct PositionGrid {
    int x_cells;
    int y_cells;
    double step = 0.025;
};

std::vector<AnnotatedFrame> parse_position_id_dir(const std::filesystem::path& dir,
                                                  const PositionGrid& pg) {
    if (!std::filesystem::is_directory(dir))
        throw ParseError(dir.string(), 0, "expected a directory of per-frame JSON files");
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<AnnotatedFrame> frames;
    for (const auto& file : files) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(file.string(), 0, std::string("invalid JSON: ") + e.what());
        }
        if (!doc.is_array())
            throw ParseError(file.string(), 0, "expected a JSON array of person records");
        AnnotatedFrame frame;
        frame.frame_id = file.stem().string();
        frame.gts.frame_id = frame.frame_id;
        std::set<long> seen;
        for (const auto& rec : doc) {
            if (!rec.is_object() || !rec.contains("positionID") ||
                !rec["positionID"].is_number_integer())
                throw ParseError(file.string(), 0, "person record missing integer positionID");
            const long pid = rec["positionID"].get<long>();
            if (pid < 0 || pid >= static_cast<long>(pg.x_cells) * pg.y_cells)
                throw ParseError(file.string(), 0,
                                 "positionID " + std::to_string(pid) + " outside [0, " +
                                     std::to_string(static_cast<long>(pg.x_cells) * pg.y_cells) +
                                     ")");
            if (!seen.insert(pid).second)
                throw ParseError(file.string(), 0,
                                 "duplicate positionID " + std::to_string(pid) + " within frame");
            Detection det;
            det.location.x = pg.step * static_cast<double>(pid % pg.x_cells);
            det.location.y = pg.step * static_cast<double>(pid / pg.x_cells);
            det.score = 1.0;
            frame.gts.detections.push_back(det);
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

void check_units(const std::vector<AnnotatedFrame>& frames, const GroundGrid& grid,
                 const std::string& context) {
    long total = 0;
    long out_of_bounds = 0;
    for (const AnnotatedFrame& frame : frames) {
        for (const Detection& det : frame.gts.detections) {
            ++total;
            if (!grid.contains(det.location)) ++out_of_bounds;
        }
    }
    if (total > 0 && out_of_bounds * 10 > total) {
        std::ostringstream msg;
        msg << context << ": " << out_of_bounds << " of " << total
            << " annotations fall outside the declared grid (>10%); check units and origin";
        throw UnitError(msg.str());
    }
}

} // namespace

std::vector<AnnotatedFrame> parse_annotations(const std::filesystem::path& path,
                                              AnnotationFormat format,
                                              const std::optional<GroundGrid>& grid) {
    std::vector<AnnotatedFrame> frames;
    switch (format) {
    case AnnotationFormat::Canonical: {
        auto records = decode_jsonl(read_file(path), path.string(), /*scores_required=*/false);
        frames.reserve(records.size());
        for (FrameRecord& record : records) {
            AnnotatedFrame frame;
            frame.frame_id = record.set.frame_id;
            frame.gts = std::move(record.set);
            frame.timestamp = record.timestamp;
            frames.push_back(std::move(frame));
        }
        break;
    }
    case AnnotationFormat::WildtrackJson:
        frames = parse_position_id_dir(path, {480, 1440});
        break;
    case AnnotationFormat::MultiviewxJson:
        frames = parse_position_id_dir(path, {640, 1000});
        break;
    }
    if (grid) check_units(frames, *grid, path.string());
    return frames;
}

void write_annotations(const std::filesystem::path& path, std::span<const AnnotatedFrame> frames) {
    std::string out;
    for (const AnnotatedFrame& frame : frames) {
        ojson rec;
        rec["frame_id"] = frame.frame_id;
        if (frame.timestamp) rec["timestamp"] = *frame.timestamp;
        ojson dets = ojson::array();
        for (const Detection& d : frame.gts.detections) {
            ojson obj;
            obj["x"] = d.location.x;
            obj["y"] = d.location.y;
            obj["score"] = d.score;
            dets.push_back(std::move(obj));
        }
        rec["detections"] = std::move(dets);
        out += rec.dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

const char* split_class_name(SplitClass c) {
    switch (c) {
    case SplitClass::Train: return "train";
    case SplitClass::Val: return "val";
    case SplitClass::Test: return "test";
    }
    return "?";
}

SplitClass parse_split_class(const std::string& name) {
    if (name == "train") return SplitClass::Train;
    if (name == "val") return SplitClass::Val;
    if (name == "test") return SplitClass::Test;
    throw ConfigError("unknown split class \"" + name + "\" (expected train|val|test)");
}

DatasetManifest::DatasetManifest(std::string name_, GroundGrid grid_)
    : name(std::move(name_)), grid(grid_) {}

std::vector<std::string> DatasetManifest::frames_in_split(std::optional<SplitClass> filter) const {
    std::vector<std::string> out;
    for (const ManifestFrame& frame : frames) {
        if (filter) {
            auto it = split.find(frame.frame_id);
            if (it == split.end() || it->second != *filter) continue;
        }
        out.push_back(frame.frame_id);
    }
    return out;
}

std::filesystem::path DatasetManifest::resolve(const std::string& path,
                                               const std::string& data_root) const {
    return resolve_path(path, data_root, base_dir);
}

DatasetManifest read_manifest(const std::filesystem::path& path, const std::string& data_root) {
    const std::string context = path.string();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(context, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError(context, 0, "manifest must be a JSON object");
    if (!doc.contains("name") || !doc["name"].is_string())
        throw ParseError(context, 0, "manifest missing string \"name\"");
    if (!doc.contains("grid"))
        throw ParseError(context, 0, "manifest missing \"grid\"");

    DatasetManifest manifest(doc["name"].get<std::string>(), grid_from_json(doc["grid"], context));
    manifest.base_dir = path.parent_path();
    manifest.source_path = path;

    if (doc.contains("cameras")) {
        if (!doc["cameras"].is_array())
            throw ParseError(context, 0, "\"cameras\" must be an array");
        for (const auto& cam : doc["cameras"]) {
            if (cam.is_string()) {
                const auto cam_path =
                    resolve_path(cam.get<std::string>(), data_root, manifest.base_dir);
                manifest.cameras.push_back(CameraCalibration::from_json_file(cam_path));
            } else {
                manifest.cameras.push_back(CameraCalibration::from_json(cam, context));
            }
        }
    }

    if (!doc.contains("frames") || !doc["frames"].is_array())
        throw ParseError(context, 0, "manifest missing array \"frames\"");
    std::unordered_set<std::string> ids;
    for (const auto& fr : doc["frames"]) {
        if (!fr.is_object() || !fr.contains("frame_id") || !fr["frame_id"].is_string())
            throw ParseError(context, 0, "frame records need a string \"frame_id\"");
        ManifestFrame frame;
        frame.frame_id = fr["frame_id"].get<std::string>();
        if (frame.frame_id.empty())
            throw ParseError(context, 0, "frame_id must be non-empty");
        if (!ids.insert(frame.frame_id).second)
            throw DuplicateFrameError(context, 0, frame.frame_id);
        if (fr.contains("images")) {
            if (!fr["images"].is_object())
                throw ParseError(context, 0, "frame \"images\" must be an object");
            for (const auto& [cam_id, img] : fr["images"].items()) {
                if (!img.is_string())
                    throw ParseError(context, 0, "image paths must be strings");
                frame.images[cam_id] = img.get<std::string>();
            }
        }
        manifest.frames.push_back(std::move(frame));
    }

    if (doc.contains("annotations")) {
        if (!doc["annotations"].is_string())
            throw ParseError(context, 0, "\"annotations\" must be a path string");
        manifest.annotations = doc["annotations"].get<std::string>();
    }

    if (doc.contains("split")) {
        if (!doc["split"].is_object())
            throw ParseError(context, 0, "\"split\" must be an object");
        for (const auto& [frame_id, cls] : doc["split"].items()) {
            if (!cls.is_string())
                throw ParseError(context, 0, "split classes must be strings");
            if (!ids.count(frame_id))
                throw ParseError(context, 0, "split references unknown frame \"" + frame_id + "\"");
            try {
                manifest.split[frame_id] = parse_split_class(cls.get<std::string>());
            } catch (const ConfigError& e) {
                throw ParseError(context, 0, e.what());
            }
        }
        if (manifest.split.size() != manifest.frames.size())
            throw ParseError(context, 0, "split must cover every frame exactly once");
    }
    return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    ojson doc;
    doc["name"] = manifest.name;
    doc["grid"] = grid_to_json(manifest.grid);
    ojson cams = ojson::array();
    for (const CameraCalibration& cam : manifest.cameras) cams.push_back(cam.to_json());
    doc["cameras"] = std::move(cams);
    ojson frames = ojson::array();
    for (const ManifestFrame& frame : manifest.frames) {
        ojson fr;
        fr["frame_id"] = frame.frame_id;
        if (!frame.images.empty()) fr["images"] = frame.images;
        frames.push_back(std::move(fr));
    }
    doc["frames"] = std::move(frames);
    if (manifest.annotations) doc["annotations"] = *manifest.annotations;
    if (!manifest.split.empty()) {
        ojson split;
        for (const ManifestFrame& frame : manifest.frames) {
            auto it = manifest.split.find(frame.frame_id);
            if (it != manifest.split.end()) split[frame.frame_id] = split_class_name(it->second);
        }
        doc["split"] = std::move(split);
    }
    atomic_write_file(path, doc.dump(2) + "\n");
}

void split_dataset(DatasetManifest& manifest, const SplitRatios& ratios, SplitOrdering ordering,
                   std::uint64_t seed) {
    const double sum = ratios.train + ratios.val + ratios.test;
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 || std::abs(sum - 1.0) > 1e-9) {
        std::ostringstream msg;
        msg << "split ratios (" << ratios.train << ", " << ratios.val << ", " << ratios.test
            << ") must be non-negative and sum to 1";
        throw InvalidRatiosError(msg.str());
    }
    const long n = static_cast<long>(manifest.frames.size());
    const long n_val = static_cast<long>(std::floor(n * ratios.val));
    const long n_test = static_cast<long>(std::floor(n * ratios.test));
    const long n_train = n - n_val - n_test;
    auto require_nonempty = [&](double ratio, long count, const char* name) {
        if (ratio > 0 && count == 0)
            throw InvalidRatiosError(std::string("split class ") + name +
                                     " would receive zero frames");
    };
    require_nonempty(ratios.train, n_train, "train");
    require_nonempty(ratios.val, n_val, "val");
    require_nonempty(ratios.test, n_test, "test");

    std::vector<size_t> order(manifest.frames.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (ordering == SplitOrdering::Seeded) {
        Xoshiro256ss rng(seed);
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(rng.next() % i);
            std::swap(order[i - 1], order[j]);
        }
    }

    manifest.split.clear();
    for (long k = 0; k < n; ++k) {
        SplitClass cls = SplitClass::Train;
        if (k >= n_train + n_val)
            cls = SplitClass::Test;
        else if (k >= n_train)
            cls = SplitClass::Val;
        manifest.split[manifest.frames[order[static_cast<size_t>(k)]].frame_id] = cls;
    }
}

} // namespace mvlabel
