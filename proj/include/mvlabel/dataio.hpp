#ifndef MVLABEL_DATAIO_HPP
#define MVLABEL_DATAIO_HPP

#include "mvlabel/geometry.hpp"
#include "mvlabel/heatmap.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mvlabel {

// Canonical detection exchange format: JSON lines, one object per frame,
//   {"frame_id": "...", "detections": [{"x": m, "y": m, "score": s}, ...]}
// All coordinates in files are world meters, never cells. Annotations use
// the same schema with every score equal to 1.0 (the score key may be
// omitted). Exact duplicate coordinates within a frame and repeated
// frame_ids are parse errors.
std::vector<DetectionSet> decode_detections(std::string_view text, const std::string& context);
std::vector<DetectionSet> read_detections(const std::filesystem::path& path);
std::string encode_detections(std::span<const DetectionSet> frames);
void write_detections(const std::filesystem::path& path, std::span<const DetectionSet> frames);

struct AnnotatedFrame {
    std::string frame_id;
    DetectionSet gts; // scores fixed at 1.0
    std::optional<double> timestamp;
};

enum class AnnotationFormat { Canonical, WildtrackJson, MultiviewxJson };

AnnotationFormat parse_annotation_format(const std::string& name);

// Canonical: a JSON-lines file. Wildtrack/Multiviewx: a directory with one
// JSON array per frame whose records carry a positionID; see README for the
// assumed positionID decoding (neither dataset documents it in a paper).
// When a grid is supplied, more than 10% out-of-bounds records abort with
// UnitError (a units/origin mismatch, not noise).
std::vector<AnnotatedFrame> parse_annotations(const std::filesystem::path& path,
                                              AnnotationFormat format,
                                              const std::optional<GroundGrid>& grid = {});

void write_annotations(const std::filesystem::path& path, std::span<const AnnotatedFrame> frames);

enum class SplitClass { Train, Val, Test };

const char* split_class_name(SplitClass c);
SplitClass parse_split_class(const std::string& name);

struct SplitRatios {
    double train = 0.0;
    double val = 0.0;
    double test = 0.0;
};

enum class SplitOrdering { Sequential, Seeded };

struct ManifestFrame {
    std::string frame_id;
    std::map<std::string, std::string> images; // camera id -> image path
};

// Dataset description consumed by the orchestrator: grid, cameras, ordered
// frames (capture order), optional annotations file, optional split.
class DatasetManifest {
public:
    DatasetManifest(std::string name, GroundGrid grid);

    std::string name;
    GroundGrid grid;
    std::vector<CameraCalibration> cameras;
    std::vector<ManifestFrame> frames;
    std::optional<std::string> annotations; // path, possibly relative
    std::map<std::string, SplitClass> split;
    std::filesystem::path base_dir;    // directory of the manifest file
    std::filesystem::path source_path; // the manifest file itself, when read from disk

    std::vector<std::string> frames_in_split(std::optional<SplitClass> filter) const;
    std::filesystem::path resolve(const std::string& path, const std::string& data_root) const;
};

DatasetManifest read_manifest(const std::filesystem::path& path, const std::string& data_root);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Ratios must sum to 1 (1e-9 slack) and every nonzero ratio must receive at
// least one frame. Val/test counts are floored; the remainder goes to
// train. Sequential keeps capture order (train block, then val, then test);
// Seeded applies a deterministic Fisher-Yates shuffle first.
void split_dataset(DatasetManifest& manifest, const SplitRatios& ratios, SplitOrdering ordering,
                   std::uint64_t seed = 0);

} // namespace mvlabel

#endif
