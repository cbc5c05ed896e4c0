// Reference adapters for the mvlabel subprocess protocol, used by the test
// suite and as a starting point for wiring real detectors/trainers.
//
// Usage: mvlabel-mock-adapter <mode> [flags] <invocation.json>
//
// Detector modes (write to invocation.output_dir):
//   echo-detector     --annotations F [--omit ID]...  emit ground truth as detections
//   heatmap-detector  --annotations F                 emit MVHM label rasters instead
//   replay-detector                                   emit detections recorded in the
//                                                     model file (empty for unknown frames)
//   garbage-detector                                  emit an unparseable detections file
// Trainer modes:
//   memorize-trainer                                  model.bin = the training labels,
//                                                     canonical JSON-lines sorted by frame
// Failure modes (any role):
//   fail --exit-code N                                exit with code N
//   hang --seconds S                                  sleep, then exit 0

#include "mvlabel/dataio.hpp"
#include "mvlabel/errors.hpp"
#include "mvlabel/heatmap.hpp"
#include "mvlabel/util.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace {

using namespace mvlabel;

struct Invocation {
    nlohmann::json doc;
    std::filesystem::path output_dir;
    std::vector<std::string> frames;
    GroundGrid grid;
    std::string model; // empty when null/absent
};

Invocation load_invocation(const std::string& path) {
    nlohmann::json doc = nlohmann::json::parse(read_file(path));
    Invocation inv{doc, doc.at("output_dir").get<std::string>(), {},
                   grid_from_json(doc.at("grid"), path), {}};
    if (doc.contains("frames"))
        for (const auto& f : doc["frames"]) inv.frames.push_back(f.get<std::string>());
    if (doc.contains("model") && doc["model"].is_string())
        inv.model = doc["model"].get<std::string>();
    return inv;
}

std::map<std::string, DetectionSet> detections_by_frame(const std::filesystem::path& path) {
    std::map<std::string, DetectionSet> out;
    for (DetectionSet& set : read_detections(path)) {
        std::string id = set.frame_id;
        out.emplace(std::move(id), std::move(set));
    }
    return out;
}

int echo_detector(const Invocation& inv, const std::string& annotations,
                  const std::vector<std::string>& omit, bool as_heatmaps, int kernel_size,
                  double sigma) {
    const auto gt = detections_by_frame(annotations);
    std::vector<DetectionSet> frames;
    for (const std::string& frame_id : inv.frames) {
        if (std::find(omit.begin(), omit.end(), frame_id) != omit.end()) continue;
        DetectionSet set;
        set.frame_id = frame_id;
        auto it = gt.find(frame_id);
        if (it != gt.end()) set = it->second;
        frames.push_back(std::move(set));
    }
    if (as_heatmaps) {
        const GaussianKernel kernel(kernel_size, sigma, KernelNormalization::PeakOne);
        for (const DetectionSet& set : frames) {
            const Heatmap labels =
                label_pipeline(set, inv.grid, kernel, OutOfBoundsPolicy::Drop, nullptr);
            write_mvhm(inv.output_dir / (set.frame_id + ".mvhm"), labels);
        }
    } else {
        write_detections(inv.output_dir / "detections.jsonl", frames);
    }
    return 0;
}

int replay_detector(const Invocation& inv) {
    std::map<std::string, DetectionSet> recorded;
    if (!inv.model.empty()) recorded = detections_by_frame(inv.model);
    std::vector<DetectionSet> frames;
    for (const std::string& frame_id : inv.frames) {
        DetectionSet set;
        set.frame_id = frame_id;
        auto it = recorded.find(frame_id);
        if (it != recorded.end()) set = it->second;
        frames.push_back(std::move(set));
    }
    write_detections(inv.output_dir / "detections.jsonl", frames);
    return 0;
}

int memorize_trainer(const Invocation& inv) {
    const std::string manifest_path = inv.doc.at("training_manifest").get<std::string>();
    const nlohmann::json manifest = nlohmann::json::parse(read_file(manifest_path));
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    std::map<std::string, DetectionSet> memorized;
    std::map<std::string, std::map<std::string, DetectionSet>> file_cache;
    for (const auto& entry : manifest.at("entries")) {
        const std::string frame_id = entry.at("frame_id").get<std::string>();
        const auto& label = entry.at("label");
        if (!label.contains("detections") || label["detections"].is_null()) continue;
        std::string det_path = label["detections"].get<std::string>();
        if (!std::filesystem::path(det_path).is_absolute()) det_path = (base / det_path).string();
        auto& cache = file_cache[det_path];
        if (cache.empty()) cache = detections_by_frame(det_path);
        auto it = cache.find(frame_id);
        if (it == cache.end())
            throw Error(ErrorKind::Data,
                        "training manifest references frame \"" + frame_id +
                            "\" absent from " + det_path);
        memorized[frame_id] = it->second;
    }

    std::vector<DetectionSet> frames;
    for (auto& [frame_id, set] : memorized) frames.push_back(std::move(set));
    write_detections(inv.output_dir / "model.bin", frames);
    return 0;
}

int garbage_detector(const Invocation& inv) {
    atomic_write_file(inv.output_dir / "detections.jsonl", "this is { not json-lines\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty()) {
        std::cerr << "usage: mvlabel-mock-adapter <mode> [flags] <invocation.json>\n";
        return 64;
    }
    const std::string mode = args.front();
    args.erase(args.begin());

    std::string annotations;
    std::vector<std::string> omit;
    int exit_code = 1;
    double seconds = 1.0;
    int kernel_size = 41;
    double sigma = 5.0;
    std::vector<std::string> positional;
    for (size_t i = 0; i < args.size(); ++i) {
        auto next = [&](const char* flag) -> std::string {
            if (i + 1 >= args.size()) {
                std::cerr << flag << " needs a value\n";
                std::exit(64);
            }
            return args[++i];
        };
        if (args[i] == "--annotations")
            annotations = next("--annotations");
        else if (args[i] == "--omit")
            omit.push_back(next("--omit"));
        else if (args[i] == "--exit-code")
            exit_code = std::stoi(next("--exit-code"));
        else if (args[i] == "--seconds")
            seconds = std::stod(next("--seconds"));
        else if (args[i] == "--kernel-size")
            kernel_size = std::stoi(next("--kernel-size"));
        else if (args[i] == "--sigma")
            sigma = std::stod(next("--sigma"));
        else
            positional.push_back(args[i]);
    }

    if (mode == "fail") {
        std::cerr << "mock adapter failing on purpose\n";
        return exit_code;
    }
    if (mode == "hang") {
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        return 0;
    }

    if (positional.size() != 1) {
        std::cerr << "expected exactly one invocation path\n";
        return 64;
    }

    try {
        const Invocation inv = load_invocation(positional[0]);
        if (mode == "echo-detector")
            return echo_detector(inv, annotations, omit, false, kernel_size, sigma);
        if (mode == "heatmap-detector")
            return echo_detector(inv, annotations, omit, true, kernel_size, sigma);
        if (mode == "replay-detector") return replay_detector(inv);
        if (mode == "memorize-trainer") return memorize_trainer(inv);
        if (mode == "garbage-detector") return garbage_detector(inv);
        std::cerr << "unknown mode \"" << mode << "\"\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "mock adapter error: " << e.what() << "\n";
        return 70;
    }
}
