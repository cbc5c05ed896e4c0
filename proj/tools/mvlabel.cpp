// mvlabel: ground-plane occupancy labeling, extraction, evaluation, and
// auto-labeling campaign orchestration for multi-view pedestrian detection.
//
// Exit codes: 0 success, 1 usage, 2 malformed input data, 3 adapter
// failure, 4 internal error. Machine output (JSON) goes to stdout or --out;
// human logs go to stderr.

#include "mvlabel/config.hpp"
#include "mvlabel/dataio.hpp"
#include "mvlabel/errors.hpp"
#include "mvlabel/geometry.hpp"
#include "mvlabel/heatmap.hpp"
#include "mvlabel/metrics.hpp"
#include "mvlabel/orchestrator.hpp"
#include "mvlabel/simulator.hpp"
#include "mvlabel/util.hpp"

#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace {

using namespace mvlabel;
using ojson = nlohmann::ordered_json;

void emit(const std::string& text, const std::string& out_path, const GlobalConfig& cfg) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    atomic_write_file(cfg.resolve(out_path), text);
}

int cmd_gen_labels(const GlobalConfig& cfg, const std::string& detections_path,
                   const std::string& out_dir_path, const std::string& oob_policy) {
    const OutOfBoundsPolicy policy =
        oob_policy == "drop" ? OutOfBoundsPolicy::Drop : OutOfBoundsPolicy::Reject;
    const auto frames = read_detections(cfg.resolve(detections_path));
    const auto out_dir = cfg.resolve(out_dir_path);
    std::filesystem::create_directories(out_dir);
    const GaussianKernel kernel = cfg.kernel();

    ojson manifest;
    manifest["grid"] = grid_to_json(cfg.grid);
    manifest["kernel"] = {{"size", cfg.kernel_size},
                          {"sigma", cfg.sigma},
                          {"normalization", kernel_normalization_name(cfg.normalization)}};
    ojson frames_json = ojson::array();
    int dropped_total = 0;
    for (const DetectionSet& set : frames) {
        require_safe_stem(set.frame_id, "frame id");
        int dropped = 0;
        const Heatmap labels = label_pipeline(set, cfg.grid, kernel, policy, &dropped);
        dropped_total += dropped;
        const std::string name = set.frame_id + ".mvhm";
        write_mvhm(out_dir / name, labels);
        frames_json.push_back({{"frame_id", set.frame_id}, {"heatmap", name}});
    }
    manifest["frames"] = std::move(frames_json);
    atomic_write_file(out_dir / "labels.json", manifest.dump(2) + "\n");
    if (dropped_total > 0)
        log(LogLevel::Warn,
            "dropped " + std::to_string(dropped_total) + " out-of-bounds detection(s)");
    log(LogLevel::Info, "wrote " + std::to_string(frames.size()) + " label raster(s) to " +
                            out_dir.string());
    return 0;
}

int cmd_extract(const GlobalConfig& cfg, const std::vector<std::string>& raster_paths,
                const std::string& out_path) {
    std::vector<DetectionSet> frames;
    frames.reserve(raster_paths.size());
    for (const std::string& path : raster_paths) {
        const Heatmap h = read_mvhm(cfg.resolve(path));
        frames.push_back(extract_locations(h, cfg.min_prob, cfg.nms_radius));
    }
    emit(encode_detections(frames), out_path, cfg);
    return 0;
}

int cmd_evaluate(const GlobalConfig& cfg, const std::string& detections_path,
                 const std::string& annotations_path, const std::string& ann_format,
                 const std::string& out_path, const std::string& csv_path) {
    const auto detections = read_detections(cfg.resolve(detections_path));
    const AnnotationFormat format = parse_annotation_format(ann_format);
    // The units check only makes sense for dataset-adapter formats, where a
    // decoding mismatch shows up as wildly out-of-grid coordinates.
    const std::optional<GroundGrid> units_grid =
        format == AnnotationFormat::Canonical ? std::optional<GroundGrid>{} : cfg.grid;
    const auto annotations = parse_annotations(cfg.resolve(annotations_path), format, units_grid);

    std::map<std::string, const DetectionSet*> det_by_frame;
    for (const DetectionSet& set : detections) det_by_frame[set.frame_id] = &set;
    std::set<std::string> ann_ids;
    for (const AnnotatedFrame& frame : annotations) ann_ids.insert(frame.frame_id);

    std::vector<std::string> missing_dets, missing_anns;
    for (const AnnotatedFrame& frame : annotations)
        if (!det_by_frame.count(frame.frame_id)) missing_dets.push_back(frame.frame_id);
    for (const DetectionSet& set : detections)
        if (!ann_ids.count(set.frame_id)) missing_anns.push_back(set.frame_id);
    if (!missing_dets.empty() || !missing_anns.empty()) {
        std::string msg = "frame sets differ between detections and annotations;";
        auto list = [&msg](const char* what, const std::vector<std::string>& ids) {
            if (ids.empty()) return;
            msg += std::string(" missing ") + what + ":";
            for (size_t i = 0; i < ids.size() && i < 10; ++i) msg += " " + ids[i];
            if (ids.size() > 10) msg += " (+" + std::to_string(ids.size() - 10) + " more)";
        };
        list("detections", missing_dets);
        list("annotations", missing_anns);
        throw Error(ErrorKind::Data, msg);
    }

    std::vector<FramePair> pairs;
    pairs.reserve(annotations.size());
    for (const AnnotatedFrame& frame : annotations)
        pairs.push_back({frame.frame_id, *det_by_frame.at(frame.frame_id), frame.gts});

    const EvalReport report = evaluate(pairs, cfg.match_radius);
    emit(report_to_json(report).dump(2) + "\n", out_path, cfg);
    if (!csv_path.empty()) atomic_write_file(cfg.resolve(csv_path), report_to_csv(report));
    return 0;
}

int cmd_project(const GlobalConfig& cfg, const std::string& detections_path,
                const std::string& calib_path, const std::string& camera_id,
                const std::string& out_path) {
    const auto frames = read_detections(cfg.resolve(detections_path));
    const CameraCalibration calib = CameraCalibration::from_json_file(cfg.resolve(calib_path));

    ojson out = ojson::array();
    for (const DetectionSet& set : frames) {
        ojson fr;
        fr["frame_id"] = set.frame_id;
        fr["camera"] = camera_id;
        ojson points = ojson::array();
        for (const Detection& det : set.detections) {
            ojson p;
            p["x"] = det.location.x;
            p["y"] = det.location.y;
            p["score"] = det.score;
            try {
                const PixelPoint pix = project_to_image(det.location, calib);
                p["u"] = pix.u;
                p["v"] = pix.v;
                p["behind_camera"] = false;
            } catch (const BehindCameraError&) {
                p["u"] = nullptr;
                p["v"] = nullptr;
                p["behind_camera"] = true;
            }
            points.push_back(std::move(p));
        }
        fr["points"] = std::move(points);
        out.push_back(std::move(fr));
    }
    emit(out.dump(2) + "\n", out_path, cfg);
    return 0;
}

struct SimulateArgs {
    std::string out_dir;
    int n_frames = 400;
    double mean_people = 23.8;
    double min_separation = 0.0;
    std::uint64_t seed = 0;
    double p_miss = 0.0;
    double fp_per_frame = 0.0;
    double loc_sigma = 0.0;
    std::string score_law = "fixed";
};

int cmd_simulate(const GlobalConfig& cfg, const SimulateArgs& args) {
    SceneParams params{cfg.grid, args.n_frames, args.mean_people, args.min_separation, args.seed};

    NoiseModel noise;
    noise.p_miss = args.p_miss;
    noise.fp_per_frame = args.fp_per_frame;
    noise.loc_sigma = args.loc_sigma;
    if (args.score_law != "fixed") {
        if (args.score_law.rfind("uniform:", 0) != 0)
            throw ConfigError("--score-law must be \"fixed\" or \"uniform:LO,HI\"");
        const std::string range = args.score_law.substr(8);
        const size_t comma = range.find(',');
        if (comma == std::string::npos)
            throw ConfigError("--score-law uniform needs \"uniform:LO,HI\"");
        noise.uniform_scores = true;
        noise.score_lo = std::stod(range.substr(0, comma));
        noise.score_hi = std::stod(range.substr(comma + 1));
    }

    const auto scene = gen_scene(params);
    const std::uint64_t detector_seed = args.seed + 1;
    const auto detections = simulate_detector(scene, noise, cfg.grid, detector_seed);

    const auto out_dir = cfg.resolve(args.out_dir);
    std::filesystem::create_directories(out_dir);
    write_annotations(out_dir / "annotations.jsonl", scene);
    write_detections(out_dir / "detections.jsonl", detections);

    ojson params_echo;
    params_echo["grid"] = grid_to_json(cfg.grid);
    params_echo["n_frames"] = args.n_frames;
    params_echo["mean_people"] = args.mean_people;
    params_echo["min_separation"] = args.min_separation;
    params_echo["seed"] = args.seed;
    params_echo["detector_seed"] = detector_seed;
    params_echo["noise"] = {{"p_miss", noise.p_miss},
                            {"fp_per_frame", noise.fp_per_frame},
                            {"loc_sigma", noise.loc_sigma},
                            {"score_law", args.score_law}};
    atomic_write_file(out_dir / "params.json", params_echo.dump(2) + "\n");

    long total = 0;
    for (const AnnotatedFrame& frame : scene) total += frame.gts.detections.size();
    log(LogLevel::Info, "simulated " + std::to_string(scene.size()) + " frame(s), " +
                            std::to_string(total) + " annotation(s)");
    return 0;
}

int cmd_orchestrate(const GlobalConfig& cfg, const std::string& config_path, bool resume) {
    if (config_path.empty())
        throw ConfigError("orchestrate needs --config pointing to a campaign JSON document");
    CampaignConfig campaign = load_campaign_config(cfg.resolve(config_path), cfg.data_root);
    const std::string name = campaign.name;
    Orchestrator orchestrator(std::move(campaign), cfg.data_root);
    const CampaignSummary summary = orchestrator.run_campaign(resume);
    ojson doc = summary_to_json(summary, name);
    std::cout << doc.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-view pedestrian auto-labeling toolkit"};
    app.name("mvlabel");
    app.fallthrough(true);
    app.require_subcommand(1);

    std::string config_path, grid_spec, kernel_norm, data_root, log_level_name;
    int kernel_size = 0;
    double sigma = 0, min_prob = 0, nms_radius = 0, match_radius = 0;
    app.add_option("--config", config_path,
                   "global config JSON (campaign document for orchestrate)");
    app.add_option("--grid", grid_spec, "grid preset or ROWSxCOLS@CELL[@OX,OY]");
    app.add_option("--kernel-size", kernel_size, "Gaussian kernel size in cells (odd)");
    app.add_option("--sigma", sigma, "Gaussian kernel sigma in cells");
    app.add_option("--kernel-norm", kernel_norm, "kernel normalization: peak|pdf");
    app.add_option("--min-prob", min_prob, "extraction threshold in (0, 1]");
    app.add_option("--nms-radius", nms_radius, "NMS radius in meters");
    app.add_option("--match-radius", match_radius, "evaluation match radius in meters");
    app.add_option("--data-root", data_root, "prefix for relative data paths");
    app.add_option("--log-level", log_level_name, "error|warn|info|debug");

    auto* gen = app.add_subcommand("gen-labels", "rasterize detections into Gaussian label heatmaps");
    std::string gen_dets, gen_out, gen_oob = "reject";
    gen->add_option("--detections", gen_dets, "detections JSON-lines file")->required();
    gen->add_option("--out-dir", gen_out, "output directory for MVHM rasters")->required();
    gen->add_option("--oob-policy", gen_oob, "out-of-bounds policy: reject|drop")
        ->check(CLI::IsMember({"reject", "drop"}));

    auto* extract = app.add_subcommand("extract", "extract pedestrian locations from heatmaps");
    std::vector<std::string> extract_rasters;
    std::string extract_out;
    extract->add_option("rasters", extract_rasters, "MVHM raster files")->required();
    extract->add_option("--out", extract_out, "output JSON-lines path (default: stdout)");

    auto* eval = app.add_subcommand("evaluate", "MODA/MODP evaluation against ground truth");
    std::string eval_dets, eval_anns, eval_out, eval_csv, eval_format = "canonical";
    eval->add_option("--detections", eval_dets, "detections JSON-lines file")->required();
    eval->add_option("--annotations", eval_anns, "ground-truth annotations")->required();
    eval->add_option("--ann-format", eval_format,
                     "annotation format: canonical|wildtrack-json|multiviewx-json");
    eval->add_option("--out", eval_out, "report JSON path (default: stdout)");
    eval->add_option("--csv", eval_csv, "optional per-frame CSV path");

    auto* project = app.add_subcommand("project", "project detections into a camera image");
    std::string proj_dets, proj_calib, proj_camera = "camera", proj_out;
    project->add_option("--detections", proj_dets, "detections JSON-lines file")->required();
    project->add_option("--calib", proj_calib, "camera calibration JSON file")->required();
    project->add_option("--camera", proj_camera, "camera id recorded in the output");
    project->add_option("--out", proj_out, "overlay JSON path (default: stdout)");

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene and noisy detections");
    SimulateArgs sim;
    simulate->add_option("--out-dir", sim.out_dir, "output directory")->required();
    simulate->add_option("--frames", sim.n_frames, "number of frames");
    simulate->add_option("--mean-people", sim.mean_people, "mean people per frame");
    simulate->add_option("--min-separation", sim.min_separation, "pairwise separation in meters");
    simulate->add_option("--seed", sim.seed, "scene seed (detector uses seed+1)");
    simulate->add_option("--p-miss", sim.p_miss, "per-person miss probability");
    simulate->add_option("--fp-per-frame", sim.fp_per_frame, "mean false positives per frame");
    simulate->add_option("--loc-sigma", sim.loc_sigma, "location jitter sigma in meters");
    simulate->add_option("--score-law", sim.score_law, "fixed or uniform:LO,HI");

    auto* orchestrate = app.add_subcommand("orchestrate", "run a multi-round auto-labeling campaign");
    bool resume = false;
    orchestrate->add_flag("--resume", resume, "reuse completed rounds in the campaign workdir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        GlobalConfig cfg = GlobalConfig::defaults();
        if (!data_root.empty()) cfg.data_root = data_root;
        if (!config_path.empty() && !orchestrate->parsed())
            apply_config_file(cfg, cfg.resolve(config_path));
        if (!data_root.empty()) cfg.data_root = data_root; // flags beat the config file
        if (!grid_spec.empty()) cfg.grid = parse_grid_spec(grid_spec);
        if (app.count("--kernel-size")) cfg.kernel_size = kernel_size;
        if (app.count("--sigma")) cfg.sigma = sigma;
        if (!kernel_norm.empty()) cfg.normalization = parse_kernel_normalization(kernel_norm);
        if (app.count("--min-prob")) cfg.min_prob = min_prob;
        if (app.count("--nms-radius")) cfg.nms_radius = nms_radius;
        if (app.count("--match-radius")) cfg.match_radius = match_radius;
        if (!log_level_name.empty()) cfg.log_level = parse_log_level(log_level_name);
        set_log_level(cfg.log_level);

        // Validate tunables once, up front, as usage errors.
        if (cfg.kernel_size <= 0 || cfg.kernel_size % 2 == 0)
            throw ConfigError("--kernel-size must be an odd positive integer");
        if (!(cfg.sigma > 0)) throw ConfigError("--sigma must be > 0");
        if (!(cfg.min_prob > 0) || cfg.min_prob > 1)
            throw ConfigError("--min-prob must be in (0, 1]");
        if (!(cfg.nms_radius > 0)) throw ConfigError("--nms-radius must be > 0");
        if (!(cfg.match_radius > 0)) throw ConfigError("--match-radius must be > 0");

        if (gen->parsed()) return cmd_gen_labels(cfg, gen_dets, gen_out, gen_oob);
        if (extract->parsed()) return cmd_extract(cfg, extract_rasters, extract_out);
        if (eval->parsed())
            return cmd_evaluate(cfg, eval_dets, eval_anns, eval_format, eval_out, eval_csv);
        if (project->parsed()) return cmd_project(cfg, proj_dets, proj_calib, proj_camera, proj_out);
        if (simulate->parsed()) return cmd_simulate(cfg, sim);
        if (orchestrate->parsed()) return cmd_orchestrate(cfg, config_path, resume);
        throw ConfigError("no subcommand given");
    } catch (const Error& e) {
        log(LogLevel::Error, e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        log(LogLevel::Error, std::string("internal error: ") + e.what());
        return 4;
    }
}
