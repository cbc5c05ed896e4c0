#include "mvlabel/orchestrator.hpp"

#include "mvlabel/errors.hpp"
#include "mvlabel/subprocess.hpp"
#include "mvlabel/util.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace mvlabel {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kProtocol = "mvlabel-adapter-v1";
constexpr const char* kModelFileName = "model.bin";

// One campaign process per directory. flock releases on crash, so a stale
// lock never wedges the workdir.
class CampaignLock {
public:
    explicit CampaignLock(const std::filesystem::path& workdir) {
        std::filesystem::create_directories(workdir);
        path_ = workdir / "campaign.lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw IoError("cannot open lock file " + path_.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw ConfigError("campaign directory " + workdir.string() +
                              " is locked by another process");
        }
    }
    ~CampaignLock() {
        if (fd_ >= 0) ::close(fd_);
    }
    CampaignLock(const CampaignLock&) = delete;
    CampaignLock& operator=(const CampaignLock&) = delete;

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

std::string round_dir_name(int round_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "round_%03d", round_index);
    return buf;
}

ojson adapter_spec_json(const AdapterSpec& spec) {
    ojson doc;
    doc["id"] = spec.id;
    doc["role"] = spec.role == AdapterRole::Detector ? "detector" : "trainer";
    doc["command"] = spec.command;
    doc["workdir"] = spec.workdir;
    doc["timeout_s"] = spec.timeout_s;
    doc["env"] = spec.env;
    return doc;
}

std::string command_digest(const AdapterSpec& spec) {
    return digest_bytes(adapter_spec_json(spec).dump());
}

std::vector<std::string> substitute_invocation(const std::vector<std::string>& command,
                                               const std::string& invocation_path) {
    std::vector<std::string> argv;
    bool substituted = false;
    for (const std::string& arg : command) {
        std::string out = arg;
        size_t pos;
        while ((pos = out.find("{invocation}")) != std::string::npos) {
            out.replace(pos, 12, invocation_path);
            substituted = true;
        }
        argv.push_back(std::move(out));
    }
    if (!substituted) argv.push_back(invocation_path);
    return argv;
}

struct AdapterRun {
    std::string invocation_bytes;
    std::filesystem::path output_dir;
};

AdapterRun launch_adapter(const AdapterSpec& spec, const ojson& invocation,
                          const std::filesystem::path& stage_dir, const std::string& stage_name) {
    std::filesystem::create_directories(stage_dir);
    const std::filesystem::path output_dir = stage_dir / (stage_name + "_out");
    std::filesystem::create_directories(output_dir);

    ojson doc = invocation;
    doc["output_dir"] = std::filesystem::absolute(output_dir).string();
    const std::string bytes = doc.dump(2) + "\n";
    const std::filesystem::path invocation_path = stage_dir / ("invocation_" + stage_name + ".json");
    atomic_write_file(invocation_path, bytes);

    ProcessSpec proc;
    proc.argv = substitute_invocation(spec.command,
                                      std::filesystem::absolute(invocation_path).string());
    proc.workdir = spec.workdir;
    proc.env = spec.env;
    proc.timeout_s = spec.timeout_s;
    proc.stdout_path = stage_dir / (stage_name + ".stdout.txt");
    proc.stderr_path = stage_dir / (stage_name + ".stderr.txt");

    log(LogLevel::Info, "running adapter \"" + spec.id + "\" (" + stage_name + ")");
    ProcessResult result;
    try {
        result = run_process(proc);
    } catch (const Error& e) {
        throw AdapterError(AdapterError::Cause::Launch, spec.id, e.what());
    }
    if (result.timed_out)
        throw AdapterError(AdapterError::Cause::Timeout, spec.id,
                           "timed out after " + std::to_string(spec.timeout_s) + " s");
    if (result.signaled)
        throw AdapterError(AdapterError::Cause::ExitCode, spec.id,
                           "killed by signal " + std::to_string(result.term_signal) +
                               " (stderr captured in " + proc.stderr_path.string() + ")");
    if (result.exit_code != 0)
        throw AdapterError(AdapterError::Cause::ExitCode, spec.id,
                           "exited with code " + std::to_string(result.exit_code) +
                               " (stderr captured in " + proc.stderr_path.string() + ")");
    return {bytes, output_dir};
}

} // namespace

const char* label_kind_code(LabelKind kind) {
    switch (kind) {
    case LabelKind::SourceLabel: return "LS";
    case LabelKind::GroundTruth: return "LT";
    case LabelKind::PseudoLabel: return "PLT";
    case LabelKind::AutoLabel: return "ALT";
    }
    return "?";
}

LabelKind parse_label_kind(const std::string& code) {
    if (code == "LS") return LabelKind::SourceLabel;
    if (code == "LT") return LabelKind::GroundTruth;
    if (code == "PLT") return LabelKind::PseudoLabel;
    if (code == "ALT") return LabelKind::AutoLabel;
    throw ConfigError("unknown label kind \"" + code + "\" (expected LS|LT|PLT|ALT)");
}

std::string training_data_label(const TrainingSetSpec& spec) {
    if (spec.components.size() == 1)
        return std::string(label_kind_code(spec.components[0])) + " only";
    std::string out;
    for (size_t i = 0; i < spec.components.size(); ++i) {
        if (i) out += " + ";
        out += label_kind_code(spec.components[i]);
    }
    return out;
}

nlohmann::ordered_json default_trainer_passthrough() {
    ojson doc;
    doc["batch_size"] = 1;
    doc["epochs"] = 10;
    doc["optimizer"] = "SGD";
    doc["learning_rate"] = 0.0005;
    doc["momentum"] = 0.9;
    doc["weight_decay"] = 0.0005;
    doc["scheduler"] = "one_cycle";
    doc["max_learning_rate"] = 0.005;
    return doc;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path,
                                    const std::string& data_root) {
    const std::string context = path.string();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(context, 0, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError(context, 0, "campaign config must be a JSON object");
    const std::filesystem::path base_dir = path.parent_path();
    auto resolve = [&](const std::string& p) { return resolve_path(p, data_root, base_dir); };

    CampaignConfig cfg;
    cfg.name = doc.value("name", std::string("campaign"));
    if (!doc.contains("workdir") || !doc["workdir"].is_string())
        throw ParseError(context, 0, "campaign config missing string \"workdir\"");
    cfg.workdir = resolve(doc["workdir"].get<std::string>());
    if (!doc.contains("target_manifest") || !doc["target_manifest"].is_string())
        throw ParseError(context, 0, "campaign config missing string \"target_manifest\"");
    cfg.target_manifest_path = resolve(doc["target_manifest"].get<std::string>());
    if (doc.contains("source_manifest")) {
        if (!doc["source_manifest"].is_string())
            throw ParseError(context, 0, "\"source_manifest\" must be a path string");
        cfg.source_manifest_path = resolve(doc["source_manifest"].get<std::string>());
    }

    if (doc.contains("options")) {
        const auto& opts = doc["options"];
        if (!opts.is_object()) throw ParseError(context, 0, "\"options\" must be an object");
        cfg.options.min_prob = opts.value("min_prob", cfg.options.min_prob);
        cfg.options.nms_radius = opts.value("nms_radius", cfg.options.nms_radius);
        cfg.options.match_radius = opts.value("match_radius", cfg.options.match_radius);
        cfg.options.kernel_size = opts.value("kernel_size", cfg.options.kernel_size);
        cfg.options.sigma = opts.value("sigma", cfg.options.sigma);
        if (opts.contains("normalization"))
            cfg.options.normalization =
                parse_kernel_normalization(opts["normalization"].get<std::string>());
    }

    cfg.passthrough = default_trainer_passthrough();
    if (doc.contains("passthrough")) {
        if (!doc["passthrough"].is_object())
            throw ParseError(context, 0, "\"passthrough\" must be an object");
        for (const auto& [key, value] : doc["passthrough"].items()) cfg.passthrough[key] = value;
    }

    if (doc.contains("adapters")) {
        if (!doc["adapters"].is_object())
            throw ParseError(context, 0, "\"adapters\" must be an object keyed by adapter id");
        for (const auto& [id, spec_json] : doc["adapters"].items()) {
            AdapterSpec spec;
            spec.id = id;
            if (!spec_json.is_object() || !spec_json.contains("role") ||
                !spec_json.contains("command"))
                throw ParseError(context, 0, "adapter \"" + id + "\" needs \"role\" and \"command\"");
            const std::string role = spec_json["role"].get<std::string>();
            if (role == "detector")
                spec.role = AdapterRole::Detector;
            else if (role == "trainer")
                spec.role = AdapterRole::Trainer;
            else
                throw ParseError(context, 0, "adapter \"" + id + "\" role must be detector|trainer");
            if (!spec_json["command"].is_array() || spec_json["command"].empty())
                throw ParseError(context, 0, "adapter \"" + id + "\" command must be a non-empty array");
            for (const auto& arg : spec_json["command"])
                spec.command.push_back(arg.get<std::string>());
            spec.workdir = spec_json.value("workdir", std::string());
            spec.timeout_s = spec_json.value("timeout_s", 600.0);
            if (!(spec.timeout_s > 0))
                throw ParseError(context, 0, "adapter \"" + id + "\" timeout_s must be > 0");
            if (spec_json.contains("env"))
                for (const auto& [k, v] : spec_json["env"].items())
                    spec.env[k] = v.get<std::string>();
            cfg.adapters[id] = std::move(spec);
        }
    }

    cfg.trainer = doc.value("trainer", std::string());
    cfg.eval_detector = doc.value("eval_detector", std::string());

    if (doc.contains("baseline")) {
        const auto& b = doc["baseline"];
        if (!b.is_object()) throw ParseError(context, 0, "\"baseline\" must be an object");
        BaselinePlan plan;
        if (b.contains("model") && !b["model"].is_null())
            plan.model = resolve(b["model"].get<std::string>()).string();
        plan.training_data = b.value("training_data", std::string("LS only"));
        cfg.baseline = std::move(plan);
    }

    if (doc.contains("rounds")) {
        if (!doc["rounds"].is_array()) throw ParseError(context, 0, "\"rounds\" must be an array");
        int index = 0;
        for (const auto& r : doc["rounds"]) {
            if (!r.is_object()) throw ParseError(context, 0, "round plans must be objects");
            RoundPlan plan;
            plan.round_index = index++;
            if (!r.contains("labeler") || !r["labeler"].is_string())
                throw ParseError(context, 0, "round plan missing string \"labeler\"");
            plan.labeler = r["labeler"].get<std::string>();
            plan.label_kind = parse_label_kind(r.value("label_kind", std::string("ALT")));
            if (plan.label_kind != LabelKind::AutoLabel &&
                plan.label_kind != LabelKind::PseudoLabel)
                throw ParseError(context, 0, "round label_kind must be ALT or PLT");
            if (r.contains("labeler_model"))
                plan.labeler_model = resolve(r["labeler_model"].get<std::string>()).string();
            if (!r.contains("components") || !r["components"].is_array() ||
                r["components"].empty())
                throw ParseError(context, 0, "round plan needs a non-empty \"components\" array");
            for (const auto& c : r["components"])
                plan.training_set.components.push_back(parse_label_kind(c.get<std::string>()));
            const std::string mode = r.value("mode", std::string("FS"));
            if (mode == "FS")
                plan.training_mode.mode = TrainingModeKind::FromScratch;
            else if (mode == "FT")
                plan.training_mode.mode = TrainingModeKind::FineTune;
            else
                throw ParseError(context, 0, "round mode must be FS or FT");
            if (r.contains("init_model"))
                plan.training_mode.init_model = resolve(r["init_model"].get<std::string>()).string();
            cfg.rounds.push_back(std::move(plan));
        }
    }
    return cfg;
}

Orchestrator::Orchestrator(CampaignConfig config, std::string data_root)
    : cfg_(std::move(config)), data_root_(std::move(data_root)),
      target_(read_manifest(cfg_.target_manifest_path, data_root_)) {
    if (cfg_.passthrough.is_null()) cfg_.passthrough = default_trainer_passthrough();
    if (cfg_.source_manifest_path)
        source_ = read_manifest(*cfg_.source_manifest_path, data_root_);
    if (target_.annotations) {
        const auto ann_path = target_.resolve(*target_.annotations, data_root_);
        for (const AnnotatedFrame& frame :
             parse_annotations(ann_path, AnnotationFormat::Canonical, target_.grid))
            target_gt_[frame.frame_id] = frame.gts;
    }
}

const AdapterSpec& Orchestrator::adapter_or_throw(const std::string& id, AdapterRole role) const {
    auto it = cfg_.adapters.find(id);
    if (it == cfg_.adapters.end())
        throw ConfigError("adapter \"" + id + "\" is not configured");
    if (it->second.role != role)
        throw ConfigError("adapter \"" + id + "\" has role " +
                          (it->second.role == AdapterRole::Detector ? "detector" : "trainer") +
                          ", expected " + (role == AdapterRole::Detector ? "detector" : "trainer"));
    return it->second;
}

std::vector<DetectionSet> Orchestrator::run_detector_adapter(
    const AdapterSpec& adapter, const DatasetManifest& manifest,
    const std::vector<std::string>& frame_ids, const std::string& model_path,
    const std::filesystem::path& stage_dir, const std::string& stage_name) {
    ojson invocation;
    invocation["protocol"] = kProtocol;
    invocation["role"] = "detector";
    if (manifest.source_path.empty())
        invocation["manifest"] = nullptr;
    else
        invocation["manifest"] = std::filesystem::absolute(manifest.source_path).string();
    invocation["frames"] = frame_ids;
    invocation["grid"] = grid_to_json(manifest.grid);
    invocation["options"] = {{"min_prob", cfg_.options.min_prob},
                             {"nms_radius", cfg_.options.nms_radius}};
    if (model_path.empty())
        invocation["model"] = nullptr;
    else
        invocation["model"] = std::filesystem::absolute(model_path).string();
    invocation["passthrough"] = cfg_.passthrough;

    const AdapterRun run = launch_adapter(adapter, invocation, stage_dir, stage_name);

    const std::filesystem::path detections_path = run.output_dir / "detections.jsonl";
    std::unordered_map<std::string, DetectionSet> by_frame;
    if (std::filesystem::exists(detections_path)) {
        std::vector<DetectionSet> parsed;
        try {
            parsed = read_detections(detections_path);
        } catch (const ParseError& e) {
            throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id, e.what());
        }
        for (DetectionSet& set : parsed) {
            std::string id = set.frame_id;
            by_frame.emplace(std::move(id), std::move(set));
        }
    } else {
        for (const std::string& frame_id : frame_ids) {
            const std::filesystem::path raster = run.output_dir / (frame_id + ".mvhm");
            if (!std::filesystem::exists(raster)) continue; // coverage check below
            Heatmap h = [&] {
                try {
                    return read_mvhm(raster);
                } catch (const ParseError& e) {
                    throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id, e.what());
                }
            }();
            if (!(h.grid() == manifest.grid))
                throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id,
                                   "raster " + raster.string() +
                                       " has a grid different from the manifest grid");
            DetectionSet set = extract_locations(h, cfg_.options.min_prob, cfg_.options.nms_radius);
            set.frame_id = frame_id;
            by_frame.emplace(frame_id, std::move(set));
        }
        if (by_frame.empty() && !frame_ids.empty())
            throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id,
                               "no detections.jsonl and no MVHM rasters in " +
                                   run.output_dir.string());
        const std::set<std::string> requested_set(frame_ids.begin(), frame_ids.end());
        for (const auto& entry : std::filesystem::directory_iterator(run.output_dir)) {
            if (entry.path().extension() != ".mvhm") continue;
            if (!requested_set.count(entry.path().stem().string()))
                throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id,
                                   "output contains unrequested raster " +
                                       entry.path().filename().string());
        }
    }

    std::vector<std::string> missing;
    for (const std::string& frame_id : frame_ids)
        if (!by_frame.count(frame_id)) missing.push_back(frame_id);
    if (!missing.empty()) {
        std::string list;
        for (size_t i = 0; i < missing.size() && i < 8; ++i)
            list += (i ? ", " : "") + missing[i];
        if (missing.size() > 8) list += ", ...";
        throw AdapterError(AdapterError::Cause::Coverage, adapter.id,
                           "output omits " + std::to_string(missing.size()) + " of " +
                               std::to_string(frame_ids.size()) + " requested frames: " + list);
    }
    const std::set<std::string> requested(frame_ids.begin(), frame_ids.end());
    for (const auto& [frame_id, set] : by_frame)
        if (!requested.count(frame_id))
            throw AdapterError(AdapterError::Cause::MalformedOutput, adapter.id,
                               "output contains unrequested frame \"" + frame_id + "\"");

    std::vector<DetectionSet> out;
    out.reserve(frame_ids.size());
    for (const std::string& frame_id : frame_ids) out.push_back(std::move(by_frame[frame_id]));
    return out;
}

LabelSetInfo Orchestrator::generate_labels(const AdapterSpec& adapter,
                                           const DatasetManifest& manifest,
                                           std::optional<SplitClass> filter, LabelKind kind,
                                           int round_index, const std::string& model_path,
                                           const std::filesystem::path& round_dir) {
    const std::vector<std::string> frame_ids = manifest.frames_in_split(filter);
    if (frame_ids.empty())
        throw ConfigError("no frames selected for label generation" +
                          (filter ? " (split " + std::string(split_class_name(*filter)) + ")"
                                  : std::string()));

    std::vector<DetectionSet> detections =
        run_detector_adapter(adapter, manifest, frame_ids, model_path, round_dir, "labeler");

    const std::filesystem::path labels_dir = round_dir / "labels";
    std::filesystem::create_directories(labels_dir);
    const GaussianKernel kernel(cfg_.options.kernel_size, cfg_.options.sigma,
                                cfg_.options.normalization);

    int dropped_total = 0;
    ojson frames_json = ojson::array();
    for (const DetectionSet& set : detections) {
        require_safe_stem(set.frame_id, "frame id");
        int dropped = 0;
        const Heatmap labels =
            label_pipeline(set, manifest.grid, kernel, OutOfBoundsPolicy::Drop, &dropped);
        dropped_total += dropped;
        const std::string raster_name = set.frame_id + ".mvhm";
        write_mvhm(labels_dir / raster_name, labels);
        ojson fr;
        fr["frame_id"] = set.frame_id;
        fr["heatmap"] = raster_name;
        fr["heatmap_digest"] = digest_file(labels_dir / raster_name);
        frames_json.push_back(std::move(fr));
    }
    if (dropped_total > 0)
        log(LogLevel::Warn, "label generation dropped " + std::to_string(dropped_total) +
                                " out-of-bounds detection(s)");

    write_detections(labels_dir / "detections.jsonl", detections);

    // Content manifest: everything here is round-agnostic so that a labeling
    // fixed point shows up as byte-identical files.
    ojson label_manifest;
    label_manifest["detections"] = "detections.jsonl";
    label_manifest["detections_digest"] = digest_file(labels_dir / "detections.jsonl");
    label_manifest["grid"] = grid_to_json(manifest.grid);
    label_manifest["frames"] = std::move(frames_json);
    atomic_write_file(labels_dir / "label_manifest.json", label_manifest.dump(2) + "\n");

    LabelSetInfo info;
    info.kind = kind;
    info.adapter_id = adapter.id;
    info.round_index = round_index;
    info.command_digest = command_digest(adapter);
    std::string input_digest_src = adapter.id + "\n" + info.command_digest + "\n";
    input_digest_src += digest_file(cfg_.target_manifest_path) + "\n";
    if (!model_path.empty()) input_digest_src += digest_file(model_path) + "\n";
    for (const std::string& id : frame_ids) input_digest_src += id + "\n";
    info.input_digest = digest_bytes(input_digest_src);
    info.labels_dir = labels_dir;
    info.detections_path = labels_dir / "detections.jsonl";
    info.frame_ids = frame_ids;
    info.dropped_out_of_bounds = dropped_total;

    // Provenance wrapper; carries the round-dependent fields.
    ojson label_set;
    label_set["kind"] = label_kind_code(kind);
    label_set["adapter"] = adapter.id;
    label_set["round"] = round_index;
    label_set["command_digest"] = info.command_digest;
    label_set["input_digest"] = info.input_digest;
    label_set["label_manifest"] = "labels/label_manifest.json";
    label_set["dropped_out_of_bounds"] = dropped_total;
    atomic_write_file(round_dir / "label_set.json", label_set.dump(2) + "\n");
    return info;
}

std::filesystem::path Orchestrator::compose_training_set(
    const TrainingSetSpec& spec, const std::map<LabelKind, LabelSetInfo>& produced,
    const std::filesystem::path& round_dir) {
    if (spec.components.empty())
        throw ConfigError("training set must have at least one component");

    ojson entries = ojson::array();
    // Fixed component order keeps the manifest deterministic regardless of
    // how the plan listed them.
    const LabelKind order[] = {LabelKind::SourceLabel, LabelKind::GroundTruth,
                               LabelKind::PseudoLabel, LabelKind::AutoLabel};
    std::set<LabelKind> wanted(spec.components.begin(), spec.components.end());

    for (LabelKind kind : order) {
        if (!wanted.count(kind)) continue;
        switch (kind) {
        case LabelKind::SourceLabel: {
            if (!source_)
                throw MissingComponentError("training set includes LS but no source manifest is configured");
            if (!source_->annotations)
                throw MissingComponentError("source manifest has no annotations (LS needs labels)");
            const auto ann =
                std::filesystem::absolute(source_->resolve(*source_->annotations, data_root_));
            const auto frame_ids = source_->frames_in_split(
                source_->split.empty() ? std::optional<SplitClass>{} : SplitClass::Train);
            for (const std::string& frame_id : frame_ids) {
                ojson e;
                e["frame_id"] = frame_id;
                e["origin"] = "LS";
                e["manifest"] = std::filesystem::absolute(*cfg_.source_manifest_path).string();
                e["label"] = {{"detections", ann.string()}, {"heatmap", nullptr}};
                entries.push_back(std::move(e));
            }
            break;
        }
        case LabelKind::GroundTruth: {
            if (!target_.annotations)
                throw MissingComponentError("training set includes LT but the target manifest has no annotations");
            const auto ann =
                std::filesystem::absolute(target_.resolve(*target_.annotations, data_root_));
            const auto frame_ids = target_.frames_in_split(
                target_.split.empty() ? std::optional<SplitClass>{} : SplitClass::Train);
            for (const std::string& frame_id : frame_ids) {
                ojson e;
                e["frame_id"] = frame_id;
                e["origin"] = "LT";
                e["manifest"] = std::filesystem::absolute(cfg_.target_manifest_path).string();
                e["label"] = {{"detections", ann.string()}, {"heatmap", nullptr}};
                entries.push_back(std::move(e));
            }
            break;
        }
        case LabelKind::PseudoLabel:
        case LabelKind::AutoLabel: {
            auto it = produced.find(kind);
            if (it == produced.end())
                throw MissingComponentError(std::string("training set includes ") +
                                            label_kind_code(kind) +
                                            " but no such label set was produced");
            for (const std::string& frame_id : it->second.frame_ids) {
                ojson e;
                e["frame_id"] = frame_id;
                e["origin"] = label_kind_code(kind);
                e["manifest"] = std::filesystem::absolute(cfg_.target_manifest_path).string();
                // Round-relative paths: resolved against this manifest's dir.
                e["label"] = {{"detections", "labels/detections.jsonl"},
                              {"heatmap", "labels/" + frame_id + ".mvhm"}};
                entries.push_back(std::move(e));
            }
            break;
        }
        }
    }

    ojson doc;
    doc["grid"] = grid_to_json(target_.grid);
    doc["training_data"] = training_data_label(spec);
    doc["entries"] = std::move(entries);
    const std::filesystem::path out_path = round_dir / "training_manifest.json";
    atomic_write_file(out_path, doc.dump(2) + "\n");
    return out_path;
}

Orchestrator::ValidationOutcome Orchestrator::validate_model(
    const std::string& model_path, const std::filesystem::path& round_dir) {
    ValidationOutcome outcome;
    if (cfg_.eval_detector.empty()) {
        log(LogLevel::Info, "no eval_detector configured; skipping validation");
        return outcome;
    }
    if (target_gt_.empty()) {
        log(LogLevel::Info, "target has no ground truth; validation omitted");
        return outcome;
    }
    const AdapterSpec& adapter = adapter_or_throw(cfg_.eval_detector, AdapterRole::Detector);
    std::vector<std::string> val_frames = target_.frames_in_split(
        target_.split.empty() ? std::optional<SplitClass>{} : SplitClass::Val);
    std::vector<std::string> annotated;
    for (const std::string& frame_id : val_frames)
        if (target_gt_.count(frame_id)) annotated.push_back(frame_id);
    if (annotated.empty()) {
        log(LogLevel::Info, "no annotated validation frames; validation omitted");
        return outcome;
    }
    if (annotated.size() < val_frames.size())
        log(LogLevel::Warn, "validating on " + std::to_string(annotated.size()) + " of " +
                                std::to_string(val_frames.size()) +
                                " val frames (others lack ground truth)");

    const std::filesystem::path stage_dir = round_dir / "validation";
    std::vector<DetectionSet> detections =
        run_detector_adapter(adapter, target_, annotated, model_path, stage_dir, "eval");

    std::vector<FramePair> frames;
    frames.reserve(annotated.size());
    for (size_t i = 0; i < annotated.size(); ++i)
        frames.push_back({annotated[i], detections[i], target_gt_.at(annotated[i])});
    EvalReport report = evaluate(frames, cfg_.options.match_radius);
    atomic_write_file(stage_dir / "eval_report.json", report_to_json(report).dump(2) + "\n");
    outcome.report = std::move(report);
    return outcome;
}

void Orchestrator::preflight(const RoundPlan& plan, std::string& labeler_model_out,
                             std::string& init_model_out) const {
    if (plan.label_kind != LabelKind::AutoLabel && plan.label_kind != LabelKind::PseudoLabel)
        throw ConfigError("round " + std::to_string(plan.round_index) +
                          ": label_kind must be ALT or PLT");
    adapter_or_throw(plan.labeler, AdapterRole::Detector);
    if (cfg_.trainer.empty())
        throw ConfigError("campaign has rounds but no \"trainer\" adapter configured");
    adapter_or_throw(cfg_.trainer, AdapterRole::Trainer);

    // Labeler model wiring: PLT rounds after the first always relabel with
    // the previous round's model.
    labeler_model_out.clear();
    if (plan.label_kind == LabelKind::PseudoLabel) {
        if (plan.round_index == 0) {
            if (plan.labeler_model.empty())
                throw ConfigError("round 0 with PLT labels needs \"labeler_model\" (a source-trained model)");
            labeler_model_out = plan.labeler_model;
        } else {
            if (!plan.labeler_model.empty())
                throw ConfigError("rounds >= 1 with PLT labels must use the previous round's model; "
                                  "remove \"labeler_model\"");
            if (prev_model_.empty())
                throw ConfigError("round " + std::to_string(plan.round_index) +
                                  " uses PLT but no previous round produced a model");
            labeler_model_out = prev_model_;
        }
        if (!std::filesystem::exists(labeler_model_out))
            throw ConfigError("labeler model does not exist: " + labeler_model_out);
    } else if (!plan.labeler_model.empty()) {
        throw ConfigError("\"labeler_model\" is only meaningful for PLT rounds");
    }

    init_model_out.clear();
    if (plan.training_mode.mode == TrainingModeKind::FineTune) {
        if (!plan.training_mode.init_model.empty())
            init_model_out = plan.training_mode.init_model;
        else if (plan.round_index > 0 && !prev_model_.empty())
            init_model_out = prev_model_;
        else
            throw ConfigError("round " + std::to_string(plan.round_index) +
                              ": FT mode requires \"init_model\"");
        if (!std::filesystem::exists(init_model_out))
            throw ConfigError("init model does not exist: " + init_model_out);
    }

    if (plan.training_set.components.empty())
        throw ConfigError("round " + std::to_string(plan.round_index) +
                          ": training set has no components");
    for (LabelKind kind : plan.training_set.components) {
        switch (kind) {
        case LabelKind::SourceLabel:
            if (!source_)
                throw MissingComponentError("training set includes LS but no source manifest is configured");
            break;
        case LabelKind::GroundTruth:
            if (!target_.annotations)
                throw MissingComponentError("training set includes LT but the target manifest has no annotations");
            break;
        case LabelKind::PseudoLabel:
        case LabelKind::AutoLabel:
            if (kind != plan.label_kind)
                throw MissingComponentError(
                    std::string("training set includes ") + label_kind_code(kind) +
                    " but this round produces " + label_kind_code(plan.label_kind));
            break;
        }
    }
}

std::string Orchestrator::round_input_digest(const RoundPlan& plan,
                                             const std::string& labeler_model,
                                             const std::string& init_model) const {
    ojson doc;
    doc["round_index"] = plan.round_index;
    doc["labeler"] = plan.labeler;
    doc["label_kind"] = label_kind_code(plan.label_kind);
    ojson comps = ojson::array();
    for (LabelKind kind : plan.training_set.components) comps.push_back(label_kind_code(kind));
    doc["components"] = std::move(comps);
    doc["mode"] = plan.training_mode.mode == TrainingModeKind::FineTune ? "FT" : "FS";
    doc["labeler_spec"] = adapter_spec_json(adapter_or_throw(plan.labeler, AdapterRole::Detector));
    doc["trainer_spec"] = adapter_spec_json(adapter_or_throw(cfg_.trainer, AdapterRole::Trainer));
    if (!cfg_.eval_detector.empty())
        doc["eval_spec"] = adapter_spec_json(adapter_or_throw(cfg_.eval_detector, AdapterRole::Detector));
    doc["options"] = {{"min_prob", cfg_.options.min_prob},
                      {"nms_radius", cfg_.options.nms_radius},
                      {"match_radius", cfg_.options.match_radius},
                      {"kernel_size", cfg_.options.kernel_size},
                      {"sigma", cfg_.options.sigma},
                      {"normalization", kernel_normalization_name(cfg_.options.normalization)}};
    doc["passthrough"] = cfg_.passthrough;
    doc["target_manifest_digest"] = digest_file(cfg_.target_manifest_path);
    if (target_.annotations)
        doc["target_annotations_digest"] =
            digest_file(target_.resolve(*target_.annotations, data_root_));
    if (source_ && cfg_.source_manifest_path) {
        doc["source_manifest_digest"] = digest_file(*cfg_.source_manifest_path);
        if (source_->annotations)
            doc["source_annotations_digest"] =
                digest_file(source_->resolve(*source_->annotations, data_root_));
    }
    if (!labeler_model.empty()) doc["labeler_model_digest"] = digest_file(labeler_model);
    if (!init_model.empty()) doc["init_model_digest"] = digest_file(init_model);
    return digest_bytes(doc.dump());
}

RoundResult Orchestrator::run_round(const RoundPlan& plan) {
    const auto start = std::chrono::steady_clock::now();

    std::string labeler_model, init_model;
    preflight(plan, labeler_model, init_model);
    const std::string input_digest = round_input_digest(plan, labeler_model, init_model);

    const std::filesystem::path rounds_dir = cfg_.workdir / "rounds";
    const std::filesystem::path final_dir = rounds_dir / round_dir_name(plan.round_index);

    if (std::filesystem::exists(final_dir)) {
        const std::filesystem::path marker = final_dir / "round.json";
        if (!std::filesystem::exists(marker))
            throw ConfigError("round directory " + final_dir.string() +
                              " exists without a completion marker; remove it and re-run");
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(marker));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("corrupt round marker " + marker.string() + ": " + e.what());
        }
        if (!doc.value("complete", false))
            throw ConfigError("round directory " + final_dir.string() +
                              " is incomplete; remove it and re-run");
        if (doc.value("input_digest", std::string()) != input_digest)
            throw ConfigError("round " + std::to_string(plan.round_index) +
                              " inputs changed since it was computed; use a fresh workdir");
        RoundResult result;
        result.round_index = plan.round_index;
        result.label_kind = plan.label_kind;
        result.training_data = doc.value("training_data", training_data_label(plan.training_set));
        result.round_dir = final_dir;
        result.label_set_path = final_dir / "label_set.json";
        result.model_path =
            final_dir / doc.value("model", std::string("trainer_out/") + kModelFileName);
        if (!std::filesystem::exists(result.model_path))
            throw ConfigError("cached round is missing its model artifact: " +
                              result.model_path.string());
        result.model_digest = doc.value("model_digest", std::string());
        result.input_digest = input_digest;
        if (doc.contains("validation") && !doc["validation"].is_null())
            result.validation = report_from_json(doc["validation"], marker.string());
        result.wall_time_s = doc.value("wall_time_s", 0.0);
        result.reused_cache = true;
        prev_model_ = result.model_path.string();
        prev_model_digest_ = result.model_digest;
        log(LogLevel::Info, "round " + std::to_string(plan.round_index) + ": cache hit, reusing " +
                                final_dir.string());
        return result;
    }

    // Build everything under a temp name; only a completed round is renamed
    // into place, so a crash never leaves a half-round behind.
    std::filesystem::create_directories(rounds_dir);
    const std::filesystem::path tmp_dir =
        rounds_dir / (".tmp_" + round_dir_name(plan.round_index));
    std::filesystem::remove_all(tmp_dir);
    std::filesystem::create_directories(tmp_dir);

    const AdapterSpec& labeler = adapter_or_throw(plan.labeler, AdapterRole::Detector);
    std::map<LabelKind, LabelSetInfo> produced;
    const std::optional<SplitClass> train_filter =
        target_.split.empty() ? std::optional<SplitClass>{} : SplitClass::Train;
    LabelSetInfo labels = generate_labels(labeler, target_, train_filter, plan.label_kind,
                                          plan.round_index, labeler_model, tmp_dir);
    produced[plan.label_kind] = labels;

    const std::filesystem::path training_manifest =
        compose_training_set(plan.training_set, produced, tmp_dir);

    const AdapterSpec& trainer = adapter_or_throw(cfg_.trainer, AdapterRole::Trainer);
    ojson invocation;
    invocation["protocol"] = kProtocol;
    invocation["role"] = "trainer";
    invocation["training_manifest"] = std::filesystem::absolute(training_manifest).string();
    invocation["grid"] = grid_to_json(target_.grid);
    invocation["mode"] =
        plan.training_mode.mode == TrainingModeKind::FineTune ? "FT" : "FS";
    if (init_model.empty())
        invocation["init_model"] = nullptr;
    else
        invocation["init_model"] = std::filesystem::absolute(init_model).string();
    invocation["passthrough"] = cfg_.passthrough;
    const AdapterRun trainer_run = launch_adapter(trainer, invocation, tmp_dir, "trainer");

    const std::filesystem::path model_rel = std::filesystem::path("trainer_out") / kModelFileName;
    const std::filesystem::path model_path = tmp_dir / model_rel;
    if (!std::filesystem::exists(model_path))
        throw AdapterError(AdapterError::Cause::MalformedOutput, trainer.id,
                           "trainer did not produce " + model_path.string());
    const std::string model_digest = digest_file(model_path);

    ValidationOutcome validation = validate_model(model_path.string(), tmp_dir);

    RoundResult result;
    result.round_index = plan.round_index;
    result.label_kind = plan.label_kind;
    result.training_data = training_data_label(plan.training_set);
    result.round_dir = final_dir;
    result.label_set_path = final_dir / "label_set.json";
    result.model_path = final_dir / model_rel;
    result.model_digest = model_digest;
    result.input_digest = input_digest;
    result.validation = validation.report;
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    ojson marker;
    marker["round_index"] = plan.round_index;
    marker["label_kind"] = label_kind_code(plan.label_kind);
    marker["training_data"] = result.training_data;
    marker["label_set"] = "label_set.json";
    marker["model"] = model_rel.string();
    marker["model_digest"] = model_digest;
    marker["model_provenance"] = {{"adapter", trainer.id},
                                  {"command_digest", command_digest(trainer)},
                                  {"input_digest", digest_bytes(trainer_run.invocation_bytes)},
                                  {"round", plan.round_index}};
    marker["input_digest"] = input_digest;
    if (result.validation)
        marker["validation"] = report_to_json(*result.validation);
    else
        marker["validation"] = nullptr;
    marker["wall_time_s"] = result.wall_time_s;
    marker["complete"] = true;
    atomic_write_file(tmp_dir / "round.json", marker.dump(2) + "\n");

    std::filesystem::rename(tmp_dir, final_dir);
    prev_model_ = result.model_path.string();
    prev_model_digest_ = model_digest;
    return result;
}

SummaryRow Orchestrator::run_baseline(bool resume) {
    const BaselinePlan& plan = *cfg_.baseline;
    if (cfg_.eval_detector.empty())
        throw ConfigError("baseline evaluation needs \"eval_detector\"");
    if (!plan.model.empty() && !std::filesystem::exists(plan.model))
        throw ConfigError("baseline model does not exist: " + plan.model);

    ojson key;
    key["eval_spec"] = adapter_spec_json(adapter_or_throw(cfg_.eval_detector, AdapterRole::Detector));
    key["target_manifest_digest"] = digest_file(cfg_.target_manifest_path);
    if (target_.annotations)
        key["target_annotations_digest"] =
            digest_file(target_.resolve(*target_.annotations, data_root_));
    if (!plan.model.empty()) key["model_digest"] = digest_file(plan.model);
    key["match_radius"] = cfg_.options.match_radius;
    const std::string input_digest = digest_bytes(key.dump());

    const std::filesystem::path final_dir = cfg_.workdir / "baseline";
    SummaryRow row;
    row.al_rounds = 0;
    row.training_data = plan.training_data;

    if (std::filesystem::exists(final_dir)) {
        const std::filesystem::path marker = final_dir / "baseline.json";
        if (!resume || !std::filesystem::exists(marker))
            throw ConfigError("baseline directory exists; pass --resume or use a fresh workdir");
        nlohmann::json doc = nlohmann::json::parse(read_file(marker));
        if (!doc.value("complete", false) ||
            doc.value("input_digest", std::string()) != input_digest)
            throw ConfigError("baseline inputs changed since it was computed; use a fresh workdir");
        if (doc.contains("validation") && !doc["validation"].is_null())
            row.validation = report_from_json(doc["validation"], marker.string());
        row.reused_cache = true;
        return row;
    }

    const std::filesystem::path tmp_dir = cfg_.workdir / ".tmp_baseline";
    std::filesystem::remove_all(tmp_dir);
    std::filesystem::create_directories(tmp_dir);

    ValidationOutcome outcome = validate_model(plan.model, tmp_dir);
    row.validation = outcome.report;

    ojson marker;
    marker["training_data"] = plan.training_data;
    marker["input_digest"] = input_digest;
    if (row.validation)
        marker["validation"] = report_to_json(*row.validation);
    else
        marker["validation"] = nullptr;
    marker["complete"] = true;
    atomic_write_file(tmp_dir / "baseline.json", marker.dump(2) + "\n");
    std::filesystem::rename(tmp_dir, final_dir);
    return row;
}

namespace {

std::string metric_cell(const std::optional<EvalReport>& report,
                        double EvalReport::* field, bool moda) {
    if (!report) return "-";
    if (moda && !report->moda_defined) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", (*report).*field);
    return buf;
}

void print_summary_table(const CampaignSummary& summary) {
    std::ostringstream out;
    out << "campaign summary:\n";
    out << "  rounds  training data   MODA      MODP      precision  recall\n";
    for (const SummaryRow& row : summary.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "  %-7d %-15s %-9s %-9s %-10s %-9s", row.al_rounds,
                      row.training_data.c_str(),
                      metric_cell(row.validation, &EvalReport::moda, true).c_str(),
                      metric_cell(row.validation, &EvalReport::modp, false).c_str(),
                      metric_cell(row.validation, &EvalReport::precision, false).c_str(),
                      metric_cell(row.validation, &EvalReport::recall, false).c_str());
        out << line << "\n";
    }
    log(LogLevel::Info, out.str());
}

} // namespace

nlohmann::ordered_json summary_to_json(const CampaignSummary& summary, const std::string& name) {
    ojson doc;
    doc["name"] = name;
    ojson rows = ojson::array();
    for (const SummaryRow& row : summary.rows) {
        ojson r;
        r["al_rounds"] = row.al_rounds;
        r["training_data"] = row.training_data;
        if (row.validation) {
            const EvalReport& v = *row.validation;
            r["moda"] = v.moda_defined ? ojson(v.moda) : ojson("-inf");
            r["modp"] = v.modp;
            r["precision"] = v.precision;
            r["recall"] = v.recall;
        } else {
            r["moda"] = nullptr;
            r["modp"] = nullptr;
            r["precision"] = nullptr;
            r["recall"] = nullptr;
        }
        rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    return doc;
}

CampaignSummary Orchestrator::run_campaign(bool resume) {
    CampaignLock lock(cfg_.workdir);

    const std::filesystem::path rounds_dir = cfg_.workdir / "rounds";
    if (!resume) {
        const bool has_rounds =
            std::filesystem::exists(rounds_dir) && !std::filesystem::is_empty(rounds_dir);
        const bool has_baseline = std::filesystem::exists(cfg_.workdir / "baseline");
        if (has_rounds || has_baseline)
            throw ConfigError("campaign workdir " + cfg_.workdir.string() +
                              " already contains results; pass --resume or use a fresh workdir");
    }
    // Leftover temp dirs from a killed run are ours to discard.
    if (std::filesystem::exists(rounds_dir))
        for (const auto& entry : std::filesystem::directory_iterator(rounds_dir))
            if (entry.path().filename().string().starts_with(".tmp_"))
                std::filesystem::remove_all(entry.path());
    std::filesystem::remove_all(cfg_.workdir / ".tmp_baseline");

    CampaignSummary summary;
    std::optional<std::string> error_message;
    std::optional<int> error_round;
    try {
        if (cfg_.baseline) summary.rows.push_back(run_baseline(resume));
        for (const RoundPlan& plan : cfg_.rounds) {
            RoundResult result = run_round(plan);
            SummaryRow row;
            row.al_rounds = plan.round_index + 1;
            row.training_data = result.training_data;
            row.validation = result.validation;
            row.reused_cache = result.reused_cache;
            summary.rows.push_back(row);
            summary.results.push_back(std::move(result));
        }
    } catch (const Error& e) {
        error_message = e.what();
        error_round = static_cast<int>(summary.results.size());
        ojson doc = summary_to_json(summary, cfg_.name);
        doc["error"] = {{"round_index", *error_round}, {"message", *error_message}};
        atomic_write_file(cfg_.workdir / "campaign_summary.json", doc.dump(2) + "\n");
        print_summary_table(summary);
        throw;
    }

    ojson doc = summary_to_json(summary, cfg_.name);
    doc["error"] = nullptr;
    atomic_write_file(cfg_.workdir / "campaign_summary.json", doc.dump(2) + "\n");
    print_summary_table(summary);
    return summary;
}

} // namespace mvlabel
