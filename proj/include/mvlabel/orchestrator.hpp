#ifndef MVLABEL_ORCHESTRATOR_HPP
#define MVLABEL_ORCHESTRATOR_HPP

#include "mvlabel/dataio.hpp"
#include "mvlabel/heatmap.hpp"
#include "mvlabel/metrics.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mvlabel {

// Training-data taxonomy: labeled source (LS), labeled target (LT),
// pseudo-labeled target from a trained model (PLT), automatically labeled
// target from an untrained detector (ALT).
enum class LabelKind { SourceLabel, GroundTruth, PseudoLabel, AutoLabel };

const char* label_kind_code(LabelKind kind); // "LS", "LT", "PLT", "ALT"
LabelKind parse_label_kind(const std::string& code);

enum class AdapterRole { Detector, Trainer };

// External executable driven through the file protocol documented in the
// README: the orchestrator writes an invocation JSON, substitutes its path
// for "{invocation}" in the command (or appends it), and reads detections
// JSON-lines or MVHM rasters from the declared output directory.
struct AdapterSpec {
    std::string id;
    AdapterRole role = AdapterRole::Detector;
    std::vector<std::string> command;
    std::string workdir;
    double timeout_s = 600.0;
    std::map<std::string, std::string> env;
};

enum class TrainingModeKind { FromScratch, FineTune };

struct TrainingMode {
    TrainingModeKind mode = TrainingModeKind::FromScratch;
    std::string init_model; // required for FineTune in round 0
};

struct TrainingSetSpec {
    std::vector<LabelKind> components; // non-empty
};

struct RoundPlan {
    int round_index = 0;
    std::string labeler;        // detector adapter id
    LabelKind label_kind = LabelKind::AutoLabel; // AutoLabel or PseudoLabel
    std::string labeler_model;  // round-0 PLT source model; later PLT rounds
                                // implicitly use the previous round's model
    TrainingSetSpec training_set;
    TrainingMode training_mode;
};

struct LabelSetInfo {
    LabelKind kind = LabelKind::AutoLabel;
    std::string adapter_id;
    int round_index = 0;
    std::string command_digest;
    std::string input_digest;
    std::filesystem::path labels_dir;
    std::filesystem::path detections_path;
    std::vector<std::string> frame_ids;
    int dropped_out_of_bounds = 0;
};

struct RoundResult {
    int round_index = 0;
    LabelKind label_kind = LabelKind::AutoLabel;
    std::string training_data; // e.g. "ALT only", "LS + ALT"
    std::filesystem::path round_dir;
    std::filesystem::path label_set_path;
    std::filesystem::path model_path;
    std::string model_digest;
    std::string input_digest;
    std::optional<EvalReport> validation;
    double wall_time_s = 0.0;
    bool reused_cache = false;
};

struct CampaignOptions {
    double min_prob = 0.4;
    double nms_radius = 0.5;
    double match_radius = 0.5;
    int kernel_size = 41;
    double sigma = 5.0;
    KernelNormalization normalization = KernelNormalization::PeakOne;
};

// Evaluation of an existing model without any labeling round (the
// "0 rounds" row of a campaign summary).
struct BaselinePlan {
    std::string model;         // may be empty (model-free detector)
    std::string training_data; // label for the summary row, e.g. "LS only"
};

struct CampaignConfig {
    std::string name;
    std::filesystem::path workdir;
    std::filesystem::path target_manifest_path;
    std::optional<std::filesystem::path> source_manifest_path;
    std::map<std::string, AdapterSpec> adapters;
    std::string trainer;       // adapter id; required when rounds exist
    std::string eval_detector; // adapter id; empty disables validation
    std::optional<BaselinePlan> baseline;
    std::vector<RoundPlan> rounds;
    CampaignOptions options;
    nlohmann::ordered_json passthrough; // recorded verbatim in trainer invocations
};

// Hyperparameter block passed through to trainer adapters by default;
// the orchestrator never interprets any of it.
nlohmann::ordered_json default_trainer_passthrough();

CampaignConfig load_campaign_config(const std::filesystem::path& path,
                                    const std::string& data_root);

struct SummaryRow {
    int al_rounds = 0; // 0 = baseline evaluation, k = after k labeling rounds
    std::string training_data;
    std::optional<EvalReport> validation;
    bool reused_cache = false;
};

struct CampaignSummary {
    std::vector<SummaryRow> rows;
    std::vector<RoundResult> results;
};

class Orchestrator {
public:
    Orchestrator(CampaignConfig config, std::string data_root);

    // Invokes a detector adapter over the selected frames and turns its
    // output (detections or heatmaps) into a canonical label set: per-frame
    // MVHM label rasters plus detections.jsonl under round_dir/labels.
    LabelSetInfo generate_labels(const AdapterSpec& adapter, const DatasetManifest& manifest,
                                 std::optional<SplitClass> filter, LabelKind kind,
                                 int round_index, const std::string& model_path,
                                 const std::filesystem::path& round_dir);

    // Emits round_dir/training_manifest.json listing (frame ref, label ref,
    // origin tag) for the union of the selected components.
    std::filesystem::path compose_training_set(const TrainingSetSpec& spec,
                                               const std::map<LabelKind, LabelSetInfo>& produced,
                                               const std::filesystem::path& round_dir);

    RoundResult run_round(const RoundPlan& plan);

    // Sequential execution with a summary row per baseline/round. Halts at
    // the first failure after persisting the rows completed so far.
    CampaignSummary run_campaign(bool resume);

    const DatasetManifest& target_manifest() const { return target_; }

private:
    struct ValidationOutcome {
        std::optional<EvalReport> report;
    };

    const AdapterSpec& adapter_or_throw(const std::string& id, AdapterRole role) const;
    std::vector<DetectionSet> run_detector_adapter(const AdapterSpec& adapter,
                                                   const DatasetManifest& manifest,
                                                   const std::vector<std::string>& frame_ids,
                                                   const std::string& model_path,
                                                   const std::filesystem::path& stage_dir,
                                                   const std::string& stage_name);
    ValidationOutcome validate_model(const std::string& model_path,
                                     const std::filesystem::path& round_dir);
    std::string round_input_digest(const RoundPlan& plan, const std::string& labeler_model,
                                   const std::string& init_model) const;
    void preflight(const RoundPlan& plan, std::string& labeler_model_out,
                   std::string& init_model_out) const;
    SummaryRow run_baseline(bool resume);

    CampaignConfig cfg_;
    std::string data_root_;
    DatasetManifest target_;
    std::optional<DatasetManifest> source_;
    std::map<std::string, DetectionSet> target_gt_; // frame_id -> ground truth
    std::string prev_model_;       // absolute path of last completed round's model
    std::string prev_model_digest_;
};

std::string training_data_label(const TrainingSetSpec& spec);

nlohmann::ordered_json summary_to_json(const CampaignSummary& summary, const std::string& name);

} // namespace mvlabel

#endif
