#include "mvlabel/errors.hpp"
#include "mvlabel/orchestrator.hpp"
#include "mvlabel/simulator.hpp"

#include "test_support.hpp"

#include <fstream>

#include <doctest.h>

using namespace mvlabel;

namespace {

AdapterSpec mock_adapter(const std::string& id, AdapterRole role,
                         std::vector<std::string> args, double timeout_s = 60.0) {
    AdapterSpec spec;
    spec.id = id;
    spec.role = role;
    spec.command.push_back(MOCK_ADAPTER_EXE);
    for (std::string& a : args) spec.command.push_back(std::move(a));
    spec.timeout_s = timeout_s;
    return spec;
}

// Small target dataset with ground truth and a 50/25/25 split, plus a
// campaign config wired to the mock adapters.
struct Fixture {
    explicit Fixture(const mvtest::TempDir& dir, int n_frames = 12,
                     double cell_size = 0.1) {
        const GroundGrid grid = GroundGrid::from_extent({0, 0}, 12.0, 36.0, cell_size);
        const SceneParams params{grid, n_frames, 8.0, 1.2, 4711};
        scene = gen_scene(params);
        annotations = dir / "annotations.jsonl";
        write_annotations(annotations, scene);

        DatasetManifest manifest("target", grid);
        for (const AnnotatedFrame& frame : scene) manifest.frames.push_back({frame.frame_id, {}});
        manifest.annotations = "annotations.jsonl";
        split_dataset(manifest, {0.5, 0.25, 0.25}, SplitOrdering::Sequential);
        manifest_path = dir / "target_manifest.json";
        write_manifest(manifest_path, manifest);

        config.name = "test-campaign";
        config.workdir = dir / "campaign";
        config.target_manifest_path = manifest_path;
        add_adapter(mock_adapter("echo", AdapterRole::Detector,
                                 {"echo-detector", "--annotations", annotations.string()}));
        add_adapter(mock_adapter("replay", AdapterRole::Detector, {"replay-detector"}));
        add_adapter(mock_adapter("memorize", AdapterRole::Trainer, {"memorize-trainer"}));
        config.trainer = "memorize";
        config.eval_detector = "echo";
    }

    void add_adapter(AdapterSpec spec) { config.adapters[spec.id] = std::move(spec); }

    RoundPlan round(int index, const std::string& labeler, LabelKind kind,
                    std::vector<LabelKind> components,
                    TrainingModeKind mode = TrainingModeKind::FromScratch) const {
        RoundPlan plan;
        plan.round_index = index;
        plan.labeler = labeler;
        plan.label_kind = kind;
        plan.training_set.components = std::move(components);
        plan.training_mode.mode = mode;
        return plan;
    }

    std::vector<AnnotatedFrame> scene;
    std::filesystem::path annotations;
    std::filesystem::path manifest_path;
    CampaignConfig config;
};

} // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("echo labeling reproduces the ground truth on the train split") {
    mvtest::TempDir dir("orch_echo");
    Fixture fx(dir);
    Orchestrator orch(fx.config, "");
    const auto round_dir = dir / "manual_round";
    const LabelSetInfo info = orch.generate_labels(
        fx.config.adapters.at("echo"), orch.target_manifest(), SplitClass::Train,
        LabelKind::AutoLabel, 0, "", round_dir);

    CHECK(info.kind == LabelKind::AutoLabel);
    CHECK(info.adapter_id == "echo");
    CHECK(info.frame_ids.size() == 6); // half of 12
    CHECK_FALSE(info.command_digest.empty());
    CHECK_FALSE(info.input_digest.empty());

    const auto produced = read_detections(info.detections_path);
    REQUIRE(produced.size() == 6);
    for (const DetectionSet& set : produced) {
        const auto it = std::find_if(fx.scene.begin(), fx.scene.end(), [&](const auto& f) {
            return f.frame_id == set.frame_id;
        });
        REQUIRE(it != fx.scene.end());
        REQUIRE(set.detections.size() == it->gts.detections.size());
        for (size_t j = 0; j < set.detections.size(); ++j)
            REQUIRE(set.detections[j].location == it->gts.detections[j].location);
    }
    // per-frame label rasters + content manifest exist
    CHECK(std::filesystem::exists(info.labels_dir / "label_manifest.json"));
    for (const std::string& frame_id : info.frame_ids)
        CHECK(std::filesystem::exists(info.labels_dir / (frame_id + ".mvhm")));
    CHECK(std::filesystem::exists(round_dir / "label_set.json"));
}

TEST_CASE("heatmap-emitting adapters round-trip through MVHM extraction") {
    mvtest::TempDir dir("orch_hm");
    // Fine grid so sigma = 5 cells stays well inside the NMS radius.
    Fixture fx(dir, 8, 0.025);
    fx.add_adapter(mock_adapter("echo_hm", AdapterRole::Detector,
                                {"heatmap-detector", "--annotations", fx.annotations.string()}));
    Orchestrator orch(fx.config, "");
    const LabelSetInfo info = orch.generate_labels(
        fx.config.adapters.at("echo_hm"), orch.target_manifest(), SplitClass::Train,
        LabelKind::AutoLabel, 0, "", dir / "round");
    const auto produced = read_detections(info.detections_path);
    for (const DetectionSet& set : produced) {
        const auto it = std::find_if(fx.scene.begin(), fx.scene.end(), [&](const auto& f) {
            return f.frame_id == set.frame_id;
        });
        REQUIRE(set.detections.size() == it->gts.detections.size());
        // extraction lands on the cell center containing each person
        for (const Detection& det : set.detections) {
            const double best = [&] {
                double m = 1e9;
                for (const Detection& gt : it->gts.detections)
                    m = std::min(m, distance(det.location, gt.location));
                return m;
            }();
            REQUIRE(best <= 0.025 * std::sqrt(2.0) / 2.0 + 1e-9);
        }
    }
}

TEST_CASE("adapter failure modes are distinguished") {
    mvtest::TempDir dir("orch_fail");
    Fixture fx(dir);
    fx.add_adapter(mock_adapter("bad_exit", AdapterRole::Detector, {"fail", "--exit-code", "9"}));
    fx.add_adapter(mock_adapter("sleepy", AdapterRole::Detector,
                                {"hang", "--seconds", "10"}, /*timeout_s=*/0.4));
    fx.add_adapter(mock_adapter("garbage", AdapterRole::Detector, {"garbage-detector"}));
    fx.add_adapter(mock_adapter("partial", AdapterRole::Detector,
                                {"echo-detector", "--annotations", fx.annotations.string(),
                                 "--omit", "frame_0000"}));
    Orchestrator orch(fx.config, "");

    auto run = [&](const std::string& id, const std::string& tag) {
        return [&orch, &fx, id, tag, &dir] {
            orch.generate_labels(fx.config.adapters.at(id), orch.target_manifest(),
                                 SplitClass::Train, LabelKind::AutoLabel, 0, "",
                                 dir / ("round_" + tag));
        };
    };

    try {
        run("bad_exit", "a")();
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.cause() == AdapterError::Cause::ExitCode);
        CHECK(e.adapter_id() == "bad_exit");
    }
    try {
        run("sleepy", "b")();
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.cause() == AdapterError::Cause::Timeout);
    }
    try {
        run("garbage", "c")();
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.cause() == AdapterError::Cause::MalformedOutput);
    }
    try {
        run("partial", "d")();
        FAIL("expected AdapterError");
    } catch (const AdapterError& e) {
        CHECK(e.cause() == AdapterError::Cause::Coverage);
        CHECK(std::string(e.what()).find("frame_0000") != std::string::npos);
    }
}

TEST_CASE("captured stderr lands in the round directory") {
    mvtest::TempDir dir("orch_err");
    Fixture fx(dir);
    fx.add_adapter(mock_adapter("bad_exit", AdapterRole::Detector, {"fail", "--exit-code", "3"}));
    Orchestrator orch(fx.config, "");
    CHECK_THROWS_AS(orch.generate_labels(fx.config.adapters.at("bad_exit"),
                                         orch.target_manifest(), SplitClass::Train,
                                         LabelKind::AutoLabel, 0, "", dir / "round"),
                    AdapterError);
    const std::string err = read_file(dir / "round" / "labeler.stderr.txt");
    CHECK(err.find("failing on purpose") != std::string::npos);
}

TEST_CASE("compose_training_set joins components with origin tags") {
    mvtest::TempDir dir("orch_compose");
    Fixture fx(dir);

    // Source dataset: 4 frames, no split (all train).
    const GroundGrid grid = preset_grid("wildtrack");
    const SceneParams sparams{grid, 4, 5.0, 1.0, 999};
    const auto source_scene = gen_scene(sparams);
    write_annotations(dir / "source_annotations.jsonl", source_scene);
    DatasetManifest source("source", grid);
    for (const AnnotatedFrame& frame : source_scene)
        source.frames.push_back({frame.frame_id, {}});
    source.annotations = "source_annotations.jsonl";
    write_manifest(dir / "source_manifest.json", source);
    fx.config.source_manifest_path = dir / "source_manifest.json";

    Orchestrator orch(fx.config, "");
    const auto round_dir = dir / "round";
    const LabelSetInfo labels = orch.generate_labels(
        fx.config.adapters.at("echo"), orch.target_manifest(), SplitClass::Train,
        LabelKind::AutoLabel, 0, "", round_dir);
    std::map<LabelKind, LabelSetInfo> produced{{LabelKind::AutoLabel, labels}};

    SUBCASE("single component") {
        TrainingSetSpec spec{{LabelKind::AutoLabel}};
        const auto path = orch.compose_training_set(spec, produced, round_dir);
        const nlohmann::json doc = nlohmann::json::parse(read_file(path));
        REQUIRE(doc["entries"].size() == 6);
        for (const auto& e : doc["entries"]) {
            REQUIRE(e["origin"] == "ALT");
            REQUIRE(e["label"]["heatmap"].is_string());
        }
        CHECK(doc["training_data"] == "ALT only");
    }

    SUBCASE("source plus target adds up with distinct tags") {
        TrainingSetSpec spec{{LabelKind::SourceLabel, LabelKind::AutoLabel}};
        const auto path = orch.compose_training_set(spec, produced, round_dir);
        const nlohmann::json doc = nlohmann::json::parse(read_file(path));
        REQUIRE(doc["entries"].size() == 10); // 4 source + 6 target train
        int ls = 0, alt = 0;
        for (const auto& e : doc["entries"]) {
            if (e["origin"] == "LS") {
                ++ls;
                REQUIRE(e["label"]["heatmap"].is_null());
            }
            if (e["origin"] == "ALT") ++alt;
        }
        CHECK(ls == 4);
        CHECK(alt == 6);
        CHECK(doc["training_data"] == "LS + ALT");
    }

    SUBCASE("missing component is an error") {
        TrainingSetSpec spec{{LabelKind::PseudoLabel}};
        CHECK_THROWS_AS(orch.compose_training_set(spec, produced, round_dir),
                        MissingComponentError);
    }
}

TEST_CASE("FT without an init model fails before any adapter launches") {
    mvtest::TempDir dir("orch_ft");
    Fixture fx(dir);
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel,
                                        {LabelKind::AutoLabel}, TrainingModeKind::FineTune));
    Orchestrator orch(fx.config, "");
    CHECK_THROWS_AS(orch.run_round(fx.config.rounds[0]), ConfigError);
    CHECK_FALSE(std::filesystem::exists(fx.config.workdir / "rounds"));
}

TEST_CASE("PLT in round 0 requires an explicit source model") {
    mvtest::TempDir dir("orch_plt0");
    Fixture fx(dir);
    RoundPlan plan = fx.round(0, "replay", LabelKind::PseudoLabel, {LabelKind::PseudoLabel});
    Orchestrator orch(fx.config, "");
    CHECK_THROWS_AS(orch.run_round(plan), ConfigError);
}

TEST_CASE("a full round trains, validates perfectly with the echo mock, and caches") {
    mvtest::TempDir dir("orch_round");
    Fixture fx(dir);
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel, {LabelKind::AutoLabel}));
    Orchestrator orch(fx.config, "");
    const CampaignSummary summary = orch.run_campaign(false);
    REQUIRE(summary.rows.size() == 1);
    CHECK(summary.rows[0].al_rounds == 1);
    CHECK(summary.rows[0].training_data == "ALT only");
    REQUIRE(summary.rows[0].validation.has_value());
    CHECK(summary.rows[0].validation->moda == 1.0);
    CHECK(summary.rows[0].validation->recall == 1.0);
    REQUIRE(summary.results.size() == 1);
    CHECK(std::filesystem::exists(summary.results[0].model_path));
    CHECK(std::filesystem::exists(fx.config.workdir / "campaign_summary.json"));
    CHECK(std::filesystem::exists(fx.config.workdir / "rounds" / "round_000" / "round.json"));

    // Re-running with --resume reuses the completed round untouched.
    const std::string marker_before =
        read_file(fx.config.workdir / "rounds" / "round_000" / "round.json");
    Orchestrator orch2(fx.config, "");
    const CampaignSummary again = orch2.run_campaign(true);
    REQUIRE(again.rows.size() == 1);
    CHECK(again.rows[0].reused_cache);
    CHECK(read_file(fx.config.workdir / "rounds" / "round_000" / "round.json") == marker_before);

    // Without --resume, existing results are refused.
    Orchestrator orch3(fx.config, "");
    CHECK_THROWS_AS(orch3.run_campaign(false), ConfigError);
}

TEST_CASE("memorize/replay campaigns reach a labeling fixed point") {
    mvtest::TempDir dir("orch_fixed");
    Fixture fx(dir);
    fx.config.eval_detector = "replay";
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel, {LabelKind::AutoLabel}));
    fx.config.rounds.push_back(
        fx.round(1, "replay", LabelKind::PseudoLabel, {LabelKind::PseudoLabel}));
    fx.config.rounds.push_back(
        fx.round(2, "replay", LabelKind::PseudoLabel, {LabelKind::PseudoLabel}));
    Orchestrator orch(fx.config, "");
    const CampaignSummary summary = orch.run_campaign(false);
    REQUIRE(summary.results.size() == 3);

    auto labels_bytes = [&](int round, const std::string& name) {
        return read_file(fx.config.workdir / "rounds" /
                         ("round_00" + std::to_string(round)) / "labels" / name);
    };
    // Rounds 2 and 3 (indices 1 and 2) replay the same memorized model:
    // byte-identical label content.
    CHECK(labels_bytes(1, "detections.jsonl") == labels_bytes(2, "detections.jsonl"));
    CHECK(labels_bytes(1, "label_manifest.json") == labels_bytes(2, "label_manifest.json"));
    // The first round's labels came from the echo detector directly; the
    // replayed ones must equal them too (the fixed point).
    CHECK(labels_bytes(0, "detections.jsonl") == labels_bytes(1, "detections.jsonl"));

    // Identical validation metrics in all rounds.
    for (int r = 1; r < 3; ++r) {
        REQUIRE(summary.results[r].validation.has_value());
        CHECK(summary.results[r].validation->moda == summary.results[0].validation->moda);
        CHECK(summary.results[r].validation->modp == summary.results[0].validation->modp);
        CHECK(summary.results[r].validation->precision ==
              summary.results[0].validation->precision);
        CHECK(summary.results[r].validation->recall == summary.results[0].validation->recall);
    }

    // Models are byte-identical across rounds (same memorized content).
    CHECK(digest_file(summary.results[1].model_path) ==
          digest_file(summary.results[2].model_path));
}

TEST_CASE("re-running with unchanged inputs reproduces manifests byte for byte") {
    mvtest::TempDir dir("orch_rerun");
    Fixture fx(dir);
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel, {LabelKind::AutoLabel}));

    CampaignConfig second = fx.config;
    second.workdir = dir / "campaign_b";
    Orchestrator(fx.config, "").run_campaign(false);
    Orchestrator(second, "").run_campaign(false);

    for (const char* rel : {"rounds/round_000/labels/label_manifest.json",
                            "rounds/round_000/labels/detections.jsonl",
                            "rounds/round_000/training_manifest.json",
                            "rounds/round_000/label_set.json"}) {
        CHECK(read_file(fx.config.workdir / rel) == read_file(second.workdir / rel));
    }
}

TEST_CASE("a baseline-only campaign yields the single 0-round row") {
    mvtest::TempDir dir("orch_base");
    Fixture fx(dir);
    fx.config.baseline = BaselinePlan{"", "LS only"};
    Orchestrator orch(fx.config, "");
    const CampaignSummary summary = orch.run_campaign(false);
    REQUIRE(summary.rows.size() == 1);
    CHECK(summary.rows[0].al_rounds == 0);
    CHECK(summary.rows[0].training_data == "LS only");
    REQUIRE(summary.rows[0].validation.has_value());
    CHECK(summary.rows[0].validation->moda == 1.0); // echo mock is perfect

    // resuming reuses the cached baseline
    Orchestrator again(fx.config, "");
    const CampaignSummary resumed = again.run_campaign(true);
    REQUIRE(resumed.rows.size() == 1);
    CHECK(resumed.rows[0].reused_cache);
    CHECK(resumed.rows[0].validation->moda == 1.0);
}

TEST_CASE("a failing round halts the campaign but keeps completed rows") {
    mvtest::TempDir dir("orch_halt");
    Fixture fx(dir);
    fx.add_adapter(mock_adapter("sleepy", AdapterRole::Detector, {"hang", "--seconds", "10"},
                                /*timeout_s=*/0.4));
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel, {LabelKind::AutoLabel}));
    fx.config.rounds.push_back(
        fx.round(1, "sleepy", LabelKind::PseudoLabel, {LabelKind::PseudoLabel}));
    Orchestrator orch(fx.config, "");
    CHECK_THROWS_AS(orch.run_campaign(false), AdapterError);
    const nlohmann::json summary =
        nlohmann::json::parse(read_file(fx.config.workdir / "campaign_summary.json"));
    REQUIRE(summary["rows"].size() == 1);
    CHECK(summary["error"]["round_index"] == 1);
    CHECK(std::filesystem::exists(fx.config.workdir / "rounds" / "round_000" / "round.json"));
    CHECK_FALSE(std::filesystem::exists(fx.config.workdir / "rounds" / "round_001"));
}

TEST_CASE("detector invocations follow the documented protocol") {
    mvtest::TempDir dir("orch_proto");
    Fixture fx(dir);
    fx.config.rounds.push_back(fx.round(0, "echo", LabelKind::AutoLabel, {LabelKind::AutoLabel}));
    Orchestrator orch(fx.config, "");
    orch.run_campaign(false);

    const nlohmann::json inv = nlohmann::json::parse(
        read_file(fx.config.workdir / "rounds" / "round_000" / "invocation_labeler.json"));
    CHECK(inv["protocol"] == "mvlabel-adapter-v1");
    CHECK(inv["role"] == "detector");
    CHECK(inv["frames"].size() == 6);
    CHECK(inv["grid"]["n_rows"] == 120);
    CHECK(inv["options"]["min_prob"] == 0.4);
    CHECK(inv["options"]["nms_radius"] == 0.5);
    CHECK(inv["model"].is_null());
    CHECK(inv["output_dir"].is_string());

    const nlohmann::json tinv = nlohmann::json::parse(
        read_file(fx.config.workdir / "rounds" / "round_000" / "invocation_trainer.json"));
    CHECK(tinv["role"] == "trainer");
    CHECK(tinv["mode"] == "FS");
    CHECK(tinv["init_model"].is_null());
    // reference hyperparameters pass through verbatim
    CHECK(tinv["passthrough"]["epochs"] == 10);
    CHECK(tinv["passthrough"]["batch_size"] == 1);
    CHECK(tinv["passthrough"]["optimizer"] == "SGD");
    CHECK(tinv["passthrough"]["learning_rate"] == 0.0005);
    CHECK(tinv["passthrough"]["momentum"] == 0.9);
    CHECK(tinv["passthrough"]["weight_decay"] == 0.0005);
    CHECK(tinv["passthrough"]["max_learning_rate"] == 0.005);
}

TEST_CASE("campaign config files load into plans") {
    mvtest::TempDir dir("orch_cfg");
    Fixture fx(dir);
    const std::string config_json = R"({
      "name": "from-file",
      "workdir": "campaign",
      "target_manifest": "target_manifest.json",
      "options": {"min_prob": 0.35, "sigma": 4.0},
      "adapters": {
        "echo": {"role": "detector", "command": [")" MOCK_ADAPTER_EXE R"(", "echo-detector",
                  "--annotations", "annotations.jsonl", "{invocation}"], "timeout_s": 30},
        "trainer": {"role": "trainer", "command": [")" MOCK_ADAPTER_EXE R"(", "memorize-trainer"]}
      },
      "trainer": "trainer",
      "eval_detector": "echo",
      "rounds": [
        {"labeler": "echo", "label_kind": "ALT", "components": ["ALT"], "mode": "FS"}
      ]
    })";
    atomic_write_file(dir / "campaign.json", config_json);
    const CampaignConfig cfg = load_campaign_config(dir / "campaign.json", "");
    CHECK(cfg.name == "from-file");
    CHECK(cfg.workdir == dir / "campaign");
    CHECK(cfg.options.min_prob == 0.35);
    CHECK(cfg.options.sigma == 4.0);
    CHECK(cfg.options.nms_radius == 0.5); // default kept
    REQUIRE(cfg.rounds.size() == 1);
    CHECK(cfg.rounds[0].labeler == "echo");
    CHECK(cfg.rounds[0].label_kind == LabelKind::AutoLabel);
    CHECK(cfg.adapters.at("echo").timeout_s == 30);

    CHECK_THROWS_AS(load_campaign_config(dir / "nope.json", ""), IoError);
    atomic_write_file(dir / "bad.json", "{]");
    CHECK_THROWS_AS(load_campaign_config(dir / "bad.json", ""), ParseError);
}

} // TEST_SUITE
