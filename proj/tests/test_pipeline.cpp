#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "oracles.hpp"
#include "tdet/pipeline.hpp"
#include "tdet/synthetic.hpp"

using namespace tdet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "tdet_pipeline_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<double> flat_params(const Network& net) {
    std::vector<double> all;
    for (const auto& layer : net.layers) {
        all.insert(all.end(), layer->params().begin(), layer->params().end());
    }
    return all;
}

// One 6+6-image 32px dataset per artifact kind, generated once and shared
// read-only across the tests.
const fs::path& dataset_dir(ArtifactKind kind) {
    static std::map<ArtifactKind, fs::path> dirs;
    const auto it = dirs.find(kind);
    if (it != dirs.end()) return it->second;
    SyntheticSpec spec;
    spec.n_real = 6;
    spec.n_fake = 6;
    spec.image_size = 32;
    spec.artifact_kind = kind;
    spec.artifact_strength = 0.5;
    spec.seed = 7;
    const fs::path dir = fresh_dir("ds_" + std::string(artifact_kind_name(kind)));
    generate_synthetic(spec, dir);
    return dirs.emplace(kind, dir).first->second;
}

std::string dataset_name(ArtifactKind kind) {
    return dataset_dir(kind).filename().string();
}

RunConfig tiny_config() {
    RunConfig c;
    c.crop_size = 32;
    c.stage1_epochs = 2;
    c.seed = 7;
    return c;
}

ExperimentPlan tiny_plan(const std::string& run_name, ArtifactKind train_kind,
                         std::vector<ArtifactKind> eval_kinds = {}) {
    ExperimentPlan plan;
    plan.train_manifest = dataset_dir(train_kind) / "manifest.csv";
    if (eval_kinds.empty()) eval_kinds = {train_kind};
    for (const ArtifactKind k : eval_kinds) {
        plan.eval_manifests.push_back(dataset_dir(k) / "manifest.csv");
    }
    plan.config = tiny_config();
    plan.output_dir = fresh_dir(run_name);
    return plan;
}

}  // namespace

TEST_CASE("plan files round-trip and reject unknown keys") {
    const std::string text =
        "train_manifest = a/manifest.csv\n"
        "eval_manifest = a/manifest.csv\n"
        "eval_manifest = /abs/b/manifest.csv\n"
        "output_dir = out\n"
        "mode = backbone_only\n"
        "backbone = tiny_conv\n"
        "crop_size = 32\n"
        "stage1_epochs = 3\n"
        "seed = 9\n";
    const ExperimentPlan plan = parse_plan(text, "<test>", "/base");
    CHECK(plan.train_manifest == fs::path("/base/a/manifest.csv"));
    REQUIRE(plan.eval_manifests.size() == 2);
    CHECK(plan.eval_manifests[0] == fs::path("/base/a/manifest.csv"));
    CHECK(plan.eval_manifests[1] == fs::path("/abs/b/manifest.csv"));
    CHECK(plan.output_dir == fs::path("/base/out"));
    CHECK(plan.mode == PlanMode::kBackboneOnly);
    CHECK(plan.backbone == BackboneKind::kTinyConv);
    CHECK(plan.config.crop_size == 32);
    CHECK(plan.config.stage1_epochs == 3);
    CHECK(plan.config.seed == 9);

    CHECK_THROWS_AS(parse_plan("bogus_key = 1\n"), ConfigUnknownKeyError);
    CHECK_THROWS_AS(parse_plan("train_manifest = m.csv\n"
                               "eval_manifest = m.csv\n"),
                    PlanError);  // no output_dir
    CHECK_THROWS_AS(parse_plan("train_manifest = m.csv\n"
                               "output_dir = out\n"),
                    PlanError);  // no eval manifest
    CHECK_THROWS_AS(plan_mode_from_string("nope"), PlanError);

    const fs::path dir = fresh_dir("plan_io");
    {
        std::ofstream out(dir / "p.plan");
        out << "train_manifest = m.csv\neval_manifest = m.csv\noutput_dir = run\n";
    }
    const ExperimentPlan loaded = load_plan(dir / "p.plan");
    CHECK(loaded.train_manifest == dir / "m.csv");
    CHECK(loaded.output_dir == dir / "run");
    CHECK(loaded.mode == PlanMode::kTripletPipeline);
    CHECK_THROWS_AS(load_plan(dir / "missing.plan"), FileError);
}

TEST_CASE("run directory layout is a pure function of dataset names") {
    const RunPaths paths{fs::path("root")};
    CHECK(paths.backbone_checkpoint() == fs::path("root/checkpoints/backbone.json"));
    CHECK(paths.classifier_checkpoint() == fs::path("root/checkpoints/classifier.json"));
    CHECK(paths.train_features("A") == fs::path("root/features/train_A.csv"));
    CHECK(paths.test_features("B") == fs::path("root/features/test_B.csv"));
    CHECK(paths.score_file("A", "B") == fs::path("root/scores/scores_A_x_B.csv"));
    CHECK(paths.report_file("A", "B") == fs::path("root/reports/report_A_x_B.json"));
    CHECK(paths.stage1_history() == fs::path("root/logs/stage1_history.csv"));
    CHECK(paths.stage2_history() == fs::path("root/logs/stage2_history.csv"));
}

TEST_CASE("loss histories round-trip through csv") {
    const fs::path dir = fresh_dir("history");
    const std::vector<double> losses{0.5, 0.25, 0.12500000000000003, 1e-9};
    save_history(losses, dir / "h.csv");
    CHECK(load_history(dir / "h.csv") == losses);

    save_history({}, dir / "empty.csv");
    CHECK(load_history(dir / "empty.csv").empty());

    { std::ofstream(dir / "bad_header.csv") << "nope\n0,1\n"; }
    CHECK_THROWS_AS(load_history(dir / "bad_header.csv"), CsvHeaderError);
    { std::ofstream(dir / "bad_row.csv") << "epoch,loss\n5,0.5\n"; }
    CHECK_THROWS_AS(load_history(dir / "bad_row.csv"), CsvRowError);
    CHECK_THROWS_AS(load_history(dir / "missing.csv"), FileError);
}

TEST_CASE("stage 1 writes a checkpoint and one loss per epoch") {
    ExperimentPlan plan = tiny_plan("stage1", ArtifactKind::kWarpPatch);
    const Stage1Outcome outcome = run_stage1(plan);
    CHECK(outcome.history.epoch_loss.size() == 2);

    const RunPaths paths{plan.output_dir};
    const BackboneCheckpoint ckpt = load_backbone(paths.backbone_checkpoint());
    CHECK(flat_params(ckpt.backbone.net) == flat_params(outcome.backbone.net));
    CHECK(ckpt.config == plan.config);
    CHECK(load_history(paths.stage1_history()) == outcome.history.epoch_loss);

    ExperimentPlan zero = tiny_plan("stage1_zero", ArtifactKind::kWarpPatch);
    zero.config.stage1_epochs = 0;
    const Stage1Outcome untouched = run_stage1(zero);
    CHECK(untouched.history.epoch_loss.empty());
    CHECK(fs::exists(RunPaths{zero.output_dir}.backbone_checkpoint()));

    ExperimentPlan baseline = tiny_plan("stage1_baseline", ArtifactKind::kWarpPatch);
    baseline.mode = PlanMode::kBackboneOnly;
    CHECK_THROWS_AS(run_stage1(baseline), PlanError);
}

TEST_CASE("feature extraction preserves manifest order and repeats bitwise") {
    const Manifest m = load_manifest(dataset_dir(ArtifactKind::kWarpPatch) / "manifest.csv");
    Backbone b = make_backbone(BackboneKind::kTinyConv, 32, 2, 0.5);
    init_backbone(b, 7);
    const fs::path dir = fresh_dir("extract");

    const auto rows = run_extract(b, m, Split::kTrain, 32, dir / "f.csv");
    std::vector<std::string> manifest_ids;
    for (const Sample& s : m.samples) {
        if (s.split == Split::kTrain) manifest_ids.push_back(s.id);
    }
    REQUIRE(rows.size() == manifest_ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].id == manifest_ids[i]);

    const std::string first = file_bytes(dir / "f.csv");
    run_extract(b, m, Split::kTrain, 32, dir / "f.csv");
    CHECK(file_bytes(dir / "f.csv") == first);

    const auto loaded = load_features(dir / "f.csv");
    REQUIRE(loaded.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(loaded[i].id == rows[i].id);
        CHECK(loaded[i].label == rows[i].label);
        CHECK(loaded[i].point == rows[i].point);
    }

    const auto test_rows = run_extract(b, m, Split::kTest, 32, dir / "t.csv");
    CHECK(rows.size() + test_rows.size() == m.samples.size());
}

TEST_CASE("stage 2 writes classifier checkpoint and history") {
    ExperimentPlan plan = tiny_plan("stage2", ArtifactKind::kWarpPatch);
    Backbone b = make_backbone(BackboneKind::kTinyConv, 32, 2, 0.5);
    init_backbone(b, 7);
    const Manifest m = load_manifest(plan.train_manifest);
    const fs::path scratch = fresh_dir("stage2_features");
    const auto rows = run_extract(b, m, Split::kTrain, 32, scratch / "train.csv");

    const Stage2Result result = run_stage2(plan, rows);
    CHECK(result.epoch_loss.size() == kStage2Epochs);

    const RunPaths paths{plan.output_dir};
    const ClassifierCheckpoint cp = load_classifier(paths.classifier_checkpoint());
    CHECK(flat_params(cp.net) == flat_params(result.net));
    CHECK(cp.scaler == result.scaler);
    CHECK(cp.embedding_dim == 2);
    CHECK(load_history(paths.stage2_history()) == result.epoch_loss);
}

TEST_CASE("evaluating an oracle scorer and checking the score files") {
    const Manifest m = load_manifest(dataset_dir(ArtifactKind::kWarpPatch) / "manifest.csv");
    const Scorer oracle = [](const Sample& s) {
        Prediction p;
        p.label = s.label;
        p.fake_score = s.label == Label::kFake ? 1.0 : 0.0;
        return p;
    };
    const fs::path dir = fresh_dir("eval");
    const EvalReport report = run_eval(m, oracle, dir / "s.csv", dir / "r.json");
    CHECK(report.auc == 1.0);
    CHECK(report.eer == 0.0);
    CHECK(report.accuracy_at_half == 1.0);
    CHECK(report.n_real == 2);
    CHECK(report.n_fake == 2);

    // metrics recomputed from the emitted file agree with the report
    const auto records = load_scores(dir / "s.csv");
    CHECK(oracle::pairwise_auc(records) == Catch::Approx(report.auc).margin(1e-12));
    CHECK(load_report(dir / "r.json") == report);

    Manifest single = m;
    single.samples.erase(std::remove_if(single.samples.begin(), single.samples.end(),
                                        [](const Sample& s) {
                                            return s.split == Split::kTest &&
                                                   s.label == Label::kFake;
                                        }),
                         single.samples.end());
    CHECK_THROWS_AS(run_eval(single, oracle, dir / "s2.csv", dir / "r2.json"),
                    SingleClassError);
}

TEST_CASE("one plan yields a one-by-one cross matrix") {
    const ExperimentPlan plan = tiny_plan("cross1", ArtifactKind::kWarpPatch);
    const CrossResults results = run_cross({plan});
    REQUIRE(results.size() == 1);
    const std::string ds = dataset_name(ArtifactKind::kWarpPatch);
    REQUIRE(results.count({ds, ds}) == 1);
    const std::string table = render_cross_matrix(results);
    CHECK(table.find('*') != std::string::npos);
    CHECK(table.find('-') == std::string::npos);
}

TEST_CASE("three plans fill all nine cross cells") {
    const std::vector<ArtifactKind> kinds{ArtifactKind::kWarpPatch, ArtifactKind::kBlurPatch,
                                          ArtifactKind::kNoisePatch};
    std::vector<ExperimentPlan> plans;
    for (const ArtifactKind k : kinds) {
        plans.push_back(
            tiny_plan("cross3_" + std::string(artifact_kind_name(k)), k, kinds));
    }
    const CrossResults results = run_cross(plans);
    REQUIRE(results.size() == 9);
    for (const ArtifactKind train_k : kinds) {
        for (const ArtifactKind test_k : kinds) {
            CHECK(results.count({dataset_name(train_k), dataset_name(test_k)}) == 1);
        }
    }
    const std::string table = render_cross_matrix(results);
    CHECK(std::count(table.begin(), table.end(), '*') == 3);
    CHECK(table.find('-') == std::string::npos);
}

TEST_CASE("ablation pairs the two modes and repeats exactly") {
    ExperimentPlan plan = tiny_plan("ablation_a", ArtifactKind::kWarpPatch);
    const AblationResult a = run_ablation(plan);
    REQUIRE(a.by_test_dataset.size() == 1);
    const AblationPair& pair_a = a.by_test_dataset.begin()->second;
    CHECK(pair_a.triplet.n_real == 2);
    CHECK(pair_a.baseline.n_real == 2);
    CHECK(fs::exists(plan.output_dir / "triplet" / "checkpoints" / "classifier.json"));
    CHECK(fs::exists(plan.output_dir / "baseline" / "checkpoints" / "backbone.json"));
    // the baseline run has no second stage
    CHECK(!fs::exists(plan.output_dir / "baseline" / "checkpoints" / "classifier.json"));

    ExperimentPlan again = plan;
    again.output_dir = fresh_dir("ablation_b");
    const AblationResult b = run_ablation(again);
    const AblationPair& pair_b = b.by_test_dataset.begin()->second;
    CHECK(pair_a.triplet == pair_b.triplet);
    CHECK(pair_a.baseline == pair_b.baseline);
}

TEST_CASE("classifier training leaves the backbone checkpoint untouched") {
    ExperimentPlan plan = tiny_plan("separation", ArtifactKind::kWarpPatch);
    run_stage1(plan);
    const RunPaths paths{plan.output_dir};
    const std::string before = file_bytes(paths.backbone_checkpoint());

    const BackboneCheckpoint ckpt = load_backbone(paths.backbone_checkpoint());
    const Manifest m = load_manifest(plan.train_manifest);
    const auto rows = run_extract(ckpt.backbone, m, Split::kTrain, 32,
                                  paths.train_features(dataset_name(ArtifactKind::kWarpPatch)));
    run_stage2(plan, rows);
    CHECK(file_bytes(paths.backbone_checkpoint()) == before);
}

TEST_CASE("existing outputs are refused without overwrite") {
    ExperimentPlan plan = tiny_plan("clobber", ArtifactKind::kWarpPatch);
    const fs::path sentinel = plan.output_dir / "sentinel.txt";
    { std::ofstream(sentinel) << "precious\n"; }
    CHECK_THROWS_AS(run_pipeline(plan), OutputExistsError);
    CHECK(file_bytes(sentinel) == "precious\n");

    run_pipeline(plan, /*overwrite=*/true);
    CHECK(!fs::exists(sentinel));
    CHECK(fs::exists(RunPaths{plan.output_dir}.classifier_checkpoint()));
}

TEST_CASE("identical plans reproduce bitwise-identical artifacts") {
    ExperimentPlan first = tiny_plan("determinism_a", ArtifactKind::kWarpPatch);
    run_pipeline(first);
    ExperimentPlan second = first;
    second.output_dir = fresh_dir("determinism_b");
    run_pipeline(second);

    const std::string ds = dataset_name(ArtifactKind::kWarpPatch);
    const std::vector<fs::path> artifacts{
        fs::path("checkpoints") / "backbone.json",
        fs::path("checkpoints") / "classifier.json",
        fs::path("logs") / "stage1_history.csv",
        fs::path("logs") / "stage2_history.csv",
        fs::path("features") / ("train_" + ds + ".csv"),
        fs::path("features") / ("test_" + ds + ".csv"),
        fs::path("scores") / ("scores_" + ds + "_x_" + ds + ".csv"),
        fs::path("reports") / ("report_" + ds + "_x_" + ds + ".json"),
    };
    for (const fs::path& rel : artifacts) {
        INFO(rel.string());
        CHECK(file_bytes(first.output_dir / rel) == file_bytes(second.output_dir / rel));
    }
}
