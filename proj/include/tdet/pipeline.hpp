#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tdet/backbone.hpp"
#include "tdet/classifier.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/image.hpp"
#include "tdet/manifest.hpp"
#include "tdet/metrics.hpp"
#include "tdet/train.hpp"
#include "tdet/types.hpp"

namespace tdet {

enum class PlanMode { kTripletPipeline, kBackboneOnly };

inline std::string_view plan_mode_name(PlanMode m) {
    return m == PlanMode::kTripletPipeline ? "triplet_pipeline" : "backbone_only";
}

inline PlanMode plan_mode_from_string(std::string_view s) {
    if (s == "triplet_pipeline" || s == "TRIPLET_PIPELINE") return PlanMode::kTripletPipeline;
    if (s == "backbone_only" || s == "BACKBONE_ONLY") return PlanMode::kBackboneOnly;
    throw PlanError("unknown mode \"" + std::string(s) +
                    "\" (expected triplet_pipeline or backbone_only)");
}

struct ExperimentPlan {
    std::filesystem::path train_manifest;
    std::vector<std::filesystem::path> eval_manifests;
    RunConfig config;
    PlanMode mode = PlanMode::kTripletPipeline;
    BackboneKind backbone = BackboneKind::kTinyConv;
    std::filesystem::path output_dir;
};

inline void validate_plan(const ExperimentPlan& plan) {
    if (plan.train_manifest.empty()) throw PlanError("plan is missing train_manifest");
    if (plan.eval_manifests.empty()) throw PlanError("plan needs at least one eval_manifest");
    if (plan.output_dir.empty()) throw PlanError("plan is missing output_dir");
    validate_config(plan.config);
}

// Plan files share the config key=value format and accept every RunConfig
// key directly, plus: train_manifest, eval_manifest (repeatable), mode,
// backbone, output_dir. Relative paths are resolved against base_dir.
inline ExperimentPlan parse_plan(std::string_view text, std::string_view origin = "<string>",
                                 const std::filesystem::path& base_dir = {}) {
    ExperimentPlan plan;
    const auto resolve = [&base_dir](std::string_view value) {
        std::filesystem::path p{std::string(value)};
        if (p.is_absolute() || base_dir.empty()) return p;
        return base_dir / p;
    };
    parse_kv_lines(text, origin, [&](std::string_view key, std::string_view value,
                                     std::size_t line_no) {
        if (key == "train_manifest") {
            plan.train_manifest = resolve(value);
        } else if (key == "eval_manifest") {
            plan.eval_manifests.push_back(resolve(value));
        } else if (key == "mode") {
            plan.mode = plan_mode_from_string(value);
        } else if (key == "backbone") {
            plan.backbone = backbone_kind_from_string(value);
        } else if (key == "output_dir") {
            plan.output_dir = resolve(value);
        } else if (!apply_config_key(plan.config, key, value)) {
            throw ConfigUnknownKeyError(std::string(origin) + ":" + std::to_string(line_no) +
                                        ": unknown plan key \"" + std::string(key) + "\"");
        }
    });
    validate_plan(plan);
    return plan;
}

inline ExperimentPlan load_plan(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open plan \"" + path.string() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_plan(buf.str(), path.string(), path.parent_path());
}

// Fixed run-directory layout; every file name is a function of the train
// and test dataset names.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path checkpoints_dir() const { return root / "checkpoints"; }
    std::filesystem::path features_dir() const { return root / "features"; }
    std::filesystem::path scores_dir() const { return root / "scores"; }
    std::filesystem::path reports_dir() const { return root / "reports"; }
    std::filesystem::path logs_dir() const { return root / "logs"; }

    std::filesystem::path backbone_checkpoint() const {
        return checkpoints_dir() / "backbone.json";
    }
    std::filesystem::path classifier_checkpoint() const {
        return checkpoints_dir() / "classifier.json";
    }
    std::filesystem::path train_features(const std::string& train_ds) const {
        return features_dir() / ("train_" + train_ds + ".csv");
    }
    std::filesystem::path test_features(const std::string& test_ds) const {
        return features_dir() / ("test_" + test_ds + ".csv");
    }
    std::filesystem::path score_file(const std::string& train_ds,
                                     const std::string& test_ds) const {
        return scores_dir() / ("scores_" + train_ds + "_x_" + test_ds + ".csv");
    }
    std::filesystem::path report_file(const std::string& train_ds,
                                      const std::string& test_ds) const {
        return reports_dir() / ("report_" + train_ds + "_x_" + test_ds + ".json");
    }
    std::filesystem::path stage1_history() const { return logs_dir() / "stage1_history.csv"; }
    std::filesystem::path stage2_history() const { return logs_dir() / "stage2_history.csv"; }

    void ensure_layout() const {
        for (const auto& dir :
             {checkpoints_dir(), features_dir(), scores_dir(), reports_dir(), logs_dir()}) {
            std::error_code ec;
            std::filesystem::create_directories(dir, ec);
            if (ec) {
                throw FileError("cannot create run directory \"" + dir.string() +
                                "\": " + ec.message());
            }
        }
    }
};

inline void save_history(const std::vector<double>& losses, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write history \"" + path.string() + "\"");
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << i << ',' << format_double(losses[i]) << '\n';
    }
}

inline std::vector<double> load_history(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open history \"" + path.string() + "\"");
    std::string line;
    if (!std::getline(in, line) || trim(line) != "epoch,loss") {
        throw CsvHeaderError(path.string() + ": malformed history header");
    }
    std::vector<double> losses;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        const auto fields = split(trim(line), ',');
        if (fields.size() != 2 ||
            parse_int(fields[0], "epoch") != static_cast<std::int64_t>(row)) {
            throw CsvRowError(path.string() + ": malformed history row " + std::to_string(row));
        }
        losses.push_back(parse_double(fields[1], "loss"));
        ++row;
    }
    return losses;
}

inline ImageLoader manifest_loader(const Manifest& manifest, int crop_size) {
    return [base = manifest.base_dir, crop_size](const Sample& s) {
        std::filesystem::path p(s.image_path);
        if (!p.is_absolute() && !base.empty()) p = base / p;
        return load_image(p, crop_size);
    };
}

// ---- stage runners (each writes its artifacts under RunPaths) ----

struct Stage1Outcome {
    Backbone backbone;
    Stage1Result history;
};

inline Stage1Outcome run_stage1(const ExperimentPlan& plan) {
    validate_plan(plan);
    if (plan.mode != PlanMode::kTripletPipeline) {
        throw PlanError("run_stage1 requires mode triplet_pipeline");
    }
    const Manifest manifest = load_manifest(plan.train_manifest);
    RunPaths paths{plan.output_dir};
    paths.ensure_layout();

    Stage1Outcome out;
    out.backbone = make_backbone(plan.backbone, plan.config.crop_size,
                                 plan.config.embedding_dim, plan.config.dropout_rate);
    init_backbone(out.backbone, plan.config.seed);
    out.history = train_embedding(manifest, out.backbone, plan.config,
                                  manifest_loader(manifest, plan.config.crop_size));
    save_backbone(out.backbone, plan.config, plan.config.seed, paths.backbone_checkpoint());
    save_history(out.history.epoch_loss, paths.stage1_history());
    return out;
}

inline std::vector<FeatureRow> run_extract(const Backbone& backbone, const Manifest& manifest,
                                           Split split, int crop_size,
                                           const std::filesystem::path& out_csv) {
    const auto rows =
        extract_features(manifest, backbone, split, manifest_loader(manifest, crop_size));
    save_features(rows, backbone.embedding_dim, out_csv);
    return rows;
}

inline Stage2Result run_stage2(const ExperimentPlan& plan, const std::vector<FeatureRow>& features,
                               int epochs = kStage2Epochs) {
    RunPaths paths{plan.output_dir};
    paths.ensure_layout();
    Stage2Result result = train_classifier(features, plan.config, epochs);
    save_classifier(result.net, result.scaler, static_cast<int>(features.front().point.dim()),
                    plan.config, plan.config.seed, paths.classifier_checkpoint());
    save_history(result.epoch_loss, paths.stage2_history());
    return result;
}

// Maps one sample to its prediction; the pipeline wires embed + classify,
// tests may substitute oracles.
using Scorer = std::function<Prediction(const Sample&)>;

inline Scorer make_pipeline_scorer(const Backbone& backbone, const Stage2Result& classifier,
                                   const ImageLoader& loader) {
    return [&backbone, &classifier, loader](const Sample& s) {
        return predict(classifier, embed(backbone, loader(s)));
    };
}

inline Scorer make_baseline_scorer(const Backbone& backbone, const ImageLoader& loader) {
    return [&backbone, loader](const Sample& s) {
        const Tensor image = loader(s);
        check_image_shape(backbone, image);
        const Tensor logits = backbone.net.forward(image, RunMode::kEval);
        return predict_from_logits(logits.data[0], logits.data[1]);
    };
}

inline std::vector<ScoreRecord> score_test_split(const Manifest& manifest,
                                                 const Scorer& scorer) {
    std::vector<ScoreRecord> records;
    for (const Sample& s : manifest.samples) {
        if (s.split != Split::kTest) continue;
        records.push_back({s.id, s.label, scorer(s).fake_score});
    }
    return records;
}

inline EvalReport run_eval(const Manifest& manifest, const Scorer& scorer,
                           const std::filesystem::path& scores_path,
                           const std::filesystem::path& report_path) {
    const std::vector<ScoreRecord> records = score_test_split(manifest, scorer);
    const EvalReport report = evaluate(records);
    save_scores(records, scores_path);
    std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write report \"" + report_path.string() + "\"");
    out << report_to_json(report).dump(2) << '\n';
    return report;
}

inline EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open report \"" + path.string() + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    return report_from_json(j);
}

struct PipelineResult {
    std::string train_dataset;
    Backbone backbone;
    Stage1Result stage1;
    Stage2Result stage2;                      // empty net in BACKBONE_ONLY mode
    std::map<std::string, EvalReport> reports;  // keyed by test dataset name
};

inline void prepare_output_dir(const std::filesystem::path& dir, bool overwrite) {
    if (std::filesystem::exists(dir) && !std::filesystem::is_empty(dir)) {
        if (!overwrite) throw OutputExistsError(dir.string());
        std::filesystem::remove_all(dir);
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw FileError("cannot create output directory \"" + dir.string() +
                        "\": " + ec.message());
    }
}

// Full two-stage run (or the ablation baseline), writing the complete run
// directory and evaluating against every eval manifest.
inline PipelineResult run_pipeline(const ExperimentPlan& plan, bool overwrite = false) {
    validate_plan(plan);
    prepare_output_dir(plan.output_dir, overwrite);
    RunPaths paths{plan.output_dir};
    paths.ensure_layout();

    const Manifest train_m = load_manifest(plan.train_manifest);
    PipelineResult result;
    result.train_dataset = train_m.dataset_name;

    if (plan.mode == PlanMode::kTripletPipeline) {
        result.backbone = make_backbone(plan.backbone, plan.config.crop_size,
                                        plan.config.embedding_dim, plan.config.dropout_rate);
        init_backbone(result.backbone, plan.config.seed);
        result.stage1 =
            train_embedding(train_m, result.backbone, plan.config,
                            manifest_loader(train_m, plan.config.crop_size));
        save_backbone(result.backbone, plan.config, plan.config.seed,
                      paths.backbone_checkpoint());
        save_history(result.stage1.epoch_loss, paths.stage1_history());

        const auto train_rows =
            run_extract(result.backbone, train_m, Split::kTrain, plan.config.crop_size,
                        paths.train_features(train_m.dataset_name));
        result.stage2 = train_classifier(train_rows, plan.config);
        save_classifier(result.stage2.net, result.stage2.scaler,
                        result.backbone.embedding_dim, plan.config,
                        plan.config.seed, paths.classifier_checkpoint());
        save_history(result.stage2.epoch_loss, paths.stage2_history());

        for (const auto& eval_path : plan.eval_manifests) {
            const Manifest eval_m = load_manifest(eval_path);
            run_extract(result.backbone, eval_m, Split::kTest, plan.config.crop_size,
                        paths.test_features(eval_m.dataset_name));
            const Scorer scorer =
                make_pipeline_scorer(result.backbone, result.stage2,
                                     manifest_loader(eval_m, plan.config.crop_size));
            result.reports[eval_m.dataset_name] =
                run_eval(eval_m, scorer,
                         paths.score_file(train_m.dataset_name, eval_m.dataset_name),
                         paths.report_file(train_m.dataset_name, eval_m.dataset_name));
        }
    } else {
        result.backbone = make_backbone(plan.backbone, plan.config.crop_size, 2,
                                        plan.config.dropout_rate, kHeadBinaryLogits);
        init_backbone(result.backbone, plan.config.seed);
        result.stage1 =
            train_backbone_only(train_m, result.backbone, plan.config,
                                manifest_loader(train_m, plan.config.crop_size));
        save_backbone(result.backbone, plan.config, plan.config.seed,
                      paths.backbone_checkpoint());
        save_history(result.stage1.epoch_loss, paths.stage1_history());

        for (const auto& eval_path : plan.eval_manifests) {
            const Manifest eval_m = load_manifest(eval_path);
            const Scorer scorer =
                make_baseline_scorer(result.backbone,
                                     manifest_loader(eval_m, plan.config.crop_size));
            result.reports[eval_m.dataset_name] =
                run_eval(eval_m, scorer,
                         paths.score_file(train_m.dataset_name, eval_m.dataset_name),
                         paths.report_file(train_m.dataset_name, eval_m.dataset_name));
        }
    }
    return result;
}

// One pipeline per plan; collects the full train x test AUC matrix.
inline CrossResults run_cross(const std::vector<ExperimentPlan>& plans, bool overwrite = false) {
    if (plans.empty()) throw PlanError("run_cross needs at least one plan");
    CrossResults results;
    for (const ExperimentPlan& plan : plans) {
        const PipelineResult r = run_pipeline(plan, overwrite);
        for (const auto& [test_ds, report] : r.reports) {
            results[{r.train_dataset, test_ds}] = report;
        }
    }
    return results;
}

struct AblationPair {
    EvalReport triplet;
    EvalReport baseline;
};

struct AblationResult {
    std::map<std::string, AblationPair> by_test_dataset;
};

// Paired run: the triplet pipeline vs. the same backbone trained directly
// with a 2-logit head, sharing seed, epochs, and data.
inline AblationResult run_ablation(const ExperimentPlan& plan, bool overwrite = false) {
    validate_plan(plan);
    prepare_output_dir(plan.output_dir, overwrite);

    ExperimentPlan triplet_plan = plan;
    triplet_plan.mode = PlanMode::kTripletPipeline;
    triplet_plan.output_dir = plan.output_dir / "triplet";
    ExperimentPlan baseline_plan = plan;
    baseline_plan.mode = PlanMode::kBackboneOnly;
    baseline_plan.output_dir = plan.output_dir / "baseline";

    const PipelineResult triplet = run_pipeline(triplet_plan, overwrite);
    const PipelineResult baseline = run_pipeline(baseline_plan, overwrite);

    AblationResult result;
    for (const auto& [test_ds, report] : triplet.reports) {
        result.by_test_dataset[test_ds].triplet = report;
    }
    for (const auto& [test_ds, report] : baseline.reports) {
        result.by_test_dataset[test_ds].baseline = report;
    }
    return result;
}

}  // namespace tdet
