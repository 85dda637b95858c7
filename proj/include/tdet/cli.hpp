#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tdet/classifier.hpp"
#include "tdet/config.hpp"
#include "tdet/detector.hpp"
#include "tdet/errors.hpp"
#include "tdet/ingest.hpp"
#include "tdet/manifest.hpp"
#include "tdet/metrics.hpp"
#include "tdet/pipeline.hpp"
#include "tdet/plot.hpp"
#include "tdet/synthetic.hpp"
#include "tdet/types.hpp"

// Single-binary subcommand front end. Every subcommand maps onto one library
// operation; exit statuses are 0 (success), 1 (runtime error), 2 (usage).

namespace tdet {

inline PlotResult cmd_plot(const std::filesystem::path& features_path,
                           const std::filesystem::path& out_stem) {
    return plot_features(load_features(features_path), out_stem);
}

namespace cli_detail {

// Claims the files a command is about to write: existing ones are an error
// without --overwrite, and are removed with it so a failed run cannot leave a
// mix of old and new artifacts.
inline void claim_outputs(const std::vector<std::filesystem::path>& outputs, bool overwrite) {
    for (const auto& p : outputs) {
        if (!std::filesystem::exists(p)) continue;
        if (!overwrite) throw OutputExistsError(p.string());
        std::filesystem::remove_all(p);
    }
}

inline void ensure_parent(const std::filesystem::path& p) {
    const std::filesystem::path dir = p.parent_path();
    if (dir.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw FileError("cannot create directory \"" + dir.string() + "\": " + ec.message());
}

inline std::string pad_to(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

inline std::string render_ablation_table(const AblationResult& r) {
    std::size_t name_w = 4;
    for (const auto& [ds, pair] : r.by_test_dataset) name_w = std::max(name_w, ds.size());
    std::string out = pad_to("test", name_w) +
                      "  triplet_auc  baseline_auc  triplet_acc  baseline_acc\n";
    for (const auto& [ds, pair] : r.by_test_dataset) {
        out += pad_to(ds, name_w);
        out += "  " + pad_to(format_percent_1dp(pair.triplet.auc), 11);
        out += "  " + pad_to(format_percent_1dp(pair.baseline.auc), 12);
        out += "  " + pad_to(format_percent_1dp(pair.triplet.accuracy_at_half), 11);
        out += "  " + format_percent_1dp(pair.baseline.accuracy_at_half);
        out += '\n';
    }
    return out;
}

inline void register_ingest(CLI::App& app, std::ostream& out, std::ostream& err) {
    struct Opts {
        std::vector<std::string> videos;
        std::string out_dir;
        std::string label = "real";
        std::string dataset = "ingest";
        std::string split = "train";
        std::string method;
        std::string detector = "center";
        int crop_size = 299;
        int frame_stride = 5;
        double box_expand = 1.3;
        bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("ingest", "crop faces out of videos into a labeled dataset");
    sub->add_option("--video", o->videos, "video file to ingest (repeatable)")->required();
    sub->add_option("--out", o->out_dir, "output dataset directory")->required();
    sub->add_option("--label", o->label, "ground-truth label for every crop")
        ->check(CLI::IsMember({"real", "fake"}))
        ->capture_default_str();
    sub->add_option("--dataset", o->dataset, "dataset name recorded in the manifest")
        ->capture_default_str();
    sub->add_option("--split", o->split, "split recorded in the manifest")
        ->check(CLI::IsMember({"train", "test"}))
        ->capture_default_str();
    sub->add_option("--method", o->method, "manipulation method recorded for fake crops");
    sub->add_option("--detector", o->detector, "face detector: center or cascade:<model.xml>")
        ->capture_default_str();
    sub->add_option("--crop-size", o->crop_size, "square crop side in pixels")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--frame-stride", o->frame_stride, "sample every Nth frame")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--box-expand", o->box_expand, "detection box expansion factor")
        ->capture_default_str();
    sub->add_flag("--overwrite", o->overwrite, "replace an existing output directory");
    sub->callback([o, &out, &err] {
        IngestOptions options;
        options.crop_size = o->crop_size;
        options.frame_stride = o->frame_stride;
        options.box_expand = o->box_expand;
        options.label = o->label == "fake" ? Label::kFake : Label::kReal;
        options.dataset = o->dataset;
        options.split = split_from_string(o->split);
        options.method = o->method;
        const Detector detector = make_detector(o->detector);

        const std::filesystem::path dir(o->out_dir);
        prepare_output_dir(dir, o->overwrite);
        Manifest m;
        m.dataset_name = o->dataset;
        m.base_dir = dir;
        for (const std::string& video : o->videos) {
            IngestResult r = ingest_video(video, detector, options, dir);
            for (const std::string& line : r.log_lines) err << line << '\n';
            m.samples.insert(m.samples.end(), r.samples.begin(), r.samples.end());
        }
        save_manifest(m, dir / "manifest.csv");
        out << "wrote " << m.samples.size() << " crops and manifest.csv to " << dir.string()
            << '\n';
    });
}

inline void register_synth(CLI::App& app, std::ostream& out) {
    struct Opts {
        int n_real = 0;
        int n_fake = 0;
        int size = 64;
        std::string kind = "warp_patch";
        double strength = 0.5;
        std::uint64_t seed = 0;
        std::string out_dir;
        bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    sub->add_option("--n-real", o->n_real, "number of pristine images")->required();
    sub->add_option("--n-fake", o->n_fake, "number of manipulated images")->required();
    sub->add_option("--out", o->out_dir, "output dataset directory")->required();
    sub->add_option("--size", o->size, "square image side in pixels")->capture_default_str();
    sub->add_option("--kind", o->kind, "artifact kind applied to fakes")
        ->check(CLI::IsMember({"warp_patch", "blur_patch", "noise_patch"}))
        ->capture_default_str();
    sub->add_option("--strength", o->strength, "artifact strength in (0,1]")
        ->capture_default_str();
    sub->add_option("--seed", o->seed, "random seed")->capture_default_str();
    sub->add_flag("--overwrite", o->overwrite, "replace an existing output directory");
    sub->callback([o, &out] {
        SyntheticSpec spec;
        spec.n_real = o->n_real;
        spec.n_fake = o->n_fake;
        spec.image_size = o->size;
        spec.artifact_kind = artifact_kind_from_string(o->kind);
        spec.artifact_strength = o->strength;
        spec.seed = o->seed;
        const std::filesystem::path dir(o->out_dir);
        prepare_output_dir(dir, o->overwrite);
        const Manifest m = generate_synthetic(spec, dir);
        out << "wrote " << m.samples.size() << " images and manifest.csv to " << dir.string()
            << '\n';
    });
}

inline void register_train(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string plan;
        std::string config;
        std::uint64_t seed = 0;
        bool overwrite = false;
        CLI::Option* config_opt = nullptr;
        CLI::Option* seed_opt = nullptr;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub =
        app.add_subcommand("train", "train the embedding network (stage 1) per an experiment plan");
    sub->add_option("--plan", o->plan, "experiment plan file")->required();
    o->config_opt =
        sub->add_option("--config", o->config, "replace the plan's training configuration");
    o->seed_opt = sub->add_option("--seed", o->seed, "override the configured seed");
    sub->add_flag("--overwrite", o->overwrite, "replace existing stage-1 outputs");
    sub->callback([o, &out] {
        ExperimentPlan plan = load_plan(o->plan);
        if (o->config_opt->count() > 0) plan.config = load_config(o->config);
        if (o->seed_opt->count() > 0) plan.config.seed = o->seed;
        const RunPaths paths{plan.output_dir};
        claim_outputs({paths.backbone_checkpoint(), paths.stage1_history()}, o->overwrite);
        const Stage1Outcome result = run_stage1(plan);
        out << "stage 1 complete: " << result.history.epoch_loss.size() << " epochs";
        if (!result.history.epoch_loss.empty()) {
            out << ", final loss " << format_double(result.history.epoch_loss.back());
        }
        out << '\n' << "checkpoint " << paths.backbone_checkpoint().string() << '\n';
    });
}

inline void register_extract(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string backbone;
        std::string manifest;
        std::string split;
        std::string out_csv;
        bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub =
        app.add_subcommand("extract", "run a trained backbone over one split to a feature file");
    sub->add_option("--backbone", o->backbone, "backbone checkpoint")->required();
    sub->add_option("--manifest", o->manifest, "dataset manifest")->required();
    sub->add_option("--split", o->split, "which split to embed")
        ->check(CLI::IsMember({"train", "test"}))
        ->required();
    sub->add_option("--out", o->out_csv, "output feature file")->required();
    sub->add_flag("--overwrite", o->overwrite, "replace an existing feature file");
    sub->callback([o, &out] {
        const BackboneCheckpoint ckpt = load_backbone(o->backbone);
        const Manifest m = load_manifest(o->manifest);
        const std::filesystem::path out_path(o->out_csv);
        claim_outputs({out_path}, o->overwrite);
        ensure_parent(out_path);
        const int crop =
            ckpt.backbone.input_size > 0 ? ckpt.backbone.input_size : ckpt.config.crop_size;
        const auto rows =
            run_extract(ckpt.backbone, m, split_from_string(o->split), crop, out_path);
        out << "wrote " << rows.size() << " feature rows to " << out_path.string() << '\n';
    });
}

inline void register_classify(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string features;
        std::string out_path;
        std::string config;
        std::string history;
        std::uint64_t seed = 0;
        int epochs = kStage2Epochs;
        bool overwrite = false;
        CLI::Option* config_opt = nullptr;
        CLI::Option* seed_opt = nullptr;
        CLI::Option* history_opt = nullptr;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "classify", "train the classification network (stage 2) on extracted features");
    sub->add_option("--features", o->features, "training feature file")->required();
    sub->add_option("--out", o->out_path, "output classifier checkpoint")->required();
    o->config_opt = sub->add_option("--config", o->config, "training configuration file");
    o->seed_opt = sub->add_option("--seed", o->seed, "override the configured seed");
    sub->add_option("--epochs", o->epochs, "training epochs")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    o->history_opt = sub->add_option("--history", o->history, "write per-epoch losses here");
    sub->add_flag("--overwrite", o->overwrite, "replace existing outputs");
    sub->callback([o, &out] {
        const auto rows = load_features(o->features);
        RunConfig config;
        if (o->config_opt->count() > 0) config = load_config(o->config);
        if (o->seed_opt->count() > 0) config.seed = o->seed;
        std::vector<std::filesystem::path> outputs{o->out_path};
        if (o->history_opt->count() > 0) outputs.emplace_back(o->history);
        claim_outputs(outputs, o->overwrite);
        ensure_parent(o->out_path);
        const Stage2Result result = train_classifier(rows, config, o->epochs);
        save_classifier(result.net, result.scaler, static_cast<int>(rows.front().point.dim()),
                        config, config.seed, o->out_path);
        if (o->history_opt->count() > 0) {
            ensure_parent(o->history);
            save_history(result.epoch_loss, o->history);
        }
        out << "stage 2 complete: " << result.epoch_loss.size() << " epochs";
        if (!result.epoch_loss.empty()) {
            out << ", final loss " << format_double(result.epoch_loss.back());
        }
        out << '\n' << "checkpoint " << o->out_path << '\n';
    });
}

inline void register_eval(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string scores;
        std::string report;
        bool overwrite = false;
        CLI::Option* report_opt = nullptr;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand("eval", "compute detection metrics from a score file");
    sub->add_option("--scores", o->scores, "score file (id,label,score)")->required();
    o->report_opt = sub->add_option("--report", o->report, "also write the report as JSON here");
    sub->add_flag("--overwrite", o->overwrite, "replace an existing report");
    sub->callback([o, &out] {
        const auto records = load_scores(o->scores);
        const EvalReport report = evaluate(records);
        out << render_report(report);
        if (o->report_opt->count() > 0) {
            claim_outputs({std::filesystem::path(o->report)}, o->overwrite);
            ensure_parent(o->report);
            std::ofstream rout(o->report, std::ios::binary | std::ios::trunc);
            if (!rout) throw FileError("cannot write report \"" + o->report + "\"");
            rout << report_to_json(report).dump(2) << '\n';
        }
    });
}

inline void register_cross(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::vector<std::string> plans;
        std::string config;
        std::uint64_t seed = 0;
        bool overwrite = false;
        CLI::Option* config_opt = nullptr;
        CLI::Option* seed_opt = nullptr;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "cross", "run one pipeline per plan and print the train x test AUC matrix");
    sub->add_option("--plan", o->plans, "experiment plan file (repeatable)")->required();
    o->config_opt = sub->add_option("--config", o->config,
                                    "replace every plan's training configuration");
    o->seed_opt = sub->add_option("--seed", o->seed, "override every plan's seed");
    sub->add_flag("--overwrite", o->overwrite, "replace existing run directories");
    sub->callback([o, &out] {
        std::vector<ExperimentPlan> plans;
        for (const std::string& path : o->plans) {
            ExperimentPlan plan = load_plan(path);
            if (o->config_opt->count() > 0) plan.config = load_config(o->config);
            if (o->seed_opt->count() > 0) plan.config.seed = o->seed;
            plans.push_back(std::move(plan));
        }
        const CrossResults results = run_cross(plans, o->overwrite);
        out << render_cross_matrix(results);
    });
}

inline void register_ablate(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string plan;
        std::string config;
        std::uint64_t seed = 0;
        bool overwrite = false;
        CLI::Option* config_opt = nullptr;
        CLI::Option* seed_opt = nullptr;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub = app.add_subcommand(
        "ablate", "compare the two-stage pipeline against a plain binary-head backbone");
    sub->add_option("--plan", o->plan, "experiment plan file")->required();
    o->config_opt =
        sub->add_option("--config", o->config, "replace the plan's training configuration");
    o->seed_opt = sub->add_option("--seed", o->seed, "override the configured seed");
    sub->add_flag("--overwrite", o->overwrite, "replace an existing run directory");
    sub->callback([o, &out] {
        ExperimentPlan plan = load_plan(o->plan);
        if (o->config_opt->count() > 0) plan.config = load_config(o->config);
        if (o->seed_opt->count() > 0) plan.config.seed = o->seed;
        const AblationResult result = run_ablation(plan, o->overwrite);
        out << render_ablation_table(result);
    });
}

inline void register_plot(CLI::App& app, std::ostream& out) {
    struct Opts {
        std::string features;
        std::string out_stem;
        bool overwrite = false;
    };
    auto o = std::make_shared<Opts>();
    CLI::App* sub =
        app.add_subcommand("plot", "scatter a 2-D feature file and print the silhouette");
    sub->add_option("--features", o->features, "feature file with embedding_dim 2")->required();
    sub->add_option("--out", o->out_stem, "output stem; writes <stem>.svg and <stem>.csv")
        ->required();
    sub->add_flag("--overwrite", o->overwrite, "replace existing plot files");
    sub->callback([o, &out] {
        std::filesystem::path stem(o->out_stem);
        if (stem.extension() == ".svg" || stem.extension() == ".csv") stem.replace_extension();
        std::filesystem::path svg = stem, csv = stem;
        svg += ".svg";
        csv += ".csv";
        claim_outputs({svg, csv}, o->overwrite);
        ensure_parent(stem);
        const PlotResult result = cmd_plot(o->features, stem);
        out << "silhouette " << format_double(result.silhouette) << '\n';
        out << "scatter " << result.svg_path.string() << '\n';
        out << "points " << result.csv_path.string() << '\n';
    });
}

}  // namespace cli_detail

inline int cmd_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
    CLI::App app{"two-stage face-manipulation detector: metric-learned features feeding a "
                 "fixed linear classifier",
                 "tdet"};
    app.require_subcommand(1);
    cli_detail::register_ingest(app, out, err);
    cli_detail::register_synth(app, out);
    cli_detail::register_train(app, out);
    cli_detail::register_extract(app, out);
    cli_detail::register_classify(app, out);
    cli_detail::register_eval(app, out);
    cli_detail::register_cross(app, out);
    cli_detail::register_ablate(app, out);
    cli_detail::register_plot(app, out);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

inline int cli_main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return cmd_dispatch(args);
}

}  // namespace tdet
