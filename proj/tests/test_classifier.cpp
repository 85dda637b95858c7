#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "tdet/classifier.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/rng.hpp"

using namespace tdet;

namespace {

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "tdet_classifier_tests";
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<double> flat_params(const Network& net) {
    std::vector<double> all;
    for (const auto& layer : net.layers) {
        all.insert(all.end(), layer->params().begin(), layer->params().end());
    }
    return all;
}

// 50 points at +(2,2) labelled fake, 50 at -(2,2) labelled real.
std::vector<FeatureRow> cluster_features() {
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 50; ++i) {
        rows.push_back({"r" + std::to_string(i), EmbeddingPoint{-2.0, -2.0}, Label::kReal});
        rows.push_back({"f" + std::to_string(i), EmbeddingPoint{2.0, 2.0}, Label::kFake});
    }
    return rows;
}

}  // namespace

TEST_CASE("classifier head has the fixed nine-layer shape") {
    const Network net = make_classifier(2, 0.01);
    REQUIRE(net.layers.size() == 9);
    const std::vector<std::string> kinds = {"linear", "relu",       "linear",
                                            "linear", "relu",       "linear",
                                            "relu",   "linear",     "leaky_relu"};
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        REQUIRE(net.layers[i]->kind() == kinds[i]);
    }
    // E only changes the first linear map.
    REQUIRE(make_classifier(7, 0.01).layers[0]->param_count() == 7 * 2 + 2);
    REQUIRE_THROWS_AS(make_classifier(0, 0.01), ConfigInvariantError);
}

TEST_CASE("instrumented forward reports the published layer widths") {
    Network net = make_classifier(2, 0.01);
    init_classifier(net, 3);
    const auto run = classifier_forward_instrumented(net, EmbeddingPoint{0.3, -0.4});
    REQUIRE(run.layer_widths == std::vector<int>{2, 2, 128, 256, 256, 128, 128, 2, 2});
    const auto plain = classifier_forward(net, EmbeddingPoint{0.3, -0.4});
    REQUIRE(run.logits[0] == plain[0]);
    REQUIRE(run.logits[1] == plain[1]);
}

TEST_CASE("all-zero parameters give logits (0, 0)") {
    const Network net = make_classifier(2, 0.01);  // params start zeroed
    const auto logits = classifier_forward(net, EmbeddingPoint{1.5, -2.5});
    REQUIRE(logits[0] == 0.0);
    REQUIRE(logits[1] == 0.0);
}

TEST_CASE("zero weights with final bias (1, -1) give logits (1, -0.01)") {
    Network net = make_classifier(2, 0.01);
    auto& final_linear = net.layers[7]->params();  // Linear(128 -> 2): weights then biases
    final_linear[2 * 128 + 0] = 1.0;
    final_linear[2 * 128 + 1] = -1.0;
    const auto logits = classifier_forward(net, EmbeddingPoint{0.7, 0.7});
    REQUIRE(logits[0] == 1.0);
    REQUIRE(logits[1] == -0.01);
}

TEST_CASE("hand-set single-path parameters match the layer-by-layer oracle") {
    // Route the signal through unit 0 of every layer with binary-exact scales,
    // so the network output equals a plain scalar product chain.
    Network net = make_classifier(2, 0.01);
    net.layers[0]->params()[0] = 0.5;   // Linear(2->2) w[0][0]
    net.layers[2]->params()[0] = 1.25;  // Linear(2->128) w[0][0]
    net.layers[3]->params()[0] = 0.75;  // Linear(128->256) w[0][0]
    net.layers[5]->params()[0] = 2.0;   // Linear(256->128) w[0][0]
    auto& head = net.layers[7]->params();
    head[0] = 1.5;         // w[0][0] -> logit 0
    head[128] = -0.5;      // w[1][0] -> logit 1

    const double x0 = 3.0;
    const double path = x0 * 0.5 * 1.25 * 0.75 * 2.0;  // value entering the head
    const auto logits = classifier_forward(net, EmbeddingPoint{x0, 7.0});
    REQUIRE(logits[0] == Catch::Approx(path * 1.5).margin(1e-12));
    REQUIRE(logits[1] == Catch::Approx(path * -0.5 * 0.01).margin(1e-12));
}

TEST_CASE("predict_from_logits follows the argmax and tie rules") {
    SECTION("tied logits resolve to REAL with score 0.5") {
        const Prediction p = predict_from_logits(0.0, 0.0);
        REQUIRE(p.label == Label::kReal);
        REQUIRE(p.fake_score == 0.5);
        const Prediction q = predict_from_logits(3.25, 3.25);
        REQUIRE(q.label == Label::kReal);
        REQUIRE(q.fake_score == 0.5);
    }
    SECTION("logits (-5, 5) give FAKE with score sigmoid(10)") {
        const Prediction p = predict_from_logits(-5.0, 5.0);
        REQUIRE(p.label == Label::kFake);
        REQUIRE(p.fake_score == Catch::Approx(0.9999546).margin(1e-7));
    }
    SECTION("reversed logits give REAL with the complementary score") {
        const Prediction p = predict_from_logits(5.0, -5.0);
        REQUIRE(p.label == Label::kReal);
        REQUIRE(p.fake_score == Catch::Approx(1.0 - 0.9999546).margin(1e-7));
    }
}

TEST_CASE("prediction is invariant under shifting both logits") {
    Rng rng(20240611);
    for (int i = 0; i < 1000; ++i) {
        const double l0 = rng.uniform(-10.0, 10.0);
        const double l1 = rng.uniform(-10.0, 10.0);
        const double c = rng.uniform(-10.0, 10.0);
        const Prediction base = predict_from_logits(l0, l1);
        const Prediction shifted = predict_from_logits(l0 + c, l1 + c);
        REQUIRE(base.label == shifted.label);
        REQUIRE(std::abs(base.fake_score - shifted.fake_score) <= 1e-12);
    }
}

TEST_CASE("fake_score is a proper probability") {
    Rng rng(77);
    for (int i = 0; i < 500; ++i) {
        const double l0 = rng.uniform(-40.0, 40.0);
        const double l1 = rng.uniform(-40.0, 40.0);
        const Prediction p = predict_from_logits(l0, l1);
        REQUIRE(p.fake_score >= 0.0);
        REQUIRE(p.fake_score <= 1.0);
        // complementary mass on the real logit
        const Prediction swapped = predict_from_logits(l1, l0);
        REQUIRE(p.fake_score + swapped.fake_score == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("cross-entropy matches the closed form and its gradient sums to zero") {
    const std::array<double, 2> logits = {0.3, -1.1};
    // -log softmax[target]
    const double denom = std::exp(0.3) + std::exp(-1.1);
    REQUIRE(cross_entropy(logits, Label::kReal) ==
            Catch::Approx(-std::log(std::exp(0.3) / denom)).margin(1e-12));
    REQUIRE(cross_entropy(logits, Label::kFake) ==
            Catch::Approx(-std::log(std::exp(-1.1) / denom)).margin(1e-12));

    const auto g_real = cross_entropy_grad(logits, Label::kReal);
    const auto g_fake = cross_entropy_grad(logits, Label::kFake);
    REQUIRE(g_real[0] + g_real[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(g_fake[0] + g_fake[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(g_real[0] < 0.0);  // pulls the target logit up
    REQUIRE(g_fake[1] < 0.0);

    // central differences on both logit slots
    for (const Label target : {Label::kReal, Label::kFake}) {
        const auto grad = cross_entropy_grad(logits, target);
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-6;
            auto hi = logits;
            auto lo = logits;
            hi[static_cast<std::size_t>(k)] += h;
            lo[static_cast<std::size_t>(k)] -= h;
            const double fd = (cross_entropy(hi, target) - cross_entropy(lo, target)) / (2 * h);
            REQUIRE(grad[static_cast<std::size_t>(k)] == Catch::Approx(fd).margin(1e-8));
        }
    }

    // extreme logits stay finite thanks to max subtraction
    REQUIRE(std::isfinite(cross_entropy({1000.0, -1000.0}, Label::kFake)));
    REQUIRE(std::isfinite(cross_entropy_grad({1000.0, -1000.0}, Label::kFake)[0]));
}

TEST_CASE("separated clusters train to accuracy 1.0 within the fixed epoch budget") {
    const auto features = cluster_features();
    RunConfig config;
    config.seed = 5;
    const Stage2Result result = train_classifier(features, config);
    REQUIRE(result.epoch_loss.size() == static_cast<std::size_t>(kStage2Epochs));
    int correct = 0;
    for (const FeatureRow& r : features) {
        if (predict(result, r.point).label == r.label) ++correct;
    }
    REQUIRE(correct == static_cast<int>(features.size()));
    REQUIRE(result.epoch_loss.back() < result.epoch_loss.front());
}

TEST_CASE("zero training epochs return the initialization untouched") {
    const auto features = cluster_features();
    RunConfig config;
    config.seed = 11;
    const Stage2Result result = train_classifier(features, config, 0);
    REQUIRE(result.epoch_loss.empty());

    Network reference = make_classifier(2, config.leaky_slope);
    init_classifier(reference, config.seed);
    REQUIRE(flat_params(result.net) == flat_params(reference));
    REQUIRE(result.scaler == fit_scaler(features));
}

TEST_CASE("classifier training is bitwise deterministic in the seed") {
    const auto features = cluster_features();
    RunConfig config;
    config.seed = 21;
    const Stage2Result a = train_classifier(features, config, 5);
    const Stage2Result b = train_classifier(features, config, 5);
    REQUIRE(a.epoch_loss == b.epoch_loss);
    REQUIRE(flat_params(a.net) == flat_params(b.net));
    REQUIRE(a.scaler == b.scaler);

    RunConfig other = config;
    other.seed = 22;
    const Stage2Result c = train_classifier(features, other, 5);
    REQUIRE(flat_params(a.net) != flat_params(c.net));
}

TEST_CASE("single-class feature sets are rejected") {
    std::vector<FeatureRow> only_real;
    for (int i = 0; i < 4; ++i) {
        only_real.push_back({"r" + std::to_string(i), EmbeddingPoint{0.1, 0.2}, Label::kReal});
    }
    RunConfig config;
    REQUIRE_THROWS_AS(train_classifier(only_real, config), SingleClassError);
    REQUIRE_THROWS_AS(train_classifier({}, config), SingleClassError);
}

TEST_CASE("feature scaler standardizes per dimension") {
    // mean and population std against hand-computed values
    std::vector<FeatureRow> rows = {
        {"a", EmbeddingPoint{1.0, 5.0}, Label::kReal},
        {"b", EmbeddingPoint{3.0, 5.0}, Label::kFake},
    };
    const FeatureScaler s = fit_scaler(rows);
    REQUIRE(s.mean == std::vector<double>{2.0, 5.0});
    REQUIRE(s.scale[0] == 1.0);  // std of {1,3}
    REQUIRE(s.scale[1] == 1.0);  // constant dimension falls back to unit scale

    const EmbeddingPoint z = s.apply(EmbeddingPoint{3.0, 7.0});
    REQUIRE(z.coords[0] == 1.0);
    REQUIRE(z.coords[1] == 2.0);

    // default-constructed scaler is the identity
    const FeatureScaler identity;
    REQUIRE(identity.apply(EmbeddingPoint{0.3, -0.7}) == (EmbeddingPoint{0.3, -0.7}));

    REQUIRE_THROWS_AS(s.apply(EmbeddingPoint{1.0}), ShapeError);
    REQUIRE_THROWS_AS(fit_scaler({}), SamplingError);
}

TEST_CASE("training learns clusters that are tiny relative to their offset") {
    // Embeddings from a randomly initialized backbone sit far from the origin
    // with class separation orders of magnitude below the offset; the fitted
    // scaler must make such geometry trainable.
    Rng rng(4242);
    std::vector<FeatureRow> train, test;
    const auto blob = [&](Label lab, double cx, double cy, int n, const char* prefix,
                          std::vector<FeatureRow>& out) {
        for (int i = 0; i < n; ++i) {
            out.push_back({prefix + std::to_string(i),
                           EmbeddingPoint{cx + rng.uniform(-0.002, 0.002),
                                          cy + rng.uniform(-0.002, 0.002)},
                           lab});
        }
    };
    blob(Label::kReal, 0.7960, -0.2620, 40, "tr_r", train);
    blob(Label::kFake, 0.7880, -0.2530, 40, "tr_f", train);
    blob(Label::kReal, 0.7960, -0.2620, 10, "te_r", test);
    blob(Label::kFake, 0.7880, -0.2530, 10, "te_f", test);

    RunConfig config;
    config.seed = 7;
    const Stage2Result result = train_classifier(train, config);
    REQUIRE(result.epoch_loss.back() < 0.6 * result.epoch_loss.front());
    int correct = 0;
    for (const FeatureRow& r : test) {
        if (predict(result, r.point).label == r.label) ++correct;
    }
    REQUIRE(correct == static_cast<int>(test.size()));
}

TEST_CASE("feature rows round-trip through CSV") {
    Rng rng(909);
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 40; ++i) {
        FeatureRow r;
        r.id = "s" + std::to_string(i);
        r.point.coords = {rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                          rng.uniform(-5.0, 5.0)};
        r.label = rng.uniform(0.0, 1.0) < 0.5 ? Label::kReal : Label::kFake;
        rows.push_back(std::move(r));
    }
    const std::string csv = features_to_csv(rows, 3);
    REQUIRE(csv.rfind("id,e1,e2,e3,label\n", 0) == 0);
    const auto parsed = parse_features_csv(csv);
    REQUIRE(parsed == rows);
    REQUIRE(features_to_csv(parsed, 3) == csv);

    const auto path = temp_dir() / "features.csv";
    save_features(rows, 3, path);
    REQUIRE(load_features(path) == rows);
}

TEST_CASE("feature CSV parsing rejects malformed input") {
    REQUIRE_THROWS_AS(parse_features_csv("e1,e2,label\nx,1,2,0\n"), CsvHeaderError);
    REQUIRE_THROWS_AS(parse_features_csv("id,e1,e9,label\nx,1,2,0\n"), CsvHeaderError);
    REQUIRE_THROWS_AS(parse_features_csv("id,e1,e2,label\nx,1,0\n"), CsvRowError);
    REQUIRE_THROWS_AS(parse_features_csv("id,e1,e2,label\nx,1,2,7\n"), LabelValueError);
    REQUIRE_THROWS_AS(parse_features_csv("id,e1,e2,label\nx,one,2,0\n"), CsvRowError);
    REQUIRE_THROWS_AS(parse_features_csv("id,e1,e2,label\n\nx,1,2,0\n"), CsvRowError);
    REQUIRE_THROWS_AS(load_features(temp_dir() / "missing.csv"), FileError);

    // writer refuses ids that would corrupt the format
    std::vector<FeatureRow> bad = {{"a,b", EmbeddingPoint{1.0, 2.0}, Label::kReal}};
    REQUIRE_THROWS_AS(features_to_csv(bad, 2), CsvRowError);
    std::vector<FeatureRow> mis = {{"ok", EmbeddingPoint{1.0}, Label::kReal}};
    REQUIRE_THROWS_AS(features_to_csv(mis, 2), ShapeError);
}

TEST_CASE("classifier checkpoints round-trip bitwise") {
    RunConfig config;
    config.seed = 99;
    config.leaky_slope = 0.05;
    Network net = make_classifier(3, config.leaky_slope);
    init_classifier(net, config.seed);

    FeatureScaler scaler;
    scaler.mean = {0.25, -1.5, 3.0};
    scaler.scale = {2.0, 0.5, 1.0};

    const auto path = temp_dir() / "classifier.json";
    save_classifier(net, scaler, 3, config, config.seed, path);
    const ClassifierCheckpoint cp = load_classifier(path);
    REQUIRE(cp.embedding_dim == 3);
    REQUIRE(cp.leaky_slope == 0.05);
    REQUIRE(cp.seed == 99);
    REQUIRE(cp.config == config);
    REQUIRE(cp.scaler == scaler);
    REQUIRE(flat_params(cp.net) == flat_params(net));

    // the same point maps to the same logits through the restored net
    const auto a = classifier_forward(net, EmbeddingPoint{0.2, -0.9, 1.4});
    const auto b = classifier_forward(cp.net, EmbeddingPoint{0.2, -0.9, 1.4});
    REQUIRE(a == b);

    // re-saving is byte-identical
    const auto path2 = temp_dir() / "classifier2.json";
    save_classifier(cp.net, cp.scaler, cp.embedding_dim, cp.config, cp.seed, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(s1 == s2);
}

TEST_CASE("classifier checkpoint loading rejects tampered archives") {
    RunConfig config;
    Network net = make_classifier(2, config.leaky_slope);
    init_classifier(net, 1);
    nlohmann::json good = classifier_to_json(net, FeatureScaler{}, 2, config, 1);

    nlohmann::json bad_format = good;
    bad_format["format"] = "tdet-backbone-v1";
    REQUIRE_THROWS_AS(classifier_from_json(bad_format), CheckpointError);

    nlohmann::json bad_layers = good;
    bad_layers["layers"].erase(8);
    REQUIRE_THROWS_AS(classifier_from_json(bad_layers), CheckpointError);

    nlohmann::json bad_kind = good;
    bad_kind["layers"][1]["kind"] = "linear";
    REQUIRE_THROWS_AS(classifier_from_json(bad_kind), CheckpointError);

    nlohmann::json bad_params = good;
    bad_params["layers"][0]["params"].push_back(0.0);
    REQUIRE_THROWS_AS(classifier_from_json(bad_params), CheckpointError);

    nlohmann::json bad_scaler = good;
    bad_scaler["feature_mean"] = {1.0, 2.0, 3.0};  // length 3 against embedding_dim 2
    bad_scaler["feature_scale"] = {1.0, 1.0, 1.0};
    REQUIRE_THROWS_AS(classifier_from_json(bad_scaler), CheckpointError);

    REQUIRE_THROWS_AS(load_classifier(temp_dir() / "nope.json"), FileError);
}
