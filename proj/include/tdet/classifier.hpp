#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/nn.hpp"
#include "tdet/rng.hpp"
#include "tdet/strconv.hpp"
#include "tdet/types.hpp"

namespace tdet {

// Stage-2 training always runs this many passes; the schedule is part of the
// classifier contract rather than a tunable.
inline constexpr int kStage2Epochs = 50;

// The fixed nine-layer classification head. Layer widths are output sizes;
// the leading linear maps the E-dimensional feature to 2.
inline Network make_classifier(int embedding_dim, double leaky_slope) {
    if (embedding_dim < 1) throw ConfigInvariantError("embedding_dim must be >= 1");
    Network net;
    net.layers.push_back(std::make_unique<Linear>(embedding_dim, 2));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<Linear>(2, 128));
    net.layers.push_back(std::make_unique<Linear>(128, 256));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<Linear>(256, 128));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<Linear>(128, 2));
    net.layers.push_back(std::make_unique<LeakyRelu>(leaky_slope));
    return net;
}

inline void init_classifier(Network& net, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "stage2/init"));
    init_uniform_fan_in(net, rng);
}

inline std::array<double, 2> classifier_forward(const Network& net,
                                                const EmbeddingPoint& point) {
    const Tensor out = net.forward(Tensor::vec(point.coords), RunMode::kEval);
    return {out.data[0], out.data[1]};
}

struct InstrumentedForward {
    std::array<double, 2> logits{};
    std::vector<int> layer_widths;  // output element count of each layer
};

inline InstrumentedForward classifier_forward_instrumented(const Network& net,
                                                           const EmbeddingPoint& point) {
    InstrumentedForward result;
    Tensor x = Tensor::vec(point.coords);
    for (const auto& layer : net.layers) {
        x = layer->forward(x, RunMode::kEval, nullptr, nullptr);
        result.layer_widths.push_back(static_cast<int>(x.size()));
    }
    result.logits = {x.data[0], x.data[1]};
    return result;
}

struct Prediction {
    Label label = Label::kReal;
    double fake_score = 0.5;
};

// argmax over the two logits with ties resolving to REAL; the score is the
// softmax mass on the fake logit, i.e. sigmoid(l1 - l0).
inline Prediction predict_from_logits(double l0, double l1) {
    Prediction p;
    p.label = l1 > l0 ? Label::kFake : Label::kReal;
    const double d = l1 - l0;
    p.fake_score = d >= 0.0 ? 1.0 / (1.0 + std::exp(-d))
                            : std::exp(d) / (1.0 + std::exp(d));
    return p;
}

inline Prediction predict(const Network& net, const EmbeddingPoint& point) {
    const auto logits = classifier_forward(net, point);
    return predict_from_logits(logits[0], logits[1]);
}

struct Stage2Result;
inline Prediction predict(const Stage2Result& classifier, const EmbeddingPoint& point);

// ---- cross-entropy on two logits ----

inline double cross_entropy(const std::array<double, 2>& logits, Label target) {
    const double m = logits[0] > logits[1] ? logits[0] : logits[1];
    const double lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
    return lse - logits[static_cast<std::size_t>(label_to_int(target))];
}

inline std::array<double, 2> cross_entropy_grad(const std::array<double, 2>& logits,
                                                Label target) {
    const double m = logits[0] > logits[1] ? logits[0] : logits[1];
    const double e0 = std::exp(logits[0] - m);
    const double e1 = std::exp(logits[1] - m);
    std::array<double, 2> g = {e0 / (e0 + e1), e1 / (e0 + e1)};
    g[static_cast<std::size_t>(label_to_int(target))] -= 1.0;
    return g;
}

// ---- feature rows and their CSV form (`id,e1,...,eE,label`) ----

struct FeatureRow {
    std::string id;
    EmbeddingPoint point;
    Label label = Label::kReal;

    bool operator==(const FeatureRow&) const = default;
};

inline std::string feature_header(int e_dim) {
    std::string h = "id";
    for (int i = 1; i <= e_dim; ++i) h += ",e" + std::to_string(i);
    h += ",label";
    return h;
}

inline std::string features_to_csv(const std::vector<FeatureRow>& rows, int e_dim) {
    std::string out = feature_header(e_dim);
    out += '\n';
    for (const FeatureRow& r : rows) {
        if (static_cast<int>(r.point.dim()) != e_dim) {
            throw ShapeError("feature row \"" + r.id + "\" has dimension " +
                             std::to_string(r.point.dim()) + ", expected " +
                             std::to_string(e_dim));
        }
        if (r.id.find_first_of(",\n\r") != std::string::npos) {
            throw CsvRowError("feature id \"" + r.id + "\" contains a separator");
        }
        out += r.id;
        for (const double v : r.point.coords) {
            out += ',';
            out += format_double(v);
        }
        out += ',';
        out += std::to_string(label_to_int(r.label));
        out += '\n';
    }
    return out;
}

inline std::vector<FeatureRow> parse_features_csv(std::string_view text,
                                                  std::string_view origin = "<string>") {
    std::size_t pos = 0;
    std::size_t row = 0;
    int e_dim = 0;
    std::vector<FeatureRow> rows;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (row == 0) {
            const auto cols = split(line, ',');
            if (cols.size() < 3 || cols.front() != "id" || cols.back() != "label") {
                throw CsvHeaderError(std::string(origin) + ": malformed feature header \"" +
                                     std::string(line) + "\"");
            }
            e_dim = static_cast<int>(cols.size()) - 2;
            for (int i = 1; i <= e_dim; ++i) {
                if (cols[static_cast<std::size_t>(i)] != "e" + std::to_string(i)) {
                    throw CsvHeaderError(std::string(origin) +
                                         ": malformed feature header \"" + std::string(line) +
                                         "\"");
                }
            }
            ++row;
            continue;
        }
        if (line.empty()) {
            if (pos > text.size()) break;
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                              " is empty");
        }
        const auto fields = split(line, ',');
        if (fields.size() != static_cast<std::size_t>(e_dim) + 2) {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(e_dim + 2));
        }
        FeatureRow r;
        r.id = std::string(fields[0]);
        r.point.coords.resize(static_cast<std::size_t>(e_dim));
        for (int i = 0; i < e_dim; ++i) {
            try {
                r.point.coords[static_cast<std::size_t>(i)] =
                    parse_double(fields[static_cast<std::size_t>(i) + 1], "feature");
            } catch (const ConfigValueError&) {
                throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                                  ": cannot parse feature value \"" +
                                  std::string(fields[static_cast<std::size_t>(i) + 1]) + "\"");
            }
        }
        int label_value = 0;
        try {
            label_value = static_cast<int>(
                parse_int(fields[static_cast<std::size_t>(e_dim) + 1], "label"));
        } catch (const ConfigValueError&) {
            throw LabelValueError(std::string(origin) + ": row " + std::to_string(row) +
                                  ": label must be 0 or 1, got \"" +
                                  std::string(fields[static_cast<std::size_t>(e_dim) + 1]) +
                                  "\"");
        }
        r.label = label_from_int(label_value);
        rows.push_back(std::move(r));
        ++row;
    }
    return rows;
}

inline std::vector<FeatureRow> load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open feature file \"" + path.string() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_features_csv(buf.str(), path.string());
}

inline void save_features(const std::vector<FeatureRow>& rows, int e_dim,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write feature file \"" + path.string() + "\"");
    out << features_to_csv(rows, e_dim);
}

// ---- feature standardization ----

// Per-dimension affine normalization fitted on the training features. The
// embedding network is free to place its output anywhere in feature space;
// standardizing recenters the data so the classifier trains on O(1) inputs.
// Default-constructed (empty) scalers are the identity.
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> scale;

    bool identity() const { return mean.empty(); }

    EmbeddingPoint apply(const EmbeddingPoint& p) const {
        if (identity()) return p;
        if (p.dim() != mean.size()) {
            throw ShapeError("feature point has dimension " + std::to_string(p.dim()) +
                             ", scaler expects " + std::to_string(mean.size()));
        }
        EmbeddingPoint out;
        out.coords.resize(p.dim());
        for (std::size_t i = 0; i < p.dim(); ++i) {
            out.coords[i] = (p.coords[i] - mean[i]) / scale[i];
        }
        return out;
    }

    bool operator==(const FeatureScaler&) const = default;
};

inline FeatureScaler fit_scaler(const std::vector<FeatureRow>& features) {
    if (features.empty()) throw SamplingError("cannot fit a feature scaler on no rows");
    const std::size_t d = features.front().point.dim();
    FeatureScaler s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (const FeatureRow& r : features) {
        for (std::size_t i = 0; i < d; ++i) s.mean[i] += r.point.coords[i];
    }
    for (double& m : s.mean) m /= static_cast<double>(features.size());
    for (const FeatureRow& r : features) {
        for (std::size_t i = 0; i < d; ++i) {
            const double dev = r.point.coords[i] - s.mean[i];
            s.scale[i] += dev * dev;
        }
    }
    for (double& v : s.scale) {
        v = std::sqrt(v / static_cast<double>(features.size()));
        if (v < 1e-12) v = 1.0;  // constant dimension: leave it centered, unscaled
    }
    return s;
}

// ---- stage-2 training ----

struct Stage2Result {
    Network net;
    FeatureScaler scaler;
    std::vector<double> epoch_loss;
};

// Fits the feature scaler, then runs per-sample SGD over a freshly shuffled
// order each epoch, cross-entropy on the two logits.
inline Stage2Result train_classifier(const std::vector<FeatureRow>& features,
                                     const RunConfig& config, int epochs = kStage2Epochs) {
    std::size_t n_by_label[2] = {0, 0};
    for (const FeatureRow& r : features) ++n_by_label[label_to_int(r.label)];
    if (n_by_label[0] == 0 || n_by_label[1] == 0) {
        throw SingleClassError("classifier training needs both classes, got " +
                               std::to_string(n_by_label[0]) + " real / " +
                               std::to_string(n_by_label[1]) + " fake");
    }
    const int e_dim = static_cast<int>(features.front().point.dim());
    for (const FeatureRow& r : features) {
        if (static_cast<int>(r.point.dim()) != e_dim) {
            throw ShapeError("feature row \"" + r.id + "\" has dimension " +
                             std::to_string(r.point.dim()) + ", expected " +
                             std::to_string(e_dim));
        }
    }

    Stage2Result result;
    result.net = make_classifier(e_dim, config.leaky_slope);
    init_classifier(result.net, config.seed);
    result.scaler = fit_scaler(features);

    std::vector<Tensor> inputs;
    inputs.reserve(features.size());
    for (const FeatureRow& r : features) {
        inputs.push_back(Tensor::vec(result.scaler.apply(r.point).coords));
    }

    Rng shuffle_rng(derive_seed(config.seed, "stage2/shuffle"));
    Sgd opt(config.stage2_lr, config.stage2_momentum);
    std::vector<std::size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<LayerTrace> traces;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double loss_sum = 0.0;
        for (const std::size_t idx : order) {
            const FeatureRow& row = features[idx];
            const Tensor out = result.net.forward(inputs[idx], RunMode::kTrain, nullptr, &traces);
            const std::array<double, 2> logits = {out.data[0], out.data[1]};
            loss_sum += cross_entropy(logits, row.label);
            const std::array<double, 2> g = cross_entropy_grad(logits, row.label);
            auto grads = result.net.zero_grads();
            result.net.backward(traces, Tensor::vec({g[0], g[1]}), grads);
            opt.step(result.net, grads);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(features.size()));
    }
    return result;
}

inline Prediction predict(const Stage2Result& classifier, const EmbeddingPoint& point) {
    return predict(classifier.net, classifier.scaler.apply(point));
}

// ---- checkpoint archive ----

inline constexpr std::string_view kClassifierFormat = "tdet-classifier-v1";

struct ClassifierCheckpoint {
    Network net;
    FeatureScaler scaler;
    int embedding_dim = 2;
    double leaky_slope = 0.01;
    RunConfig config;
    std::uint64_t seed = 0;
};

inline nlohmann::json classifier_to_json(const Network& net, const FeatureScaler& scaler,
                                         int embedding_dim, const RunConfig& config,
                                         std::uint64_t seed) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"kind", layer->kind()}, {"params", layer->params()}});
    }
    return nlohmann::json{{"format", kClassifierFormat},
                          {"embedding_dim", embedding_dim},
                          {"leaky_slope", config.leaky_slope},
                          {"seed", seed},
                          {"config", config_to_json(config)},
                          {"feature_mean", scaler.mean},
                          {"feature_scale", scaler.scale},
                          {"layers", layers}};
}

inline ClassifierCheckpoint classifier_from_json(const nlohmann::json& j,
                                                 std::string_view origin = "<json>") {
    const auto fail = [&origin](const std::string& msg) {
        throw CheckpointError(std::string(origin) + ": " + msg);
    };
    if (!j.is_object() || j.value("format", "") != kClassifierFormat) {
        fail("not a classifier checkpoint (format tag mismatch)");
    }
    ClassifierCheckpoint cp;
    cp.embedding_dim = j.at("embedding_dim").get<int>();
    cp.leaky_slope = j.at("leaky_slope").get<double>();
    cp.config = config_from_json(j.at("config"));
    cp.seed = j.at("seed").get<std::uint64_t>();
    cp.scaler.mean = j.at("feature_mean").get<std::vector<double>>();
    cp.scaler.scale = j.at("feature_scale").get<std::vector<double>>();
    if (!cp.scaler.identity() &&
        (cp.scaler.mean.size() != static_cast<std::size_t>(cp.embedding_dim) ||
         cp.scaler.scale.size() != cp.scaler.mean.size())) {
        fail("feature scaler arrays do not match embedding_dim " +
             std::to_string(cp.embedding_dim));
    }
    cp.net = make_classifier(cp.embedding_dim, cp.leaky_slope);

    const nlohmann::json& layers = j.at("layers");
    if (layers.size() != cp.net.layers.size()) {
        fail("layer count " + std::to_string(layers.size()) + " does not match the fixed head");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& layer = *cp.net.layers[i];
        if (layers[i].at("kind").get<std::string>() != layer.kind()) {
            fail("layer " + std::to_string(i) + " kind mismatch");
        }
        auto params = layers[i].at("params").get<std::vector<double>>();
        if (params.size() != layer.param_count()) {
            fail("layer " + std::to_string(i) + " has " + std::to_string(params.size()) +
                 " params, expected " + std::to_string(layer.param_count()));
        }
        layer.params() = std::move(params);
    }
    return cp;
}

inline void save_classifier(const Network& net, const FeatureScaler& scaler, int embedding_dim,
                            const RunConfig& config, std::uint64_t seed,
                            const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write checkpoint \"" + path.string() + "\"");
    out << classifier_to_json(net, scaler, embedding_dim, config, seed).dump(2) << '\n';
}

inline ClassifierCheckpoint load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open checkpoint \"" + path.string() + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    return classifier_from_json(j, path.string());
}

}  // namespace tdet
