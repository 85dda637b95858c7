#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/nn.hpp"
#include "tdet/rng.hpp"
#include "tdet/tensor.hpp"
#include "tdet/types.hpp"

namespace tdet {

enum class BackboneKind { kTinyConv, kXceptionAdapter };

inline const char* backbone_kind_name(BackboneKind k) {
    return k == BackboneKind::kTinyConv ? "tiny_conv" : "xception_adapter";
}

inline BackboneKind backbone_kind_from_string(std::string_view s) {
    if (s == "tiny_conv") return BackboneKind::kTinyConv;
    if (s == "xception_adapter") return BackboneKind::kXceptionAdapter;
    throw ConfigValueError("backbone kind must be \"tiny_conv\" or \"xception_adapter\", got \"" +
                           std::string(s) + "\"");
}

// Head markers: an "embedding" head feeds the triplet stage and the feature
// extractor; a "binary_logits" head is the ablation baseline whose two
// outputs are class logits.
inline constexpr std::string_view kHeadEmbedding = "embedding";
inline constexpr std::string_view kHeadBinaryLogits = "binary_logits";

struct Backbone {
    BackboneKind kind = BackboneKind::kTinyConv;
    int input_size = 0;  // square crop side; 0 skips the embed() shape check
    int embedding_dim = 2;
    double dropout_rate = 0.5;
    std::string head = std::string(kHeadEmbedding);
    Network net;
};

namespace detail {

inline void push_tiny_conv_trunk(Network& net) {
    net.layers.push_back(std::make_unique<Conv2d>(3, 8, 3, 2, 1));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<Conv2d>(8, 16, 3, 2, 1));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<Conv2d>(16, 32, 3, 2, 1));
    net.layers.push_back(std::make_unique<Relu>());
    net.layers.push_back(std::make_unique<GlobalAvgPool>());
}

inline void push_xception_adapter_trunk(Network& net) {
    net.layers.push_back(std::make_unique<Conv2d>(3, 8, 3, 2, 1));
    net.layers.push_back(std::make_unique<Relu>());
    const int widths[3][2] = {{8, 16}, {16, 32}, {32, 64}};
    for (const auto& [in_ch, out_ch] : widths) {
        net.layers.push_back(std::make_unique<DepthwiseConv2d>(in_ch, 3, 2, 1));
        net.layers.push_back(std::make_unique<Conv2d>(in_ch, out_ch, 1, 1, 0));
        net.layers.push_back(std::make_unique<Relu>());
    }
    net.layers.push_back(std::make_unique<GlobalAvgPool>());
}

inline int trunk_width(BackboneKind kind) {
    return kind == BackboneKind::kTinyConv ? 32 : 64;
}

}  // namespace detail

// Builds the topology with zero parameters; callers seed the weights via
// init_backbone or a checkpoint.
inline Backbone make_backbone(BackboneKind kind, int input_size, int embedding_dim,
                              double dropout_rate,
                              std::string_view head = kHeadEmbedding) {
    if (embedding_dim < 1) throw ConfigInvariantError("embedding_dim must be >= 1");
    Backbone b;
    b.kind = kind;
    b.input_size = input_size;
    b.embedding_dim = embedding_dim;
    b.dropout_rate = dropout_rate;
    b.head = std::string(head);
    if (kind == BackboneKind::kTinyConv) {
        detail::push_tiny_conv_trunk(b.net);
    } else {
        detail::push_xception_adapter_trunk(b.net);
    }
    b.net.layers.push_back(std::make_unique<Dropout>(dropout_rate));
    b.net.layers.push_back(std::make_unique<Linear>(detail::trunk_width(kind), embedding_dim));
    return b;
}

inline void init_backbone(Backbone& b, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "stage1/init"));
    init_kaiming_uniform(b.net, rng);
}

inline void check_image_shape(const Backbone& b, const Tensor& image) {
    if (b.input_size > 0 &&
        (image.h != b.input_size || image.w != b.input_size || image.c != 3)) {
        throw ShapeError("backbone expects " + std::to_string(b.input_size) + "x" +
                         std::to_string(b.input_size) + "x3 input, got " +
                         image.shape_string());
    }
}

inline EmbeddingPoint embedding_from_tensor(const Tensor& out) {
    return EmbeddingPoint(out.data);
}

// Evaluation-mode embedding: dropout disabled, fully deterministic.
inline EmbeddingPoint embed(const Backbone& b, const Tensor& image) {
    check_image_shape(b, image);
    return embedding_from_tensor(b.net.forward(image, RunMode::kEval));
}

// ---- checkpoint archive ----

inline constexpr std::string_view kBackboneFormat = "tdet-backbone-v1";

struct BackboneCheckpoint {
    Backbone backbone;
    RunConfig config;
    std::uint64_t seed = 0;
};

inline nlohmann::json backbone_to_json(const Backbone& b, const RunConfig& config,
                                       std::uint64_t seed) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : b.net.layers) {
        layers.push_back({{"kind", layer->kind()}, {"params", layer->params()}});
    }
    return nlohmann::json{{"format", kBackboneFormat},
                          {"kind", backbone_kind_name(b.kind)},
                          {"input_size", b.input_size},
                          {"embedding_dim", b.embedding_dim},
                          {"dropout_rate", b.dropout_rate},
                          {"head", b.head},
                          {"seed", seed},
                          {"config", config_to_json(config)},
                          {"layers", layers}};
}

inline BackboneCheckpoint backbone_from_json(const nlohmann::json& j,
                                             std::string_view origin = "<json>") {
    const auto fail = [&origin](const std::string& msg) {
        throw CheckpointError(std::string(origin) + ": " + msg);
    };
    if (!j.is_object() || j.value("format", "") != kBackboneFormat) {
        fail("not a backbone checkpoint (format tag mismatch)");
    }
    BackboneCheckpoint cp;
    const std::string head = j.at("head").get<std::string>();
    if (head != kHeadEmbedding && head != kHeadBinaryLogits) {
        fail("unknown head marker \"" + head + "\"");
    }
    cp.backbone = make_backbone(backbone_kind_from_string(j.at("kind").get<std::string>()),
                                j.at("input_size").get<int>(),
                                j.at("embedding_dim").get<int>(),
                                j.at("dropout_rate").get<double>(), head);
    cp.config = config_from_json(j.at("config"));
    cp.seed = j.at("seed").get<std::uint64_t>();

    const nlohmann::json& layers = j.at("layers");
    if (layers.size() != cp.backbone.net.layers.size()) {
        fail("layer count " + std::to_string(layers.size()) + " does not match topology (" +
             std::to_string(cp.backbone.net.layers.size()) + ")");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        Layer& layer = *cp.backbone.net.layers[i];
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

inline void save_backbone(const Backbone& b, const RunConfig& config, std::uint64_t seed,
                          const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write checkpoint \"" + path.string() + "\"");
    out << backbone_to_json(b, config, seed).dump(2) << '\n';
}

inline BackboneCheckpoint load_backbone(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open checkpoint \"" + path.string() + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
    return backbone_from_json(j, path.string());
}

}  // namespace tdet
