#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "tdet/errors.hpp"
#include "tdet/strconv.hpp"

namespace tdet {

enum class LossKind { kSoftmaxRatio, kMargin };

inline const char* loss_kind_name(LossKind k) {
    return k == LossKind::kSoftmaxRatio ? "softmax_ratio" : "margin";
}

inline LossKind loss_kind_from_string(std::string_view s) {
    if (s == "softmax_ratio") return LossKind::kSoftmaxRatio;
    if (s == "margin") return LossKind::kMargin;
    throw ConfigValueError("loss_kind must be \"softmax_ratio\" or \"margin\", got \"" +
                           std::string(s) + "\"");
}

// All tunables of the two training stages. Field defaults apply whenever a
// key is absent from a config file.
struct RunConfig {
    int embedding_dim = 2;
    double stage1_lr = 4e-4;
    int stage1_batch = 12;
    int stage1_epochs = 10;
    double stage2_lr = 3e-3;
    double stage2_momentum = 0.1;
    LossKind loss_kind = LossKind::kSoftmaxRatio;
    double margin = 0.2;
    double dropout_rate = 0.5;
    double leaky_slope = 0.01;
    int crop_size = 299;
    std::uint64_t seed = 0;

    bool operator==(const RunConfig&) const = default;
};

inline void validate_config(const RunConfig& c) {
    const auto fail = [](const std::string& msg) { throw ConfigInvariantError(msg); };
    if (c.embedding_dim < 1) fail("embedding_dim must be >= 1");
    if (!(c.stage1_lr > 0.0) || !std::isfinite(c.stage1_lr)) fail("stage1_lr must be > 0");
    if (c.stage1_batch < 1) fail("stage1_batch must be >= 1");
    if (c.stage1_epochs < 0) fail("stage1_epochs must be >= 0");
    if (!(c.stage2_lr > 0.0) || !std::isfinite(c.stage2_lr)) fail("stage2_lr must be > 0");
    if (c.stage2_momentum < 0.0 || c.stage2_momentum >= 1.0) {
        fail("stage2_momentum must be in [0,1)");
    }
    if (c.margin < 0.0 || !std::isfinite(c.margin)) fail("margin must be >= 0");
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0) fail("dropout_rate must be in [0,1)");
    if (!std::isfinite(c.leaky_slope) || c.leaky_slope < 0.0) {
        fail("leaky_slope must be finite and >= 0");
    }
    if (c.crop_size < 1) fail("crop_size must be >= 1");
}

// Applies one key=value setting; false means the key is not a RunConfig key
// (so callers with larger key sets can fall through).
inline bool apply_config_key(RunConfig& c, std::string_view key, std::string_view value) {
    if (key == "embedding_dim") {
        c.embedding_dim = static_cast<int>(parse_int(value, "embedding_dim"));
    } else if (key == "stage1_lr") {
        c.stage1_lr = parse_double(value, "stage1_lr");
    } else if (key == "stage1_batch") {
        c.stage1_batch = static_cast<int>(parse_int(value, "stage1_batch"));
    } else if (key == "stage1_epochs") {
        c.stage1_epochs = static_cast<int>(parse_int(value, "stage1_epochs"));
    } else if (key == "stage2_lr") {
        c.stage2_lr = parse_double(value, "stage2_lr");
    } else if (key == "stage2_momentum") {
        c.stage2_momentum = parse_double(value, "stage2_momentum");
    } else if (key == "loss_kind") {
        c.loss_kind = loss_kind_from_string(value);
    } else if (key == "margin") {
        c.margin = parse_double(value, "margin");
    } else if (key == "dropout_rate") {
        c.dropout_rate = parse_double(value, "dropout_rate");
    } else if (key == "leaky_slope") {
        c.leaky_slope = parse_double(value, "leaky_slope");
    } else if (key == "crop_size") {
        c.crop_size = static_cast<int>(parse_int(value, "crop_size"));
    } else if (key == "seed") {
        c.seed = parse_uint(value, "seed");
    } else {
        return false;
    }
    return true;
}

// Shared line-by-line walk for key=value files ('#' starts a comment).
// handle(key, value, line_no) applies one setting and throws on bad keys.
template <typename Handler>
inline void parse_kv_lines(std::string_view text, std::string_view origin, Handler&& handle) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            if (pos >= text.size()) break;
            eol = text.size();
        }
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;

        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigValueError(std::string(origin) + ":" + std::to_string(line_no) +
                                   ": expected \"key = value\", got \"" + std::string(line) +
                                   "\"");
        }
        handle(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
    }
}

inline RunConfig parse_config(std::string_view text, std::string_view origin = "<string>") {
    RunConfig c;
    parse_kv_lines(text, origin, [&](std::string_view key, std::string_view value,
                                     std::size_t line_no) {
        if (!apply_config_key(c, key, value)) {
            throw ConfigUnknownKeyError(std::string(origin) + ":" + std::to_string(line_no) +
                                        ": unknown config key \"" + std::string(key) + "\"");
        }
    });
    validate_config(c);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open config \"" + path.string() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.string());
}

inline std::string config_to_text(const RunConfig& c) {
    std::string out;
    const auto put = [&out](std::string_view key, const std::string& value) {
        out += key;
        out += " = ";
        out += value;
        out += '\n';
    };
    put("embedding_dim", std::to_string(c.embedding_dim));
    put("stage1_lr", format_double(c.stage1_lr));
    put("stage1_batch", std::to_string(c.stage1_batch));
    put("stage1_epochs", std::to_string(c.stage1_epochs));
    put("stage2_lr", format_double(c.stage2_lr));
    put("stage2_momentum", format_double(c.stage2_momentum));
    put("loss_kind", loss_kind_name(c.loss_kind));
    put("margin", format_double(c.margin));
    put("dropout_rate", format_double(c.dropout_rate));
    put("leaky_slope", format_double(c.leaky_slope));
    put("crop_size", std::to_string(c.crop_size));
    put("seed", format_u64(c.seed));
    return out;
}

inline void save_config(const RunConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write config \"" + path.string() + "\"");
    out << config_to_text(c);
}

// JSON view used inside checkpoint archives.
inline nlohmann::json config_to_json(const RunConfig& c) {
    return nlohmann::json{{"embedding_dim", c.embedding_dim},
                          {"stage1_lr", c.stage1_lr},
                          {"stage1_batch", c.stage1_batch},
                          {"stage1_epochs", c.stage1_epochs},
                          {"stage2_lr", c.stage2_lr},
                          {"stage2_momentum", c.stage2_momentum},
                          {"loss_kind", loss_kind_name(c.loss_kind)},
                          {"margin", c.margin},
                          {"dropout_rate", c.dropout_rate},
                          {"leaky_slope", c.leaky_slope},
                          {"crop_size", c.crop_size},
                          {"seed", c.seed}};
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.embedding_dim = j.at("embedding_dim").get<int>();
    c.stage1_lr = j.at("stage1_lr").get<double>();
    c.stage1_batch = j.at("stage1_batch").get<int>();
    c.stage1_epochs = j.at("stage1_epochs").get<int>();
    c.stage2_lr = j.at("stage2_lr").get<double>();
    c.stage2_momentum = j.at("stage2_momentum").get<double>();
    c.loss_kind = loss_kind_from_string(j.at("loss_kind").get<std::string>());
    c.margin = j.at("margin").get<double>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    c.crop_size = j.at("crop_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    validate_config(c);
    return c;
}

}  // namespace tdet
