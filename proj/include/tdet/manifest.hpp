#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "tdet/errors.hpp"
#include "tdet/strconv.hpp"
#include "tdet/types.hpp"

namespace tdet {

inline constexpr std::string_view kManifestHeader = "id,image_path,label,dataset,split,method";

// Ordered collection of samples. `base_dir` is runtime-only context (the
// directory the manifest was loaded from, used to resolve relative image
// paths); it never appears in the serialized form.
struct Manifest {
    std::string dataset_name;
    std::vector<Sample> samples;
    std::filesystem::path base_dir;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }

    std::filesystem::path resolve_image_path(const Sample& s) const {
        std::filesystem::path p(s.image_path);
        if (p.is_absolute() || base_dir.empty()) return p;
        return base_dir / p;
    }
};

struct SplitLabelCounts {
    // counts[split][label]
    std::array<std::array<std::uint64_t, 2>, 2> counts{};

    std::uint64_t at(Split s, Label l) const {
        return counts[static_cast<int>(s)][static_cast<int>(l)];
    }
    std::uint64_t& at(Split s, Label l) {
        return counts[static_cast<int>(s)][static_cast<int>(l)];
    }
    std::uint64_t total() const {
        return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    }
};

inline SplitLabelCounts split_counts(const Manifest& m) {
    SplitLabelCounts c;
    for (const Sample& s : m.samples) ++c.at(s.split, s.label);
    return c;
}

namespace detail {

// Manifest fields are plain tokens: the CSV dialect has no quoting, so
// separators and line breaks cannot appear inside a field.
inline void check_manifest_field(std::string_view value, std::string_view what,
                                 std::size_t row) {
    if (value.find(',') != std::string_view::npos ||
        value.find('\n') != std::string_view::npos ||
        value.find('\r') != std::string_view::npos) {
        throw CsvRowError("row " + std::to_string(row) + ": field " + std::string(what) +
                          " contains a separator character");
    }
}

}  // namespace detail

inline std::string manifest_to_csv(const Manifest& m) {
    std::string out;
    out += kManifestHeader;
    out += '\n';
    std::size_t row = 1;
    for (const Sample& s : m.samples) {
        detail::check_manifest_field(s.id, "id", row);
        detail::check_manifest_field(s.image_path, "image_path", row);
        detail::check_manifest_field(s.dataset, "dataset", row);
        detail::check_manifest_field(s.method, "method", row);
        out += s.id;
        out += ',';
        out += s.image_path;
        out += ',';
        out += std::to_string(label_to_int(s.label));
        out += ',';
        out += s.dataset;
        out += ',';
        out += split_name(s.split);
        out += ',';
        out += s.method;
        out += '\n';
        ++row;
    }
    return out;
}

inline Manifest parse_manifest_csv(std::string_view text, std::string_view origin = "<string>") {
    Manifest m;
    std::unordered_set<std::string> seen_ids;

    std::size_t pos = 0;
    std::size_t row = 0;  // 0 = header
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (row == 0) {
            if (line != kManifestHeader) {
                throw CsvHeaderError(std::string(origin) + ": malformed header \"" +
                                     std::string(line) + "\"; expected \"" +
                                     std::string(kManifestHeader) + "\"");
            }
            ++row;
            continue;
        }
        if (line.empty()) {
            if (pos > text.size()) break;  // trailing newline
            // interior blank lines are malformed rows
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                              " is empty");
        }

        const auto fields = split(line, ',');
        if (fields.size() != 6) {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected 6");
        }

        Sample s;
        s.id = std::string(fields[0]);
        s.image_path = std::string(fields[1]);
        if (s.id.empty()) {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                              " has an empty id");
        }
        if (s.image_path.empty()) {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                              " has an empty image_path");
        }

        int label_value = 0;
        try {
            label_value = static_cast<int>(parse_int(fields[2], "label"));
        } catch (const ConfigValueError&) {
            throw LabelValueError(std::string(origin) + ": row " + std::to_string(row) +
                                  " (id \"" + s.id + "\"): label \"" + std::string(fields[2]) +
                                  "\" is not an integer");
        }
        if (label_value != 0 && label_value != 1) {
            throw LabelValueError(std::string(origin) + ": row " + std::to_string(row) +
                                  " (id \"" + s.id + "\"): label " +
                                  std::to_string(label_value) + " outside {0,1}");
        }
        s.label = label_from_int(label_value);
        s.dataset = std::string(fields[3]);
        s.split = split_from_string(fields[4]);
        s.method = std::string(fields[5]);

        if (s.label == Label::kReal && !s.method.empty() && s.method != "pristine") {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) +
                              " (id \"" + s.id + "\"): real sample carries method \"" +
                              s.method + "\"");
        }

        if (!seen_ids.insert(s.id).second) {
            throw DuplicateIdError(s.id, row);
        }

        m.samples.push_back(std::move(s));
        ++row;
    }

    if (!m.samples.empty()) m.dataset_name = m.samples.front().dataset;
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open manifest \"" + path.string() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    Manifest m = parse_manifest_csv(buf.str(), path.string());
    m.base_dir = path.parent_path();
    return m;
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write manifest \"" + path.string() + "\"");
    out << manifest_to_csv(m);
    if (!out) throw FileError("failed while writing manifest \"" + path.string() + "\"");
}

// Copy holding only the samples of one split. Keeps ordering and base_dir.
inline Manifest filter_split(const Manifest& m, Split split) {
    Manifest out;
    out.dataset_name = m.dataset_name;
    out.base_dir = m.base_dir;
    for (const Sample& s : m.samples) {
        if (s.split == split) out.samples.push_back(s);
    }
    return out;
}

}  // namespace tdet
