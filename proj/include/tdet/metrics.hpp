#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tdet/errors.hpp"
#include "tdet/strconv.hpp"
#include "tdet/types.hpp"

namespace tdet {

// One scored sample; higher score = more likely fake.
struct ScoreRecord {
    std::string id;
    Label label = Label::kReal;
    double score = 0.0;

    bool operator==(const ScoreRecord&) const = default;
};

struct EvalReport {
    double auc = 0.0;
    double eer = 0.0;
    double eer_threshold = 0.0;
    double accuracy_at_half = 0.0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;

    bool operator==(const EvalReport&) const = default;
};

namespace detail {

inline void check_records(const std::vector<ScoreRecord>& records) {
    std::size_t n_real = 0, n_fake = 0;
    for (const ScoreRecord& r : records) {
        if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0) {
            throw ScoreValueError("score for id \"" + r.id + "\" is " +
                                  format_double(r.score) + ", outside [0,1]");
        }
        (r.label == Label::kReal ? n_real : n_fake) += 1;
    }
    if (n_real == 0 || n_fake == 0) {
        throw SingleClassError("need at least one real and one fake record, got " +
                               std::to_string(n_real) + " real / " + std::to_string(n_fake) +
                               " fake");
    }
}

}  // namespace detail

// Mann-Whitney AUC with half credit for ties, via mid-ranks on one sort.
inline double auc(const std::vector<ScoreRecord>& records) {
    detail::check_records(records);
    std::vector<std::pair<double, Label>> rows;
    rows.reserve(records.size());
    for (const ScoreRecord& r : records) rows.emplace_back(r.score, r.label);
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double rank_sum_fake = 0.0;
    std::size_t n_fake = 0;
    std::size_t i = 0;
    const std::size_t n = rows.size();
    while (i < n) {
        std::size_t j = i;
        while (j < n && rows[j].first == rows[i].first) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based group mean
        for (std::size_t k = i; k < j; ++k) {
            if (rows[k].second == Label::kFake) {
                rank_sum_fake += mid_rank;
                ++n_fake;
            }
        }
        i = j;
    }
    const std::size_t n_real = n - n_fake;
    const double u = rank_sum_fake - 0.5 * static_cast<double>(n_fake) *
                                         static_cast<double>(n_fake + 1);
    return u / (static_cast<double>(n_fake) * static_cast<double>(n_real));
}

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;
};

// Threshold sweep over all distinct scores; a sample is called fake iff
// score >= t. Returns the sweep point minimizing |FPR - FNR| (ties resolve
// to the smallest threshold) with EER = (FPR + FNR) / 2 there.
inline EerResult eer(const std::vector<ScoreRecord>& records) {
    detail::check_records(records);
    std::vector<double> real_scores, fake_scores, thresholds;
    thresholds.reserve(records.size());
    for (const ScoreRecord& r : records) {
        (r.label == Label::kReal ? real_scores : fake_scores).push_back(r.score);
        thresholds.push_back(r.score);
    }
    std::sort(real_scores.begin(), real_scores.end());
    std::sort(fake_scores.begin(), fake_scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double n_real = static_cast<double>(real_scores.size());
    const double n_fake = static_cast<double>(fake_scores.size());
    EerResult best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (const double t : thresholds) {
        const auto real_ge =
            real_scores.end() - std::lower_bound(real_scores.begin(), real_scores.end(), t);
        const auto fake_lt =
            std::lower_bound(fake_scores.begin(), fake_scores.end(), t) - fake_scores.begin();
        const double fpr = static_cast<double>(real_ge) / n_real;
        const double fnr = static_cast<double>(fake_lt) / n_fake;
        const double gap = std::abs(fpr - fnr);
        if (gap < best_gap) {
            best_gap = gap;
            best.eer = 0.5 * (fpr + fnr);
            best.threshold = t;
        }
    }
    return best;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;

    bool operator==(const RocPoint&) const = default;
};

// Points ordered from (0,0) to (1,1); tie groups advance both coordinates at
// once, so the trapezoidal area reproduces the half-credit AUC.
inline std::vector<RocPoint> roc_curve(const std::vector<ScoreRecord>& records) {
    detail::check_records(records);
    std::vector<std::pair<double, Label>> rows;
    rows.reserve(records.size());
    std::size_t n_real = 0, n_fake = 0;
    for (const ScoreRecord& r : records) {
        rows.emplace_back(r.score, r.label);
        (r.label == Label::kReal ? n_real : n_fake) += 1;
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<RocPoint> curve;
    curve.push_back({0.0, 0.0});
    std::size_t cum_real = 0, cum_fake = 0;
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].first == rows[i].first) ++j;
        for (std::size_t k = i; k < j; ++k) {
            (rows[k].second == Label::kReal ? cum_real : cum_fake) += 1;
        }
        curve.push_back({static_cast<double>(cum_real) / static_cast<double>(n_real),
                         static_cast<double>(cum_fake) / static_cast<double>(n_fake)});
        i = j;
    }
    return curve;
}

// Accuracy of the argmax rule: call fake iff score > 1/2 (the tie at exactly
// 1/2 resolves to real, matching the classifier's tie convention).
inline double accuracy_at_half(const std::vector<ScoreRecord>& records) {
    detail::check_records(records);
    std::size_t hits = 0;
    for (const ScoreRecord& r : records) {
        const Label predicted = r.score > 0.5 ? Label::kFake : Label::kReal;
        if (predicted == r.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

inline EvalReport evaluate(const std::vector<ScoreRecord>& records) {
    EvalReport rep;
    rep.auc = auc(records);
    const EerResult e = eer(records);
    rep.eer = e.eer;
    rep.eer_threshold = e.threshold;
    rep.accuracy_at_half = accuracy_at_half(records);
    for (const ScoreRecord& r : records) {
        (r.label == Label::kReal ? rep.n_real : rep.n_fake) += 1;
    }
    return rep;
}

// ---- score file I/O (CSV `id,label,score`) ----

inline constexpr std::string_view kScoreHeader = "id,label,score";

inline std::string scores_to_csv(const std::vector<ScoreRecord>& records) {
    std::string out(kScoreHeader);
    out += '\n';
    for (const ScoreRecord& r : records) {
        if (r.id.find_first_of(",\n\r") != std::string::npos) {
            throw ScoreValueError("score record id \"" + r.id + "\" contains a separator");
        }
        out += r.id;
        out += ',';
        out += std::to_string(label_to_int(r.label));
        out += ',';
        out += format_double(r.score);
        out += '\n';
    }
    return out;
}

inline std::vector<ScoreRecord> parse_scores_csv(std::string_view text,
                                                 std::string_view origin = "<string>") {
    std::vector<ScoreRecord> records;
    std::size_t pos = 0;
    std::size_t row = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (row == 0) {
            if (line != kScoreHeader) {
                throw CsvHeaderError(std::string(origin) + ": malformed header \"" +
                                     std::string(line) + "\"; expected \"" +
                                     std::string(kScoreHeader) + "\"");
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
        if (fields.size() != 3) {
            throw CsvRowError(std::string(origin) + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected 3");
        }
        ScoreRecord r;
        r.id = std::string(fields[0]);
        r.label = label_from_int(static_cast<int>(parse_int(fields[1], "label")));
        r.score = parse_double(fields[2], "score");
        if (!std::isfinite(r.score) || r.score < 0.0 || r.score > 1.0) {
            throw ScoreValueError(std::string(origin) + ": row " + std::to_string(row) +
                                  ": score " + std::string(fields[2]) + " outside [0,1]");
        }
        records.push_back(std::move(r));
        ++row;
    }
    return records;
}

inline std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open score file \"" + path.string() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scores_csv(buf.str(), path.string());
}

inline void save_scores(const std::vector<ScoreRecord>& records,
                        const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write score file \"" + path.string() + "\"");
    out << scores_to_csv(records);
}

// ---- report serialization ----

inline nlohmann::json report_to_json(const EvalReport& r) {
    return nlohmann::json{{"auc", r.auc},
                          {"eer", r.eer},
                          {"eer_threshold", r.eer_threshold},
                          {"accuracy_at_half", r.accuracy_at_half},
                          {"n_real", r.n_real},
                          {"n_fake", r.n_fake}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.auc = j.at("auc").get<double>();
    r.eer = j.at("eer").get<double>();
    r.eer_threshold = j.at("eer_threshold").get<double>();
    r.accuracy_at_half = j.at("accuracy_at_half").get<double>();
    r.n_real = j.at("n_real").get<std::size_t>();
    r.n_fake = j.at("n_fake").get<std::size_t>();
    return r;
}

inline std::string render_report(const EvalReport& r) {
    std::string out;
    out += "auc              " + format_double(r.auc) + "\n";
    out += "eer              " + format_double(r.eer) + "\n";
    out += "eer_threshold    " + format_double(r.eer_threshold) + "\n";
    out += "accuracy_at_half " + format_double(r.accuracy_at_half) + "\n";
    out += "n_real           " + std::to_string(r.n_real) + "\n";
    out += "n_fake           " + std::to_string(r.n_fake) + "\n";
    return out;
}

// ---- cross-dataset matrix ----

// Fraction -> percent with one decimal, rounded half-up ("0.999" -> "99.9").
inline std::string format_percent_1dp(double fraction) {
    const long long tenths = std::llround(fraction * 1000.0);
    std::string out = std::to_string(tenths / 10);
    out += '.';
    out += std::to_string(tenths % 10);
    return out;
}

using CrossResults = std::map<std::pair<std::string, std::string>, EvalReport>;

// Rows = train datasets, columns = test datasets, cells = AUC in percent with
// one decimal. Intra-dataset (diagonal) cells carry a '*'; absent pairs
// render as '-'.
inline std::string render_cross_matrix(const CrossResults& results) {
    std::vector<std::string> trains, tests;
    for (const auto& [key, rep] : results) {
        if (std::find(trains.begin(), trains.end(), key.first) == trains.end()) {
            trains.push_back(key.first);
        }
        if (std::find(tests.begin(), tests.end(), key.second) == tests.end()) {
            tests.push_back(key.second);
        }
    }
    std::sort(trains.begin(), trains.end());
    std::sort(tests.begin(), tests.end());

    std::vector<std::vector<std::string>> cells;
    cells.push_back({});
    cells.back().push_back("train\\test");
    for (const std::string& t : tests) cells.back().push_back(t);
    for (const std::string& tr : trains) {
        cells.push_back({});
        cells.back().push_back(tr);
        for (const std::string& te : tests) {
            const auto it = results.find({tr, te});
            if (it == results.end()) {
                cells.back().push_back("-");
            } else {
                std::string cell = format_percent_1dp(it->second.auc);
                if (tr == te) cell += '*';
                cells.back().push_back(cell);
            }
        }
    }

    std::vector<std::size_t> widths(tests.size() + 1, 0);
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out += "  ";
            const std::size_t pad = widths[c] - row[c].size();
            if (c == 0) {
                out += row[c];
                out.append(pad, ' ');
            } else {
                out.append(pad, ' ');
                out += row[c];
            }
        }
        out += '\n';
    }
    return out;
}

// ---- silhouette of the two label groups in feature space ----

// Mean silhouette over all points; a point in a singleton cluster scores 0,
// as does a point with zero separation everywhere.
inline double silhouette_two_groups(const std::vector<EmbeddingPoint>& points,
                                    const std::vector<Label>& labels) {
    if (points.size() != labels.size()) {
        throw ShapeError("silhouette: " + std::to_string(points.size()) + " points vs " +
                         std::to_string(labels.size()) + " labels");
    }
    std::size_t n_by_label[2] = {0, 0};
    for (const Label l : labels) ++n_by_label[label_to_int(l)];
    if (n_by_label[0] == 0 || n_by_label[1] == 0) {
        throw SingleClassError("silhouette needs both label groups");
    }

    const std::size_t n = points.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int own = label_to_int(labels[i]);
        if (n_by_label[own] == 1) continue;  // singleton cluster: s = 0
        double sum_own = 0.0, sum_other = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = euclidean_distance(points[i], points[j]);
            (label_to_int(labels[j]) == own ? sum_own : sum_other) += d;
        }
        const double a = sum_own / static_cast<double>(n_by_label[own] - 1);
        const double b = sum_other / static_cast<double>(n_by_label[1 - own]);
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

}  // namespace tdet
