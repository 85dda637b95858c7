#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tdet/classifier.hpp"
#include "tdet/errors.hpp"
#include "tdet/metrics.hpp"
#include "tdet/strconv.hpp"
#include "tdet/types.hpp"

namespace tdet {

inline double silhouette(const std::vector<FeatureRow>& rows) {
    std::vector<EmbeddingPoint> points;
    std::vector<Label> labels;
    points.reserve(rows.size());
    labels.reserve(rows.size());
    for (const FeatureRow& r : rows) {
        points.push_back(r.point);
        labels.push_back(r.label);
    }
    return silhouette_two_groups(points, labels);
}

// Plain-number CSV of the two feature coordinates plus the label, one row per
// point, for downstream tools that want the data rather than the picture.
inline std::string plot_points_csv(const std::vector<FeatureRow>& rows) {
    std::string out = "e1,e2,label\n";
    for (const FeatureRow& r : rows) {
        out += format_double(r.point.coords[0]);
        out += ',';
        out += format_double(r.point.coords[1]);
        out += ',';
        out += std::to_string(label_to_int(r.label));
        out += '\n';
    }
    return out;
}

// Hand-rolled SVG scatter of the 2-D features, real points in blue and fake
// points in red.
inline std::string plot_svg(const std::vector<FeatureRow>& rows) {
    double lo_x = rows.front().point.coords[0], hi_x = lo_x;
    double lo_y = rows.front().point.coords[1], hi_y = lo_y;
    for (const FeatureRow& r : rows) {
        lo_x = std::min(lo_x, r.point.coords[0]);
        hi_x = std::max(hi_x, r.point.coords[0]);
        lo_y = std::min(lo_y, r.point.coords[1]);
        hi_y = std::max(hi_y, r.point.coords[1]);
    }
    // pad degenerate ranges so a single point still lands mid-plot
    if (hi_x - lo_x < 1e-12) {
        lo_x -= 0.5;
        hi_x += 0.5;
    }
    if (hi_y - lo_y < 1e-12) {
        lo_y -= 0.5;
        hi_y += 0.5;
    }
    const double pad_x = 0.05 * (hi_x - lo_x);
    const double pad_y = 0.05 * (hi_y - lo_y);
    lo_x -= pad_x;
    hi_x += pad_x;
    lo_y -= pad_y;
    hi_y += pad_y;

    const int width = 640;
    const int height = 480;
    const int margin = 48;
    const auto sx = [&](double x) {
        return margin + (x - lo_x) / (hi_x - lo_x) * (width - 2 * margin);
    };
    const auto sy = [&](double y) {
        // SVG y grows downward; flip so larger e2 plots higher
        return height - margin - (y - lo_y) / (hi_y - lo_y) * (height - 2 * margin);
    };
    const auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4g", v);
        return std::string(buf);
    };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<rect x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(margin) +
           "\" width=\"" + std::to_string(width - 2 * margin) + "\" height=\"" +
           std::to_string(height - 2 * margin) + "\" fill=\"none\" stroke=\"black\"/>\n";
    // corner coordinate labels are enough of an axis for a diagnostic scatter
    svg += "<text x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(height - 28) +
           "\" font-size=\"12\">e1: " + num(lo_x) + " .. " + num(hi_x) + "</text>\n";
    svg += "<text x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(height - 12) +
           "\" font-size=\"12\">e2: " + num(lo_y) + " .. " + num(hi_y) + "</text>\n";
    svg += "<circle cx=\"" + std::to_string(width - margin - 110) +
           "\" cy=\"20\" r=\"4\" fill=\"#1f77b4\"/>\n";
    svg += "<text x=\"" + std::to_string(width - margin - 100) +
           "\" y=\"24\" font-size=\"12\">real</text>\n";
    svg += "<circle cx=\"" + std::to_string(width - margin - 50) +
           "\" cy=\"20\" r=\"4\" fill=\"#d62728\"/>\n";
    svg += "<text x=\"" + std::to_string(width - margin - 40) +
           "\" y=\"24\" font-size=\"12\">fake</text>\n";
    for (const FeatureRow& r : rows) {
        const char* color = r.label == Label::kFake ? "#d62728" : "#1f77b4";
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" "
                      "fill-opacity=\"0.8\"/>\n",
                      sx(r.point.coords[0]), sy(r.point.coords[1]), color);
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

struct PlotResult {
    double silhouette = 0.0;
    std::filesystem::path svg_path;
    std::filesystem::path csv_path;
};

// Writes `<out_stem>.svg` and `<out_stem>.csv` for a 2-D feature file and
// returns the silhouette of the label groups.
inline PlotResult plot_features(const std::vector<FeatureRow>& rows,
                                const std::filesystem::path& out_stem) {
    if (rows.empty()) throw SamplingError("cannot plot an empty feature set");
    for (const FeatureRow& r : rows) {
        if (r.point.dim() != 2) {
            throw DimensionError(
                "feature row \"" + r.id + "\" has dimension " + std::to_string(r.point.dim()) +
                "; plotting requires exactly 2 (dimensionality reduction is out of scope)");
        }
    }

    PlotResult result;
    result.silhouette = silhouette(rows);
    result.svg_path = out_stem;
    result.svg_path += ".svg";
    result.csv_path = out_stem;
    result.csv_path += ".csv";

    std::ofstream svg(result.svg_path, std::ios::binary | std::ios::trunc);
    if (!svg) throw FileError("cannot write plot \"" + result.svg_path.string() + "\"");
    svg << plot_svg(rows);

    std::ofstream csv(result.csv_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw FileError("cannot write plot data \"" + result.csv_path.string() + "\"");
    csv << plot_points_csv(rows);
    return result;
}

}  // namespace tdet
