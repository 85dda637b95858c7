#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/imgproc.hpp>
#include <opencv2/objdetect.hpp>

#include "tdet/errors.hpp"
#include "tdet/image.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

struct FaceBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;
    double confidence = 0.0;

    bool operator==(const FaceBox&) const = default;
};

// detect(image) -> face boxes inside the image bounds, best first.
using Detector = std::function<std::vector<FaceBox>(const Tensor&)>;

inline std::vector<FaceBox> clip_boxes(std::vector<FaceBox> boxes, int img_w, int img_h) {
    std::vector<FaceBox> kept;
    for (FaceBox b : boxes) {
        const int x0 = std::clamp(b.x, 0, img_w);
        const int y0 = std::clamp(b.y, 0, img_h);
        const int x1 = std::clamp(b.x + b.w, 0, img_w);
        const int y1 = std::clamp(b.y + b.h, 0, img_h);
        if (x1 - x0 <= 0 || y1 - y0 <= 0) continue;
        b.x = x0;
        b.y = y0;
        b.w = x1 - x0;
        b.h = y1 - y0;
        kept.push_back(b);
    }
    return kept;
}

// Parameter-free stand-in: one centered square box covering 60% of the short
// side. Keeps the ingestion path testable without model files.
inline Detector make_center_detector() {
    return [](const Tensor& img) {
        const int side = std::max(1, static_cast<int>(0.6 * std::min(img.w, img.h)));
        FaceBox b;
        b.x = (img.w - side) / 2;
        b.y = (img.h - side) / 2;
        b.w = side;
        b.h = side;
        b.confidence = 1.0;
        return std::vector<FaceBox>{b};
    };
}

// Haar/LBP cascade file wrapper; boxes ranked by detection count.
inline Detector make_cascade_detector(const std::string& model_path) {
    auto cascade = std::make_shared<cv::CascadeClassifier>();
    if (!cascade->load(model_path)) {
        throw DetectorError("cannot load cascade model \"" + model_path + "\"");
    }
    return [cascade](const Tensor& img) {
        const cv::Mat bgr = mat_from_tensor(img);
        cv::Mat gray;
        cv::cvtColor(bgr, gray, cv::COLOR_BGR2GRAY);
        std::vector<cv::Rect> rects;
        std::vector<int> counts;
        cascade->detectMultiScale(gray, rects, counts);
        std::vector<FaceBox> boxes;
        for (std::size_t i = 0; i < rects.size(); ++i) {
            boxes.push_back({rects[i].x, rects[i].y, rects[i].width, rects[i].height,
                             static_cast<double>(counts[i])});
        }
        std::stable_sort(boxes.begin(), boxes.end(), [](const FaceBox& a, const FaceBox& b) {
            return a.confidence > b.confidence;
        });
        return clip_boxes(std::move(boxes), img.w, img.h);
    };
}

// "center" or "cascade:<model.xml>".
inline Detector make_detector(std::string_view name) {
    if (name == "center") return make_center_detector();
    constexpr std::string_view prefix = "cascade:";
    if (name.rfind(prefix, 0) == 0) {
        return make_cascade_detector(std::string(name.substr(prefix.size())));
    }
    throw DetectorError("unknown detector \"" + std::string(name) +
                        "\" (expected \"center\" or \"cascade:<model.xml>\")");
}

}  // namespace tdet
