#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "tdet/errors.hpp"
#include "tdet/tensor.hpp"

namespace tdet {

// Channel order inside tensors is RGB; values live in [0,1].

inline Tensor tensor_from_mat(const cv::Mat& bgr) {
    if (bgr.empty() || bgr.type() != CV_8UC3) {
        throw ImageError("expected an 8-bit 3-channel image");
    }
    Tensor t(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            t.at(y, x, 0) = row[x][2] / 255.0;
            t.at(y, x, 1) = row[x][1] / 255.0;
            t.at(y, x, 2) = row[x][0] / 255.0;
        }
    }
    return t;
}

inline cv::Mat mat_from_tensor(const Tensor& t) {
    if (t.c != 3) throw ShapeError("expected a 3-channel tensor, got " + t.shape_string());
    cv::Mat bgr(t.h, t.w, CV_8UC3);
    const auto to_byte = [](double v) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        return static_cast<unsigned char>(std::lround(clamped * 255.0));
    };
    for (int y = 0; y < t.h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < t.w; ++x) {
            row[x][2] = to_byte(t.at(y, x, 0));
            row[x][1] = to_byte(t.at(y, x, 1));
            row[x][0] = to_byte(t.at(y, x, 2));
        }
    }
    return bgr;
}

// Bilinear resampling with half-pixel centers:
// src = (dst + 0.5) * (in / out) - 0.5, clamped to the source grid.
inline Tensor resize_bilinear(const Tensor& in, int out_h, int out_w) {
    if (in.h < 1 || in.w < 1) throw ShapeError("cannot resize an empty tensor");
    if (out_h < 1 || out_w < 1) throw ShapeError("target size must be positive");
    if (out_h == in.h && out_w == in.w) return in;

    Tensor out(out_h, out_w, in.c);
    const double sy = static_cast<double>(in.h) / out_h;
    const double sx = static_cast<double>(in.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx =
                std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in.w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < in.c; ++ch) {
                const double top = in.at(y0, x0, ch) * (1.0 - wx) + in.at(y0, x1, ch) * wx;
                const double bot = in.at(y1, x0, ch) * (1.0 - wx) + in.at(y1, x1, ch) * wx;
                out.at(y, x, ch) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

inline Tensor decode_image(const std::filesystem::path& path) {
    const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw ImageError("cannot decode image \"" + path.string() + "\"");
    }
    return tensor_from_mat(bgr);
}

inline Tensor load_image(const std::filesystem::path& path, int crop_size) {
    if (crop_size < 1) throw ShapeError("crop_size must be positive");
    return resize_bilinear(decode_image(path), crop_size, crop_size);
}

inline void save_png(const Tensor& t, const std::filesystem::path& path) {
    const cv::Mat bgr = mat_from_tensor(t);
    if (!cv::imwrite(path.string(), bgr)) {
        throw FileError("cannot write image \"" + path.string() + "\"");
    }
}

}  // namespace tdet
