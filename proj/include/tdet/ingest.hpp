#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/videoio.hpp>

#include "tdet/detector.hpp"
#include "tdet/errors.hpp"
#include "tdet/image.hpp"
#include "tdet/strconv.hpp"
#include "tdet/tensor.hpp"
#include "tdet/types.hpp"

namespace tdet {

// Sequential frame access over either a video file or a directory of image
// frames (sorted by filename, so numbering order is the frame order).
class FrameSource {
  public:
    explicit FrameSource(const std::filesystem::path& path) {
        if (std::filesystem::is_directory(path)) {
            for (const auto& entry : std::filesystem::directory_iterator(path)) {
                if (!entry.is_regular_file()) continue;
                std::string ext = entry.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(),
                               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") {
                    files_.push_back(entry.path());
                }
            }
            std::sort(files_.begin(), files_.end());
            if (files_.empty()) {
                throw VideoError("frame directory \"" + path.string() +
                                 "\" contains no images");
            }
            from_directory_ = true;
        } else {
            if (!std::filesystem::exists(path)) {
                throw FileError("no such video \"" + path.string() + "\"");
            }
            capture_.open(path.string());
            if (!capture_.isOpened()) {
                throw VideoError("cannot decode video \"" + path.string() + "\"");
            }
        }
    }

    // Returns false at end of stream.
    bool next(Tensor& frame) {
        if (from_directory_) {
            if (next_file_ >= files_.size()) return false;
            frame = decode_image(files_[next_file_++]);
            return true;
        }
        cv::Mat bgr;
        if (!capture_.read(bgr)) return false;
        frame = tensor_from_mat(bgr);
        return true;
    }

  private:
    bool from_directory_ = false;
    std::vector<std::filesystem::path> files_;
    std::size_t next_file_ = 0;
    cv::VideoCapture capture_;
};

struct IngestOptions {
    int crop_size = 299;
    int frame_stride = 5;
    double box_expand = 1.3;
    Label label = Label::kReal;
    std::string dataset = "ingest";
    Split split = Split::kTrain;
    std::string method;  // manipulation name for fake sources
};

struct IngestResult {
    std::vector<Sample> samples;
    std::vector<std::string> log_lines;
};

// Expands a detection to a square of side expand * max(w, h) around its
// center, then slides it as needed to fit the frame.
inline FaceBox expand_to_square(const FaceBox& box, double expand, int img_w, int img_h) {
    int side = static_cast<int>(std::llround(expand * std::max(box.w, box.h)));
    side = std::max(1, std::min({side, img_w, img_h}));
    const double cx = box.x + box.w / 2.0;
    const double cy = box.y + box.h / 2.0;
    int x0 = static_cast<int>(std::llround(cx - side / 2.0));
    int y0 = static_cast<int>(std::llround(cy - side / 2.0));
    x0 = std::clamp(x0, 0, img_w - side);
    y0 = std::clamp(y0, 0, img_h - side);
    return {x0, y0, side, side, box.confidence};
}

inline Tensor crop_tensor(const Tensor& img, const FaceBox& box) {
    Tensor out(box.h, box.w, img.c);
    for (int y = 0; y < box.h; ++y) {
        for (int x = 0; x < box.w; ++x) {
            for (int ch = 0; ch < img.c; ++ch) {
                out.at(y, x, ch) = img.at(box.y + y, box.x + x, ch);
            }
        }
    }
    return out;
}

// Walks frames {0, stride, 2*stride, ...}, crops the top detection of each,
// and writes crop PNGs named `<stem>_f<frameindex>.png` into out_dir.
// Frames without detections are skipped and noted in the log.
inline IngestResult ingest_video(const std::filesystem::path& video_path,
                                 const Detector& detector, const IngestOptions& options,
                                 const std::filesystem::path& out_dir) {
    if (options.frame_stride < 1) throw ConfigInvariantError("frame_stride must be >= 1");
    if (options.crop_size < 1) throw ConfigInvariantError("crop_size must be >= 1");

    std::filesystem::path stem_path = video_path;
    if (stem_path.filename().empty()) stem_path = stem_path.parent_path();
    const std::string stem = stem_path.stem().string();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw FileError("cannot create output directory \"" + out_dir.string() +
                        "\": " + ec.message());
    }

    FrameSource source(video_path);
    IngestResult result;
    result.log_lines.push_back("ingest " + video_path.string() + " stride=" +
                               std::to_string(options.frame_stride) + " crop_size=" +
                               std::to_string(options.crop_size) +
                               " box_expand=" + format_double(options.box_expand));

    Tensor frame;
    int index = 0;
    int frames_seen = 0;
    while (source.next(frame)) {
        ++frames_seen;
        const int frame_index = index++;
        if (frame_index % options.frame_stride != 0) continue;

        std::vector<FaceBox> boxes;
        try {
            boxes = detector(frame);
        } catch (const Error& e) {
            throw DetectorError("frame " + std::to_string(frame_index) + " of \"" +
                                video_path.string() + "\": " + e.what());
        }
        if (boxes.empty()) {
            result.log_lines.push_back("frame " + std::to_string(frame_index) +
                                       ": no detection, skipped");
            continue;
        }
        const FaceBox square =
            expand_to_square(boxes.front(), options.box_expand, frame.w, frame.h);
        const Tensor crop =
            resize_bilinear(crop_tensor(frame, square), options.crop_size, options.crop_size);

        Sample s;
        s.id = stem + "_f" + std::to_string(frame_index);
        s.image_path = s.id + ".png";
        s.label = options.label;
        s.dataset = options.dataset;
        s.split = options.split;
        s.method = options.method;
        save_png(crop, out_dir / s.image_path);
        result.log_lines.push_back("frame " + std::to_string(frame_index) + ": box (" +
                                   std::to_string(square.x) + "," + std::to_string(square.y) +
                                   ")+" + std::to_string(square.w) + " -> " + s.image_path);
        result.samples.push_back(std::move(s));
    }
    if (frames_seen == 0) {
        throw VideoError("video \"" + video_path.string() + "\" has no frames");
    }
    return result;
}

}  // namespace tdet
