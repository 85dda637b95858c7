#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "tdet/errors.hpp"

namespace tdet {

// Binary ground truth. The integer mapping REAL=0 / FAKE=1 is part of every
// file format and of the classifier target encoding; nothing may remap it.
enum class Label : int { kReal = 0, kFake = 1 };

inline int label_to_int(Label l) { return static_cast<int>(l); }

inline Label label_from_int(int v) {
    if (v == 0) return Label::kReal;
    if (v == 1) return Label::kFake;
    throw LabelValueError("label must be 0 (real) or 1 (fake), got " + std::to_string(v));
}

inline const char* label_name(Label l) { return l == Label::kReal ? "real" : "fake"; }

enum class Split : int { kTrain = 0, kTest = 1 };

inline const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split split_from_string(std::string_view s) {
    if (s == "train") return Split::kTrain;
    if (s == "test") return Split::kTest;
    throw CsvRowError("split must be \"train\" or \"test\", got \"" + std::string(s) + "\"");
}

// One labeled face crop.
struct Sample {
    std::string id;
    std::string image_path;
    Label label = Label::kReal;
    std::string dataset;
    Split split = Split::kTrain;
    std::string method;  // manipulation method; empty for real samples unless "pristine"

    bool operator==(const Sample&) const = default;
};

// Point in R^E produced by the feature extraction network.
struct EmbeddingPoint {
    std::vector<double> coords;

    EmbeddingPoint() = default;
    explicit EmbeddingPoint(std::vector<double> c) : coords(std::move(c)) {}
    EmbeddingPoint(std::initializer_list<double> c) : coords(c) {}

    std::size_t dim() const { return coords.size(); }
    double operator[](std::size_t i) const { return coords[i]; }
    double& operator[](std::size_t i) { return coords[i]; }

    bool operator==(const EmbeddingPoint& other) const = default;
};

inline double squared_distance(const EmbeddingPoint& a, const EmbeddingPoint& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("embedding dimension mismatch: " + std::to_string(a.dim()) +
                         " vs " + std::to_string(b.dim()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.coords.size(); ++i) {
        const double d = a.coords[i] - b.coords[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(const EmbeddingPoint& a, const EmbeddingPoint& b) {
    return std::sqrt(squared_distance(a, b));
}

}  // namespace tdet
