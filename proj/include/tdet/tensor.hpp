#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tdet/errors.hpp"

namespace tdet {

// Dense H x W x C array, channel-fastest. A flat vector (e.g. a feature) is
// represented as 1 x 1 x C.
struct Tensor {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int h_, int w_, int c_, double fill = 0.0)
        : h(h_), w(w_), c(c_), data(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

    static Tensor vec(std::vector<double> values) {
        Tensor t;
        t.h = 1;
        t.w = 1;
        t.c = static_cast<int>(values.size());
        t.data = std::move(values);
        return t;
    }

    std::size_t size() const { return data.size(); }

    double& at(int y, int x, int ch) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    double at(int y, int x, int ch) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    bool same_shape(const Tensor& other) const {
        return h == other.h && w == other.w && c == other.c;
    }

    std::string shape_string() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }

    bool operator==(const Tensor&) const = default;
};

inline void check_shape(const Tensor& t, int h, int w, int c, const char* what) {
    if (t.h != h || t.w != w || t.c != c) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(h) + "x" +
                         std::to_string(w) + "x" + std::to_string(c) + ", got " +
                         t.shape_string());
    }
}

}  // namespace tdet
