#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tdet/backbone.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/manifest.hpp"
#include "tdet/rng.hpp"
#include "tdet/types.hpp"

namespace tdet {

// The two distances of the triplet forward pass, in network output order:
// first the anchor-negative distance, then the anchor-positive one.
struct TripletDistances {
    double d_neg = 0.0;
    double d_pos = 0.0;

    bool operator==(const TripletDistances&) const = default;
};

inline TripletDistances triplet_distances(const EmbeddingPoint& anchor,
                                          const EmbeddingPoint& negative,
                                          const EmbeddingPoint& positive) {
    return {euclidean_distance(anchor, negative), euclidean_distance(anchor, positive)};
}

inline TripletDistances triplet_forward(const Backbone& b, const Tensor& anchor,
                                        const Tensor& negative, const Tensor& positive) {
    return triplet_distances(embed(b, anchor), embed(b, negative), embed(b, positive));
}

// (exp(d_pos) / (exp(d_pos) + exp(d_neg)))^2, evaluated with max-subtraction
// so large distances cannot overflow.
inline double loss_softmax_ratio(const TripletDistances& d) {
    const double m = d.d_pos > d.d_neg ? d.d_pos : d.d_neg;
    const double ep = std::exp(d.d_pos - m);
    const double en = std::exp(d.d_neg - m);
    const double s = ep / (ep + en);
    return s * s;
}

inline double loss_margin(const TripletDistances& d, double margin) {
    const double v = d.d_pos - d.d_neg + margin;
    return v > 0.0 ? v : 0.0;
}

inline double triplet_loss(const TripletDistances& d, const RunConfig& config) {
    return config.loss_kind == LossKind::kSoftmaxRatio ? loss_softmax_ratio(d)
                                                       : loss_margin(d, config.margin);
}

// Partial derivatives of the loss in distance space.
struct LossPartials {
    double dl_dpos = 0.0;
    double dl_dneg = 0.0;
};

inline LossPartials loss_partials(const TripletDistances& d, const RunConfig& config) {
    if (config.loss_kind == LossKind::kSoftmaxRatio) {
        const double m = d.d_pos > d.d_neg ? d.d_pos : d.d_neg;
        const double ep = std::exp(d.d_pos - m);
        const double en = std::exp(d.d_neg - m);
        const double s = ep / (ep + en);
        const double g = 2.0 * s * s * (1.0 - s);
        return {g, -g};
    }
    // Hinge: zero outside the active region and, by documented convention,
    // exactly at the kink.
    const double v = d.d_pos - d.d_neg + config.margin;
    if (v > 0.0) return {1.0, -1.0};
    return {0.0, 0.0};
}

// Gradient of the triplet loss with respect to the three embedding points.
// At coincident points the distance direction is undefined; the documented
// subgradient uses the zero direction there.
struct TripletGrad {
    std::vector<double> anchor;
    std::vector<double> positive;
    std::vector<double> negative;
    TripletDistances distances;
    double loss = 0.0;
};

inline TripletGrad triplet_loss_gradient(const EmbeddingPoint& anchor,
                                         const EmbeddingPoint& positive,
                                         const EmbeddingPoint& negative,
                                         const RunConfig& config) {
    const std::size_t e = anchor.dim();
    if (positive.dim() != e || negative.dim() != e) {
        throw ShapeError("triplet points disagree in dimension: " + std::to_string(e) + "/" +
                         std::to_string(positive.dim()) + "/" +
                         std::to_string(negative.dim()));
    }
    TripletGrad out;
    out.distances = triplet_distances(anchor, negative, positive);
    out.loss = triplet_loss(out.distances, config);
    out.anchor.assign(e, 0.0);
    out.positive.assign(e, 0.0);
    out.negative.assign(e, 0.0);

    const LossPartials partials = loss_partials(out.distances, config);
    if (out.distances.d_pos > 0.0 && partials.dl_dpos != 0.0) {
        const double scale = partials.dl_dpos / out.distances.d_pos;
        for (std::size_t i = 0; i < e; ++i) {
            const double diff = anchor[i] - positive[i];
            out.anchor[i] += scale * diff;
            out.positive[i] -= scale * diff;
        }
    }
    if (out.distances.d_neg > 0.0 && partials.dl_dneg != 0.0) {
        const double scale = partials.dl_dneg / out.distances.d_neg;
        for (std::size_t i = 0; i < e; ++i) {
            const double diff = anchor[i] - negative[i];
            out.anchor[i] += scale * diff;
            out.negative[i] -= scale * diff;
        }
    }
    return out;
}

// ---- triplet sampling ----

struct Triplet {
    Sample anchor;
    Sample positive;
    Sample negative;
};

namespace detail {

struct ClassPools {
    std::vector<std::size_t> by_label[2];
};

inline ClassPools train_pools(const Manifest& m) {
    ClassPools pools;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        if (m.samples[i].split == Split::kTrain) {
            pools.by_label[label_to_int(m.samples[i].label)].push_back(i);
        }
    }
    return pools;
}

}  // namespace detail

// Draws `count` triplets from the TRAIN split: the anchor uniform over all
// train samples, the positive uniform over the anchor's class excluding the
// anchor itself, the negative uniform over the other class. Each class must
// hold at least two samples so a distinct positive always exists.
inline std::vector<Triplet> sample_triplets_with(Rng& rng, const Manifest& m, int count) {
    std::vector<Triplet> out;
    if (count <= 0) return out;

    const detail::ClassPools pools = detail::train_pools(m);
    for (int cls = 0; cls < 2; ++cls) {
        if (pools.by_label[cls].size() < 2) {
            throw SamplingError("triplet sampling needs >= 2 train samples per class, got " +
                                std::to_string(pools.by_label[cls].size()) + " " +
                                label_name(label_from_int(cls)));
        }
    }

    const std::size_t n_total = pools.by_label[0].size() + pools.by_label[1].size();
    out.reserve(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) {
        const std::size_t flat =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n_total) - 1));
        const int cls = flat < pools.by_label[0].size() ? 0 : 1;
        const std::vector<std::size_t>& own = pools.by_label[cls];
        const std::vector<std::size_t>& other = pools.by_label[1 - cls];
        const std::size_t anchor_pos = cls == 0 ? flat : flat - pools.by_label[0].size();

        std::size_t pos_pos =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(own.size()) - 2));
        if (pos_pos >= anchor_pos) ++pos_pos;
        const std::size_t neg_pos =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(other.size()) - 1));

        out.push_back({m.samples[own[anchor_pos]], m.samples[own[pos_pos]],
                       m.samples[other[neg_pos]]});
    }
    return out;
}

inline std::vector<Triplet> sample_triplets(const Manifest& m, int count, std::uint64_t seed) {
    Rng rng(seed);
    return sample_triplets_with(rng, m, count);
}

}  // namespace tdet
