#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tdet/backbone.hpp"
#include "tdet/classifier.hpp"
#include "tdet/config.hpp"
#include "tdet/errors.hpp"
#include "tdet/manifest.hpp"
#include "tdet/rng.hpp"
#include "tdet/tensor.hpp"
#include "tdet/triplet.hpp"
#include "tdet/types.hpp"

namespace tdet {

// Supplies the decoded crop for a sample. Tests inject synthetic tensors;
// the pipeline wires this to image decoding.
using ImageLoader = std::function<Tensor(const Sample&)>;

struct Stage1Result {
    std::vector<double> epoch_loss;  // mean triplet loss per epoch
};

// Stage 1: metric training of the embedding backbone on freshly sampled
// triplets. Every epoch runs ceil(n_train / stage1_batch) batches of
// stage1_batch triplets; gradients are averaged over the batch and applied
// with plain SGD (no momentum).
inline Stage1Result train_embedding(const Manifest& manifest, Backbone& backbone,
                                    const RunConfig& config, const ImageLoader& loader) {
    Stage1Result result;
    if (config.stage1_epochs == 0) return result;

    std::size_t n_train = 0;
    for (const Sample& s : manifest.samples) {
        if (s.split == Split::kTrain) ++n_train;
    }
    if (n_train == 0) {
        throw SamplingError("manifest \"" + manifest.dataset_name +
                            "\" has no TRAIN samples to draw triplets from");
    }
    const std::size_t batch = static_cast<std::size_t>(config.stage1_batch);
    const std::size_t batches_per_epoch = (n_train + batch - 1) / batch;

    Rng triplet_rng(derive_seed(config.seed, "stage1/triplets"));
    Rng dropout_rng(derive_seed(config.seed, "stage1/dropout"));
    Sgd opt(config.stage1_lr, 0.0);

    std::vector<LayerTrace> traces_a;
    std::vector<LayerTrace> traces_p;
    std::vector<LayerTrace> traces_n;
    for (int epoch = 0; epoch < config.stage1_epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::vector<Triplet> triplets =
                sample_triplets_with(triplet_rng, manifest, config.stage1_batch);
            auto grads = backbone.net.zero_grads();
            for (const Triplet& t : triplets) {
                const Tensor xa = loader(t.anchor);
                const Tensor xp = loader(t.positive);
                const Tensor xn = loader(t.negative);
                check_image_shape(backbone, xa);
                check_image_shape(backbone, xp);
                check_image_shape(backbone, xn);

                const EmbeddingPoint ea = embedding_from_tensor(
                    backbone.net.forward(xa, RunMode::kTrain, &dropout_rng, &traces_a));
                const EmbeddingPoint ep = embedding_from_tensor(
                    backbone.net.forward(xp, RunMode::kTrain, &dropout_rng, &traces_p));
                const EmbeddingPoint en = embedding_from_tensor(
                    backbone.net.forward(xn, RunMode::kTrain, &dropout_rng, &traces_n));

                const TripletGrad g = triplet_loss_gradient(ea, ep, en, config);
                loss_sum += g.loss;
                ++loss_count;
                backbone.net.backward(traces_a, Tensor::vec(g.anchor), grads);
                backbone.net.backward(traces_p, Tensor::vec(g.positive), grads);
                backbone.net.backward(traces_n, Tensor::vec(g.negative), grads);
            }
            const double inv = 1.0 / static_cast<double>(triplets.size());
            for (auto& layer_grads : grads) {
                for (double& g : layer_grads) g *= inv;
            }
            opt.step(backbone.net, grads);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(loss_count));
    }
    return result;
}

// Baseline: the same backbone topology trained directly with a binary
// cross-entropy head (no metric stage). The backbone must have been built
// with the binary-logits head. Same batch schedule as train_embedding;
// each batch draws stage1_batch samples uniformly from the TRAIN split.
inline Stage1Result train_backbone_only(const Manifest& manifest, Backbone& backbone,
                                        const RunConfig& config, const ImageLoader& loader) {
    if (backbone.head != kHeadBinaryLogits) {
        throw ConfigInvariantError("train_backbone_only needs a binary_logits backbone head");
    }
    Stage1Result result;
    if (config.stage1_epochs == 0) return result;

    std::vector<const Sample*> train;
    std::size_t n_by_label[2] = {0, 0};
    for (const Sample& s : manifest.samples) {
        if (s.split == Split::kTrain) {
            train.push_back(&s);
            ++n_by_label[label_to_int(s.label)];
        }
    }
    if (n_by_label[0] == 0 || n_by_label[1] == 0) {
        throw SingleClassError("baseline training needs both classes in the TRAIN split, got " +
                               std::to_string(n_by_label[0]) + " real / " +
                               std::to_string(n_by_label[1]) + " fake");
    }
    const std::size_t batch = static_cast<std::size_t>(config.stage1_batch);
    const std::size_t batches_per_epoch = (train.size() + batch - 1) / batch;

    Rng sample_rng(derive_seed(config.seed, "stage1/samples"));
    Rng dropout_rng(derive_seed(config.seed, "stage1/dropout"));
    Sgd opt(config.stage1_lr, 0.0);

    std::vector<LayerTrace> traces;
    for (int epoch = 0; epoch < config.stage1_epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            auto grads = backbone.net.zero_grads();
            for (std::size_t i = 0; i < batch; ++i) {
                const Sample& s = *train[static_cast<std::size_t>(
                    sample_rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1))];
                const Tensor x = loader(s);
                check_image_shape(backbone, x);
                const Tensor out =
                    backbone.net.forward(x, RunMode::kTrain, &dropout_rng, &traces);
                const std::array<double, 2> logits = {out.data[0], out.data[1]};
                loss_sum += cross_entropy(logits, s.label);
                ++loss_count;
                const std::array<double, 2> g = cross_entropy_grad(logits, s.label);
                backbone.net.backward(traces, Tensor::vec({g[0], g[1]}), grads);
            }
            const double inv = 1.0 / static_cast<double>(batch);
            for (auto& layer_grads : grads) {
                for (double& g : layer_grads) g *= inv;
            }
            opt.step(backbone.net, grads);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(loss_count));
    }
    return result;
}

// Runs the frozen backbone over one split and collects labelled features.
inline std::vector<FeatureRow> extract_features(const Manifest& manifest, const Backbone& backbone,
                                                Split split, const ImageLoader& loader) {
    std::vector<FeatureRow> rows;
    for (const Sample& s : manifest.samples) {
        if (s.split != split) continue;
        FeatureRow r;
        r.id = s.id;
        r.point = embed(backbone, loader(s));
        r.label = s.label;
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace tdet
