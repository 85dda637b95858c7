#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tdet/errors.hpp"
#include "tdet/image.hpp"
#include "tdet/manifest.hpp"
#include "tdet/rng.hpp"
#include "tdet/tensor.hpp"
#include "tdet/types.hpp"

namespace tdet {

enum class ArtifactKind { kWarpPatch, kBlurPatch, kNoisePatch };

inline std::string_view artifact_kind_name(ArtifactKind k) {
    switch (k) {
        case ArtifactKind::kWarpPatch: return "warp_patch";
        case ArtifactKind::kBlurPatch: return "blur_patch";
        case ArtifactKind::kNoisePatch: return "noise_patch";
    }
    throw SyntheticError("unknown artifact kind");
}

inline ArtifactKind artifact_kind_from_string(std::string_view s) {
    if (s == "warp_patch" || s == "WARP_PATCH") return ArtifactKind::kWarpPatch;
    if (s == "blur_patch" || s == "BLUR_PATCH") return ArtifactKind::kBlurPatch;
    if (s == "noise_patch" || s == "NOISE_PATCH") return ArtifactKind::kNoisePatch;
    throw SyntheticError("unknown artifact kind \"" + std::string(s) +
                         "\" (expected warp_patch, blur_patch, or noise_patch)");
}

struct SyntheticSpec {
    int n_real = 0;
    int n_fake = 0;
    int image_size = 64;
    ArtifactKind artifact_kind = ArtifactKind::kWarpPatch;
    double artifact_strength = 0.5;
    std::uint64_t seed = 0;
};

inline void validate_synthetic_spec(const SyntheticSpec& spec) {
    if (spec.n_real < 0 || spec.n_fake < 0) {
        throw SyntheticError("sample counts must be non-negative");
    }
    if (spec.n_real + spec.n_fake == 0) throw SyntheticError("empty dataset");
    if (!(spec.artifact_strength > 0.0) || spec.artifact_strength > 1.0) {
        throw SyntheticError("artifact strength must lie in (0,1]");
    }
    if (spec.image_size < 8) throw SyntheticError("image size must be at least 8 pixels");
}

namespace detail {

inline double sample_bilinear(const Tensor& t, double fy, double fx, int ch) {
    fy = std::clamp(fy, 0.0, static_cast<double>(t.h - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(t.w - 1));
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, t.h - 1);
    const int x1 = std::min(x0 + 1, t.w - 1);
    const double wy = fy - y0;
    const double wx = fx - x0;
    const double top = t.at(y0, x0, ch) * (1.0 - wx) + t.at(y0, x1, ch) * wx;
    const double bot = t.at(y1, x0, ch) * (1.0 - wx) + t.at(y1, x1, ch) * wx;
    return top * (1.0 - wy) + bot * wy;
}

// Smooth seeded texture: mid-grey plus a handful of oriented gratings, a
// per-channel tint, and a brighter face-like ellipse.
inline Tensor synthetic_base(Rng& rng, int size) {
    Tensor t(size, size, 3, 0.5);
    struct Grating {
        double amp, kx, ky, phase;
    };
    // Three fine gratings (the artifacts feed on high frequencies) and three
    // coarse ones for large-scale variety. The amplitude/wavelength/orientation
    // structure is shared by every image; only phases, a small tint, and the
    // ellipse centre vary per image. Shifted copies of one texture family keep
    // the images' local statistics near-identical, so a patch artifact is the
    // dominant difference between any two of them.
    static constexpr double kPi = 3.14159265358979323846;
    static constexpr struct {
        double amp, wavelength, theta_deg;
    } kGratingSpec[6] = {
        {0.10, 3.1, 10.0},  {0.10, 3.55, 70.0}, {0.10, 4.15, 130.0},
        {0.05, 9.5, 40.0},  {0.05, 12.7, 100.0}, {0.05, 16.3, 160.0},
    };
    Grating gratings[6];
    for (int g = 0; g < 6; ++g) {
        const double k = 2.0 * kPi / kGratingSpec[g].wavelength;
        const double theta = kGratingSpec[g].theta_deg * kPi / 180.0;
        gratings[g] = {kGratingSpec[g].amp, k * std::cos(theta), k * std::sin(theta),
                       rng.uniform(0.0, 2.0 * kPi)};
    }
    double tint[3];
    for (double& c : tint) c = rng.uniform(-0.005, 0.005);

    const double cx = size / 2.0 + rng.uniform(-0.03, 0.03) * size;
    const double cy = size / 2.0 + rng.uniform(-0.03, 0.03) * size;
    const double rx = 0.16 * size;
    const double ry = 0.21 * size;
    const double boost = 0.10;

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const Grating& g : gratings) {
                v += g.amp * std::sin(g.kx * x + g.ky * y + g.phase);
            }
            const double ex = (x - cx) / rx;
            const double ey = (y - cy) / ry;
            const double face = ex * ex + ey * ey <= 1.0 ? boost : 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                t.at(y, x, ch) = std::clamp(0.5 + v + tint[ch] + face, 0.0, 1.0);
            }
        }
    }
    return t;
}

struct PatchRect {
    int x0, y0, side;
};

inline PatchRect sample_patch(Rng& rng, int size) {
    const int side = std::max(
        4, static_cast<int>(std::llround(rng.uniform(0.62, 0.75) * size)));
    const int x0 = static_cast<int>(rng.uniform_int(0, size - side));
    const int y0 = static_cast<int>(rng.uniform_int(0, size - side));
    return {x0, y0, side};
}

// Resamples the patch through an oscillating displacement field. Each output
// pixel averages a small grid of taps around its warped source position —
// the anti-aliased interpolation any real warping pipeline applies — so the
// patch loses fine texture detail on top of being geometrically distorted.
inline void apply_warp_patch(Tensor& img, Rng& rng, double strength) {
    const PatchRect p = sample_patch(rng, img.h);
    const double amp = strength * 8.0;
    const double lambda1 = rng.uniform(2.0, 4.0);
    const double lambda2 = rng.uniform(2.0, 4.0);
    const double phi1 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double phi2 = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double tap = strength * 4.0;
    const Tensor src = img;
    for (int y = p.y0; y < p.y0 + p.side; ++y) {
        for (int x = p.x0; x < p.x0 + p.side; ++x) {
            const double dx =
                amp * std::sin(2.0 * 3.14159265358979323846 * (y - p.y0) / lambda1 + phi1);
            const double dy =
                amp * std::cos(2.0 * 3.14159265358979323846 * (x - p.x0) / lambda2 + phi2);
            for (int ch = 0; ch < 3; ++ch) {
                double sum = 0.0;
                for (int ty = -1; ty <= 1; ++ty) {
                    for (int tx = -1; tx <= 1; ++tx) {
                        sum += sample_bilinear(src, y + dy + ty * tap, x + dx + tx * tap, ch);
                    }
                }
                img.at(y, x, ch) = sum / 9.0;
            }
        }
    }
}

inline void apply_blur_patch(Tensor& img, Rng& rng, double strength) {
    const PatchRect p = sample_patch(rng, img.h);
    const int radius = 1 + static_cast<int>(std::llround(strength * 3.0));
    for (int pass = 0; pass < 2; ++pass) {
        const Tensor src = img;
        for (int y = p.y0; y < p.y0 + p.side; ++y) {
            for (int x = p.x0; x < p.x0 + p.side; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    double sum = 0.0;
                    int count = 0;
                    for (int yy = y - radius; yy <= y + radius; ++yy) {
                        for (int xx = x - radius; xx <= x + radius; ++xx) {
                            const int cy = std::clamp(yy, 0, img.h - 1);
                            const int cx = std::clamp(xx, 0, img.w - 1);
                            sum += src.at(cy, cx, ch);
                            ++count;
                        }
                    }
                    img.at(y, x, ch) = sum / count;
                }
            }
        }
    }
}

inline void apply_noise_patch(Tensor& img, Rng& rng, double strength) {
    const PatchRect p = sample_patch(rng, img.h);
    const double amp = 0.7 * strength;
    for (int y = p.y0; y < p.y0 + p.side; ++y) {
        for (int x = p.x0; x < p.x0 + p.side; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                img.at(y, x, ch) =
                    std::clamp(img.at(y, x, ch) + rng.uniform(-amp, amp), 0.0, 1.0);
            }
        }
    }
}

inline void apply_artifact(Tensor& img, Rng& rng, ArtifactKind kind, double strength) {
    switch (kind) {
        case ArtifactKind::kWarpPatch: apply_warp_patch(img, rng, strength); return;
        case ArtifactKind::kBlurPatch: apply_blur_patch(img, rng, strength); return;
        case ArtifactKind::kNoisePatch: apply_noise_patch(img, rng, strength); return;
    }
    throw SyntheticError("unknown artifact kind");
}

inline std::string zero_pad4(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", v);
    return buf;
}

}  // namespace detail

inline std::string dataset_name_from_dir(const std::filesystem::path& out_dir) {
    std::filesystem::path p = out_dir;
    if (p.filename().empty()) p = p.parent_path();  // tolerate a trailing slash
    const std::string name = p.filename().string();
    return name.empty() ? "synth" : name;
}

// Renders one deterministic synthetic image. Exposed so tests can compare a
// written dataset against independently regenerated pixels.
inline Tensor synthetic_image(const SyntheticSpec& spec, const std::string& id, Label label) {
    Rng rng(derive_seed(spec.seed, "synth/" + id));
    Tensor img = detail::synthetic_base(rng, spec.image_size);
    if (label == Label::kFake) {
        detail::apply_artifact(img, rng, spec.artifact_kind, spec.artifact_strength);
    }
    return img;
}

// Writes n_real + n_fake PNGs plus manifest.csv into out_dir. The first 80%
// of each class (by generation index) lands in TRAIN, the rest in TEST.
inline Manifest generate_synthetic(const SyntheticSpec& spec,
                                   const std::filesystem::path& out_dir) {
    validate_synthetic_spec(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw FileError("cannot create output directory \"" + out_dir.string() +
                        "\": " + ec.message());
    }

    Manifest m;
    m.dataset_name = dataset_name_from_dir(out_dir);
    m.base_dir = out_dir;

    const auto emit_class = [&](int count, Label label, const char* tag) {
        const int n_train = count * 4 / 5;
        for (int i = 0; i < count; ++i) {
            Sample s;
            s.id = m.dataset_name + "_" + tag + detail::zero_pad4(i);
            s.image_path = s.id + ".png";
            s.label = label;
            s.dataset = m.dataset_name;
            s.split = i < n_train ? Split::kTrain : Split::kTest;
            s.method = label == Label::kFake ? std::string(artifact_kind_name(spec.artifact_kind))
                                             : std::string();
            save_png(synthetic_image(spec, s.id, label), out_dir / s.image_path);
            m.samples.push_back(std::move(s));
        }
    };
    emit_class(spec.n_real, Label::kReal, "r");
    emit_class(spec.n_fake, Label::kFake, "f");

    save_manifest(m, out_dir / "manifest.csv");
    return m;
}

}  // namespace tdet
