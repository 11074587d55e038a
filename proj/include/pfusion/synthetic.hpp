// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pfusion/dataset.hpp"
#include "pfusion/random.hpp"

namespace pfusion {

/// Split-blobs generator: each class is a Gaussian cluster in pixel space
/// around a smooth random template image. Difficulty is set by the noise
/// level relative to template separation.
struct BlobSpec {
    int n_classes = 10;
    int samples_per_class = 60;
    int h = 16, w = 16, c = 1;
    float noise = 0.18f;      // per-pixel Gaussian noise std
    float blob_scale = 4.0f;  // spatial smoothness of the templates
    uint64_t seed = 0;
};

namespace detail {

inline Image blob_template(const BlobSpec& spec, int cls, std::mt19937_64& rng) {
    // sum of a few random soft bumps; smooth, class-specific, values in [0,1]
    Image im;
    im.h = spec.h;
    im.w = spec.w;
    im.c = spec.c;
    im.px.assign(static_cast<size_t>(spec.h) * spec.w * spec.c, 0.0f);
    const int n_bumps = 3;
    for (int ch = 0; ch < spec.c; ++ch) {
        for (int b = 0; b < n_bumps; ++b) {
            float cy = uniform_draw<float>(rng, 2.0f, spec.h - 2.0f);
            float cx = uniform_draw<float>(rng, 2.0f, spec.w - 2.0f);
            float amp = uniform_draw<float>(rng, 0.5f, 1.0f);
            float sg = spec.blob_scale * uniform_draw<float>(rng, 0.6f, 1.4f);
            for (int y = 0; y < spec.h; ++y)
                for (int x = 0; x < spec.w; ++x) {
                    float d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                    im.at(y, x, ch) += amp * std::exp(-d2 / (2.0f * sg * sg));
                }
        }
    }
    for (auto& v : im.px) v = std::min(1.0f, v);
    (void)cls;
    return im;
}

inline Image rotate_image(const Image& src, float degrees) {
    // bilinear rotation about the center; out-of-range samples read 0
    Image out = src;
    float rad = degrees * 3.14159265358979323846f / 180.0f;
    float cs = std::cos(rad), sn = std::sin(rad);
    float cy = (src.h - 1) / 2.0f, cx = (src.w - 1) / 2.0f;
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x) {
            float dy = y - cy, dx = x - cx;
            float sy = cy + cs * dy + sn * dx;
            float sx = cx - sn * dy + cs * dx;
            for (int ch = 0; ch < src.c; ++ch) {
                int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
                float fy = sy - y0, fx = sx - x0;
                auto sample = [&](int yy, int xx) -> float {
                    if (yy < 0 || yy >= src.h || xx < 0 || xx >= src.w) return 0.0f;
                    return src.at(yy, xx, ch);
                };
                float v = (1 - fy) * ((1 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                          fy * ((1 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
                out.at(y, x, ch) = v;
            }
        }
    return out;
}

}  // namespace detail

inline Dataset make_split_blobs(const BlobSpec& spec) {
    auto rng = make_rng(spec.seed, SeedTag::DatasetGen);
    std::vector<Image> templates;
    templates.reserve(spec.n_classes);
    for (int k = 0; k < spec.n_classes; ++k) templates.push_back(detail::blob_template(spec, k, rng));

    Dataset ds;
    ds.n_classes = spec.n_classes;
    for (int k = 0; k < spec.n_classes; ++k) ds.class_names.push_back("blob_" + std::to_string(k));
    for (int k = 0; k < spec.n_classes; ++k) {
        for (int s = 0; s < spec.samples_per_class; ++s) {
            Item it;
            it.image = templates[k];
            for (auto& v : it.image.px) {
                v = std::clamp(v + normal_draw<float>(rng, 0.0f, spec.noise), 0.0f, 1.0f);
            }
            it.label = k;
            ds.items.push_back(std::move(it));
        }
    }
    ds.validate();
    return ds;
}

/// Domain-shifted variant of split-blobs for domain-incremental streams.
/// Domain d applies a rotation and a brightness shift to every image.
struct DomainBlobSpec {
    BlobSpec base;
    std::vector<float> domain_angles;       // one entry per domain
    std::vector<float> domain_brightness;   // additive shift per domain, same length
};

inline Dataset make_domain_blobs(const DomainBlobSpec& spec) {
    if (spec.domain_angles.size() != spec.domain_brightness.size())
        throw std::invalid_argument("make_domain_blobs: angle/brightness length mismatch");
    int n_domains = static_cast<int>(spec.domain_angles.size());
    auto rng = make_rng(spec.base.seed, SeedTag::DatasetGen, 1);
    std::vector<Image> templates;
    for (int k = 0; k < spec.base.n_classes; ++k)
        templates.push_back(detail::blob_template(spec.base, k, rng));

    Dataset ds;
    ds.n_classes = spec.base.n_classes;
    for (int k = 0; k < ds.n_classes; ++k) ds.class_names.push_back("blob_" + std::to_string(k));
    for (int d = 0; d < n_domains; ++d) {
        for (int k = 0; k < ds.n_classes; ++k) {
            for (int s = 0; s < spec.base.samples_per_class; ++s) {
                Item it;
                it.image = detail::rotate_image(templates[k], spec.domain_angles[d]);
                for (auto& v : it.image.px) {
                    v = std::clamp(v + spec.domain_brightness[d] +
                                       normal_draw<float>(rng, 0.0f, spec.base.noise),
                                   0.0f, 1.0f);
                }
                it.label = k;
                it.domain = d;
                ds.items.push_back(std::move(it));
            }
        }
    }
    ds.validate();
    return ds;
}

}  // namespace pfusion
