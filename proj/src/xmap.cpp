#include "xverify/xmap.hpp"

#include <algorithm>
#include <optional>
#include <sstream>

#include "parallel.hpp"
#include "xverify/error.hpp"

namespace xverify {

const char* to_string(Method m) {
    switch (m) {
        case Method::I: return "I";
        case Method::II: return "II";
        case Method::III: return "III";
    }
    return "III";
}

Method parse_method(const std::string& s) {
    if (s == "I" || s == "1") return Method::I;
    if (s == "II" || s == "2") return Method::II;
    if (s == "III" || s == "3") return Method::III;
    fail(ErrorKind::InvalidParameter, "unknown method '" + s + "' (expected I, II or III)");
}

std::vector<Method> parse_methods(const std::string& csv) {
    std::vector<Method> out;
    std::stringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        const auto m = parse_method(tok);
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) fail(ErrorKind::InvalidParameter, "no methods given");
    return out;
}

DistanceSets select_distances(std::span<const FeatureVector> features1, std::span<const FeatureVector> features2,
                              const FeatureVector& whole1, const FeatureVector& whole2, Method method) {
    const std::size_t n = features1.size();
    if (n == 0 || features2.size() != n)
        fail(ErrorKind::InvalidArgument, "feature lists must be non-empty and of equal length (" +
                                             std::to_string(n) + " vs " + std::to_string(features2.size()) + ")");
    DistanceSets out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    switch (method) {
        case Method::I: {
            std::vector<double> matrix(n * n);
            detail::parallel_for(n, [&](std::size_t i) {
                for (std::size_t j = 0; j < n; ++j) matrix[i * n + j] = cosine_distance(features1[i], features2[j]);
            });
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    out.first[i] += matrix[i * n + j];
                    out.second[j] += matrix[i * n + j];
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                out.first[i] /= static_cast<double>(n);
                out.second[i] /= static_cast<double>(n);
            }
            break;
        }
        case Method::II:
            for (std::size_t i = 0; i < n; ++i) {
                out.first[i] = cosine_distance(features1[i], whole2);
                out.second[i] = cosine_distance(whole1, features2[i]);
            }
            break;
        case Method::III:
            for (std::size_t i = 0; i < n; ++i) out.first[i] = cosine_distance(features1[i], features2[i]);
            out.second = out.first;
            break;
    }
    return out;
}

ScalarMap similarity_map(std::span<const double> distances, std::span<const PatchMask> masks, double d_orig) {
    if (distances.empty() || distances.size() != masks.size())
        fail(ErrorKind::InvalidArgument, "need one distance per mask (" + std::to_string(distances.size()) + " vs " +
                                             std::to_string(masks.size()) + ")");
    const double n = static_cast<double>(distances.size());
    ScalarMap s;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const double w = (distances[i] - d_orig) / n;
        const auto& m = masks[i];
        for (int dy = 0; dy < m.height; ++dy)
            for (int dx = 0; dx < m.width; ++dx) s.at(m.x0 + dx, m.y0 + dy) += w * m.local(dx, dy);
    }
    return s;
}

ScalarMap merge_scales(std::span<const ScalarMap> maps, std::span<const int> sizes) {
    if (maps.empty() || maps.size() != sizes.size())
        fail(ErrorKind::InvalidArgument, "need one patch size per map");
    const double count = static_cast<double>(maps.size());
    ScalarMap out;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const double w = 1.0 / (static_cast<double>(sizes[i]) * sizes[i] * count);
        const auto src = maps[i].values();
        auto dst = out.values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * w;
    }
    return out;
}

ScalarMap postprocess(const ScalarMap& map, int stride) {
    return normalize_signed(gaussian_blur(map, stride, static_cast<double>(stride)));
}

Image blend(const Image& img, const ScalarMap& map) {
    Image out;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            const Rgb tint = colormap_value(map.at(x, y));
            const Hls base = rgb_to_hls(img.at(x, y));
            out.set(x, y, hls_to_rgb8({rgb_to_hls(tint).h, base.l, rgb_to_hsv(tint).s}));
        }
    }
    return out;
}

PairExplainContext make_context(const Image& img1, const Image& img2, const EmbeddingBackend& backend,
                                std::vector<PatchSpec> specs) {
    if (specs.empty()) fail(ErrorKind::InvalidParameter, "at least one patch spec is required");
    for (const auto& s : specs) s.validate();
    auto whole1 = backend.embed(img1);
    auto whole2 = backend.embed(img2);
    const double d = cosine_distance(whole1, whole2);
    return PairExplainContext{img1, img2, &backend, std::move(whole1), std::move(whole2), d, std::move(specs)};
}

int postprocess_stride(std::span<const PatchSpec> specs) {
    int s = 1;
    for (const auto& spec : specs) s = std::max(s, spec.stride);
    return s;
}

std::vector<FeatureVector> embed_all(const EmbeddingBackend& backend, std::span<const Image> images,
                                     const std::string& what) {
    if (!backend.concurrent()) {
        try {
            return backend.embed_batch(images);
        } catch (const Error& e) {
            fail(e.kind(), what + ": " + e.what());
        }
    }
    std::vector<std::optional<FeatureVector>> slots(images.size());
    detail::parallel_for(images.size(), [&](std::size_t i) {
        try {
            slots[i].emplace(backend.embed(images[i]));
        } catch (const Error& e) {
            fail(e.kind(), what + ", occlusion index " + std::to_string(i) + ": " + e.what());
        }
    });
    std::vector<FeatureVector> out;
    out.reserve(images.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::vector<XMapResult> explain_pair(const PairExplainContext& ctx, std::span<const Method> methods) {
    if (ctx.backend == nullptr) fail(ErrorKind::InvalidArgument, "explain context has no backend");
    if (ctx.specs.empty()) fail(ErrorKind::InvalidParameter, "at least one patch spec is required");

    std::vector<XMapResult> results(methods.size());
    for (std::size_t k = 0; k < methods.size(); ++k) {
        results[k].method = methods[k];
        results[k].d_orig = ctx.d_orig;
    }

    std::vector<int> sizes;
    for (const auto& spec : ctx.specs) {
        sizes.push_back(spec.size);
        auto sweep1 = occlude_sweep(ctx.img1, spec);
        auto sweep2 = occlude_sweep(ctx.img2, spec);
        const std::string tag = "patch size " + std::to_string(spec.size);
        const auto f1 = embed_all(*ctx.backend, sweep1.occluded, tag + ", image 1");
        const auto f2 = embed_all(*ctx.backend, sweep2.occluded, tag + ", image 2");
        sweep1.occluded.clear();
        sweep2.occluded.clear();

        for (std::size_t k = 0; k < methods.size(); ++k) {
            const auto d = select_distances(f1, f2, ctx.whole1, ctx.whole2, methods[k]);
            results[k].per_scale[0].push_back(similarity_map(d.first, sweep1.masks, ctx.d_orig));
            results[k].per_scale[1].push_back(similarity_map(d.second, sweep2.masks, ctx.d_orig));
        }
    }

    const int stride = postprocess_stride(ctx.specs);
    const std::array<const Image*, 2> sources{&ctx.img1, &ctx.img2};
    for (auto& r : results) {
        for (std::size_t side = 0; side < 2; ++side) {
            r.merged[side] = merge_scales(r.per_scale[side], sizes);
            r.maps[side] = postprocess(r.merged[side], stride);
            r.blended[side] = blend(*sources[side], r.maps[side]);
        }
    }
    return results;
}

XMapResult explain_pair(const PairExplainContext& ctx, Method method) {
    auto r = explain_pair(ctx, std::span<const Method>(&method, 1));
    return std::move(r.front());
}

}  // namespace xverify
