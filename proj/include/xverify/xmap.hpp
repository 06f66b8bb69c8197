#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xverify/embedding.hpp"
#include "xverify/imaging.hpp"
#include "xverify/occlusion.hpp"

namespace xverify {

/// Distance selection scheme.
///  I   - each occlusion of one image against every occlusion of the other, averaged
///  II  - each occlusion of one image against the other, unoccluded image
///  III - co-located occlusions in both images
enum class Method { I, II, III };

const char* to_string(Method m);
Method parse_method(const std::string& s);
std::vector<Method> parse_methods(const std::string& csv);

struct DistanceSets {
    std::vector<double> first;
    std::vector<double> second;
};

/// `whole1` / `whole2` are the unoccluded features (used by Method::II only).
DistanceSets select_distances(std::span<const FeatureVector> features1, std::span<const FeatureVector> features2,
                              const FeatureVector& whole1, const FeatureVector& whole2, Method method);

/// S = sum_i (d_i - d_orig) * M_i / N. Positive where occluding increased
/// the distance, i.e. the region made the pair look alike.
ScalarMap similarity_map(std::span<const double> distances, std::span<const PatchMask> masks, double d_orig);

/// Patch-area weighted merge: sum_i S_i / (p_i^2 * |p|).
ScalarMap merge_scales(std::span<const ScalarMap> maps, std::span<const int> sizes);

/// Gaussian blur (s x s kernel, sigma = s) followed by signed normalization.
ScalarMap postprocess(const ScalarMap& map, int stride);

/// Keeps the image's HLS luminance and takes hue (HLS) and saturation (HSV)
/// from the map rendered through the diverging colormap.
Image blend(const Image& img, const ScalarMap& map);

struct PairExplainContext {
    Image img1;
    Image img2;
    const EmbeddingBackend* backend = nullptr;
    FeatureVector whole1;
    FeatureVector whole2;
    double d_orig = 0.0;
    std::vector<PatchSpec> specs;
};

/// Embeds both unoccluded images once and caches their distance.
PairExplainContext make_context(const Image& img1, const Image& img2, const EmbeddingBackend& backend,
                                std::vector<PatchSpec> specs = default_patch_specs());

struct XMapResult {
    Method method = Method::III;
    double d_orig = 0.0;
    /// Merged maps before blur and normalization.
    std::array<ScalarMap, 2> merged;
    /// Merged, blurred, normalized maps in [-1, 1].
    std::array<ScalarMap, 2> maps;
    std::array<Image, 2> blended;
    /// Raw per-PatchSpec maps, in context spec order.
    std::array<std::vector<ScalarMap>, 2> per_scale;
};

/// Stride used for post-processing a multi-spec merge: the largest stride.
int postprocess_stride(std::span<const PatchSpec> specs);

XMapResult explain_pair(const PairExplainContext& ctx, Method method);

/// Same as calling explain_pair per method, sharing the occlusion sweeps and
/// embeddings across methods.
std::vector<XMapResult> explain_pair(const PairExplainContext& ctx, std::span<const Method> methods);

/// Embeds a list of images, fanning out when the backend is concurrent.
/// Failures are rethrown with `what` and the offending index in the message.
std::vector<FeatureVector> embed_all(const EmbeddingBackend& backend, std::span<const Image> images,
                                     const std::string& what);

}  // namespace xverify
