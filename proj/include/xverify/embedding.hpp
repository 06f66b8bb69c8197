#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xverify/imaging.hpp"

namespace xverify {

/// Non-degenerate feature vector produced by an embedding backend.
class FeatureVector {
public:
    /// Throws InvalidArgument for empty, non-finite, or zero-norm input.
    explicit FeatureVector(std::vector<double> values);

    std::span<const double> values() const { return values_; }
    std::size_t dimension() const { return values_.size(); }
    double norm() const;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

private:
    std::vector<double> values_;
};

/// 1 - cos(angle); in [0, 2], exactly 0 for identical vectors.
double cosine_distance(const FeatureVector& a, const FeatureVector& b);

/// A black-box image -> feature function. Implementations must be
/// deterministic; `concurrent()` tells callers whether embed may be invoked
/// from several threads at once.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual bool concurrent() const { return false; }

    virtual FeatureVector embed(const Image& img) const = 0;
    virtual std::vector<FeatureVector> embed_batch(std::span<const Image> images) const;
};

/// 14x14 grid of 8x8 block-mean luminances, mean-centered and L2-normalized.
class ReferenceEmbedder final : public EmbeddingBackend {
public:
    static constexpr int kBlock = 8;
    static constexpr int kGrid = kImageSide / kBlock;
    static constexpr std::size_t kDimension = kGrid * kGrid;

    std::string name() const override { return "reference"; }
    std::size_t dimension() const override { return kDimension; }
    bool concurrent() const override { return true; }
    FeatureVector embed(const Image& img) const override;

    /// Pre-centering block means, row-major.
    static std::vector<double> block_means(const Image& img);
};

/// Runs an external command per batch: images are written as PNGs with a
/// manifest (`index<TAB>path` per line); the command is invoked as
/// `<command> <manifest> <output>` and must write `index<TAB>floats...` lines.
class SubprocessBackend final : public EmbeddingBackend {
public:
    SubprocessBackend(std::string command, std::string name);

    std::string name() const override { return name_; }
    /// Zero until the first batch has been embedded.
    std::size_t dimension() const override { return dimension_; }

    FeatureVector embed(const Image& img) const override;
    std::vector<FeatureVector> embed_batch(std::span<const Image> images) const override;

private:
    std::string command_;
    std::string name_;
    mutable std::size_t dimension_ = 0;
};

/// Parses the output file of the subprocess protocol; `expected` lines are
/// required, one per index in [0, expected).
std::vector<FeatureVector> parse_feature_file(const std::string& text, std::size_t expected);

/// "reference" or "cmd:<command>". `model_name` overrides the external
/// backend's name (default "external").
std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec, const std::string& model_name = {});

}  // namespace xverify
