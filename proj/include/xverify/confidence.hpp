/**
 * @file confidence.hpp
 * @brief Calibrated confidence for verification decisions.
 *
 * Per fold, a threshold is picked by maximizing accuracy on the other folds,
 * a 400-bin histogram of the training distances gives the genuine fraction
 * per bin, and a logistic curve
 *
 *     c(d) = L / (1 + exp(-k (d - d0))) + b
 *
 * is fitted to it with a bounded trust-region least-squares solver. The score
 * is C = clip(c(d)) for d <= t and 1 - clip(c(d)) otherwise.
 */
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace xverify {

enum class Label { Genuine, Imposter, Unknown };

const char* to_string(Label l);
Label parse_label(const std::string& s);

inline constexpr int kFoldCount = 10;

struct DistanceSample {
    double distance = 0.0;
    Label label = Label::Genuine;
    int fold = 0;
    std::string pair_id;
};

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

struct ThresholdChoice {
    double threshold = 0.0;
    double accuracy = 0.0;  // on the samples the threshold was chosen from
};

/// Candidate thresholds for a sample set: midpoints between consecutive
/// sorted unique distances plus one sentinel below the minimum and one above
/// the maximum (offset kSentinelOffset).
inline constexpr double kSentinelOffset = 1e-6;
std::vector<double> threshold_candidates(std::span<const DistanceSample> samples);

/// Accuracy-maximizing threshold (genuine iff d <= t), smallest candidate on
/// ties. Throws DegenerateSplit unless both labels are present.
ThresholdChoice best_threshold(std::span<const DistanceSample> samples);

/// One threshold per fold, chosen on the other nine folds.
std::array<ThresholdChoice, kFoldCount> compute_thresholds_cv(std::span<const DistanceSample> samples);

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

inline constexpr int kHistogramBins = 400;
inline constexpr double kHistogramMax = 2.0;
inline constexpr double kBinWidth = kHistogramMax / kHistogramBins;

struct RatioHistogram {
    std::array<double, kHistogramBins + 1> edges{};
    std::array<int, kHistogramBins> genuine{};
    std::array<int, kHistogramBins> imposter{};
    /// Genuine fraction; empty for bins without samples.
    std::array<std::optional<double>, kHistogramBins> ratio{};

    double center(int bin) const { return (edges[bin] + edges[bin + 1]) / 2.0; }
    int non_empty_bins() const;
};

int histogram_bin(double distance);

/// Unknown-labeled samples are ignored.
RatioHistogram ratio_histogram(std::span<const DistanceSample> samples);

// ---------------------------------------------------------------------------
// Sigmoid fit
// ---------------------------------------------------------------------------

struct SigmoidParams {
    double L = 1.0;
    double d0 = 0.5;
    double k = -50.0;
    double b = 0.0;

    double operator()(double d) const;
};

struct SigmoidBounds {
    SigmoidParams lower{0.0, 0.0, -500.0, -1.0};
    SigmoidParams upper{2.0, 2.0, 500.0, 1.0};
};

struct FitOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;
    double cost_tolerance = 1e-12;
    double gradient_tolerance = 1e-14;
    SigmoidBounds bounds;
};

struct SigmoidFit {
    SigmoidParams params;
    /// Sum of squared residuals at `params`.
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Bounded least squares over arbitrary (x, y) points starting at `initial`.
/// Throws InsufficientData for fewer than 4 points.
SigmoidFit fit_sigmoid_points(std::span<const double> x, std::span<const double> y, const SigmoidParams& initial,
                              const FitOptions& options = {});

/// Fits to (bin center, ratio) of the non-empty bins, starting at
/// L = 1, d0 = threshold, k = -50, b = 0.
SigmoidFit fit_sigmoid(const RatioHistogram& hist, double threshold, const FitOptions& options = {});

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct Confidence {
    double c_score = 0.0;
    Label prediction = Label::Genuine;
};

Confidence c_score(double distance, double threshold, const SigmoidParams& params);

struct FoldModel {
    double threshold = 0.0;
    SigmoidParams params;
    double fit_residual = 0.0;
};

/// Fold-wise models (fold_models[f] fitted on all folds but f) and a global
/// model fitted on every labeled sample, used for unlabeled field data.
struct ConfidenceModel {
    std::vector<FoldModel> folds;
    std::optional<FoldModel> global;

    /// Fold model for `fold` when available, otherwise the global model.
    const FoldModel& for_fold(std::optional<int> fold) const;
    Confidence score(double distance, std::optional<int> fold = std::nullopt) const;

    std::string serialize() const;
    static ConfidenceModel parse(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static ConfidenceModel load(const std::filesystem::path& path);
};

/// Cross-validated fold models plus the global model.
ConfidenceModel fit_confidence_model(std::span<const DistanceSample> samples, const FitOptions& options = {});

/// Only the global model; for a labeled validation set whose folds are not
/// meaningful.
ConfidenceModel fit_field_model(std::span<const DistanceSample> samples, const FitOptions& options = {});

}  // namespace xverify
