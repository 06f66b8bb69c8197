#include "xverify/confidence.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "xverify/error.hpp"

namespace xverify {

const char* to_string(Label l) {
    switch (l) {
        case Label::Genuine: return "genuine";
        case Label::Imposter: return "imposter";
        case Label::Unknown: return "unknown";
    }
    return "unknown";
}

Label parse_label(const std::string& s) {
    if (s == "genuine") return Label::Genuine;
    if (s == "imposter") return Label::Imposter;
    if (s == "unknown") return Label::Unknown;
    fail(ErrorKind::Parse, "unknown label '" + s + "' (expected genuine, imposter or unknown)");
}

// ---------------------------------------------------------------------------
// Thresholds
// ---------------------------------------------------------------------------

namespace {

struct Sorted {
    std::vector<double> genuine;
    std::vector<double> imposter;
};

Sorted split_sorted(std::span<const DistanceSample> samples) {
    Sorted out;
    for (const auto& s : samples) {
        if (s.label == Label::Genuine) out.genuine.push_back(s.distance);
        if (s.label == Label::Imposter) out.imposter.push_back(s.distance);
    }
    std::sort(out.genuine.begin(), out.genuine.end());
    std::sort(out.imposter.begin(), out.imposter.end());
    return out;
}

}  // namespace

std::vector<double> threshold_candidates(std::span<const DistanceSample> samples) {
    std::vector<double> d;
    for (const auto& s : samples)
        if (s.label != Label::Unknown) d.push_back(s.distance);
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    std::vector<double> out;
    if (d.empty()) return out;
    out.push_back(d.front() - kSentinelOffset);
    for (std::size_t i = 0; i + 1 < d.size(); ++i) out.push_back((d[i] + d[i + 1]) / 2.0);
    out.push_back(d.back() + kSentinelOffset);
    return out;
}

ThresholdChoice best_threshold(std::span<const DistanceSample> samples) {
    const auto sorted = split_sorted(samples);
    if (sorted.genuine.empty() || sorted.imposter.empty())
        fail(ErrorKind::DegenerateSplit, "threshold selection needs both genuine and imposter samples");
    const auto candidates = threshold_candidates(samples);
    const std::size_t total = sorted.genuine.size() + sorted.imposter.size();

    // Candidates ascend, so the "d <= t" prefixes only grow.
    std::size_t g_below = 0, i_below = 0;
    std::size_t best_correct = 0;
    double best_t = candidates.front();
    bool first = true;
    for (double t : candidates) {
        while (g_below < sorted.genuine.size() && sorted.genuine[g_below] <= t) ++g_below;
        while (i_below < sorted.imposter.size() && sorted.imposter[i_below] <= t) ++i_below;
        const std::size_t correct = g_below + (sorted.imposter.size() - i_below);
        if (first || correct > best_correct) {
            best_correct = correct;
            best_t = t;
            first = false;
        }
    }
    return {best_t, static_cast<double>(best_correct) / static_cast<double>(total)};
}

std::array<ThresholdChoice, kFoldCount> compute_thresholds_cv(std::span<const DistanceSample> samples) {
    std::array<ThresholdChoice, kFoldCount> out{};
    std::vector<DistanceSample> training;
    for (int f = 0; f < kFoldCount; ++f) {
        training.clear();
        for (const auto& s : samples)
            if (s.fold != f) training.push_back(s);
        try {
            out[static_cast<std::size_t>(f)] = best_threshold(training);
        } catch (const Error& e) {
            fail(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

int RatioHistogram::non_empty_bins() const {
    return static_cast<int>(std::count_if(ratio.begin(), ratio.end(), [](const auto& r) { return r.has_value(); }));
}

int histogram_bin(double distance) {
    const int bin = static_cast<int>(std::floor(distance / kBinWidth));
    return std::clamp(bin, 0, kHistogramBins - 1);
}

RatioHistogram ratio_histogram(std::span<const DistanceSample> samples) {
    RatioHistogram h;
    for (int i = 0; i <= kHistogramBins; ++i) h.edges[static_cast<std::size_t>(i)] = i * kBinWidth;
    for (const auto& s : samples) {
        const auto bin = static_cast<std::size_t>(histogram_bin(s.distance));
        if (s.label == Label::Genuine) ++h.genuine[bin];
        if (s.label == Label::Imposter) ++h.imposter[bin];
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(kHistogramBins); ++i) {
        const int n = h.genuine[i] + h.imposter[i];
        if (n > 0) h.ratio[i] = static_cast<double>(h.genuine[i]) / n;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Sigmoid fit (dogbox: dogleg steps inside a box-shaped trust region that is
// intersected with the parameter bounds; variables pinned at a bound whose
// gradient points outward are frozen for the iteration)
// ---------------------------------------------------------------------------

namespace {

using Vec4 = Eigen::Vector4d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Vec4 to_vec(const SigmoidParams& p) { return {p.L, p.d0, p.k, p.b}; }
SigmoidParams to_params(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

struct Problem {
    std::span<const double> x;
    std::span<const double> y;

    VectorXd residuals(const Vec4& p) const {
        VectorXd r(static_cast<Eigen::Index>(x.size()));
        const auto params = to_params(p);
        for (std::size_t i = 0; i < x.size(); ++i) r[static_cast<Eigen::Index>(i)] = params(x[i]) - y[i];
        return r;
    }

    MatrixXd jacobian(const Vec4& p) const {
        MatrixXd J(static_cast<Eigen::Index>(x.size()), 4);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double dx = x[i] - p[1];
            const double s = logistic(p[2] * dx);
            const double ds = s * (1.0 - s);
            const auto row = static_cast<Eigen::Index>(i);
            J(row, 0) = s;
            J(row, 1) = -p[0] * p[2] * ds;
            J(row, 2) = p[0] * dx * ds;
            J(row, 3) = 1.0;
        }
        return J;
    }
};

/// argmin of a t^2 + b t on [lo, hi].
double minimize_quadratic_1d(double a, double b, double lo, double hi) {
    double best_t = lo;
    double best_v = a * lo * lo + b * lo;
    auto consider = [&](double t) {
        const double v = a * t * t + b * t;
        if (v < best_v) {
            best_v = v;
            best_t = t;
        }
    };
    consider(hi);
    if (a != 0.0) {
        const double extremum = -0.5 * b / a;
        if (lo < extremum && extremum < hi) consider(extremum);
    }
    return best_t;
}

struct BoundStep {
    double size;
    VectorXd hits;  // -1 lower, +1 upper, 0 none
};

/// Largest t with lb <= x + t s <= ub, and which coordinates hit first.
BoundStep step_size_to_bound(const VectorXd& x, const VectorXd& s, const VectorXd& lb, const VectorXd& ub) {
    const auto n = x.size();
    VectorXd steps = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (s[i] != 0.0) steps[i] = std::max((lb[i] - x[i]) / s[i], (ub[i] - x[i]) / s[i]);
    }
    const double min_step = n > 0 ? steps.minCoeff() : std::numeric_limits<double>::infinity();
    VectorXd hits = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (steps[i] == min_step) hits[i] = s[i] > 0 ? 1.0 : (s[i] < 0 ? -1.0 : 0.0);
    return {min_step, hits};
}

struct DoglegResult {
    VectorXd step;
    Eigen::VectorXi on_bound;
    bool tr_hit = false;
};

DoglegResult dogleg_step(const VectorXd& x, const VectorXd& newton, const VectorXd& g, double a, double b,
                         double delta, const VectorXd& lb, const VectorXd& ub) {
    const auto n = x.size();
    const VectorXd lb_c = lb - x;
    const VectorXd ub_c = ub - x;
    VectorXd lo(n), hi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lo[i] = std::max(lb_c[i], -delta);
        hi[i] = std::min(ub_c[i], delta);
    }
    DoglegResult out{newton, Eigen::VectorXi::Zero(n), false};
    bool inside = true;
    for (Eigen::Index i = 0; i < n; ++i)
        if (newton[i] < lo[i] || newton[i] > hi[i]) inside = false;
    if (inside) return out;

    const auto to_bound = step_size_to_bound(VectorXd::Zero(n), -g, lo, hi);
    const VectorXd cauchy = -minimize_quadratic_1d(a, b, 0.0, to_bound.size) * g;
    const VectorXd diff = newton - cauchy;
    const auto along = step_size_to_bound(cauchy, diff, lo, hi);
    for (Eigen::Index i = 0; i < n; ++i) {
        const bool hit_lo = along.hits[i] < 0, hit_hi = along.hits[i] > 0;
        if (hit_lo && lo[i] == lb_c[i]) out.on_bound[i] = -1;
        if (hit_hi && hi[i] == ub_c[i]) out.on_bound[i] = 1;
        if ((hit_lo && lo[i] == -delta) || (hit_hi && hi[i] == delta)) out.tr_hit = true;
    }
    out.step = cauchy + along.size * diff;
    return out;
}

}  // namespace

double SigmoidParams::operator()(double d) const { return L * logistic(k * (d - d0)) + b; }

SigmoidFit fit_sigmoid_points(std::span<const double> x, std::span<const double> y, const SigmoidParams& initial,
                              const FitOptions& options) {
    if (x.size() != y.size()) fail(ErrorKind::InvalidArgument, "x and y must have equal length");
    if (x.size() < 4)
        fail(ErrorKind::InsufficientData, "sigmoid fit needs at least 4 points, got " + std::to_string(x.size()));

    const Problem problem{x, y};
    const Vec4 lb = to_vec(options.bounds.lower);
    const Vec4 ub = to_vec(options.bounds.upper);
    Vec4 p = to_vec(initial).cwiseMax(lb).cwiseMin(ub);

    VectorXd f = problem.residuals(p);
    MatrixXd J = problem.jacobian(p);
    double cost = 0.5 * f.squaredNorm();
    VectorXd g = J.transpose() * f;
    double delta = p.cwiseAbs().maxCoeff();
    if (delta == 0.0) delta = 1.0;

    Eigen::Vector4i on_bound = Eigen::Vector4i::Zero();
    for (int i = 0; i < 4; ++i) {
        if (p[i] == lb[i]) on_bound[i] = -1;
        if (p[i] == ub[i]) on_bound[i] = 1;
    }

    SigmoidFit fit;
    const int max_evaluations = options.max_iterations * 10;
    int evaluations = 1;
    bool done = false;
    while (!done && fit.iterations < options.max_iterations && evaluations < max_evaluations) {
        std::vector<int> free;
        VectorXd g_masked = g;
        for (int i = 0; i < 4; ++i) {
            if (on_bound[i] * g[i] < 0.0)
                g_masked[i] = 0.0;
            else
                free.push_back(i);
        }
        if (g_masked.lpNorm<Eigen::Infinity>() < options.gradient_tolerance || cost == 0.0) {
            fit.converged = true;
            break;
        }
        const auto nf = static_cast<Eigen::Index>(free.size());
        MatrixXd J_free(J.rows(), nf);
        VectorXd x_free(nf), lb_free(nf), ub_free(nf), g_free(nf);
        for (Eigen::Index c = 0; c < nf; ++c) {
            const int i = free[static_cast<std::size_t>(c)];
            J_free.col(c) = J.col(i);
            x_free[c] = p[i];
            lb_free[c] = lb[i];
            ub_free[c] = ub[i];
            g_free[c] = g[i];
        }
        const VectorXd newton = J_free.completeOrthogonalDecomposition().solve(-f);
        const double qa = 0.5 * (J_free * (-g_free)).squaredNorm();
        const double qb = -g_free.squaredNorm();

        double actual_reduction = -1.0;
        Vec4 p_new = p;
        VectorXd f_new;
        double cost_new = cost;
        Eigen::VectorXi on_bound_free;
        while (actual_reduction <= 0.0 && evaluations < max_evaluations) {
            const auto dl = dogleg_step(x_free, newton, g_free, qa, qb, delta, lb_free, ub_free);
            Vec4 step = Vec4::Zero();
            for (Eigen::Index c = 0; c < nf; ++c) step[free[static_cast<std::size_t>(c)]] = dl.step[c];
            const VectorXd js = J_free * dl.step;
            const double predicted = -(0.5 * js.squaredNorm() + g_free.dot(dl.step));

            p_new = (p + step).cwiseMax(lb).cwiseMin(ub);
            f_new = problem.residuals(p_new);
            ++evaluations;
            const double step_norm = step.lpNorm<Eigen::Infinity>();
            if (!f_new.allFinite()) {
                delta = 0.25 * step_norm;
                continue;
            }
            cost_new = 0.5 * f_new.squaredNorm();
            actual_reduction = cost - cost_new;

            double ratio = 0.0;
            if (predicted > 0.0)
                ratio = actual_reduction / predicted;
            else if (predicted == 0.0 && actual_reduction == 0.0)
                ratio = 1.0;
            if (ratio < 0.25)
                delta = 0.25 * step_norm;
            else if (ratio > 0.75 && dl.tr_hit)
                delta *= 2.0;

            on_bound_free = dl.on_bound;
            const bool cost_converged =
                actual_reduction >= 0.0 && actual_reduction < options.cost_tolerance * cost && ratio > 0.25;
            const bool step_converged = step.norm() < options.step_tolerance;
            if (cost_converged || step_converged) {
                done = true;
                fit.converged = true;
                break;
            }
        }
        if (actual_reduction > 0.0) {
            for (Eigen::Index c = 0; c < nf; ++c) on_bound[free[static_cast<std::size_t>(c)]] = on_bound_free[c];
            p = p_new;
            for (int i = 0; i < 4; ++i) {
                if (on_bound[i] == -1) p[i] = lb[i];
                if (on_bound[i] == 1) p[i] = ub[i];
            }
            f = problem.residuals(p);
            cost = 0.5 * f.squaredNorm();
            J = problem.jacobian(p);
            g = J.transpose() * f;
        }
        ++fit.iterations;
    }
    fit.params = to_params(p);
    fit.residual = 2.0 * cost;
    return fit;
}

SigmoidFit fit_sigmoid(const RatioHistogram& hist, double threshold, const FitOptions& options) {
    std::vector<double> x, y;
    for (int i = 0; i < kHistogramBins; ++i) {
        if (const auto& r = hist.ratio[static_cast<std::size_t>(i)]) {
            x.push_back(hist.center(i));
            y.push_back(*r);
        }
    }
    if (x.size() < 4)
        fail(ErrorKind::InsufficientData,
             "sigmoid fit needs at least 4 non-empty histogram bins, got " + std::to_string(x.size()));
    SigmoidParams init{1.0, std::clamp(threshold, 0.0, kHistogramMax), -50.0, 0.0};
    return fit_sigmoid_points(x, y, init, options);
}

// ---------------------------------------------------------------------------
// Scoring and models
// ---------------------------------------------------------------------------

Confidence c_score(double distance, double threshold, const SigmoidParams& params) {
    const double c = std::clamp(params(distance), 0.0, 1.0);
    if (distance <= threshold) return {c, Label::Genuine};
    return {1.0 - c, Label::Imposter};
}

const FoldModel& ConfidenceModel::for_fold(std::optional<int> fold) const {
    if (fold && *fold >= 0 && static_cast<std::size_t>(*fold) < folds.size())
        return folds[static_cast<std::size_t>(*fold)];
    if (global) return *global;
    if (!folds.empty()) fail(ErrorKind::InvalidArgument, "confidence model has no entry for this fold");
    fail(ErrorKind::InvalidArgument, "confidence model is empty");
}

Confidence ConfidenceModel::score(double distance, std::optional<int> fold) const {
    const auto& m = for_fold(fold);
    return c_score(distance, m.threshold, m.params);
}

namespace {

constexpr const char* kModelHeader = "xverify-confidence v1";

std::string format_record(const std::string& key, const FoldModel& m) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s %.17g %.17g %.17g %.17g %.17g %.17g\n", key.c_str(), m.threshold, m.params.L,
                  m.params.d0, m.params.k, m.params.b, m.fit_residual);
    return buf;
}

FoldModel fit_one(std::span<const DistanceSample> training, double threshold, const FitOptions& options) {
    const auto hist = ratio_histogram(training);
    const auto fit = fit_sigmoid(hist, threshold, options);
    return {threshold, fit.params, fit.residual};
}

}  // namespace

std::string ConfidenceModel::serialize() const {
    std::string out = std::string(kModelHeader) + "\n# key t L d0 k b fit_residual\n";
    for (std::size_t f = 0; f < folds.size(); ++f) out += format_record(std::to_string(f), folds[f]);
    if (global) out += format_record("all", *global);
    return out;
}

ConfidenceModel ConfidenceModel::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kModelHeader)
        fail(ErrorKind::Parse, std::string("confidence model must start with '") + kModelHeader + "'");
    ConfidenceModel model;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream fields(line);
        std::string key;
        FoldModel m;
        if (!(fields >> key >> m.threshold >> m.params.L >> m.params.d0 >> m.params.k >> m.params.b >>
              m.fit_residual))
            fail(ErrorKind::Parse, "confidence model line " + std::to_string(line_no) + ": expected 7 fields");
        if (key == "all") {
            model.global = m;
        } else if (key == std::to_string(model.folds.size())) {
            model.folds.push_back(m);
        } else {
            fail(ErrorKind::Parse, "confidence model line " + std::to_string(line_no) + ": unexpected key '" + key +
                                       "'");
        }
    }
    if (!model.folds.empty() && model.folds.size() != static_cast<std::size_t>(kFoldCount))
        fail(ErrorKind::Parse, "confidence model must list 0 or 10 folds");
    if (model.folds.empty() && !model.global) fail(ErrorKind::Parse, "confidence model has no records");
    return model;
}

void ConfidenceModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    out << serialize();
    if (!out) fail(ErrorKind::Io, "cannot write confidence model " + path.string());
}

ConfidenceModel ConfidenceModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read confidence model " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

ConfidenceModel fit_confidence_model(std::span<const DistanceSample> samples, const FitOptions& options) {
    const auto thresholds = compute_thresholds_cv(samples);
    ConfidenceModel model;
    std::vector<DistanceSample> training;
    for (int f = 0; f < kFoldCount; ++f) {
        training.clear();
        for (const auto& s : samples)
            if (s.fold != f) training.push_back(s);
        try {
            model.folds.push_back(fit_one(training, thresholds[static_cast<std::size_t>(f)].threshold, options));
        } catch (const Error& e) {
            fail(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
        }
    }
    model.global = fit_field_model(samples, options).global;
    return model;
}

ConfidenceModel fit_field_model(std::span<const DistanceSample> samples, const FitOptions& options) {
    const auto t = best_threshold(samples);
    ConfidenceModel model;
    model.global = fit_one(samples, t.threshold, options);
    return model;
}

}  // namespace xverify
