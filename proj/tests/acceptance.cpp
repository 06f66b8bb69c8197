// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "synthetic.hpp"
#include "xverify/batch.hpp"
#include "xverify/confidence.hpp"
#include "xverify/datastore.hpp"
#include "xverify/error.hpp"
#include "xverify/service.hpp"
#include "xverify/xmap.hpp"

namespace {

using namespace xverify;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Outcome of one criterion: `ok` plus a one-line measurement summary.
struct Outcome {
    bool ok = true;
    std::string detail;

    void check(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

PatchSpec spec_of(int p, int s) {
    PatchSpec spec;
    spec.size = p;
    spec.stride = s;
    return spec;
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome occlusion_counts() {
    Outcome o;
    const auto img = testing::render_face(testing::random_identity(1), 1);
    o.check(occlude_sweep(img, spec_of(7, 5)).count() == 441, "p=7 count");
    o.check(occlude_sweep(img, spec_of(14, 5)).count() == 361, "p=14 count");
    o.check(occlude_sweep(img, spec_of(28, 5)).count() == 256, "p=28 count");
    int checked = 0;
    for (int p = 1; p <= 112; ++p)
        for (int s = 1; s <= 20; ++s) {
            std::size_t per_axis = 0;
            for (int i = 0; (i + 1) * s + p <= 112; ++i) ++per_axis;
            o.check(occlusion_count(p, s) == per_axis * per_axis && sweep_positions(spec_of(p, s)).size() == per_axis * per_axis,
                    "mismatch at p=" + std::to_string(p) + " s=" + std::to_string(s));
            ++checked;
        }
    if (o.ok) o.detail = "441/361/256 and " + std::to_string(checked) + " (p, s) pairs agree";
    return o;
}

Outcome zero_pair() {
    Outcome o;
    const ReferenceEmbedder ref;
    const auto img = testing::render_face(testing::random_identity(2), 3);
    const auto r = explain_pair(make_context(img, img, ref), Method::III);
    double worst = 0.0;
    for (int side : {0, 1}) {
        worst = std::max(worst, r.merged[side].max_abs());
        for (const auto& m : r.per_scale[side]) worst = std::max(worst, m.max_abs());
    }
    o.check(r.d_orig == 0.0, "d_orig != 0");
    o.check(worst <= 1e-9, "max |S| = " + fmt("%.3g", worst));
    o.check(r.maps[0] == r.maps[1], "maps differ");
    o.check(r.merged[0] == r.merged[1], "merged maps differ");
    if (o.ok) o.detail = "max |S| = " + fmt("%.3g", worst) + ", maps bit-identical";
    return o;
}

double pasted_margin(const XMapResult& r, int side) {
    double inside = 0.0, outside = 0.0;
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 0; x < kImageSide; ++x) (x < kImageSide / 2 ? inside : outside) += r.merged[side].at(x, y);
    const double half = kPixelCount / 2.0;
    return inside / half - outside / half;
}

Outcome cut_and_paste() {
    Outcome o;
    const ReferenceEmbedder ref;
    const auto a = testing::render_face(testing::random_identity(100), 1);
    const auto b = testing::render_face(testing::random_identity(200), 2);
    const auto pasted = testing::paste_left_half(a, b);
    // Gray patches: a black patch on both images adds identical dark blocks to
    // the block-mean reference features, which reads as agreement everywhere.
    auto specs = default_patch_specs();
    for (auto& s : specs) s.fill = PatchFill::Gray;
    const auto r = explain_pair(make_context(a, pasted, ref, specs), Method::III);
    std::string summary;
    for (int side : {0, 1}) {
        const double margin = pasted_margin(r, side);
        o.check(margin > 0.0, "side " + std::to_string(side + 1) + " margin " + fmt("%.3g", margin));
        summary += (side ? ", " : "") + std::string("margin side ") + std::to_string(side + 1) + " = " +
                   fmt("%.3g", margin);
    }
    const auto black = explain_pair(make_context(a, pasted, ref), Method::III);
    if (o.ok) o.detail = summary + " (black fill: " + fmt("%.3g", pasted_margin(black, 0)) + ")";
    return o;
}

Outcome sigmoid_recovery() {
    Outcome o;
    const SigmoidParams truth{1.0, 0.3, -40.0, 0.0};
    std::vector<double> x, y, noisy;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    for (int i = 0; i < kHistogramBins; ++i) {
        x.push_back((i + 0.5) * kBinWidth);
        y.push_back(truth(x.back()));
        noisy.push_back(y.back() + noise(rng));
    }
    const SigmoidParams start{1.0, 0.35, -50.0, 0.0};
    const auto fit = fit_sigmoid_points(x, y, start);
    const auto& p = fit.params;
    const double err = std::max({std::abs(p.L - truth.L), std::abs(p.d0 - truth.d0), std::abs(p.k - truth.k),
                                 std::abs(p.b - truth.b)});
    o.check(err <= 1e-6, "noiseless max parameter error " + fmt("%.3g", err));

    const auto nf = fit_sigmoid_points(x, noisy, start);
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += std::pow(nf.params(x[i]) - y[i], 2);
    const double rmse = std::sqrt(sq / static_cast<double>(x.size()));
    o.check(rmse < 0.02, "noisy RMSE " + fmt("%.3g", rmse));
    if (o.ok) o.detail = "max parameter error " + fmt("%.2g", err) + ", noisy RMSE " + fmt("%.4f", rmse);
    return o;
}

ThresholdChoice scan_oracle(const std::vector<DistanceSample>& train) {
    std::vector<double> ds;
    for (const auto& s : train) ds.push_back(s.distance);
    std::sort(ds.begin(), ds.end());
    ds.erase(std::unique(ds.begin(), ds.end()), ds.end());
    std::vector<double> candidates{ds.front() - 1e-6};
    for (std::size_t i = 0; i + 1 < ds.size(); ++i) candidates.push_back((ds[i] + ds[i + 1]) / 2.0);
    candidates.push_back(ds.back() + 1e-6);
    ThresholdChoice best{0.0, -1.0};
    for (double t : candidates) {
        int correct = 0;
        for (const auto& s : train) correct += (s.distance <= t) == (s.label == Label::Genuine);
        const double acc = static_cast<double>(correct) / static_cast<double>(train.size());
        if (acc > best.accuracy) best = {t, acc};
    }
    return best;
}

Outcome threshold_oracle() {
    Outcome o;
    std::mt19937_64 rng(5);
    int folds = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = std::uniform_int_distribution<int>(40, 500)(rng);
        std::normal_distribution<double> g(0.4, 0.15), im(0.65, 0.15);
        std::vector<DistanceSample> s;
        for (int i = 0; i < n; ++i) {
            const bool genuine = std::bernoulli_distribution(0.5)(rng);
            double d = genuine ? g(rng) : im(rng);
            // Every other trial rounds coarsely so ties occur.
            if (trial % 2) d = std::round(d * 100.0) / 100.0;
            d = std::clamp(d, 0.0, 2.0);
            s.push_back({d, genuine ? Label::Genuine : Label::Imposter, i % kFoldCount, {}});
        }
        const auto cv = compute_thresholds_cv(s);
        for (int f = 0; f < kFoldCount; ++f) {
            std::vector<DistanceSample> train;
            for (const auto& x : s)
                if (x.fold != f) train.push_back(x);
            const auto oracle = scan_oracle(train);
            o.check(cv[f].threshold == oracle.threshold && cv[f].accuracy == oracle.accuracy,
                    "trial " + std::to_string(trial) + " fold " + std::to_string(f));
            ++folds;
        }
    }
    if (o.ok) o.detail = std::to_string(folds) + " fold thresholds match the exhaustive scan";
    return o;
}

Outcome calibration() {
    Outcome o;
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.35, 0.1), im(0.65, 0.1);
    std::vector<DistanceSample> s;
    for (int i = 0; i < 10000; ++i) {
        const bool genuine = i % 2 == 0;
        const double d = std::clamp(genuine ? g(rng) : im(rng), 0.0, 2.0);
        // Consecutive genuine/imposter pairs share a fold, so every fold is label-balanced.
        s.push_back({d, genuine ? Label::Genuine : Label::Imposter, (i / 2) % kFoldCount, {}});
    }
    const auto model = fit_confidence_model(s);
    std::vector<std::pair<double, bool>> scored;
    for (const auto& x : s) {
        const auto c = model.score(x.distance, x.fold);
        scored.push_back({c.c_score, c.prediction == x.label});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double worst = 0.0;
    const std::size_t n = scored.size();
    for (int dec = 0; dec < 10; ++dec) {
        const std::size_t lo = n * dec / 10, hi = n * (dec + 1) / 10;
        double mean_c = 0.0, correct = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            mean_c += scored[i].first;
            correct += scored[i].second ? 1.0 : 0.0;
        }
        const double gap = std::abs(correct / static_cast<double>(hi - lo) - mean_c / static_cast<double>(hi - lo));
        worst = std::max(worst, gap);
        o.check(gap <= 0.05, "decile " + std::to_string(dec + 1) + " gap " + fmt("%.4f", gap));
    }
    if (o.ok) o.detail = "max decile |accuracy - mean C| = " + fmt("%.4f", worst);
    return o;
}

Outcome blend_luminance() {
    Outcome o;
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto img = testing::random_image(rng);
        const auto map = testing::random_map(rng, -1.0, 1.0);
        const auto out = blend(img, map);
        for (int y = 0; y < kImageSide; ++y)
            for (int x = 0; x < kImageSide; ++x)
                worst = std::max(worst, std::abs(rgb_to_hls(out.at(x, y)).l - rgb_to_hls(img.at(x, y)).l));
    }
    o.check(worst <= 2.0 / 255.0, "max luminance error " + fmt("%.4f", worst * 255.0) + "/255");
    if (o.ok) o.detail = "max HLS luminance error " + fmt("%.3f", worst * 255.0) + "/255 over 20 image/map pairs";
    return o;
}

Outcome dense_sweep() {
    Outcome o;
    const auto spec = spec_of(28, 1);
    const auto positions = sweep_positions(spec);
    std::vector<PatchMask> masks;
    for (const auto& p : positions) masks.push_back(patch_mask(spec, p.x, p.y));
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<double> d(masks.size());
    for (auto& v : d) v = u(rng);
    const double d_orig = 0.9;
    const auto s = similarity_map(d, masks, d_orig);
    double worst = 0.0;
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 0; x < kImageSide; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < positions.size(); ++i)
                if (x >= positions[i].x && x < positions[i].x + 28 && y >= positions[i].y && y < positions[i].y + 28)
                    acc += d[i] - d_orig;
            worst = std::max(worst, std::abs(s.at(x, y) - acc / static_cast<double>(positions.size())));
        }
    o.check(positions.size() == 84u * 84u, "position count");
    o.check(worst <= 1e-12, "max deviation " + fmt("%.3g", worst));
    if (o.ok) o.detail = std::to_string(positions.size()) + " positions, max deviation " + fmt("%.3g", worst);
    return o;
}

Outcome end_to_end() {
    Outcome o;
    testing::TempDir dir("xverify-acceptance");
    const auto csv = testing::write_synthetic_dataset(dir.path() / "data", 3, 3, 9, "synthetic60");
    const auto pairs = load_pairs(csv);
    o.check(pairs.size() == 60, "dataset has " + std::to_string(pairs.size()) + " pairs");
    const ReferenceEmbedder ref;
    const auto root = dir.path() / "store";
    const auto first = run_batch(pairs, ref, BatchOptions{}, root);
    o.check(first.computed == 60 && first.failed == 0, "first run computed " + std::to_string(first.computed));

    const ResultsStore store(root);
    const auto records = store.read_index("synthetic60", "reference");
    o.check(records.size() == 60, "index has " + std::to_string(records.size()) + " records");
    std::size_t artifacts = 0;
    for (const auto& r : records) {
        o.check(r.ok() && r.artifacts.size() == 14, "record " + r.pair_id + " incomplete");
        for (const auto& [key, file] : r.artifacts) {
            o.check(fs::exists(store.artifact_path(r, key)), "missing " + r.pair_id + "/" + file);
            ++artifacts;
        }
    }
    const auto index_path = first.store_dir / "index.jsonl";
    const auto index = slurp(index_path);
    const auto second = run_batch(pairs, ref, BatchOptions{}, root);
    o.check(second.computed == 0 && second.skipped == 60, "rerun recomputed " + std::to_string(second.computed));
    o.check(slurp(index_path) == index, "rerun changed the index");

    ApiConfig config;
    config.store_root = root;
    Service service(config);
    const int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.run(); });
    service.wait_until_ready();
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    try {
        std::set<std::string> seen;
        std::size_t total = 0;
        for (int page = 1; page <= 7; ++page) {
            const auto r = c.Get("/api/pairs?per_page=11&page=" + std::to_string(page));
            o.check(r && r->status == 200, "pairs page " + std::to_string(page));
            if (!r) break;
            const auto j = json::parse(r->body);
            total = j["total"].get<std::size_t>();
            for (const auto& item : j["items"])
                o.check(seen.insert(item["pair_id"].get<std::string>()).second, "duplicate across pages");
        }
        o.check(total == 60 && seen.size() == 60, "pagination covered " + std::to_string(seen.size()) + " pairs");

        for (const auto& rec : {records.front(), records.back()}) {
            const auto detail = c.Get("/api/pairs/" + rec.pair_id);
            o.check(detail && detail->status == 200, "detail " + rec.pair_id);
            if (!detail) continue;
            for (const auto& [key, url] : json::parse(detail->body)["urls"].items()) {
                const auto a = c.Get(url.get<std::string>());
                o.check(a && a->status == 200 && a->body == slurp(store.artifact_path(rec, key)),
                        "artifact " + rec.pair_id + "/" + key);
            }
        }

        const json decision{{"verdict", "imposter"}, {"operator", "acceptance"}, {"note", "checked"}};
        const auto id = records[7].pair_id;
        const auto posted = c.Post("/api/pairs/" + id + "/decision", decision.dump(), "application/json");
        o.check(posted && posted->status == 201, "decision post");
        if (posted) {
            const auto listed = c.Get("/api/pairs/" + id + "/decisions");
            o.check(listed && json::parse(listed->body)["items"].back() == json::parse(posted->body),
                    "decision echo");
        }
        const auto ghost = c.Post("/api/pairs/ghost/decision", decision.dump(), "application/json");
        o.check(ghost && ghost->status == 409, "unknown pair decision");
    } catch (const std::exception& e) {
        o.check(false, std::string("service check threw: ") + e.what());
    }
    service.stop();
    server.join();
    if (o.ok)
        o.detail = "60 records, " + std::to_string(artifacts) +
                   " artifacts, idempotent rerun, pagination/artifact/decision contracts hold";
    return o;
}

struct Criterion {
    int number;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "occlusion counts", 5, occlusion_counts},
        {2, "zero-pair invariant", 30, zero_pair},
        {3, "cut-and-paste", 120, cut_and_paste},
        {4, "sigmoid fit recovery", 5, sigmoid_recovery},
        {5, "threshold CV oracle", 10, threshold_oracle},
        {6, "calibration", 60, calibration},
        {7, "blend luminance preservation", 10, blend_luminance},
        {8, "dense-sweep equivalence", 300, dense_sweep},
        {9, "end-to-end batch + service", 600, end_to_end},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("threw: ") + e.what();
        }
        const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
        if (o.ok && seconds >= c.limit_seconds) {
            o.ok = false;
            o.detail = "over the " + fmt("%.0f", c.limit_seconds) + " s limit";
        }
        if (!o.ok) ++failures;
        std::printf("%s %d %s (%.2f s): %s\n", o.ok ? "PASS" : "FAIL", c.number, c.name, seconds, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
