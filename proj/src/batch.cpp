#include "xverify/batch.hpp"

#include <map>
#include <set>

#include "xverify/error.hpp"

namespace xverify {

std::map<std::string, std::string> write_xmap_artifacts(const std::filesystem::path& dir, const XMapResult& result) {
    std::map<std::string, std::string> out;
    fs::create_directories(dir);
    for (int side = 0; side < 2; ++side) {
        const auto xkey = artifact_key("xmap", side + 1, result.method);
        const auto skey = artifact_key("smap", side + 1, result.method);
        write_png(dir / (xkey + ".png"), result.blended[static_cast<std::size_t>(side)]);
        write_png(dir / (skey + ".png"), colormap_diverging(result.maps[static_cast<std::size_t>(side)]));
        out[xkey] = xkey + ".png";
        out[skey] = skey + ".png";
    }
    return out;
}

namespace {

struct LoadedImage {
    std::optional<Image> image;
    std::optional<FeatureVector> features;
    std::string error;
    ErrorKind kind = ErrorKind::Io;
};

bool artifacts_present(const ResultsStore& store, const ResultRecord& r) {
    for (const auto& [key, file] : r.artifacts)
        if (!fs::exists(store.pair_dir(r.dataset, r.model, r.pair_id) / file)) return false;
    return true;
}

ResultRecord base_record(const PairRecord& p, const std::string& dataset, const std::string& model) {
    ResultRecord r;
    r.pair_id = p.pair_id;
    r.dataset = dataset;
    r.model = model;
    r.label = p.label;
    r.fold = p.fold;
    r.path1 = p.path1.string();
    r.path2 = p.path2.string();
    return r;
}

}  // namespace

BatchSummary run_batch(const std::vector<PairRecord>& pairs, const EmbeddingBackend& backend,
                       const BatchOptions& options, const std::filesystem::path& out_root) {
    if (options.methods.empty()) fail(ErrorKind::InvalidParameter, "no methods requested");
    if (options.specs.empty()) fail(ErrorKind::InvalidParameter, "no patch specs given");
    for (const auto& s : options.specs) s.validate();

    const std::string dataset =
        sanitize_name(!options.dataset.empty() ? options.dataset : (pairs.empty() ? "default" : pairs.front().dataset));
    const std::string model = sanitize_name(backend.name());
    const ResultsStore store(out_root);
    BatchSummary summary;
    summary.store_dir = store.model_dir(dataset, model);
    StoreLock lock(summary.store_dir);

    std::map<std::string, ResultRecord> previous;
    std::vector<std::string> previous_order;
    for (auto& r : store.read_index(dataset, model)) {
        previous_order.push_back(r.pair_id);
        previous.emplace(r.pair_id, std::move(r));
    }

    // Load and embed each distinct source image once.
    std::map<fs::path, LoadedImage> images;
    auto load = [&](const fs::path& path) -> const LoadedImage& {
        auto it = images.find(path);
        if (it != images.end()) return it->second;
        LoadedImage li;
        try {
            li.image = read_png(path);
            li.features = backend.embed(*li.image);
        } catch (const Error& e) {
            li.error = e.what();
            li.kind = e.kind();
        }
        return images.emplace(path, std::move(li)).first->second;
    };

    std::vector<DistanceSample> samples;
    std::map<std::string, double> distances;
    for (const auto& p : pairs) {
        const auto& a = load(p.path1);
        const auto& b = load(p.path2);
        if (!a.features || !b.features) continue;
        const double d = cosine_distance(*a.features, *b.features);
        distances[p.pair_id] = d;
        if (p.label != Label::Unknown) samples.push_back({d, p.label, p.fold, p.pair_id});
    }

    if (options.confidence) {
        summary.confidence = options.confidence;
    } else if (!samples.empty()) {
        summary.confidence = fit_confidence_model(samples);
    } else if (!distances.empty()) {
        fail(ErrorKind::InvalidArgument, "no labeled pairs to calibrate on; supply a confidence model");
    }
    if (summary.confidence) write_file_atomic(summary.store_dir / "confidence.conf", summary.confidence->serialize());

    // Previous records stay in the index until their pair is reprocessed, so
    // an interrupted run never loses entries.
    std::vector<ResultRecord> records;
    std::set<std::string> processed;
    auto flush_index = [&] {
        auto all = records;
        for (const auto& id : previous_order)
            if (!processed.count(id)) all.push_back(previous.at(id));
        store.write_index(dataset, model, all);
    };

    for (const auto& p : pairs) {
        ResultRecord rec = base_record(p, dataset, model);
        rec.methods = options.methods;
        rec.parameters = options.specs;
        const auto prev = previous.find(p.pair_id);

        const auto& a = load(p.path1);
        const auto& b = load(p.path2);
        if (!a.features || !b.features) {
            rec.status = "failed";
            rec.error = !a.features ? a.error : b.error;
            if (prev != previous.end() && prev->second.status == "failed" && prev->second.error == rec.error)
                rec.created_at = prev->second.created_at;
            else
                rec.created_at = utc_timestamp();
            ++summary.failed;
            processed.insert(rec.pair_id);
            records.push_back(std::move(rec));
            flush_index();
            continue;
        }

        const double d = distances.at(p.pair_id);
        const auto conf =
            summary.confidence->score(d, p.label == Label::Unknown ? std::nullopt : std::optional<int>(p.fold));
        rec.d_orig = d;
        rec.prediction = conf.prediction;
        rec.threshold =
            summary.confidence->for_fold(p.label == Label::Unknown ? std::nullopt : std::optional<int>(p.fold))
                .threshold;
        rec.c_score = conf.c_score;

        if (prev != previous.end() && prev->second.ok() && prev->second.parameters == rec.parameters &&
            prev->second.methods == rec.methods && artifacts_present(store, prev->second)) {
            rec.artifacts = prev->second.artifacts;
            rec.created_at = prev->second.created_at;
            if (rec != prev->second) {
                rec.created_at = utc_timestamp();
                write_file_atomic(store.pair_dir(dataset, model, p.pair_id) / "meta.json", rec.to_json().dump(2) + "\n");
            }
            ++summary.skipped;
            processed.insert(rec.pair_id);
            records.push_back(std::move(rec));
            flush_index();
            continue;
        }

        const auto dir = store.pair_dir(dataset, model, p.pair_id);
        try {
            PairExplainContext ctx{*a.image, *b.image, &backend, *a.features, *b.features, d, options.specs};
            const auto results = explain_pair(ctx, options.methods);
            fs::create_directories(dir);
            write_png(dir / "source_1.png", *a.image);
            write_png(dir / "source_2.png", *b.image);
            rec.artifacts[artifact_key("source", 1)] = "source_1.png";
            rec.artifacts[artifact_key("source", 2)] = "source_2.png";
            for (const auto& r : results) {
                auto written = write_xmap_artifacts(dir, r);
                rec.artifacts.insert(written.begin(), written.end());
            }
            rec.created_at = utc_timestamp();
            write_file_atomic(dir / "meta.json", rec.to_json().dump(2) + "\n");
            ++summary.computed;
        } catch (const Error& e) {
            rec = base_record(p, dataset, model);
            rec.methods = options.methods;
            rec.parameters = options.specs;
            rec.status = "failed";
            rec.error = e.what();
            rec.created_at = utc_timestamp();
            ++summary.failed;
        }
        processed.insert(rec.pair_id);
        records.push_back(std::move(rec));
        flush_index();
    }
    flush_index();
    return summary;
}

}  // namespace xverify
