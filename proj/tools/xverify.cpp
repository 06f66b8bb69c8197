// xverify: command-line front end for explainable face verification.
//
//   xverify fit     --pairs pairs.csv --backend reference --out model.conf
//   xverify explain --img1 a.png --img2 b.png --backend reference --method III --out dir/
//   xverify batch   --pairs pairs.csv --backend reference --methods I,II,III --out store/
//   xverify serve   --store store/ --addr 127.0.0.1:8080
//   xverify embed   <manifest> <output>     (reference backend over the subprocess protocol)
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xverify/batch.hpp"
#include "xverify/confidence.hpp"
#include "xverify/datastore.hpp"
#include "xverify/embedding.hpp"
#include "xverify/error.hpp"
#include "xverify/service.hpp"
#include "xverify/xmap.hpp"

namespace {

using namespace xverify;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter: return kExitUsage;
        case ErrorKind::Backend: return kExitBackend;
        default: return kExitData;
    }
}

struct PatchFlags {
    std::string sizes = "7,14,28";
    int stride = 5;
    std::string fill = "black";
    std::string shape = "rect";
    std::string edge_blur;
    std::uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--patch-sizes", sizes, "Comma-separated patch sizes")->capture_default_str();
        cmd->add_option("--stride", stride, "Sweep stride in pixels")->capture_default_str();
        cmd->add_option("--fill", fill, "black|gray|white|noise")->capture_default_str();
        cmd->add_option("--shape", shape, "rect|round")->capture_default_str();
        cmd->add_option("--edge-blur", edge_blur, "Patch edge blur as K,SIGMA");
        cmd->add_option("--seed", seed, "Noise fill seed")->capture_default_str();
    }

    std::vector<PatchSpec> specs() const {
        PatchSpec base;
        base.stride = stride;
        base.fill = parse_patch_fill(fill);
        base.shape = parse_patch_shape(shape);
        base.noise_seed = seed;
        if (!edge_blur.empty()) {
            const auto comma = edge_blur.find(',');
            try {
                if (comma == std::string::npos) throw std::invalid_argument("edge-blur");
                base.edge_blur = EdgeBlur{std::stoi(edge_blur.substr(0, comma)), std::stod(edge_blur.substr(comma + 1))};
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidParameter, "--edge-blur must be K,SIGMA");
            }
        }
        std::vector<PatchSpec> out;
        std::stringstream in(sizes);
        std::string tok;
        while (std::getline(in, tok, ',')) {
            auto s = base;
            try {
                s.size = std::stoi(tok);
            } catch (const std::exception&) {
                fail(ErrorKind::InvalidParameter, "--patch-sizes must be integers");
            }
            s.validate();
            if (occlusion_count(s.size, s.stride) == 0)
                fail(ErrorKind::InvalidParameter, "patch size " + tok + " yields no occlusions");
            out.push_back(s);
        }
        if (out.empty()) fail(ErrorKind::InvalidParameter, "--patch-sizes is empty");
        return out;
    }
};

// An unrecognised --backend value is a usage error, not a data error.
std::shared_ptr<const EmbeddingBackend> backend_from_flag(const std::string& spec, const std::string& model_name) {
    try {
        return make_backend(spec, model_name);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::InvalidParameter, e.what());
        throw;
    }
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::vector<DistanceSample> embed_pairs(const std::vector<PairRecord>& pairs, const EmbeddingBackend& backend) {
    std::map<std::filesystem::path, FeatureVector> cache;
    auto features = [&](const std::filesystem::path& p) -> const FeatureVector& {
        auto it = cache.find(p);
        if (it == cache.end()) it = cache.emplace(p, backend.embed(read_png(p))).first;
        return it->second;
    };
    std::vector<DistanceSample> out;
    for (const auto& p : pairs) {
        if (p.label == Label::Unknown) continue;
        out.push_back({cosine_distance(features(p.path1), features(p.path2)), p.label, p.fold, p.pair_id});
    }
    return out;
}

void print_model(const ConfidenceModel& model) {
    auto line = [](const std::string& key, const FoldModel& m) {
        std::printf("%-5s t=%.6f L=%.6f d0=%.6f k=%.4f b=%.6f residual=%.3g\n", key.c_str(), m.threshold, m.params.L,
                    m.params.d0, m.params.k, m.params.b, m.fit_residual);
    };
    for (std::size_t f = 0; f < model.folds.size(); ++f) line("fold" + std::to_string(f), model.folds[f]);
    if (model.global) line("all", *model.global);
}

int cmd_fit(const std::string& pairs_path, const std::string& backend_spec, const std::string& model_name,
            const std::string& out, bool field) {
    const auto backend = backend_from_flag(backend_spec, model_name);
    const auto pairs = load_pairs(pairs_path);
    const auto samples = embed_pairs(pairs, *backend);
    const auto model = field ? fit_field_model(samples) : fit_confidence_model(samples);
    model.save(out);
    print_model(model);
    return 0;
}

int cmd_explain(const std::string& img1, const std::string& img2, const std::string& backend_spec,
                const std::string& model_name, const std::string& method_name, const PatchFlags& flags,
                const std::string& conf_path, const std::string& out_dir) {
    const auto method = parse_method(method_name);
    const auto specs = flags.specs();
    const auto backend = backend_from_flag(backend_spec, model_name);
    const auto a = read_png(img1);
    const auto b = read_png(img2);
    const auto ctx = make_context(a, b, *backend, specs);
    const auto result = explain_pair(ctx, method);

    const std::filesystem::path dir(out_dir);
    const auto artifacts = write_xmap_artifacts(dir, result);
    nlohmann::json meta{{"img1", img1},        {"img2", img2},
                        {"model", backend->name()}, {"method", to_string(method)},
                        {"d_orig", result.d_orig},  {"artifacts", artifacts}};
    nlohmann::json params = nlohmann::json::array();
    for (const auto& s : specs) params.push_back(to_json(s));
    meta["parameters"] = params;
    if (!conf_path.empty()) {
        const auto model = ConfidenceModel::load(conf_path);
        const auto& m = model.for_fold(std::nullopt);
        const auto c = c_score(result.d_orig, m.threshold, m.params);
        meta["threshold"] = m.threshold;
        meta["c_score"] = c.c_score;
        meta["prediction"] = to_string(c.prediction);
    }
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
    std::printf("d_orig=%.6f", result.d_orig);
    if (meta.contains("c_score"))
        std::printf(" prediction=%s c_score=%.4f", meta["prediction"].get<std::string>().c_str(),
                    meta["c_score"].get<double>());
    std::printf("\nwrote %s\n", dir.string().c_str());
    return 0;
}

int cmd_batch(const std::string& pairs_path, const std::string& backend_spec, const std::string& model_name,
              const std::string& methods, const PatchFlags& flags, const std::string& dataset,
              const std::string& conf_path, const std::string& out_root) {
    BatchOptions options;
    options.methods = parse_methods(methods);
    options.specs = flags.specs();
    options.dataset = dataset;
    if (!conf_path.empty()) options.confidence = ConfidenceModel::load(conf_path);
    const auto backend = backend_from_flag(backend_spec, model_name);
    const auto pairs = load_pairs(pairs_path, dataset, options.confidence.has_value());
    const auto summary = run_batch(pairs, *backend, options, out_root);
    std::printf("store %s: %zu computed, %zu skipped, %zu failed\n", summary.store_dir.string().c_str(),
                summary.computed, summary.skipped, summary.failed);
    return 0;
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

int cmd_serve(const std::string& store, const std::string& addr, const std::string& backend_spec,
              const std::string& model_name, const std::string& conf_path, const std::vector<std::string>& cors,
              const std::string& ui_dir) {
    ApiConfig config;
    config.store_root = store;
    if (!conf_path.empty()) config.confidence_path = conf_path;
    if (!backend_spec.empty()) config.backend = backend_from_flag(backend_spec, model_name);
    config.cors_allow = cors;
    if (!ui_dir.empty()) config.static_dir = ui_dir;
    const auto [host, port] = parse_address(addr);

    Service service(std::move(config));
    const int bound = service.bind(host, port);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::printf("serving %s on http://%s:%d\n", store.c_str(), host.c_str(), bound);
    std::fflush(stdout);
    service.run();
    g_service = nullptr;
    return 0;
}

int cmd_embed(const std::string& manifest, const std::string& output) {
    const ReferenceEmbedder backend;
    std::ifstream in(manifest);
    if (!in) fail(ErrorKind::Io, "cannot read manifest " + manifest);
    std::ostringstream out;
    out.precision(17);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) fail(ErrorKind::Parse, "manifest line without TAB");
        const auto f = backend.embed(read_png(line.substr(tab + 1)));
        out << line.substr(0, tab) << '\t';
        const auto v = f.values();
        for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
        out << '\n';
    }
    write_file_atomic(output, out.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explainable face verification: X-Maps and C-Scores for any embedding backend"};
    app.require_subcommand(1);

    std::string pairs, backend = "reference", model_name, out, dataset, conf, methods = "I,II,III";
    std::string img1, img2, method = "III";
    std::string store = env_or("XVERIFY_STORE", ""), addr = env_or("XVERIFY_ADDR", "127.0.0.1:8080"), ui_dir;
    std::string serve_backend;
    std::vector<std::string> cors;
    std::string manifest, output;
    bool field = false;
    PatchFlags explain_flags, batch_flags;

    auto* fit = app.add_subcommand("fit", "Fit a confidence model on a labeled pairs file");
    fit->add_option("--pairs", pairs, "Pairs CSV")->required();
    fit->add_option("--backend", backend, "reference | cmd:<command>")->capture_default_str();
    fit->add_option("--model-name", model_name, "Name for an external backend");
    fit->add_option("--out", out, "Output model file")->required();
    fit->add_flag("--field", field, "Fit one global model (validation set for field data)");

    auto* explain = app.add_subcommand("explain", "Compute X-Maps for one image pair");
    explain->add_option("--img1", img1)->required();
    explain->add_option("--img2", img2)->required();
    explain->add_option("--backend", backend)->capture_default_str();
    explain->add_option("--model-name", model_name);
    explain->add_option("--method", method, "I|II|III")->capture_default_str();
    explain->add_option("--conf", conf, "Confidence model for a C-Score");
    explain->add_option("--out", out, "Output directory")->required();
    explain_flags.add_to(explain);

    auto* batch = app.add_subcommand("batch", "Run the full pipeline over a pairs file");
    batch->add_option("--pairs", pairs)->required();
    batch->add_option("--backend", backend)->capture_default_str();
    batch->add_option("--model-name", model_name);
    batch->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
    batch->add_option("--dataset", dataset, "Dataset name (default: pairs file stem)");
    batch->add_option("--conf", conf, "Pre-fitted confidence model (field-data mode)");
    batch->add_option("--out", out, "Store root")->required();
    batch_flags.add_to(batch);

    auto* serve = app.add_subcommand("serve", "Serve the HTTP API over a store");
    serve->add_option("--store", store, "Store root (or XVERIFY_STORE)");
    serve->add_option("--addr", addr, "HOST:PORT (or XVERIFY_ADDR)")->capture_default_str();
    serve->add_option("--backend", serve_backend, "Backend for live recomputation");
    serve->add_option("--model-name", model_name);
    serve->add_option("--conf", conf, "Confidence model for live recomputation");
    serve->add_option("--cors", cors, "Allowed CORS origin (repeatable, '*' for any)");
    serve->add_option("--ui", ui_dir, "Static web UI directory mounted at /");

    auto* embed = app.add_subcommand("embed", "Reference backend speaking the subprocess protocol");
    embed->add_option("manifest", manifest)->required();
    embed->add_option("output", output)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    try {
        if (*fit) return cmd_fit(pairs, backend, model_name, out, field);
        if (*explain) return cmd_explain(img1, img2, backend, model_name, method, explain_flags, conf, out);
        if (*batch) return cmd_batch(pairs, backend, model_name, methods, batch_flags, dataset, conf, out);
        if (*serve) {
            if (store.empty()) {
                std::cerr << "error: --store or XVERIFY_STORE is required\n";
                return kExitUsage;
            }
            return cmd_serve(store, addr, serve_backend, model_name, conf, cors, ui_dir);
        }
        if (*embed) return cmd_embed(manifest, output);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
