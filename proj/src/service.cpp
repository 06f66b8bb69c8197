#include "xverify/service.hpp"

#include <unistd.h>

#include <cctype>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "xverify/batch.hpp"
#include "xverify/datastore.hpp"
#include "xverify/error.hpp"
#include "xverify/xmap.hpp"

namespace xverify {

using nlohmann::json;

std::pair<std::string, int> parse_address(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
        fail(ErrorKind::InvalidParameter, "address must be HOST:PORT, got '" + addr + "'");
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(addr.substr(colon + 1), &used);
        if (used != addr.size() - colon - 1) throw std::invalid_argument("port");
    } catch (const std::exception&) {
        fail(ErrorKind::InvalidParameter, "invalid port in '" + addr + "'");
    }
    if (port < 0 || port > 65535) fail(ErrorKind::InvalidParameter, "port out of range in '" + addr + "'");
    return {addr.substr(0, colon), port};
}

namespace {

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

struct HttpError {
    int status;
    std::string error;
    std::string detail;
};

int status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotFound: return 404;
        case ErrorKind::InvalidParameter:
        case ErrorKind::InvalidArgument:
        case ErrorKind::Parse: return 400;
        case ErrorKind::DegenerateImage:
        case ErrorKind::DegenerateSplit:
        case ErrorKind::InsufficientData: return 422;
        case ErrorKind::Backend: return 502;
        case ErrorKind::Locked: return 409;
        case ErrorKind::Io: return 500;
    }
    return 500;
}

const char* reason_for(int status) {
    switch (status) {
        case 400: return "bad_request";
        case 404: return "not_found";
        case 409: return "conflict";
        case 422: return "unprocessable";
        case 429: return "too_many_requests";
        case 502: return "backend_error";
        case 503: return "unavailable";
        default: return "internal_error";
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& detail) {
    send_json(res, status, json{{"error", reason_for(status)}, {"detail", detail}});
}

std::string url_encode(const std::string& s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

std::optional<std::string> param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    auto v = req.get_param_value(key);
    if (v.empty()) return std::nullopt;
    return v;
}

double number_param(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(key);
        return d;
    } catch (const std::exception&) {
        fail(ErrorKind::InvalidParameter, key + " must be a number");
    }
}

std::size_t count_param(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size() || n < 1) throw std::invalid_argument(key);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        fail(ErrorKind::InvalidParameter, key + " must be a positive integer");
    }
}

bool bool_param(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(ErrorKind::InvalidParameter, key + " must be true or false");
}

Label label_param(const std::string& key, const std::string& v) {
    try {
        return parse_label(v);
    } catch (const Error&) {
        fail(ErrorKind::InvalidParameter, key + " must be genuine, imposter or unknown");
    }
}

std::string pair_artifact_url(const ResultRecord& r, const std::string& kind, int which,
                              std::optional<Method> method) {
    std::string url = "/api/pairs/" + url_encode(r.pair_id) + "/artifact?dataset=" + url_encode(r.dataset) +
                      "&model=" + url_encode(r.model) + "&kind=" + kind + "&which=" + std::to_string(which);
    if (method) url += std::string("&method=") + to_string(*method);
    return url;
}

json record_urls(const ResultRecord& r) {
    json urls = json::object();
    for (const auto& [key, file] : r.artifacts) {
        // key: kind_which[_method]
        const auto first = key.find('_');
        const auto second = key.find('_', first + 1);
        const std::string kind = key.substr(0, first);
        const int which = std::stoi(key.substr(first + 1, second == std::string::npos ? std::string::npos
                                                                                       : second - first - 1));
        std::optional<Method> method;
        if (second != std::string::npos) method = parse_method(key.substr(second + 1));
        urls[key] = pair_artifact_url(r, kind, which, method);
    }
    return urls;
}

json record_detail(const ResultRecord& r) {
    auto j = r.to_json();
    j["urls"] = record_urls(r);
    return j;
}

json record_summary(const ResultRecord& r) {
    auto j = record_detail(r);
    j.erase("parameters");
    j.erase("path1");
    j.erase("path2");
    return j;
}

// ---------------------------------------------------------------------------
// Recompute jobs
// ---------------------------------------------------------------------------

struct ExplainRequest {
    Image img1;
    Image img2;
    Method method = Method::III;
    std::vector<PatchSpec> specs;
};

struct Job {
    std::string id;
    std::string status = "queued";  // queued | running | done | failed
    json result;
    std::string error;
    int error_status = 500;
    std::filesystem::path dir;
};

class JobQueue {
public:
    using Work = std::function<void(Job&)>;

    JobQueue(std::size_t workers, std::size_t capacity) : capacity_(capacity) {
        for (std::size_t i = 0; i < std::max<std::size_t>(1, workers); ++i)
            threads_.emplace_back([this] { worker(); });
    }

    ~JobQueue() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        for (auto& t : threads_) t.join();
    }

    /// Empty when the queue is full.
    std::optional<std::string> submit(std::filesystem::path dir_root, Work work) {
        std::lock_guard lock(mutex_);
        if (pending_.size() >= capacity_) return std::nullopt;
        const auto id = "job-" + std::to_string(++counter_);
        auto job = std::make_shared<Job>();
        job->id = id;
        job->dir = dir_root / id;
        jobs_[id] = job;
        pending_.push_back({job, std::move(work)});
        wake_.notify_one();
        return id;
    }

    std::optional<Job> snapshot(const std::string& id) const {
        std::lock_guard lock(mutex_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) return std::nullopt;
        return *it->second;
    }

    /// Waits until the job finished or the timeout expired.
    std::optional<Job> wait(const std::string& id, std::chrono::milliseconds timeout) const {
        std::unique_lock lock(mutex_);
        const auto it = jobs_.find(id);
        if (it == jobs_.end()) return std::nullopt;
        const auto job = it->second;
        done_.wait_for(lock, timeout, [&] { return job->status == "done" || job->status == "failed"; });
        return *job;
    }

private:
    void worker() {
        for (;;) {
            std::pair<std::shared_ptr<Job>, Work> item;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stopping_ || !pending_.empty(); });
                if (stopping_) return;
                item = std::move(pending_.front());
                pending_.pop_front();
                item.first->status = "running";
            }
            Job local = *item.first;
            try {
                item.second(local);
                local.status = "done";
            } catch (const Error& e) {
                local.status = "failed";
                local.error = e.what();
                local.error_status = status_for(e.kind());
            } catch (const std::exception& e) {
                local.status = "failed";
                local.error = e.what();
            }
            {
                std::lock_guard lock(mutex_);
                *item.first = std::move(local);
            }
            done_.notify_all();
        }
    }

    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable wake_;
    mutable std::condition_variable done_;
    std::deque<std::pair<std::shared_ptr<Job>, Work>> pending_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::vector<std::thread> threads_;
    unsigned long counter_ = 0;
    bool stopping_ = false;
};

std::vector<int> parse_int_list(const json& j, const std::string& key) {
    std::vector<int> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(v.get<int>());
    } else if (j.is_string()) {
        std::stringstream in(j.get<std::string>());
        std::string tok;
        while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
    } else if (j.is_number_integer()) {
        out.push_back(j.get<int>());
    } else {
        fail(ErrorKind::InvalidParameter, key + " must be a list of integers");
    }
    return out;
}

/// Mirrors the CLI flags of `xverify explain`.
std::pair<Method, std::vector<PatchSpec>> parse_explain_params(const json& p) {
    try {
        const Method method = parse_method(p.value("method", std::string("III")));
        const auto sizes = p.contains("patch_sizes") ? parse_int_list(p["patch_sizes"], "patch_sizes")
                                                     : std::vector<int>{7, 14, 28};
        if (sizes.empty()) fail(ErrorKind::InvalidParameter, "patch_sizes is empty");
        PatchSpec base;
        base.stride = p.value("stride", 5);
        base.fill = parse_patch_fill(p.value("fill", std::string("black")));
        base.shape = parse_patch_shape(p.value("shape", std::string("rect")));
        base.noise_seed = p.value("seed", std::uint64_t{0});
        if (p.contains("edge_blur") && !p["edge_blur"].is_null()) {
            const auto& e = p["edge_blur"];
            if (e.is_array() && e.size() == 2) {
                base.edge_blur = EdgeBlur{e[0].get<int>(), e[1].get<double>()};
            } else if (e.is_string()) {
                const auto s = e.get<std::string>();
                const auto comma = s.find(',');
                if (comma == std::string::npos) fail(ErrorKind::InvalidParameter, "edge_blur must be K,SIGMA");
                base.edge_blur = EdgeBlur{std::stoi(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
            } else {
                fail(ErrorKind::InvalidParameter, "edge_blur must be [K, SIGMA] or \"K,SIGMA\"");
            }
        }
        std::vector<PatchSpec> specs;
        for (int size : sizes) {
            auto s = base;
            s.size = size;
            s.validate();
            if (occlusion_count(s.size, s.stride) == 0)
                fail(ErrorKind::InvalidParameter, "patch size " + std::to_string(size) + " yields no occlusions");
            specs.push_back(s);
        }
        return {method, specs};
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::InvalidParameter, std::string("invalid explain parameters: ") + e.what());
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

struct Service::Impl {
    ApiConfig config;
    ResultsStore store;
    std::optional<ConfidenceModel> confidence;
    httplib::Server server;
    JobQueue jobs;
    bool owns_scratch = false;

    explicit Impl(ApiConfig c)
        : config(std::move(c)), store(config.store_root), jobs(config.job_workers, config.job_queue_capacity) {
        std::error_code ec;
        if (!std::filesystem::is_directory(config.store_root, ec))
            fail(ErrorKind::InvalidArgument, "store root is not a directory: " + config.store_root.string());
        if (config.confidence_path) confidence = ConfidenceModel::load(*config.confidence_path);
        if (config.scratch_root.empty()) {
            config.scratch_root =
                std::filesystem::temp_directory_path() / ("xverify-jobs-" + std::to_string(::getpid()));
            owns_scratch = true;
        }
        std::filesystem::create_directories(config.scratch_root);
        routes();
    }

    ~Impl() {
        if (owns_scratch) {
            std::error_code ec;
            std::filesystem::remove_all(config.scratch_root, ec);
        }
    }

    bool origin_allowed(const std::string& origin) const {
        if (config.cors_allow.empty())
            return origin.rfind("http://localhost", 0) == 0 || origin.rfind("http://127.0.0.1", 0) == 0;
        for (const auto& a : config.cors_allow)
            if (a == "*" || a == origin) return true;
        return false;
    }

    /// Wraps a handler so library errors become JSON error responses.
    template <typename F>
    httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, status_for(e.kind()), e.what());
            } catch (const json::exception& e) {
                send_error(res, 400, e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        };
    }

    std::string dataset_for_pair(const std::string& pair_id, const std::optional<std::string>& dataset) const {
        if (dataset) return *dataset;
        std::vector<std::string> hits;
        for (const auto& d : store.datasets())
            if (store.has_pair(d, pair_id)) hits.push_back(d);
        if (hits.size() == 1) return hits.front();
        if (hits.empty()) fail(ErrorKind::NotFound, "unknown pair '" + pair_id + "'");
        fail(ErrorKind::InvalidParameter, "pair '" + pair_id + "' exists in several datasets; give dataset");
    }

    void routes() {
        server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            const auto origin = req.get_header_value("Origin");
            if (!origin.empty() && origin_allowed(origin)) {
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Vary", "Origin");
            }
        });
        server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });

        server.Get("/api/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
                       send_json(res, 200, json{{"datasets", store.datasets()}});
                   }));

        server.Get("/api/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, 200, json{{"models", store.models(param(req, "dataset"))}});
                   }));

        server.Get("/api/pairs", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       list_pairs(req, res);
                   }));

        server.Get(R"(/api/pairs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto r = store.read_result(req.matches[1], param(req, "dataset"), param(req, "model"));
                       send_json(res, 200, record_detail(r));
                   }));

        server.Get(R"(/api/pairs/([^/]+)/artifact)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) { pair_artifact(req, res); }));

        server.Post(R"(/api/pairs/([^/]+)/decision)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) { post_decision(req, res); }));

        server.Get(R"(/api/pairs/([^/]+)/decisions)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const std::string pair_id = req.matches[1];
                       const auto dataset = dataset_for_pair(pair_id, param(req, "dataset"));
                       json items = json::array();
                       for (const auto& d : store.decisions(dataset, pair_id)) items.push_back(d.to_json());
                       send_json(res, 200, json{{"items", items}});
                   }));

        server.Post("/api/explain",
                    guarded([this](const httplib::Request& req, httplib::Response& res) { post_explain(req, res); }));

        server.Get(R"(/api/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto job = jobs.snapshot(req.matches[1]);
                       if (!job) fail(ErrorKind::NotFound, "unknown job");
                       send_json(res, 200, job_json(*job));
                   }));

        server.Get(R"(/api/jobs/([^/]+)/artifact)",
                   guarded([this](const httplib::Request& req, httplib::Response& res) { job_artifact(req, res); }));

        if (config.static_dir) server.set_mount_point("/", config.static_dir->string());
    }

    void list_pairs(const httplib::Request& req, httplib::Response& res) const {
        ResultFilter f;
        f.dataset = param(req, "dataset");
        f.model = param(req, "model");
        if (auto v = param(req, "label")) f.label = label_param("label", *v);
        if (auto v = param(req, "prediction")) f.prediction = label_param("prediction", *v);
        if (auto v = param(req, "correct")) f.correct = bool_param("correct", *v);
        if (auto v = param(req, "c_min")) f.c_min = number_param("c_min", *v);
        if (auto v = param(req, "c_max")) f.c_max = number_param("c_max", *v);
        if (auto v = param(req, "d_min")) f.d_min = number_param("d_min", *v);
        if (auto v = param(req, "d_max")) f.d_max = number_param("d_max", *v);
        SortSpec sort;
        if (auto v = param(req, "sort")) sort.key = parse_sort_key(*v);
        if (auto v = param(req, "order")) {
            if (*v != "asc" && *v != "desc") fail(ErrorKind::InvalidParameter, "order must be asc or desc");
            sort.descending = *v == "desc";
        }
        PageRequest page;
        if (auto v = param(req, "page")) page.page = count_param("page", *v);
        if (auto v = param(req, "per_page")) page.per_page = count_param("per_page", *v);

        const auto result = store.list_results(f, sort, page);
        json items = json::array();
        for (const auto& r : result.items) items.push_back(record_summary(r));
        send_json(res, 200,
                  json{{"items", items}, {"total", result.total}, {"page", result.page}, {"per_page", result.per_page}});
    }

    static std::string artifact_key_from(const httplib::Request& req, bool with_method) {
        const auto kind = param(req, "kind").value_or("");
        if (kind != "xmap" && kind != "smap" && kind != "source")
            fail(ErrorKind::InvalidParameter, "kind must be xmap, smap or source");
        const auto which = param(req, "which").value_or("");
        if (which != "1" && which != "2") fail(ErrorKind::InvalidParameter, "which must be 1 or 2");
        std::optional<Method> method;
        if (kind != "source" && with_method) method = parse_method(param(req, "method").value_or("III"));
        return artifact_key(kind, std::stoi(which), method);
    }

    static void send_file(httplib::Response& res, const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::NotFound, "artifact file missing");
        std::stringstream bytes;
        bytes << in.rdbuf();
        res.status = 200;
        res.set_content(bytes.str(), "image/png");
    }

    void pair_artifact(const httplib::Request& req, httplib::Response& res) const {
        const auto r = store.read_result(req.matches[1], param(req, "dataset"), param(req, "model"));
        send_file(res, store.artifact_path(r, artifact_key_from(req, true)));
    }

    void post_decision(const httplib::Request& req, httplib::Response& res) const {
        const std::string pair_id = req.matches[1];
        json body;
        if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0 || !req.body.empty()) {
            body = json::parse(req.body.empty() ? "{}" : req.body);
        }
        auto field = [&](const char* key) -> std::string {
            if (body.contains(key) && body[key].is_string()) return body[key].get<std::string>();
            return req.has_param(key) ? req.get_param_value(key) : std::string{};
        };
        DecisionRecord d;
        d.pair_id = pair_id;
        d.verdict = parse_verdict(field("verdict"));
        d.operator_id = field("operator");
        if (d.operator_id.empty()) fail(ErrorKind::InvalidParameter, "operator is required");
        d.note = field("note");

        std::string dataset;
        try {
            dataset = dataset_for_pair(pair_id, param(req, "dataset"));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::NotFound) {
                send_error(res, 409, e.what());
                return;
            }
            throw;
        }
        if (!store.has_pair(dataset, pair_id)) {
            send_error(res, 409, "unknown pair '" + pair_id + "' in dataset '" + dataset + "'");
            return;
        }
        send_json(res, 201, store.append_decision(dataset, d).to_json());
    }

    json job_json(const Job& job) const {
        json j = job.status == "done" ? job.result : json::object();
        j["job_id"] = job.id;
        j["status"] = job.status;
        if (job.status == "failed") {
            j["error"] = reason_for(job.error_status);
            j["detail"] = job.error;
        }
        return j;
    }

    void post_explain(const httplib::Request& req, httplib::Response& res) {
        if (!config.backend) {
            send_error(res, 503, "live recomputation is not configured (no backend)");
            return;
        }
        if (!req.has_file("img1") || !req.has_file("img2"))
            fail(ErrorKind::InvalidParameter, "multipart fields img1 and img2 are required");
        json params = json::object();
        if (req.has_file("params")) {
            const auto text = req.get_file_value("params").content;
            if (!text.empty()) params = json::parse(text);
        } else if (req.has_param("params")) {
            params = json::parse(req.get_param_value("params"));
        }
        if (!params.is_object()) fail(ErrorKind::InvalidParameter, "params must be a JSON object");

        auto decode = [](const std::string& bytes) {
            return decode_png(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        };
        auto request = std::make_shared<ExplainRequest>();
        request->img1 = decode(req.get_file_value("img1").content);
        request->img2 = decode(req.get_file_value("img2").content);
        std::tie(request->method, request->specs) = parse_explain_params(params);

        const auto id = jobs.submit(config.scratch_root, [this, request](Job& job) { run_explain(job, *request); });
        if (!id) {
            send_error(res, 429, "recompute queue is full");
            return;
        }
        const auto job = jobs.wait(*id, config.sync_wait);
        if (job->status == "done") {
            send_json(res, 200, job_json(*job));
        } else if (job->status == "failed") {
            send_json(res, job->error_status, job_json(*job));
        } else {
            send_json(res, 202, job_json(*job));
        }
    }

    void run_explain(Job& job, const ExplainRequest& request) const {
        const auto ctx = make_context(request.img1, request.img2, *config.backend, request.specs);
        const auto result = explain_pair(ctx, request.method);
        std::filesystem::create_directories(job.dir);
        write_png(job.dir / "source_1.png", request.img1);
        write_png(job.dir / "source_2.png", request.img2);
        write_xmap_artifacts(job.dir, result);

        json urls = json::object();
        for (const char* kind : {"xmap", "smap", "source"})
            for (int which : {1, 2})
                urls[std::string(kind) + "_" + std::to_string(which)] =
                    "/api/jobs/" + job.id + "/artifact?kind=" + kind + "&which=" + std::to_string(which);
        json params = json::array();
        for (const auto& s : request.specs) params.push_back(to_json(s));

        json out{{"method", to_string(request.method)},
                 {"d_orig", result.d_orig},
                 {"parameters", params},
                 {"merged_max_abs", {result.merged[0].max_abs(), result.merged[1].max_abs()}},
                 {"neutral", result.maps[0].max_abs() == 0.0 && result.maps[1].max_abs() == 0.0},
                 {"urls", urls}};
        if (confidence) {
            const auto& m = confidence->for_fold(std::nullopt);
            const auto c = c_score(result.d_orig, m.threshold, m.params);
            out["threshold"] = m.threshold;
            out["c_score"] = c.c_score;
            out["prediction"] = to_string(c.prediction);
        }
        job.result = std::move(out);
        // Scratch files keep the method-qualified names; expose them by side.
        for (int which : {1, 2}) {
            for (const char* kind : {"xmap", "smap"}) {
                const auto from = job.dir / (artifact_key(kind, which, request.method) + ".png");
                const auto to = job.dir / (artifact_key(kind, which) + ".png");
                std::filesystem::copy_file(from, to, std::filesystem::copy_options::overwrite_existing);
            }
        }
    }

    void job_artifact(const httplib::Request& req, httplib::Response& res) const {
        const auto job = jobs.snapshot(req.matches[1]);
        if (!job) fail(ErrorKind::NotFound, "unknown job");
        if (job->status != "done") fail(ErrorKind::NotFound, "job has no artifacts yet");
        send_file(res, job->dir / (artifact_key_from(req, false) + ".png"));
    }
};

Service::Service(ApiConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
Service::~Service() {
    stop();
}

int Service::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->server.bind_to_any_port(host);
        if (p < 0) fail(ErrorKind::Io, "cannot bind " + host);
        return p;
    }
    if (!impl_->server.bind_to_port(host, port))
        fail(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::run() { impl_->server.listen_after_bind(); }
void Service::stop() {
    if (impl_) impl_->server.stop();
}
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace xverify
