/**
 * @file service.hpp
 * @brief HTTP API over a results store.
 *
 * Read endpoints:
 *   GET  /api/datasets
 *   GET  /api/models
 *   GET  /api/pairs?dataset=&model=&label=&prediction=&correct=&c_min=&c_max=&d_min=&d_max=
 *                  &sort=&order=&page=&per_page=
 *   GET  /api/pairs/{id}?dataset=&model=
 *   GET  /api/pairs/{id}/artifact?kind=xmap|smap|source&which=1|2&method=I|II|III
 *   GET  /api/pairs/{id}/decisions?dataset=
 *   GET  /api/jobs/{id}
 *   GET  /api/jobs/{id}/artifact?kind=&which=
 * Write endpoints:
 *   POST /api/pairs/{id}/decision      {verdict, operator, note}
 *   POST /api/explain                  multipart: img1, img2, params (JSON)
 *
 * Errors are JSON documents {error, detail} with a matching status code.
 */
#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xverify/confidence.hpp"
#include "xverify/embedding.hpp"

namespace xverify {

struct ApiConfig {
    std::filesystem::path store_root;
    /// Optional model for scoring live recomputations.
    std::optional<std::filesystem::path> confidence_path;
    /// Backend for live recomputation; without it POST /api/explain is 503.
    std::shared_ptr<const EmbeddingBackend> backend;
    /// Allowed CORS origins; empty allows localhost origins only, "*" allows any.
    std::vector<std::string> cors_allow;
    /// Static files (the web UI) mounted at "/" when set.
    std::optional<std::filesystem::path> static_dir;
    /// Scratch area for recompute jobs; a temp directory when empty.
    std::filesystem::path scratch_root;
    std::size_t job_workers = 4;
    std::size_t job_queue_capacity = 64;
    /// How long POST /api/explain waits before answering 202 with a job id.
    std::chrono::milliseconds sync_wait{30000};
};

/// Splits "HOST:PORT"; throws InvalidParameter on malformed input.
std::pair<std::string, int> parse_address(const std::string& addr);

class Service {
public:
    /// Throws InvalidArgument when the store root is not a readable directory.
    explicit Service(ApiConfig config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to host:port (port 0 picks a free port) and returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace xverify
