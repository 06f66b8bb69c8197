#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xverify/confidence.hpp"
#include "xverify/datastore.hpp"
#include "xverify/embedding.hpp"
#include "xverify/xmap.hpp"

namespace xverify {

struct BatchOptions {
    std::string dataset;  // defaults to the pairs' dataset
    std::vector<Method> methods{Method::I, Method::II, Method::III};
    std::vector<PatchSpec> specs = default_patch_specs();
    /// Pre-fitted model (field-data mode). When absent the model is fitted
    /// fold-wise on the labeled pairs of the batch.
    std::optional<ConfidenceModel> confidence;
};

struct BatchSummary {
    std::filesystem::path store_dir;
    std::size_t computed = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::optional<ConfidenceModel> confidence;
};

/// Writes X-Map artifacts for one pair/method into `dir`; returns the
/// artifact keys and file names that were written.
std::map<std::string, std::string> write_xmap_artifacts(const std::filesystem::path& dir, const XMapResult& result);

/// Full pipeline: distances, confidence model, X-Maps and the index. Re-runs
/// skip pairs whose stored record has identical parameters and artifacts.
/// Unreadable images and backend failures become failed records.
BatchSummary run_batch(const std::vector<PairRecord>& pairs, const EmbeddingBackend& backend,
                       const BatchOptions& options, const std::filesystem::path& out_root);

}  // namespace xverify
