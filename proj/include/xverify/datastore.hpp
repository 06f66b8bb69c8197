/**
 * @file datastore.hpp
 * @brief Pairs files, the on-disk results store and the decision log.
 *
 * Store layout:
 *
 *     <root>/<dataset>/decisions.jsonl
 *     <root>/<dataset>/<model>/index.jsonl
 *     <root>/<dataset>/<model>/confidence.conf
 *     <root>/<dataset>/<model>/<pair_id>/meta.json
 *     <root>/<dataset>/<model>/<pair_id>/{source,xmap,smap}_*.png
 */
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xverify/confidence.hpp"
#include "xverify/occlusion.hpp"
#include "xverify/xmap.hpp"

namespace xverify {

namespace fs = std::filesystem;

struct PairRecord {
    std::string pair_id;
    fs::path path1;
    fs::path path2;
    Label label = Label::Unknown;
    int fold = 0;
    std::string dataset;
};

/// CSV with header `pair_id,path1,path2,label,fold`. Relative image paths are
/// resolved against the CSV's directory. `dataset` defaults to the file stem.
/// Throws Parse (with line number) on malformed rows and duplicate ids.
std::vector<PairRecord> load_pairs(const fs::path& csv, std::string dataset = {}, bool allow_unknown = false);
std::vector<PairRecord> parse_pairs(const std::string& text, const std::string& dataset, const fs::path& base_dir,
                                    bool allow_unknown = false);

/// Keeps [A-Za-z0-9._-], maps everything else to '_'.
std::string sanitize_name(const std::string& name);

/// UTC, RFC 3339, second precision.
std::string utc_timestamp();

nlohmann::json to_json(const PatchSpec& spec);
PatchSpec patch_spec_from_json(const nlohmann::json& j);

struct ResultRecord {
    std::string pair_id;
    std::string dataset;
    std::string model;
    Label label = Label::Unknown;
    int fold = 0;
    std::string path1;
    std::string path2;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;
    std::optional<double> d_orig;
    std::optional<Label> prediction;
    std::optional<double> threshold;
    std::optional<double> c_score;
    std::vector<Method> methods;
    /// Artifact key (e.g. "xmap_1_III", "source_2") -> file name in the pair directory.
    std::map<std::string, std::string> artifacts;
    std::string created_at;
    std::vector<PatchSpec> parameters;
    /// Reserved; never filled by the pipeline.
    std::optional<double> image_quality;

    bool ok() const { return status == "ok"; }
    /// Empty when the label is unknown or the pair failed.
    std::optional<bool> correct() const;

    nlohmann::json to_json() const;
    static ResultRecord from_json(const nlohmann::json& j);

    friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

std::string artifact_key(const std::string& kind, int which, std::optional<Method> method = std::nullopt);

enum class Verdict { Genuine, Imposter, Unsure };
const char* to_string(Verdict v);
Verdict parse_verdict(const std::string& s);

struct DecisionRecord {
    std::string pair_id;
    std::string operator_id;
    Verdict verdict = Verdict::Unsure;
    std::string note;
    std::string created_at;

    nlohmann::json to_json() const;
    static DecisionRecord from_json(const nlohmann::json& j);

    friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

struct ResultFilter {
    std::optional<std::string> dataset;
    std::optional<std::string> model;
    std::optional<Label> label;
    std::optional<Label> prediction;
    std::optional<bool> correct;
    std::optional<double> c_min;
    std::optional<double> c_max;
    std::optional<double> d_min;
    std::optional<double> d_max;

    bool matches(const ResultRecord& r) const;
};

enum class SortKey { None, Distance, CScore, PairId };
SortKey parse_sort_key(const std::string& s);

struct SortSpec {
    SortKey key = SortKey::None;
    bool descending = false;
};

struct PageRequest {
    std::size_t page = 1;  // 1-based
    std::size_t per_page = 20;
};

struct ResultPage {
    std::vector<ResultRecord> items;
    std::size_t total = 0;
    std::size_t page = 1;
    std::size_t per_page = 20;
};

/// Writes `content` to `path` through a temp file and rename.
void write_file_atomic(const fs::path& path, const std::string& content);

/// Read access to a results store plus the decision log. Reads go straight to
/// disk so concurrent batch runs are observed at index-snapshot granularity.
class ResultsStore {
public:
    explicit ResultsStore(fs::path root);

    const fs::path& root() const { return root_; }
    fs::path model_dir(const std::string& dataset, const std::string& model) const;
    fs::path pair_dir(const std::string& dataset, const std::string& model, const std::string& pair_id) const;

    std::vector<std::string> datasets() const;
    std::vector<std::string> models(const std::optional<std::string>& dataset = std::nullopt) const;

    /// Empty when the index does not exist.
    std::vector<ResultRecord> read_index(const std::string& dataset, const std::string& model) const;
    void write_index(const std::string& dataset, const std::string& model,
                     const std::vector<ResultRecord>& records) const;

    /// Every record across datasets/models, in (dataset, model, index) order.
    std::vector<ResultRecord> all_records() const;

    /// Throws NotFound for an unknown pair. Dataset/model may be omitted when
    /// exactly one store matches the pair id.
    ResultRecord read_result(const std::string& pair_id, const std::optional<std::string>& dataset = std::nullopt,
                             const std::optional<std::string>& model = std::nullopt) const;

    ResultPage list_results(const ResultFilter& filter, const SortSpec& sort = {}, const PageRequest& page = {}) const;

    /// Path of an artifact file; throws NotFound when not listed or missing.
    fs::path artifact_path(const ResultRecord& r, const std::string& key) const;

    bool has_pair(const std::string& dataset, const std::string& pair_id) const;
    DecisionRecord append_decision(const std::string& dataset, DecisionRecord record) const;
    std::vector<DecisionRecord> decisions(const std::string& dataset, const std::string& pair_id) const;

private:
    fs::path root_;
};

/// Exclusive writer lock on one (dataset, model) store; throws Locked when
/// another writer holds it.
class StoreLock {
public:
    explicit StoreLock(fs::path dir);
    ~StoreLock();
    StoreLock(const StoreLock&) = delete;
    StoreLock& operator=(const StoreLock&) = delete;

private:
    fs::path path_;
};

}  // namespace xverify
