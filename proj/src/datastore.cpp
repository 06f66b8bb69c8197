#include "xverify/datastore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "xverify/error.hpp"

namespace xverify {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Pairs files
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(std::move(cur));
    return fields;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::vector<PairRecord> parse_pairs(const std::string& text, const std::string& dataset, const fs::path& base_dir,
                                    bool allow_unknown) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
    };
    if (!next_line()) fail(ErrorKind::Parse, "pairs file is empty");
    if (line != "pair_id,path1,path2,label,fold")
        fail(ErrorKind::Parse, "line 1: expected header 'pair_id,path1,path2,label,fold'");

    std::vector<PairRecord> out;
    std::set<std::string> ids;
    while (next_line()) {
        if (line.empty()) continue;
        const auto where = "line " + std::to_string(line_no) + ": ";
        const auto f = split_csv_line(line, line_no);
        if (f.size() != 5) fail(ErrorKind::Parse, where + "expected 5 fields, got " + std::to_string(f.size()));
        PairRecord r;
        r.pair_id = f[0];
        if (r.pair_id.empty()) fail(ErrorKind::Parse, where + "empty pair_id");
        if (f[1].empty() || f[2].empty()) fail(ErrorKind::Parse, where + "empty image path");
        r.path1 = fs::path(f[1]).is_absolute() ? fs::path(f[1]) : base_dir / f[1];
        r.path2 = fs::path(f[2]).is_absolute() ? fs::path(f[2]) : base_dir / f[2];
        try {
            r.label = parse_label(f[3]);
        } catch (const Error& e) {
            fail(ErrorKind::Parse, where + e.what());
        }
        if (r.label == Label::Unknown && !allow_unknown)
            fail(ErrorKind::Parse, where + "label 'unknown' is only allowed in field-data mode");
        int fold = 0;
        try {
            std::size_t used = 0;
            fold = std::stoi(f[4], &used);
            if (used != f[4].size()) throw std::invalid_argument("fold");
        } catch (const std::exception&) {
            fail(ErrorKind::Parse, where + "fold is not an integer");
        }
        if (fold < 0 || fold >= kFoldCount) fail(ErrorKind::Parse, where + "fold out of range [0,9]");
        r.fold = fold;
        r.dataset = dataset;
        if (!ids.insert(r.pair_id).second) fail(ErrorKind::Parse, where + "duplicate pair_id '" + r.pair_id + "'");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PairRecord> load_pairs(const fs::path& csv, std::string dataset, bool allow_unknown) {
    if (dataset.empty()) dataset = csv.stem().string();
    return parse_pairs(read_text(csv), sanitize_name(dataset), csv.parent_path(), allow_unknown);
}

std::string sanitize_name(const std::string& name) {
    std::string out;
    for (char c : name) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                          c == '_' || c == '-';
        out += keep ? c : '_';
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// JSON mapping
// ---------------------------------------------------------------------------

json to_json(const PatchSpec& spec) {
    json j = {{"size", spec.size},
              {"stride", spec.stride},
              {"shape", to_string(spec.shape)},
              {"fill", to_string(spec.fill)},
              {"noise_seed", spec.noise_seed}};
    j["edge_blur"] = spec.edge_blur ? json::array({spec.edge_blur->kernel, spec.edge_blur->sigma}) : json(nullptr);
    return j;
}

PatchSpec patch_spec_from_json(const json& j) {
    PatchSpec s;
    s.size = j.at("size").get<int>();
    s.stride = j.at("stride").get<int>();
    s.shape = parse_patch_shape(j.value("shape", "rect"));
    s.fill = parse_patch_fill(j.value("fill", "black"));
    s.noise_seed = j.value("noise_seed", std::uint64_t{0});
    if (j.contains("edge_blur") && !j["edge_blur"].is_null())
        s.edge_blur = EdgeBlur{j["edge_blur"].at(0).get<int>(), j["edge_blur"].at(1).get<double>()};
    return s;
}

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> optional_double(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

}  // namespace

std::optional<bool> ResultRecord::correct() const {
    if (!ok() || label == Label::Unknown || !prediction) return std::nullopt;
    return *prediction == label;
}

json ResultRecord::to_json() const {
    json methods_json = json::array();
    for (auto m : methods) methods_json.push_back(to_string(m));
    json params = json::array();
    for (const auto& p : parameters) params.push_back(xverify::to_json(p));
    return json{{"pair_id", pair_id},
                {"dataset", dataset},
                {"model", model},
                {"label", to_string(label)},
                {"fold", fold},
                {"path1", path1},
                {"path2", path2},
                {"status", status},
                {"error", error},
                {"d_orig", optional_json(d_orig)},
                {"prediction", prediction ? json(to_string(*prediction)) : json(nullptr)},
                {"threshold", optional_json(threshold)},
                {"c_score", optional_json(c_score)},
                {"correct", optional_json(correct())},
                {"methods", methods_json},
                {"artifacts", artifacts},
                {"created_at", created_at},
                {"parameters", params},
                {"image_quality", optional_json(image_quality)}};
}

ResultRecord ResultRecord::from_json(const json& j) {
    ResultRecord r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.label = parse_label(j.at("label").get<std::string>());
    r.fold = j.at("fold").get<int>();
    r.path1 = j.value("path1", "");
    r.path2 = j.value("path2", "");
    r.status = j.value("status", "ok");
    r.error = j.value("error", "");
    r.d_orig = optional_double(j, "d_orig");
    if (j.contains("prediction") && !j["prediction"].is_null())
        r.prediction = parse_label(j["prediction"].get<std::string>());
    r.threshold = optional_double(j, "threshold");
    r.c_score = optional_double(j, "c_score");
    for (const auto& m : j.value("methods", json::array())) r.methods.push_back(parse_method(m.get<std::string>()));
    r.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
    r.created_at = j.value("created_at", "");
    for (const auto& p : j.value("parameters", json::array())) r.parameters.push_back(patch_spec_from_json(p));
    r.image_quality = optional_double(j, "image_quality");
    return r;
}

std::string artifact_key(const std::string& kind, int which, std::optional<Method> method) {
    std::string key = kind + "_" + std::to_string(which);
    if (method) key += std::string("_") + to_string(*method);
    return key;
}

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Genuine: return "genuine";
        case Verdict::Imposter: return "imposter";
        case Verdict::Unsure: return "unsure";
    }
    return "unsure";
}

Verdict parse_verdict(const std::string& s) {
    if (s == "genuine") return Verdict::Genuine;
    if (s == "imposter") return Verdict::Imposter;
    if (s == "unsure") return Verdict::Unsure;
    fail(ErrorKind::InvalidParameter, "unknown verdict '" + s + "' (expected genuine, imposter or unsure)");
}

json DecisionRecord::to_json() const {
    return json{{"pair_id", pair_id},
                {"operator", operator_id},
                {"verdict", to_string(verdict)},
                {"note", note},
                {"created_at", created_at}};
}

DecisionRecord DecisionRecord::from_json(const json& j) {
    return DecisionRecord{j.at("pair_id").get<std::string>(), j.at("operator").get<std::string>(),
                          parse_verdict(j.at("verdict").get<std::string>()), j.value("note", ""),
                          j.value("created_at", "")};
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

bool ResultFilter::matches(const ResultRecord& r) const {
    if (dataset && r.dataset != *dataset) return false;
    if (model && r.model != *model) return false;
    if (label && r.label != *label) return false;
    if (prediction && r.prediction != *prediction) return false;
    if (correct) {
        const auto c = r.correct();
        if (!c || *c != *correct) return false;
    }
    if (c_min || c_max) {
        if (!r.c_score) return false;
        if (c_min && *r.c_score < *c_min) return false;
        if (c_max && *r.c_score > *c_max) return false;
    }
    if (d_min || d_max) {
        if (!r.d_orig) return false;
        if (d_min && *r.d_orig < *d_min) return false;
        if (d_max && *r.d_orig > *d_max) return false;
    }
    return true;
}

SortKey parse_sort_key(const std::string& s) {
    if (s.empty() || s == "none") return SortKey::None;
    if (s == "distance" || s == "d_orig") return SortKey::Distance;
    if (s == "c_score" || s == "c") return SortKey::CScore;
    if (s == "pair_id") return SortKey::PairId;
    fail(ErrorKind::InvalidParameter, "unknown sort key '" + s + "' (expected distance, c_score or pair_id)");
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

void write_file_atomic(const fs::path& path, const std::string& content) {
    static std::atomic<unsigned> counter{0};
    const auto tmp = path.parent_path() /
                     (path.filename().string() + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorKind::Io, "cannot replace " + path.string());
    }
}

ResultsStore::ResultsStore(fs::path root) : root_(std::move(root)) {}

fs::path ResultsStore::model_dir(const std::string& dataset, const std::string& model) const {
    return root_ / sanitize_name(dataset) / sanitize_name(model);
}

fs::path ResultsStore::pair_dir(const std::string& dataset, const std::string& model,
                                const std::string& pair_id) const {
    return model_dir(dataset, model) / sanitize_name(pair_id);
}

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> out;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return out;
    for (const auto& e : fs::directory_iterator(dir, ec))
        if (e.is_directory() && e.path().filename().string().front() != '.') out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::string> ResultsStore::datasets() const {
    std::vector<std::string> out;
    for (auto& d : sorted_subdirs(root_))
        if (!models(d).empty()) out.push_back(d);
    return out;
}

std::vector<std::string> ResultsStore::models(const std::optional<std::string>& dataset) const {
    std::set<std::string> out;
    const auto ds = dataset ? std::vector<std::string>{*dataset} : sorted_subdirs(root_);
    for (const auto& d : ds)
        for (const auto& m : sorted_subdirs(root_ / d))
            if (fs::exists(root_ / d / m / "index.jsonl")) out.insert(m);
    return {out.begin(), out.end()};
}

std::vector<ResultRecord> ResultsStore::read_index(const std::string& dataset, const std::string& model) const {
    const auto path = model_dir(dataset, model) / "index.jsonl";
    std::ifstream in(path);
    if (!in) return {};
    std::vector<ResultRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(ResultRecord::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            fail(ErrorKind::Parse, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void ResultsStore::write_index(const std::string& dataset, const std::string& model,
                               const std::vector<ResultRecord>& records) const {
    const auto dir = model_dir(dataset, model);
    fs::create_directories(dir);
    std::string content;
    for (const auto& r : records) content += r.to_json().dump() + "\n";
    write_file_atomic(dir / "index.jsonl", content);
}

std::vector<ResultRecord> ResultsStore::all_records() const {
    std::vector<ResultRecord> out;
    for (const auto& d : sorted_subdirs(root_)) {
        for (const auto& m : sorted_subdirs(root_ / d)) {
            auto recs = read_index(d, m);
            out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
        }
    }
    return out;
}

ResultRecord ResultsStore::read_result(const std::string& pair_id, const std::optional<std::string>& dataset,
                                       const std::optional<std::string>& model) const {
    std::vector<ResultRecord> hits;
    const auto ds = dataset ? std::vector<std::string>{*dataset} : sorted_subdirs(root_);
    for (const auto& d : ds) {
        const auto ms = model ? std::vector<std::string>{*model} : sorted_subdirs(root_ / d);
        for (const auto& m : ms)
            for (auto& r : read_index(d, m))
                if (r.pair_id == pair_id) hits.push_back(std::move(r));
    }
    if (hits.empty()) fail(ErrorKind::NotFound, "unknown pair '" + pair_id + "'");
    if (hits.size() > 1)
        fail(ErrorKind::InvalidParameter, "pair '" + pair_id + "' exists in several stores; give dataset and model");
    return hits.front();
}

ResultPage ResultsStore::list_results(const ResultFilter& filter, const SortSpec& sort, const PageRequest& page) const {
    if (page.page < 1) fail(ErrorKind::InvalidParameter, "page must be >= 1");
    if (page.per_page < 1 || page.per_page > 1000) fail(ErrorKind::InvalidParameter, "per_page must be in [1, 1000]");
    std::vector<ResultRecord> rows;
    for (auto& r : all_records())
        if (filter.matches(r)) rows.push_back(std::move(r));

    // Records without the sort value go last regardless of direction.
    auto by_optional = [&](const std::optional<double>& a, const std::optional<double>& b) {
        if (a.has_value() != b.has_value()) return a.has_value();
        if (!a) return false;
        return sort.descending ? *a > *b : *a < *b;
    };
    switch (sort.key) {
        case SortKey::None: break;
        case SortKey::Distance:
            std::stable_sort(rows.begin(), rows.end(),
                             [&](const auto& a, const auto& b) { return by_optional(a.d_orig, b.d_orig); });
            break;
        case SortKey::CScore:
            std::stable_sort(rows.begin(), rows.end(),
                             [&](const auto& a, const auto& b) { return by_optional(a.c_score, b.c_score); });
            break;
        case SortKey::PairId:
            std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
                return sort.descending ? a.pair_id > b.pair_id : a.pair_id < b.pair_id;
            });
            break;
    }

    ResultPage out;
    out.total = rows.size();
    out.page = page.page;
    out.per_page = page.per_page;
    const std::size_t begin = (page.page - 1) * page.per_page;
    for (std::size_t i = begin; i < rows.size() && i < begin + page.per_page; ++i) out.items.push_back(rows[i]);
    return out;
}

fs::path ResultsStore::artifact_path(const ResultRecord& r, const std::string& key) const {
    const auto it = r.artifacts.find(key);
    if (it == r.artifacts.end()) fail(ErrorKind::NotFound, "pair '" + r.pair_id + "' has no artifact '" + key + "'");
    const auto path = pair_dir(r.dataset, r.model, r.pair_id) / it->second;
    if (!fs::exists(path)) fail(ErrorKind::NotFound, "artifact file missing: " + path.string());
    return path;
}

bool ResultsStore::has_pair(const std::string& dataset, const std::string& pair_id) const {
    for (const auto& m : models(dataset))
        for (const auto& r : read_index(dataset, m))
            if (r.pair_id == pair_id) return true;
    return false;
}

namespace {
std::mutex decision_mutex;
}

DecisionRecord ResultsStore::append_decision(const std::string& dataset, DecisionRecord record) const {
    if (!has_pair(dataset, record.pair_id))
        fail(ErrorKind::NotFound, "unknown pair '" + record.pair_id + "' in dataset '" + dataset + "'");
    if (record.created_at.empty()) record.created_at = utc_timestamp();
    const auto path = root_ / sanitize_name(dataset) / "decisions.jsonl";
    const std::string line = record.to_json().dump() + "\n";

    std::lock_guard lock(decision_mutex);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) fail(ErrorKind::Io, "cannot open decision log " + path.string());
    const auto written = ::write(fd, line.data(), line.size());
    ::fsync(fd);
    ::close(fd);
    if (written != static_cast<ssize_t>(line.size())) fail(ErrorKind::Io, "short write to decision log");
    return record;
}

std::vector<DecisionRecord> ResultsStore::decisions(const std::string& dataset, const std::string& pair_id) const {
    std::ifstream in(root_ / sanitize_name(dataset) / "decisions.jsonl");
    std::vector<DecisionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto d = DecisionRecord::from_json(json::parse(line));
        if (d.pair_id == pair_id) out.push_back(std::move(d));
    }
    return out;
}

StoreLock::StoreLock(fs::path dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0644);
    if (fd < 0) fail(ErrorKind::Locked, "store is locked by another writer: " + path_.string());
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

StoreLock::~StoreLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

}  // namespace xverify
