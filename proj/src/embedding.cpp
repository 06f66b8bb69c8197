#include "xverify/embedding.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xverify/error.hpp"

namespace xverify {

FeatureVector::FeatureVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) fail(ErrorKind::InvalidArgument, "feature vector is empty");
    for (double v : values_)
        if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "feature vector has non-finite values");
    if (norm() == 0.0) fail(ErrorKind::InvalidArgument, "feature vector has zero norm");
}

double FeatureVector::norm() const {
    return std::sqrt(std::inner_product(values_.begin(), values_.end(), values_.begin(), 0.0));
}

double cosine_distance(const FeatureVector& a, const FeatureVector& b) {
    if (a.dimension() != b.dimension())
        fail(ErrorKind::InvalidArgument, "feature dimension mismatch: " + std::to_string(a.dimension()) +
                                             " vs " + std::to_string(b.dimension()));
    const auto va = a.values();
    const auto vb = b.values();
    if (std::equal(va.begin(), va.end(), vb.begin())) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        dot += va[i] * vb[i];
        na += va[i] * va[i];
        nb += vb[i] * vb[i];
    }
    const double cosine = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(1.0 - cosine, 0.0, 2.0);
}

std::vector<FeatureVector> EmbeddingBackend::embed_batch(std::span<const Image> images) const {
    std::vector<FeatureVector> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(embed(img));
    return out;
}

std::vector<double> ReferenceEmbedder::block_means(const Image& img) {
    const auto gray = to_grayscale(img);
    std::vector<double> means(kDimension, 0.0);
    for (int by = 0; by < kGrid; ++by) {
        for (int bx = 0; bx < kGrid; ++bx) {
            double acc = 0.0;
            for (int y = by * kBlock; y < (by + 1) * kBlock; ++y)
                for (int x = bx * kBlock; x < (bx + 1) * kBlock; ++x) acc += gray.at(x, y);
            means[static_cast<std::size_t>(by * kGrid + bx)] = acc / (kBlock * kBlock);
        }
    }
    return means;
}

FeatureVector ReferenceEmbedder::embed(const Image& img) const {
    auto v = block_means(img);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double& x : v) x -= mean;
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n < 1e-12) fail(ErrorKind::DegenerateImage, "image is constant; reference embedding is undefined");
    for (double& x : v) x /= n;
    return FeatureVector(std::move(v));
}

// ---------------------------------------------------------------------------
// Subprocess protocol
// ---------------------------------------------------------------------------

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("xverify-embed-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace

SubprocessBackend::SubprocessBackend(std::string command, std::string name)
    : command_(std::move(command)), name_(std::move(name)) {
    if (command_.empty()) fail(ErrorKind::InvalidArgument, "external backend command is empty");
}

FeatureVector SubprocessBackend::embed(const Image& img) const {
    return std::move(embed_batch(std::span<const Image>(&img, 1)).front());
}

std::vector<FeatureVector> SubprocessBackend::embed_batch(std::span<const Image> images) const {
    if (images.empty()) return {};
    ScratchDir scratch;
    const auto manifest = scratch.path() / "manifest.tsv";
    const auto output = scratch.path() / "features.tsv";
    {
        std::ofstream m(manifest);
        for (std::size_t i = 0; i < images.size(); ++i) {
            const auto file = scratch.path() / ("img_" + std::to_string(i) + ".png");
            write_png(file, images[i]);
            m << i << '\t' << file.string() << '\n';
        }
        if (!m) fail(ErrorKind::Io, "cannot write backend manifest");
    }
    const std::string cmd = command_ + " " + shell_quote(manifest.string()) + " " + shell_quote(output.string());
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        fail(ErrorKind::Backend, "backend command failed (exit " + std::to_string(code) + "): " + command_);
    }
    std::ifstream in(output);
    if (!in) fail(ErrorKind::Backend, "backend command produced no output file");
    std::stringstream text;
    text << in.rdbuf();
    std::vector<FeatureVector> features;
    try {
        features = parse_feature_file(text.str(), images.size());
    } catch (const Error& e) {
        fail(ErrorKind::Backend, std::string("backend output invalid: ") + e.what());
    }
    if (dimension_ == 0) dimension_ = features.front().dimension();
    if (features.front().dimension() != dimension_)
        fail(ErrorKind::Backend, "backend changed its output dimension between calls");
    return features;
}

std::vector<FeatureVector> parse_feature_file(const std::string& text, std::size_t expected) {
    std::vector<std::vector<double>> rows(expected);
    std::vector<bool> seen(expected, false);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": missing TAB");
        std::size_t index = 0;
        try {
            std::size_t used = 0;
            index = std::stoul(line.substr(0, tab), &used);
            if (used != tab) throw std::invalid_argument("index");
        } catch (const std::exception&) {
            fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad index");
        }
        if (index >= expected || seen[index])
            fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unexpected or duplicate index");
        std::istringstream fields(line.substr(tab + 1));
        std::string tok;
        while (fields >> tok) {
            try {
                rows[index].push_back(std::stod(tok));
            } catch (const std::exception&) {
                fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad number '" + tok + "'");
            }
        }
        seen[index] = true;
    }
    std::vector<FeatureVector> out;
    out.reserve(expected);
    const std::size_t dim = expected > 0 ? rows[0].size() : 0;
    for (std::size_t i = 0; i < expected; ++i) {
        if (!seen[i]) fail(ErrorKind::Parse, "missing features for index " + std::to_string(i));
        if (rows[i].size() != dim)
            fail(ErrorKind::Parse, "inconsistent feature dimension at index " + std::to_string(i));
        out.emplace_back(std::move(rows[i]));
    }
    return out;
}

std::unique_ptr<EmbeddingBackend> make_backend(const std::string& spec, const std::string& model_name) {
    if (spec == "reference") return std::make_unique<ReferenceEmbedder>();
    if (spec.rfind("cmd:", 0) == 0)
        return std::make_unique<SubprocessBackend>(spec.substr(4), model_name.empty() ? "external" : model_name);
    fail(ErrorKind::InvalidArgument, "unknown backend '" + spec + "' (expected 'reference' or 'cmd:<command>')");
}

}  // namespace xverify
