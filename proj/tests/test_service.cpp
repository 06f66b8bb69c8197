#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "synthetic.hpp"
#include "xverify/batch.hpp"
#include "xverify/datastore.hpp"
#include "xverify/error.hpp"
#include "xverify/service.hpp"

namespace xverify {
namespace {

using json = nlohmann::json;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<PatchSpec> quick_specs() {
    PatchSpec a;
    a.size = 28;
    a.stride = 12;
    PatchSpec b;
    b.size = 14;
    b.stride = 16;
    return {a, b};
}

/// Runs a Service on an ephemeral port for the lifetime of the object.
class RunningService {
public:
    explicit RunningService(ApiConfig config) : service_(std::move(config)) {
        port_ = service_.bind("127.0.0.1", 0);
        thread_ = std::thread([this] { service_.run(); });
        service_.wait_until_ready();
    }
    ~RunningService() {
        service_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(120, 0);
        return c;
    }

private:
    Service service_;
    int port_ = 0;
    std::thread thread_;
};

json body_of(const httplib::Result& r) {
    EXPECT_TRUE(r);
    return json::parse(r->body);
}

class ServiceApi : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new testing::TempDir("xverify-service");
        const auto csv = testing::write_synthetic_dataset(dir_->path() / "data", 2, 2, 11, "synth");
        BatchOptions opts;
        opts.specs = quick_specs();
        summary_ = run_batch(load_pairs(csv), ReferenceEmbedder{}, opts, dir_->path() / "store");
        summary_.confidence->save(dir_->path() / "model.conf");
        ApiConfig config;
        config.store_root = dir_->path() / "store";
        config.confidence_path = dir_->path() / "model.conf";
        config.backend = std::make_shared<ReferenceEmbedder>();
        server_ = new RunningService(config);
    }
    static void TearDownTestSuite() {
        delete server_;
        delete dir_;
    }

    static std::vector<ResultRecord> all_records() { return ResultsStore(dir_->path() / "store").all_records(); }

    static testing::TempDir* dir_;
    static BatchSummary summary_;
    static RunningService* server_;
};

testing::TempDir* ServiceApi::dir_ = nullptr;
BatchSummary ServiceApi::summary_;
RunningService* ServiceApi::server_ = nullptr;

httplib::MultipartFormDataItems explain_form(const Image& a, const Image& b, const json& params) {
    return {{"img1", encode_png(a), "a.png", "image/png"},
            {"img2", encode_png(b), "b.png", "image/png"},
            {"params", params.dump(), "", "application/json"}};
}

TEST_F(ServiceApi, ListsDatasetsAndModels) {
    auto c = server_->client();
    EXPECT_EQ(body_of(c.Get("/api/datasets"))["datasets"], json::array({"synth"}));
    EXPECT_EQ(body_of(c.Get("/api/models?dataset=synth"))["models"], json::array({"reference"}));
}

TEST_F(ServiceApi, PaginationCoversEveryPairOnce) {
    auto c = server_->client();
    std::set<std::string> seen;
    std::size_t total = 0;
    for (int page = 1; page <= 5; ++page) {
        const auto j = body_of(c.Get("/api/pairs?per_page=9&page=" + std::to_string(page)));
        total = j["total"].get<std::size_t>();
        for (const auto& item : j["items"]) {
            EXPECT_TRUE(seen.insert(item["pair_id"].get<std::string>()).second);
            EXPECT_FALSE(item.contains("parameters"));
            EXPECT_TRUE(item.contains("urls"));
        }
    }
    EXPECT_EQ(total, 40u);
    EXPECT_EQ(seen.size(), 40u);
}

TEST_F(ServiceApi, FiltersMatchStore) {
    auto c = server_->client();
    std::size_t genuine = 0, wrong = 0;
    for (const auto& r : all_records()) {
        if (r.label == Label::Genuine) ++genuine;
        if (r.correct() && !*r.correct()) ++wrong;
    }
    EXPECT_EQ(body_of(c.Get("/api/pairs?label=genuine"))["total"], genuine);
    EXPECT_EQ(body_of(c.Get("/api/pairs?correct=false"))["total"], wrong);
    const auto sorted = body_of(c.Get("/api/pairs?sort=d_orig&order=desc&per_page=100"))["items"];
    for (std::size_t i = 1; i < sorted.size(); ++i)
        EXPECT_GE(sorted[i - 1]["d_orig"].get<double>(), sorted[i]["d_orig"].get<double>());
    const auto band = body_of(c.Get("/api/pairs?c_min=0.5&c_max=1&per_page=100"))["items"];
    for (const auto& item : band) EXPECT_GE(item["c_score"].get<double>(), 0.5);
}

TEST_F(ServiceApi, BadFiltersAre400) {
    auto c = server_->client();
    for (const char* q : {"label=maybe", "page=0", "per_page=x", "sort=bogus", "order=up", "c_min=abc",
                          "correct=perhaps"}) {
        const auto r = c.Get(std::string("/api/pairs?") + q);
        ASSERT_TRUE(r);
        EXPECT_EQ(r->status, 400) << q;
        const auto j = json::parse(r->body);
        EXPECT_TRUE(j.contains("error"));
        EXPECT_TRUE(j.contains("detail"));
    }
}

TEST_F(ServiceApi, DetailAndEveryUrlResolve) {
    auto c = server_->client();
    const auto rec = all_records().front();
    const auto j = body_of(c.Get("/api/pairs/" + rec.pair_id));
    EXPECT_EQ(j["pair_id"], rec.pair_id);
    EXPECT_EQ(j["d_orig"].get<double>(), *rec.d_orig);
    EXPECT_TRUE(j.contains("parameters"));
    // Two sources plus two maps per side for each of three methods.
    ASSERT_EQ(j["urls"].size(), 14u);
    for (const auto& [key, url] : j["urls"].items()) {
        const auto r = c.Get(url.get<std::string>());
        ASSERT_TRUE(r);
        EXPECT_EQ(r->status, 200) << key;
        EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
    }
}

TEST_F(ServiceApi, ArtifactBytesMatchStore) {
    auto c = server_->client();
    const ResultsStore store(dir_->path() / "store");
    const auto rec = all_records().back();
    const auto r = c.Get("/api/pairs/" + rec.pair_id + "/artifact?kind=xmap&which=2&method=II");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(r->body, slurp(store.artifact_path(rec, artifact_key("xmap", 2, Method::II))));
    const auto d = c.Get("/api/pairs/" + rec.pair_id + "/artifact?kind=smap&which=1");
    ASSERT_TRUE(d);
    EXPECT_EQ(d->body, slurp(store.artifact_path(rec, artifact_key("smap", 1, Method::III))));
}

TEST_F(ServiceApi, NotFoundAndBadArtifactQueries) {
    auto c = server_->client();
    EXPECT_EQ(c.Get("/api/pairs/nope")->status, 404);
    EXPECT_EQ(c.Get("/api/pairs/nope/artifact?kind=xmap&which=1")->status, 404);
    EXPECT_EQ(c.Get("/api/jobs/nope")->status, 404);
    const auto id = all_records().front().pair_id;
    EXPECT_EQ(c.Get("/api/pairs/" + id + "/artifact?kind=heat&which=1")->status, 400);
    EXPECT_EQ(c.Get("/api/pairs/" + id + "/artifact?kind=xmap&which=3")->status, 400);
    EXPECT_EQ(c.Get("/api/pairs/" + id + "/artifact?kind=xmap&which=1&method=IV")->status, 400);
}

TEST_F(ServiceApi, ReadsAreRepeatable) {
    auto c = server_->client();
    EXPECT_EQ(body_of(c.Get("/api/pairs?dataset=missing"))["total"], 0);
    EXPECT_EQ(c.Get("/api/pairs?per_page=100")->body, c.Get("/api/pairs?per_page=100")->body);
}

TEST_F(ServiceApi, DecisionIsAppendedAndEchoed) {
    auto c = server_->client();
    const auto id = all_records()[3].pair_id;
    const json decision{{"verdict", "imposter"}, {"operator", "op-7"}, {"note", "eyes look different, \"really\""}};
    const auto r = c.Post("/api/pairs/" + id + "/decision", decision.dump(), "application/json");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 201);
    const auto echoed = json::parse(r->body);
    EXPECT_EQ(echoed["verdict"], "imposter");
    EXPECT_EQ(echoed["note"], decision["note"]);
    EXPECT_FALSE(echoed["created_at"].get<std::string>().empty());

    const auto list = body_of(c.Get("/api/pairs/" + id + "/decisions"))["items"];
    ASSERT_FALSE(list.empty());
    EXPECT_EQ(list.back(), echoed);
}

TEST_F(ServiceApi, DecisionErrors) {
    auto c = server_->client();
    const json ok{{"verdict", "genuine"}, {"operator", "op"}};
    EXPECT_EQ(c.Post("/api/pairs/ghost/decision", ok.dump(), "application/json")->status, 409);
    const auto id = all_records().front().pair_id;
    const json no_operator{{"verdict", "genuine"}};
    EXPECT_EQ(c.Post("/api/pairs/" + id + "/decision", no_operator.dump(), "application/json")->status, 400);
    const json bad_verdict{{"verdict", "meh"}, {"operator", "op"}};
    EXPECT_EQ(c.Post("/api/pairs/" + id + "/decision", bad_verdict.dump(), "application/json")->status, 400);
    EXPECT_EQ(c.Post("/api/pairs/" + id + "/decision", "{not json", "application/json")->status, 400);
}

TEST_F(ServiceApi, ExplainIdenticalImagesIsNeutral) {
    auto c = server_->client();
    const auto img = testing::render_face(testing::random_identity(5), 1);
    const auto r = c.Post("/api/explain", explain_form(img, img, {{"method", "III"}, {"patch_sizes", {28}}}));
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["status"], "done");
    EXPECT_EQ(j["d_orig"].get<double>(), 0.0);
    EXPECT_EQ(j["neutral"], true);
    EXPECT_EQ(j["method"], "III");
    EXPECT_EQ(j["prediction"], "genuine");
    EXPECT_GE(j["c_score"].get<double>(), 0.5);
    ASSERT_EQ(j["urls"].size(), 6u);
    for (const auto& [key, url] : j["urls"].items()) {
        const auto a = c.Get(url.get<std::string>());
        ASSERT_TRUE(a);
        EXPECT_EQ(a->status, 200) << key;
    }
    // A zero map blends to the achromatic image.
    const auto xmap = c.Get(j["urls"]["xmap_1"].get<std::string>());
    const auto blended =
        decode_png(std::span(reinterpret_cast<const std::uint8_t*>(xmap->body.data()), xmap->body.size()));
    for (int y = 0; y < kImageSide; ++y)
        for (int x = 0; x < kImageSide; ++x) {
            const auto px = blended.at(x, y);
            ASSERT_EQ(px.r, px.g);
            ASSERT_EQ(px.g, px.b);
        }
    EXPECT_EQ(body_of(c.Get("/api/jobs/" + j["job_id"].get<std::string>()))["d_orig"].get<double>(), 0.0);
}

TEST_F(ServiceApi, ExplainMatchesInProcessPipeline) {
    auto c = server_->client();
    const auto a = testing::render_face(testing::random_identity(21), 1);
    const auto b = testing::render_face(testing::random_identity(22), 2);
    const auto r = c.Post("/api/explain", explain_form(a, b, {{"patch_sizes", {14}}, {"stride", 9}}));
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200) << r->body;
    const auto j = json::parse(r->body);
    PatchSpec spec;
    spec.size = 14;
    spec.stride = 9;
    const auto ctx = make_context(a, b, ReferenceEmbedder{}, {spec});
    const auto expected = explain_pair(ctx, Method::III);
    EXPECT_EQ(j["d_orig"].get<double>(), expected.d_orig);
    EXPECT_EQ(j["merged_max_abs"][0].get<double>(), expected.merged[0].max_abs());
    EXPECT_EQ(j["merged_max_abs"][1].get<double>(), expected.merged[1].max_abs());
}

TEST_F(ServiceApi, ExplainInputErrors) {
    auto c = server_->client();
    const auto img = testing::render_face(testing::random_identity(5), 1);
    httplib::MultipartFormDataItems missing{{"img1", encode_png(img), "a.png", "image/png"}};
    EXPECT_EQ(c.Post("/api/explain", missing)->status, 400);
    EXPECT_EQ(c.Post("/api/explain", explain_form(img, img, {{"patch_sizes", {112}}}))->status, 400);
    EXPECT_EQ(c.Post("/api/explain", explain_form(img, img, {{"method", "IV"}}))->status, 400);
    httplib::MultipartFormDataItems not_png{{"img1", "garbage", "a.png", "image/png"},
                                            {"img2", encode_png(img), "b.png", "image/png"}};
    EXPECT_EQ(c.Post("/api/explain", not_png)->status, 400);
    // A constant image has no embedding; the job fails with the mapped status.
    const auto r = c.Post("/api/explain", explain_form(Image(Rgb{80, 80, 80}), img, {{"patch_sizes", {28}}}));
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    const auto j = json::parse(r->body);
    EXPECT_EQ(j["status"], "failed");
    EXPECT_TRUE(j.contains("detail"));
}

TEST_F(ServiceApi, CorsAllowsLocalhostOnly) {
    auto c = server_->client();
    const auto local = c.Get("/api/datasets", {{"Origin", "http://localhost:5173"}});
    EXPECT_EQ(local->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
    const auto remote = c.Get("/api/datasets", {{"Origin", "http://evil.example"}});
    EXPECT_FALSE(remote->has_header("Access-Control-Allow-Origin"));
    const auto pre = c.Options("/api/explain", {{"Origin", "http://localhost:5173"}});
    ASSERT_TRUE(pre);
    EXPECT_EQ(pre->status, 204);
}

class ServiceConfig : public ::testing::Test {
protected:
    void SetUp() override { fs::create_directories(dir_.path() / "store"); }
    ApiConfig base() const {
        ApiConfig config;
        config.store_root = dir_.path() / "store";
        return config;
    }
    testing::TempDir dir_;
};

TEST_F(ServiceConfig, ExplainWithoutBackendIs503) {
    RunningService server(base());
    auto c = server.client();
    const auto img = testing::render_face(testing::random_identity(5), 1);
    const auto r = c.Post("/api/explain", explain_form(img, img, json::object()));
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 503);
}

TEST_F(ServiceConfig, SlowJobAnswers202ThenCompletes) {
    auto config = base();
    config.backend = std::make_shared<ReferenceEmbedder>();
    config.sync_wait = std::chrono::milliseconds(0);
    RunningService server(config);
    auto c = server.client();
    const auto a = testing::render_face(testing::random_identity(1), 1);
    const auto b = testing::render_face(testing::random_identity(2), 1);
    const auto r = c.Post("/api/explain", explain_form(a, b, json::object()));
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 202);
    const auto id = json::parse(r->body)["job_id"].get<std::string>();
    json j;
    for (int i = 0; i < 600; ++i) {
        j = body_of(c.Get("/api/jobs/" + id));
        if (j["status"] == "done" || j["status"] == "failed") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    EXPECT_EQ(j["status"], "done");
    EXPECT_GT(j["d_orig"].get<double>(), 0.0);
    EXPECT_FALSE(j.contains("c_score"));
    EXPECT_EQ(c.Get("/api/jobs/" + id + "/artifact?kind=source&which=1")->body, encode_png(a));
}

TEST_F(ServiceConfig, FullQueueIs429) {
    auto config = base();
    config.backend = std::make_shared<ReferenceEmbedder>();
    config.job_queue_capacity = 0;
    RunningService server(config);
    auto c = server.client();
    const auto img = testing::render_face(testing::random_identity(5), 1);
    const auto r = c.Post("/api/explain", explain_form(img, img, json::object()));
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 429);
}

TEST_F(ServiceConfig, EmptyStoreListsNothing) {
    RunningService server(base());
    auto c = server.client();
    EXPECT_EQ(body_of(c.Get("/api/datasets"))["datasets"], json::array());
}

TEST(ServiceSetup, MissingStoreRootIsRejected) {
    ApiConfig config;
    config.store_root = "/nonexistent/xverify-store";
    try {
        Service s(config);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
    }
}

TEST(ServiceSetup, ParseAddress) {
    EXPECT_EQ(parse_address("127.0.0.1:8080"), (std::pair<std::string, int>{"127.0.0.1", 8080}));
    EXPECT_THROW(parse_address("localhost"), Error);
    EXPECT_THROW(parse_address("host:99999"), Error);
    EXPECT_THROW(parse_address("host:abc"), Error);
}

}  // namespace
}  // namespace xverify
