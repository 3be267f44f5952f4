#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <xreid/xreid.h>

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int c = 0;
        path = fs::temp_directory_path() /
               ("xreid_capi_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

struct ConfigHandle {
    xr_config* cfg = nullptr;
    ~ConfigHandle() { xr_config_free(cfg); }
};

std::string desk_text(const std::string& world_dir, const std::string& out_dir) {
    return "[dataset]\n"
           "kind = synthetic\n"
           "world_dir = " + world_dir + "\n"
           "image_h = 16\nimage_w = 16\n"
           "n_source_ids = 8\nn_target_ids = 6\n"
           "m_source_cams = 2\nm_target_cams = 2\n"
           "images_per_id_per_cam = 2\n"
           "n_eval_ids = 4\n"
           "[recipe]\n"
           "class_src = 16\nclass_st = 8\n"
           "tri_src = 8\npk_p = 4\npk_k = 2\n"
           "tri_tt_anchors = 2\nt_cofwd = 4\n"
           "[schedule]\n"
           "base_lr_new = 0.01\nbase_lr_backbone = 0.001\n"
           "total_epochs = 1\n"
           "[run]\n"
           "seed = 5\nsave_every = 1\n"
           "out_dir = " + out_dir + "\n";
}

}  // namespace

TEST_CASE("version and error plumbing") {
    REQUIRE(xr_version() != nullptr);
    CHECK(std::strlen(xr_version()) > 0);
    REQUIRE(xr_last_error() != nullptr);  // never NULL, even before any failure
}

TEST_CASE("null arguments are invalid, not fatal") {
    CHECK(xr_config_load(nullptr, nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(xr_last_error()) > 0);
    CHECK(xr_config_parse(nullptr, nullptr) == XR_ERR_INVALID_ARGUMENT);
    xr_config* cfg = nullptr;
    CHECK(xr_config_parse("[run]\nseed = 1\n", nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_config_render(nullptr, nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_config_hash(nullptr, nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_run_synth(nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_run_train(nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_run_eval(nullptr, nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(xr_run_gradcheck(nullptr, 10, 1e-3, nullptr) == XR_ERR_INVALID_ARGUMENT);
    CHECK(cfg == nullptr);
    xr_config_free(nullptr);  // free of NULL is a no-op
}

TEST_CASE("config parse, render, hash, override") {
    TempDir tmp;
    const std::string text = desk_text(tmp.str() + "/w", tmp.str() + "/run");

    ConfigHandle h;
    REQUIRE(xr_config_parse(text.c_str(), &h.cfg) == XR_OK);

    char* rendered = nullptr;
    REQUIRE(xr_config_render(h.cfg, &rendered) == XR_OK);
    REQUIRE(rendered != nullptr);
    std::string r(rendered);
    xr_string_free(rendered);
    CHECK(r.find("[dataset]") != std::string::npos);
    CHECK(r.find("n_source_ids = 8") != std::string::npos);

    char* hash1 = nullptr;
    REQUIRE(xr_config_hash(h.cfg, &hash1) == XR_OK);
    std::string h1(hash1);
    xr_string_free(hash1);
    CHECK(h1.size() == 16);

    // moving the output directory leaves the experiment hash alone
    REQUIRE(xr_config_override(h.cfg, (tmp.str() + "/other").c_str(), 0, 0) == XR_OK);
    char* hash2 = nullptr;
    REQUIRE(xr_config_hash(h.cfg, &hash2) == XR_OK);
    CHECK(h1 == hash2);
    xr_string_free(hash2);

    // a new seed changes it
    REQUIRE(xr_config_override(h.cfg, nullptr, 1, 321) == XR_OK);
    char* hash3 = nullptr;
    REQUIRE(xr_config_hash(h.cfg, &hash3) == XR_OK);
    CHECK(h1 != std::string(hash3));
    xr_string_free(hash3);
}

TEST_CASE("config file loading") {
    TempDir tmp;
    const std::string path = tmp.str() + "/exp.ini";
    {
        std::ofstream f(path);
        f << desk_text(tmp.str() + "/w", tmp.str() + "/run");
    }
    ConfigHandle h;
    REQUIRE(xr_config_load(path.c_str(), &h.cfg) == XR_OK);

    ConfigHandle missing;
    CHECK(xr_config_load((tmp.str() + "/absent.ini").c_str(), &missing.cfg) == XR_ERR_IO);
    CHECK(missing.cfg == nullptr);

    ConfigHandle bad;
    CHECK(xr_config_parse("[dataset]\nbogus_key = 1\n", &bad.cfg) == XR_ERR_INVALID_ARGUMENT);
    CHECK(std::string(xr_last_error()).find("bogus_key") != std::string::npos);
}

TEST_CASE("learning rate probe") {
    CHECK(xr_lr_at(0, 0.1, 40) == 0.1);
    CHECK(xr_lr_at(40, 0.1, 40) == 0.01);
    CHECK(xr_lr_at(80, 0.1, 40) == 0.001);
    CHECK(xr_lr_at(39, 0.01, 40) == 0.01);
    CHECK(xr_lr_at(40, 0.01, 0) == 0.001);  // non-positive period falls back to 40
}

TEST_CASE("whole pipeline through the library boundary") {
    TempDir tmp;
    const std::string text = desk_text(tmp.str() + "/w", tmp.str() + "/run");
    ConfigHandle h;
    REQUIRE(xr_config_parse(text.c_str(), &h.cfg) == XR_OK);

    // training before generation names the missing step
    CHECK(xr_run_train(h.cfg) == XR_ERR_STATE);
    CHECK(std::string(xr_last_error()).find("synth") != std::string::npos);

    REQUIRE(xr_run_synth(h.cfg) == XR_OK);

    CHECK(xr_run_train(h.cfg) == XR_ERR_STATE);  // still no generated sets
    CHECK(std::string(xr_last_error()).find("generate") != std::string::npos);

    REQUIRE(xr_run_generate(h.cfg) == XR_OK);
    REQUIRE(xr_run_train(h.cfg) == XR_OK);

    xr_ranking r;
    REQUIRE(xr_run_eval(h.cfg, &r) == XR_OK);
    CHECK(r.n_queries > 0);
    CHECK(r.map >= 0.0);
    CHECK(r.map <= 1.0);
    CHECK(r.cmc1 >= 0.0);
    CHECK(r.cmc1 <= 1.0);
    CHECK(r.cmc20 >= r.cmc5);

    xr_ranking o;
    REQUIRE(xr_run_oracle(h.cfg, &o) == XR_OK);
    CHECK(o.cmc1 == r.cmc1);
    CHECK(o.cmc5 == r.cmc5);
    CHECK(o.cmc10 == r.cmc10);
    CHECK(o.cmc20 == r.cmc20);
    CHECK(o.map == doctest::Approx(r.map).epsilon(1e-12));
    CHECK(o.n_queries == r.n_queries);

    CHECK(fs::exists(tmp.str() + "/run/report.json"));
    CHECK(fs::exists(tmp.str() + "/run/report_oracle.json"));
    CHECK(fs::exists(tmp.str() + "/run/metrics.log"));

    // a NULL result slot only writes the report
    REQUIRE(xr_run_eval(h.cfg, nullptr) == XR_OK);

    double err = -1.0;
    REQUIRE(xr_run_gradcheck(h.cfg, 20, 1e-3, &err) == XR_OK);
    CHECK(err >= 0.0);
    CHECK(err <= 1e-3);
    CHECK(fs::exists(tmp.str() + "/run/gradcheck.txt"));
}

TEST_CASE("rank columns beyond the configured depth read -1") {
    TempDir tmp;
    std::string text = desk_text(tmp.str() + "/w", tmp.str() + "/run");
    text += "eval_max_rank = 5\n";  // appends inside [run]
    ConfigHandle h;
    REQUIRE(xr_config_parse(text.c_str(), &h.cfg) == XR_OK);
    REQUIRE(xr_run_synth(h.cfg) == XR_OK);
    REQUIRE(xr_run_generate(h.cfg) == XR_OK);
    REQUIRE(xr_run_train(h.cfg) == XR_OK);
    xr_ranking r;
    REQUIRE(xr_run_eval(h.cfg, &r) == XR_OK);
    CHECK(r.cmc1 >= 0.0);
    CHECK(r.cmc5 >= 0.0);
    CHECK(r.cmc10 == -1.0);
    CHECK(r.cmc20 == -1.0);
}
