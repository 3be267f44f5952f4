// Drives the installed binary end to end. The binary path arrives as argv[1].
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

std::string g_cli;

struct TempDir {
    fs::path path;
    TempDir() {
        static int c = 0;
        path = fs::temp_directory_path() /
               ("xreid_cli_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

RunResult run_cli(const TempDir& tmp, const std::string& args) {
    const std::string out_path = tmp.str() + "/cli.out";
    const std::string err_path = tmp.str() + "/cli.err";
    const std::string cmd =
        g_cli + " " + args + " > " + out_path + " 2> " + err_path;
    int raw = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    auto slurp = [](const std::string& p) {
        std::ifstream f(p);
        std::ostringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

void write_config(const std::string& path, const std::string& world_dir,
                  const std::string& out_dir) {
    std::ofstream f(path);
    f << "[dataset]\n"
         "kind = synthetic\n"
         "world_dir = " << world_dir << "\n"
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
         "seed = 11\nsave_every = 1\n"
         "out_dir = " << out_dir << "\n";
}

}  // namespace

TEST_CASE("help and argument errors") {
    TempDir tmp;
    CHECK(run_cli(tmp, "--help").exit_code == 0);
    CHECK(run_cli(tmp, "synth --help").exit_code == 0);

    // a subcommand is mandatory
    CHECK(run_cli(tmp, "").exit_code == 1);
    // so is --config
    CHECK(run_cli(tmp, "synth").exit_code == 1);
    // unknown subcommand
    CHECK(run_cli(tmp, "bogus --config x.ini").exit_code == 1);
}

TEST_CASE("config problems map to distinct exit codes") {
    TempDir tmp;
    auto missing = run_cli(tmp, "synth --config " + tmp.str() + "/absent.ini");
    CHECK(missing.exit_code == 2);
    CHECK(missing.err.find("error:") != std::string::npos);

    const std::string bad = tmp.str() + "/bad.ini";
    {
        std::ofstream f(bad);
        f << "[dataset]\nkind = synthetic\nnot_a_key = 3\n";
    }
    auto invalid = run_cli(tmp, "synth --config " + bad);
    CHECK(invalid.exit_code == 1);
    CHECK(invalid.err.find("not_a_key") != std::string::npos);
}

TEST_CASE("pipeline order is enforced") {
    TempDir tmp;
    const std::string cfg = tmp.str() + "/exp.ini";
    write_config(cfg, tmp.str() + "/w", tmp.str() + "/run");

    auto premature = run_cli(tmp, "train --config " + cfg);
    CHECK(premature.exit_code == 2);
    CHECK(premature.err.find("synth") != std::string::npos);

    REQUIRE(run_cli(tmp, "synth --config " + cfg).exit_code == 0);

    auto ungated = run_cli(tmp, "train --config " + cfg);
    CHECK(ungated.exit_code == 2);
    CHECK(ungated.err.find("generate") != std::string::npos);
}

TEST_CASE("full run produces reports and ranking output") {
    TempDir tmp;
    const std::string cfg = tmp.str() + "/exp.ini";
    const std::string run_dir = tmp.str() + "/run";
    write_config(cfg, tmp.str() + "/w", run_dir);

    REQUIRE(run_cli(tmp, "synth --config " + cfg).exit_code == 0);
    REQUIRE(run_cli(tmp, "generate --config " + cfg).exit_code == 0);

    auto train = run_cli(tmp, "train --config " + cfg);
    REQUIRE(train.exit_code == 0);
    CHECK(train.out.find("training complete") != std::string::npos);
    CHECK(fs::exists(run_dir + "/metrics.log"));
    CHECK(fs::exists(run_dir + "/config.resolved"));

    auto eval = run_cli(tmp, "eval --config " + cfg);
    REQUIRE(eval.exit_code == 0);
    CHECK(eval.out.find("rank-1") != std::string::npos);
    CHECK(eval.out.find("mAP") != std::string::npos);
    CHECK(fs::exists(run_dir + "/report.json"));

    auto oracle = run_cli(tmp, "oracle --config " + cfg);
    REQUIRE(oracle.exit_code == 0);
    CHECK(fs::exists(run_dir + "/report_oracle.json"));

    auto grad = run_cli(tmp, "gradcheck --config " + cfg + " --n-params 20 --eps 1e-3");
    REQUIRE(grad.exit_code == 0);
    CHECK(grad.out.find("max relative error") != std::string::npos);
    CHECK(fs::exists(run_dir + "/gradcheck.txt"));
}

TEST_CASE("out and seed overrides reroute a run") {
    TempDir tmp;
    const std::string cfg = tmp.str() + "/exp.ini";
    write_config(cfg, tmp.str() + "/w", tmp.str() + "/run");

    // generated sets live under out_dir, so every stage needs the same override
    const std::string alt = tmp.str() + "/alt";
    const std::string ov = " --out " + alt + " --seed 77";
    REQUIRE(run_cli(tmp, "synth --config " + cfg + ov).exit_code == 0);
    REQUIRE(run_cli(tmp, "generate --config " + cfg + ov).exit_code == 0);
    auto train = run_cli(tmp, "train --config " + cfg + ov);
    REQUIRE(train.exit_code == 0);
    CHECK(fs::exists(alt + "/metrics.log"));
    CHECK(!fs::exists(tmp.str() + "/run/metrics.log"));

    // the resolved snapshot records the overridden seed
    std::ifstream f(alt + "/config.resolved");
    std::ostringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str().find("seed = 77") != std::string::npos);
}

int main(int argc, char** argv) {
    if (argc > 1) g_cli = argv[1];
    if (g_cli.empty() || !fs::exists(g_cli)) {
        std::fprintf(stderr, "usage: test_cli <path-to-xreid-binary>\n");
        return 1;
    }
    doctest::Context ctx;
    ctx.applyCommandLine(1, argv);
    return ctx.run();
}
