#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/config.hpp"
#include "core/train.hpp"

using namespace xreid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int c = 0;
        path = fs::temp_directory_path() /
               ("xreid_train_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

// a self-contained training fixture: tiny world, materialized generated sets
struct TrainFixture {
    TempDir dir;
    ExperimentConfig cfg;
    DomainDataset s, t, st, tt;

    explicit TrainFixture(const std::string& extra = "", std::uint64_t seed = 7) {
        std::ostringstream text;
        text << "[dataset]\n"
                "kind = synthetic\n"
                "image_h = 16\nimage_w = 16\n"
                "n_source_ids = 8\nn_target_ids = 6\n"
                "m_source_cams = 2\nm_target_cams = 2\n"
                "images_per_id_per_cam = 2\n"
                "[recipe]\n"
                "class_src = 16\nclass_st = 8\n"
                "tri_src = 8\npk_p = 4\npk_k = 2\n"
                "tri_tt_anchors = 2\nt_cofwd = 4\n"
                "[schedule]\n"
                "base_lr_new = 0.01\nbase_lr_backbone = 0.001\n"
                "total_epochs = 2\n"
                "[run]\nsave_every = 1\n";
        text << extra;
        cfg = parse_config(text.str());
        cfg.world_dir = path_join(dir.str(), "world");
        apply_overrides(cfg, path_join(dir.str(), "run"), seed);
        resolve_config(cfg);

        auto pair = synthesize_world(cfg.world, cfg.world_dir);
        s = pair.first;
        t = pair.second;
        ParametricEngine eng(joint_styles(cfg.world));
        DomainMap dm{cfg.world.m_source_cams, cfg.world.m_target_cams};
        std::vector<int> tcams;
        for (long c = 1; c <= cfg.world.m_target_cams; ++c) tcams.push_back(static_cast<int>(c));
        st = materialize_dataset(build_imitated_dataset(s, tcams), eng, dm, cfg.image_h,
                                 cfg.image_w, path_join(dir.str(), "st"));
        tt = materialize_dataset(build_pseudo_dataset(t, tcams), eng, dm, cfg.image_h,
                                 cfg.image_w, path_join(dir.str(), "tt"));
    }

    // a live context over a fresh model, mirroring what the trainer builds
    struct Live {
        ModelConfig mc;
        ReIDModel model;
        DomainMap dm;
        PixelCache cache;
        TrainContext ctx;

        Live(TrainFixture& f)
            : mc([&] {
                  ModelConfig m = f.cfg.model;
                  m.n_classes = f.s.stats().n_identities;
                  return m;
              }()),
              model(mc),
              dm{f.cfg.world.m_source_cams, f.cfg.world.m_target_cams},
              cache(f.cfg.image_h, f.cfg.image_w, nullptr, dm) {
            ctx.model = &model;
            ctx.s = &f.s;
            ctx.t = &f.t;
            ctx.st = &f.st;
            ctx.tt = &f.tt;
            ctx.cache = &cache;
            ctx.label_map = f.s.label_map();
            ctx.recipe = f.cfg.recipe;
            ctx.weights = f.cfg.weights;
            ctx.schedule = f.cfg.schedule;
        }
    };
};

std::vector<std::string> fields_of(const std::string& line) { return split(line, '\t'); }

std::string slurp_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("learning rate schedule") {
    // canonical decade steps stay exact in floating point
    CHECK(lr_at(0, 0.1) == 0.1);
    CHECK(lr_at(39, 0.1) == 0.1);
    CHECK(lr_at(40, 0.1) == 0.01);
    CHECK(lr_at(79, 0.1) == 0.01);
    CHECK(lr_at(80, 0.1) == 0.001);
    CHECK(lr_at(0, 0.01) == 0.01);
    CHECK(lr_at(39, 0.01) == 0.01);
    CHECK(lr_at(40, 0.01) == 0.001);

    // closed form across three decades
    for (long e = 0; e < 120; ++e) {
        double p = 1.0;
        for (long k = 0; k < e / 40; ++k) p *= 10.0;
        CHECK(lr_at(e, 0.1) == 0.1 / p);
    }

    // custom period
    CHECK(lr_at(5, 0.1, 5) == 0.01);
    CHECK(lr_at(4, 0.1, 5) == 0.1);
    CHECK_THROWS_AS(lr_at(-1, 0.1), Error);
    CHECK_THROWS_AS(lr_at(0, 0.1, 0), Error);
}

TEST_CASE("metrics line format") {
    StepMetrics m;
    m.step = 3;
    m.epoch = 1;
    m.lr = 0.01;
    m.l_class_src = 2.5;
    m.l_class_stt = 2.25;
    m.l_tri_src = 0.5;
    m.l_tri_st = 0.75;
    m.l_tri_ttt = 0.125;
    m.total = 3.4375;
    const std::string line = metrics_line(m);
    auto f = fields_of(line);
    REQUIRE(f.size() == 9);
    CHECK(f[0] == "3");
    CHECK(f[1] == "1");
    CHECK(std::strtod(f[2].c_str(), nullptr) == 0.01);
    CHECK(std::strtod(f[3].c_str(), nullptr) == 2.5);
    CHECK(std::strtod(f[8].c_str(), nullptr) == 3.4375);
}

TEST_CASE("step loss composition") {
    TrainFixture f;
    TrainFixture::Live live(f);
    Rng rng(11);
    StepBatches b = draw_step_batches(live.ctx, rng);

    StepMetrics m;
    const double total = step_loss(live.ctx, b, &m).item();
    CHECK(total == m.total);
    // the recorded components recompose to the recorded total
    const LossWeights& w = live.ctx.weights;
    const double rebuilt =
        total_loss(dual_classification_loss(m.l_class_src, m.l_class_stt, w.alpha),
                   total_triplet_loss(m.l_tri_src, m.l_tri_st, m.l_tri_ttt, w.beta1, w.beta2,
                                      w.beta3),
                   w.gamma1, w.gamma2);
    CHECK(total == doctest::Approx(rebuilt).epsilon(1e-12));
    CHECK(m.l_class_src > 0.0);
    CHECK(m.l_tri_src > 0.0);
}

TEST_CASE("a classification-only objective never touches the commonality head") {
    TrainFixture f;
    TrainFixture::Live live(f);
    live.ctx.weights.gamma2 = 0.0;
    Rng rng(13);
    StepBatches b = draw_step_batches(live.ctx, rng);
    StepMetrics m;
    ad::Var loss = step_loss(live.ctx, b, &m);
    CHECK(m.l_tri_src == 0.0);
    CHECK(m.l_tri_st == 0.0);
    CHECK(m.l_tri_ttt == 0.0);
    ad::GradMap grads = ad::backward(loss);
    CHECK(grads.find(live.model.registry().at("emb128.fc.w").var.node()) == grads.end());
    CHECK(grads.find(live.model.registry().at("classifier.fc.w").var.node()) != grads.end());
}

TEST_CASE("a commonality-only objective never touches the classifier") {
    TrainFixture f;
    TrainFixture::Live live(f);
    live.ctx.weights.gamma1 = 0.0;
    Rng rng(13);
    StepBatches b = draw_step_batches(live.ctx, rng);
    CHECK(b.cls.records.empty());  // the classification streams are not even drawn
    StepMetrics m;
    ad::Var loss = step_loss(live.ctx, b, &m);
    CHECK(m.l_class_src == 0.0);
    CHECK(m.l_class_stt == 0.0);
    ad::GradMap grads = ad::backward(loss);
    CHECK(grads.find(live.model.registry().at("classifier.fc.w").var.node()) == grads.end());
    CHECK(grads.find(live.model.registry().at("emb128.fc.w").var.node()) != grads.end());
}

TEST_CASE("source-only baseline reduces to plain classification") {
    TrainFixture f;
    TrainFixture::Live live(f);
    live.ctx.weights.gamma1 = 1.0;
    live.ctx.weights.gamma2 = 0.0;
    live.ctx.weights.alpha = 0.0;
    live.ctx.recipe.class_st = 0;
    live.ctx.recipe.t_cofwd = 0;
    Rng rng(29);
    StepBatches b = draw_step_batches(live.ctx, rng);
    StepMetrics m;
    const double total = step_loss(live.ctx, b, &m).item();
    CHECK(total == m.l_class_src);
    CHECK(m.l_class_stt == 0.0);
}

TEST_CASE("a zero learning rate leaves every parameter untouched") {
    TrainFixture f;
    TrainFixture::Live live(f);
    Rng rng(31);
    StepBatches b = draw_step_batches(live.ctx, rng);
    ad::Var loss = step_loss(live.ctx, b, nullptr);
    ad::GradMap grads = ad::backward(loss);

    std::vector<Tensor> before;
    for (const nn::Entry& e : live.model.registry().entries())
        before.push_back(e.var.value().clone());

    nn::SgdMomentum opt(0.9, 5e-4);
    opt.step(live.model.registry(), grads, [](const std::string&) { return 0.0; });

    const auto& entries = live.model.registry().entries();
    for (size_t i = 0; i < entries.size(); ++i) {
        const Tensor& now = entries[i].var.value();
        for (long j = 0; j < now.size(); ++j) CHECK(now[j] == before[i][j]);
    }
}

TEST_CASE("full run writes logs, checkpoints and history") {
    TrainFixture f;
    TrainResult res = run_training(f.cfg, f.s, f.t, f.st, f.tt);

    // 32 source images / 16 per step = 2 steps per epoch, 2 epochs
    CHECK(res.completed_epochs == 2);
    REQUIRE(res.history.size() == 4);
    for (size_t i = 0; i < res.history.size(); ++i) {
        CHECK(res.history[i].step == static_cast<long>(i));
        CHECK(res.history[i].epoch == static_cast<long>(i / 2));
        CHECK(res.history[i].lr == 0.01);  // epoch < decay_period
        CHECK(std::isfinite(res.history[i].total));
    }
    CHECK(res.final_checkpoint == path_join(f.cfg.out_dir, "ckpt_epoch2"));
    CHECK(file_exists(res.final_checkpoint));
    CHECK(file_exists(path_join(f.cfg.out_dir, "ckpt_epoch1")));
    CHECK(file_exists(path_join(f.cfg.out_dir, "config.resolved")));
    CHECK(file_exists(path_join(f.cfg.out_dir, "timing.log")));

    const std::string metrics = read_text_file(path_join(f.cfg.out_dir, "metrics.log"));
    std::istringstream in(metrics);
    std::string line;
    long rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = fields_of(line);
        CHECK(fields.size() == 9);
        ++rows;
    }
    CHECK(rows == 4);

    // config.resolved matches what the experiment hash covers
    ExperimentConfig echo = parse_config(read_text_file(path_join(f.cfg.out_dir,
                                                                  "config.resolved")));
    resolve_config(echo);
    CHECK(config_hash(echo) == config_hash(f.cfg));
}

TEST_CASE("an interrupted run resumes from the newest checkpoint") {
    TrainFixture f;
    TrainResult full = run_training(f.cfg, f.s, f.t, f.st, f.tt);
    REQUIRE(full.completed_epochs == 2);

    // wind the directory back to the end of epoch 1
    fs::remove(path_join(f.cfg.out_dir, "ckpt_epoch2"));
    fs::remove(path_join(f.cfg.out_dir, "ckpt_epoch2.meta"));
    const std::string metrics_path = path_join(f.cfg.out_dir, "metrics.log");
    std::istringstream in(read_text_file(metrics_path));
    std::string kept, line;
    while (std::getline(in, line))
        if (!line.empty() && fields_of(line)[1] == "0") kept += line + "\n";
    write_text_file_atomic(metrics_path, kept);

    TrainResult resumed = run_training(f.cfg, f.s, f.t, f.st, f.tt);
    CHECK(resumed.completed_epochs == 2);
    REQUIRE(resumed.history.size() == 2);  // only epoch 1 was rerun
    CHECK(resumed.history[0].epoch == 1);
    CHECK(resumed.history[0].step == 2);
    CHECK(file_exists(path_join(f.cfg.out_dir, "ckpt_epoch2")));

    // the appended log holds all four steps again
    std::istringstream back(read_text_file(metrics_path));
    long rows = 0;
    while (std::getline(back, line)) rows += !line.empty();
    CHECK(rows == 4);
}

TEST_CASE("a finished run is not retrained") {
    TrainFixture f;
    run_training(f.cfg, f.s, f.t, f.st, f.tt);
    const std::string before = read_text_file(path_join(f.cfg.out_dir, "metrics.log"));
    TrainResult again = run_training(f.cfg, f.s, f.t, f.st, f.tt);
    CHECK(again.history.empty());
    CHECK(again.completed_epochs == 2);
    CHECK(read_text_file(path_join(f.cfg.out_dir, "metrics.log")) == before);
}

TEST_CASE("identical configurations train identically") {
    TrainFixture a;
    TrainFixture b;
    TrainResult ra = run_training(a.cfg, a.s, a.t, a.st, a.tt);
    TrainResult rb = run_training(b.cfg, b.s, b.t, b.st, b.tt);

    const std::string ma = read_text_file(path_join(a.cfg.out_dir, "metrics.log"));
    const std::string mb = read_text_file(path_join(b.cfg.out_dir, "metrics.log"));
    CHECK(ma == mb);
    CHECK(slurp_bytes(ra.final_checkpoint) == slurp_bytes(rb.final_checkpoint));
}

TEST_CASE("rejecting a run with no objective") {
    TrainFixture f("[weights]\ngamma1 = 0\ngamma2 = 0\n");
    CHECK_THROWS_AS(run_training(f.cfg, f.s, f.t, f.st, f.tt), Error);
}
