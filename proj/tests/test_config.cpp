#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "core/common.hpp"
#include "core/config.hpp"

using namespace xreid;

namespace {

const char* kDeskConfig = R"(# desk-scale experiment
[dataset]
kind = synthetic
world_dir = /tmp/w
image_h = 32
image_w = 16
n_source_ids = 12
n_target_ids = 10
m_source_cams = 3
m_target_cams = 4
images_per_id_per_cam = 2

[weights]
preset = duke2market

[recipe]
class_src = 16
class_st = 16
tri_src = 16
pk_p = 4
pk_k = 4

[schedule]
total_epochs = 2

[run]
seed = 7
out_dir = /tmp/out
)";

std::string must_throw_msg(const std::string& text) {
    try {
        ExperimentConfig cfg = parse_config(text);
        resolve_config(cfg);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("parse, resolve, render round trip") {
    ExperimentConfig cfg = parse_config(kDeskConfig);
    resolve_config(cfg);
    const std::string rendered = render_resolved(cfg);

    // the canonical rendering parses back to an identical canonical rendering
    ExperimentConfig back = parse_config(rendered);
    resolve_config(back);
    CHECK(render_resolved(back) == rendered);
    CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("defaults are materialized during resolve") {
    ExperimentConfig cfg = parse_config(kDeskConfig);
    CHECK(cfg.recipe.tri_st == 0);
    resolve_config(cfg);
    CHECK(cfg.recipe.tri_st == 16);      // 4 * target cameras
    CHECK(cfg.recipe.tri_t_total == 12); // 4 * source cameras
    CHECK(cfg.world.source_styles.size() == 3);
    CHECK(cfg.world.target_styles.size() == 4);
    CHECK(cfg.world.seed == 7);   // run seed propagates
    CHECK(cfg.model.seed == 7);
    CHECK(cfg.world.image_h == 32);
    CHECK(cfg.model.image_h == 32);
    CHECK(cfg.schedule.base_lr_new == 0.1);
    CHECK(cfg.schedule.decay_period == 40);
    CHECK(cfg.schedule.total_epochs == 2);
    CHECK(cfg.save_every == 10);
    CHECK(cfg.eval_max_rank == 50);
}

TEST_CASE("weight and recipe presets") {
    ExperimentConfig cfg = parse_config(kDeskConfig);
    CHECK(cfg.weights.alpha == 1.0);
    CHECK(cfg.weights.beta1 == 0.9);
    CHECK(cfg.weights.gamma2 == 0.8);

    std::string other(kDeskConfig);
    other.replace(other.find("preset = duke2market"), 20, "preset = market2duke");
    ExperimentConfig cfg2 = parse_config(other);
    CHECK(cfg2.weights.alpha == 1.4);
    CHECK(cfg2.weights.gamma2 == 0.6);

    // recipe presets pin the two classification stream sizes
    ExperimentConfig r1 = parse_config(
        "[dataset]\nkind = synthetic\nworld_dir = /tmp/w\n"
        "[recipe]\npreset = duke2market\n[run]\nseed = 1\n");
    CHECK(r1.recipe.class_src == 64);
    CHECK(r1.recipe.class_st == 72);
    ExperimentConfig r2 = parse_config(
        "[dataset]\nkind = synthetic\nworld_dir = /tmp/w\n"
        "[recipe]\npreset = market2duke\n[run]\nseed = 1\n");
    CHECK(r2.recipe.class_src == 64);
    CHECK(r2.recipe.class_st == 128);
}

TEST_CASE("parser errors carry line numbers") {
    const std::string bad_key = must_throw_msg(
        "[dataset]\nkind = synthetic\nnonsense = 3\n");
    CHECK(bad_key.find("line 3") != std::string::npos);
    CHECK(bad_key.find("nonsense") != std::string::npos);

    const std::string bad_section = must_throw_msg("[funhouse]\nx = 1\n");
    CHECK(bad_section.find("line 1") != std::string::npos);

    const std::string bad_value = must_throw_msg(
        "[dataset]\nkind = synthetic\nimage_h = tall\n");
    CHECK(bad_value.find("image_h") != std::string::npos);

    const std::string orphan = must_throw_msg("kind = synthetic\n");
    CHECK(orphan.find("line 1") != std::string::npos);
}

TEST_CASE("validation rules") {
    CHECK(must_throw_msg("[dataset]\nkind = synthetic\nworld_dir = /tmp/w\n")
              .find("seed") != std::string::npos);
    CHECK(must_throw_msg("[dataset]\nkind = synthetic\n[run]\nseed = 1\n")
              .find("world_dir") != std::string::npos);
    CHECK(must_throw_msg("[dataset]\nkind = real\nsource_root = /a\n[run]\nseed = 1\n")
              .find("target_root") != std::string::npos);
    // real data has no known parametric styles
    CHECK(must_throw_msg("[dataset]\nkind = real\nsource_root = /a\ntarget_root = /b\n"
                         "[run]\nseed = 1\n")
              .find("gan") != std::string::npos);
    CHECK(must_throw_msg("[dataset]\nkind = synthetic\nworld_dir = /w\nimage_h = 8\n"
                         "[run]\nseed = 1\n")
              .find("16x16") != std::string::npos);
    CHECK(must_throw_msg("[dataset]\nkind = maybe\n[run]\nseed = 1\n")
              .find("synthetic or real") != std::string::npos);
}

TEST_CASE("seed and out_dir overrides") {
    ExperimentConfig cfg = parse_config(kDeskConfig);
    apply_overrides(cfg, std::nullopt, std::nullopt);
    CHECK(cfg.out_dir == "/tmp/out");
    CHECK(cfg.seed == 7);

    apply_overrides(cfg, std::string("/tmp/other"), std::uint64_t{99});
    CHECK(cfg.out_dir == "/tmp/other");
    CHECK(cfg.seed == 99);
    CHECK(cfg.has_seed);

    // a config without a seed becomes valid once the override lands
    ExperimentConfig bare = parse_config(
        "[dataset]\nkind = synthetic\nworld_dir = /w\nn_source_ids = 2\n"
        "n_target_ids = 2\nm_source_cams = 2\nm_target_cams = 2\n"
        "images_per_id_per_cam = 1\n");
    apply_overrides(bare, std::string("/tmp/x"), std::uint64_t{5});
    resolve_config(bare);
    CHECK(bare.seed == 5);
}

TEST_CASE("hash covers values, not the output location") {
    ExperimentConfig a = parse_config(kDeskConfig);
    resolve_config(a);

    // same values, different out_dir: runs of one experiment in two places
    std::string moved(kDeskConfig);
    moved.replace(moved.find("out_dir = /tmp/out"), 18, "out_dir = /tmp/b2");
    ExperimentConfig b = parse_config(moved);
    resolve_config(b);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(render_resolved(a) == render_resolved(b));

    // any substantive value shifts the hash
    std::string tweaked(kDeskConfig);
    tweaked.replace(tweaked.find("seed = 7"), 8, "seed = 8");
    ExperimentConfig c = parse_config(tweaked);
    resolve_config(c);
    CHECK(config_hash(a) != config_hash(c));

    std::string margin(kDeskConfig);
    margin += "\n[weights]\nmargin = 0.25\n";
    ExperimentConfig d = parse_config(margin);
    resolve_config(d);
    CHECK(config_hash(a) != config_hash(d));

    // hash format: 16 hex digits
    const std::string h = config_hash(a);
    CHECK(h.size() == 16);
    for (char ch : h) CHECK(std::string("0123456789abcdef").find(ch) != std::string::npos);
}

TEST_CASE("explicit camera styles") {
    const char* text =
        "[dataset]\nkind = synthetic\nworld_dir = /w\n"
        "m_source_cams = 2\nm_target_cams = 2\n"
        "n_source_ids = 2\nn_target_ids = 2\nimages_per_id_per_cam = 1\n"
        "source_style_1 = 1.1 0.9 1.0 0.05 0.01\n"
        "source_style_2 = 0.9 1.0 1.1 -0.05 0.01\n"
        "target_style_1 = 1.3 0.8 0.7 0.2 0.02\n"
        "target_style_2 = 0.7 1.2 1.3 -0.2 0.02\n"
        "[run]\nseed = 3\n";
    ExperimentConfig cfg = parse_config(text);
    resolve_config(cfg);
    REQUIRE(cfg.world.source_styles.size() == 2);
    REQUIRE(cfg.world.target_styles.size() == 2);
    CHECK(cfg.world.source_styles[0].gain[0] == 1.1);
    CHECK(cfg.world.source_styles[0].gain[1] == 0.9);
    CHECK(cfg.world.source_styles[0].brightness == 0.05);
    CHECK(cfg.world.source_styles[0].sigma == 0.01);
    CHECK(cfg.world.target_styles[1].gain[2] == 1.3);
    CHECK(cfg.world.target_styles[1].brightness == -0.2);

    // a style for a camera past the declared count is rejected
    const std::string extra = std::string(text) + "source_style_3 = 1 1 1 0 0\n";
    CHECK(must_throw_msg(extra) != "");

    // malformed style tuple
    CHECK(must_throw_msg("[dataset]\nkind = synthetic\nworld_dir = /w\n"
                         "source_style_1 = 1 1 1\n[run]\nseed = 1\n") != "");
}

TEST_CASE("schedule and run bounds") {
    const std::string world =
        "[dataset]\nkind = synthetic\nworld_dir = /w\nn_source_ids = 2\n"
        "n_target_ids = 2\nm_source_cams = 2\nm_target_cams = 2\n"
        "images_per_id_per_cam = 1\n";
    CHECK(must_throw_msg(world + "[schedule]\nmomentum = 1.5\n[run]\nseed = 1\n")
              .find("momentum") != std::string::npos);
    CHECK(must_throw_msg(world + "[schedule]\nbase_lr_new = 0\n[run]\nseed = 1\n")
              .find("learning rate") != std::string::npos);
    CHECK(must_throw_msg(world + "[run]\nseed = 1\nsave_every = 0\n")
              .find("save_every") != std::string::npos);
    CHECK(must_throw_msg(world + "[run]\nseed = 1\neval_max_rank = 0\n")
              .find("eval_max_rank") != std::string::npos);
}
