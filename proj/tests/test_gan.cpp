#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/gan.hpp"
#include "core/rng.hpp"
#include "core/synth.hpp"

using namespace xreid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int c = 0;
        path = fs::temp_directory_path() /
               ("xreid_gan_" + std::to_string(::getpid()) + "_" + std::to_string(c++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

GanConfig tiny_config() {
    GanConfig cfg;
    cfg.image_h = 16;
    cfg.image_w = 16;
    cfg.batch_size = 2;
    cfg.base_channels = 4;
    cfg.n_res_blocks = 1;
    cfg.total_iterations = 4;
    cfg.d_steps_per_g = 5;
    cfg.log_every = 1;
    cfg.seed = 9;
    return cfg;
}

Tensor random_image(long h, long w, std::uint64_t seed) {
    Tensor t({3, h, w});
    Rng rng(seed);
    for (long i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

// a 2-source/2-target world whose images live on disk
struct TinyWorld {
    TempDir dir;
    DomainDataset s, t;
    TinyWorld() {
        SyntheticWorldSpec spec;
        spec.n_source_ids = 2;
        spec.n_target_ids = 2;
        spec.m_source_cams = 2;
        spec.m_target_cams = 2;
        spec.images_per_id_per_cam = 2;
        spec.image_h = 16;
        spec.image_w = 16;
        spec.seed = 3;
        resolve_world_spec(spec);
        auto pair = synthesize_world(spec, dir.str());
        s = pair.first;
        t = pair.second;
    }
};

}  // namespace

TEST_CASE("config validation") {
    GanConfig good = tiny_config();
    validate_gan_config(good);

    GanConfig c = good;
    c.total_iterations = 0;
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.lambda_rec = -1.0;
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.d_steps_per_g = 0;
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.image_w = 20;  // not a multiple of 8
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.image_h = 8;  // below the floor
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.lr = 0.0;
    CHECK_THROWS_AS(validate_gan_config(c), Error);
    c = good;
    c.batch_size = 0;
    CHECK_THROWS_AS(validate_gan_config(c), Error);
}

TEST_CASE("generator contracts on random inputs") {
    const DomainMap dm{2, 2};
    GanEngine eng(tiny_config(), dm);

    SUBCASE("output shape and range") {
        for (int trial = 0; trial < 3; ++trial) {
            const Tensor img = random_image(16, 16, 50 + static_cast<std::uint64_t>(trial));
            const Tensor out = eng.transfer(img, trial % 4, (trial + 1) % 4);
            REQUIRE(out.shape() == img.shape());
            for (long i = 0; i < out.size(); ++i) {
                CHECK(out[i] >= -1.0);
                CHECK(out[i] <= 1.0);
            }
        }
    }

    SUBCASE("transfer is deterministic") {
        const Tensor img = random_image(16, 16, 77);
        const Tensor a = eng.transfer(img, 0, 3);
        const Tensor b = eng.transfer(img, 0, 3);
        for (long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }

    SUBCASE("wrong size or domain is refused") {
        CHECK_THROWS_AS(eng.transfer(random_image(16, 24, 5), 0, 1), Error);
        CHECK_THROWS_AS(eng.transfer(random_image(16, 16, 5), 0, 4), Error);
        CHECK_THROWS_AS(eng.transfer(random_image(16, 16, 5), -1, 1), Error);
    }

    SUBCASE("critic heads cover the joint domain set") {
        ad::NoGradGuard ng;
        Tensor batch({2, 3, 16, 16});
        Rng rng(4);
        for (long i = 0; i < batch.size(); ++i) batch[i] = rng.uniform(-1.0, 1.0);
        auto [patch, logits] = eng.discriminate(ad::Var::constant(batch));
        CHECK(patch.shape()[0] == 2);
        CHECK(patch.shape()[1] == 1);
        CHECK(logits.shape() == std::vector<long>{2, 4});  // M_source + M_target heads
    }
}

TEST_CASE("alternating update bookkeeping") {
    TinyWorld w;
    GanConfig cfg = tiny_config();
    GanTrainLog log;
    auto eng = train_style_engine(w.s, w.t, cfg, &log);
    REQUIRE(eng != nullptr);

    // one log row per generator iteration, five critic updates each
    CHECK(log.rec.size() == 4);
    CHECK(log.d_loss.size() == 4);
    CHECK(log.g_adv.size() == 4);
    CHECK(log.g_cls.size() == 4);
    CHECK(log.d_updates == 20);
    for (double v : log.rec) CHECK(std::isfinite(v));
    for (double v : log.d_loss) CHECK(std::isfinite(v));
}

TEST_CASE("checkpoint round trip preserves behaviour") {
    TinyWorld w;
    GanConfig cfg = tiny_config();
    cfg.total_iterations = 2;
    auto eng = train_style_engine(w.s, w.t, cfg, nullptr);

    TempDir tmp;
    const std::string path = path_join(tmp.str(), "style_engine");
    save_gan_checkpoint(*eng, path);
    CHECK(file_exists(path));
    CHECK(file_exists(path + ".meta"));

    auto back = load_gan_checkpoint(path);
    REQUIRE(back != nullptr);
    CHECK(back->config().image_h == 16);
    CHECK(back->domain_map().m_source == 2);
    CHECK(back->domain_map().m_target == 2);

    const Tensor img = random_image(16, 16, 123);
    const Tensor a = eng->transfer(img, 1, 2);
    const Tensor b = back->transfer(img, 1, 2);
    REQUIRE(a.shape() == b.shape());
    for (long i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    SUBCASE("a mangled sidecar is rejected") {
        write_text_file_atomic(path + ".meta", "not a sidecar\n");
        CHECK_THROWS_AS(load_gan_checkpoint(path), Error);
    }
    SUBCASE("a missing blob is an io error") {
        try {
            load_gan_checkpoint(path_join(tmp.str(), "absent"));
            FAIL("expected a throw");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::io);
        }
    }
}

TEST_CASE("training rejects an empty side") {
    TinyWorld w;
    CHECK_THROWS_AS(train_style_engine(DomainDataset{}, w.t, tiny_config(), nullptr), Error);
}
