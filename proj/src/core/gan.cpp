#include "gan.hpp"

#include <cmath>
#include <sstream>

#include "common.hpp"
#include "losses.hpp"

namespace xreid {

using namespace ad;
using nn::Init;

void validate_gan_config(const GanConfig& cfg) {
    if (cfg.lambda_cls < 0 || cfg.lambda_rec < 0 || cfg.lambda_gp < 0)
        fail(Errc::invalid_argument, "gan config: loss weights must be >= 0");
    if (cfg.d_steps_per_g < 1) fail(Errc::invalid_argument, "gan config: d_steps_per_g >= 1");
    if (cfg.total_iterations < 1)
        fail(Errc::invalid_argument, "gan config: zero iterations requested");
    if (cfg.batch_size < 1) fail(Errc::invalid_argument, "gan config: batch_size >= 1");
    if (cfg.lr <= 0) fail(Errc::invalid_argument, "gan config: learning rate must be positive");
    if (cfg.image_h < 16 || cfg.image_w < 16 || cfg.image_h % 8 || cfg.image_w % 8)
        fail(Errc::invalid_argument, "gan config: image sides must be multiples of 8, >= 16");
    if (cfg.base_channels < 2) fail(Errc::invalid_argument, "gan config: base_channels >= 2");
    if (cfg.n_res_blocks < 0) fail(Errc::invalid_argument, "gan config: n_res_blocks >= 0");
}

GanEngine::GanEngine(const GanConfig& cfg, const DomainMap& dm) : cfg_(cfg), dm_(dm) {
    validate_gan_config(cfg_);
    if (dm_.n() < 2) fail(Errc::invalid_argument, "gan: joint domain count must be >= 2");
    Rng rng(cfg_.seed ^ fnv1a64("gan-init"));
    const long c = cfg_.base_channels;
    const long nd = dm_.n();

    auto gconv = [&](const std::string& name, long cin, long cout, int k, int s, int p,
                     bool bias) {
        g_convs_.emplace_back(reg_, name, "gen", cin, cout, k, s, p, bias, Init::dcgan, rng);
    };
    auto gin = [&](const std::string& name, long ch) {
        g_ins_.emplace_back(reg_, name, "gen", ch);
    };

    gconv("g.down0.conv", 3 + nd, c, 7, 1, 3, false);
    gin("g.down0.in", c);
    gconv("g.down1.conv", c, 2 * c, 4, 2, 1, false);
    gin("g.down1.in", 2 * c);
    gconv("g.down2.conv", 2 * c, 4 * c, 4, 2, 1, false);
    gin("g.down2.in", 4 * c);
    for (long r = 0; r < cfg_.n_res_blocks; ++r) {
        const std::string base = "g.res" + std::to_string(r);
        gconv(base + ".conv1", 4 * c, 4 * c, 3, 1, 1, false);
        gin(base + ".in1", 4 * c);
        gconv(base + ".conv2", 4 * c, 4 * c, 3, 1, 1, false);
        gin(base + ".in2", 4 * c);
    }
    gconv("g.up0.conv", 4 * c, 2 * c, 3, 1, 1, false);
    gin("g.up0.in", 2 * c);
    gconv("g.up1.conv", 2 * c, c, 3, 1, 1, false);
    gin("g.up1.in", c);
    gconv("g.out.conv", c, 3, 7, 1, 3, true);

    // critic body stays piecewise-linear so the gradient penalty's second
    // derivative pass has everything it needs
    d_convs_.emplace_back(reg_, "d.conv0", "disc", 3, c, 4, 2, 1, true, Init::dcgan, rng);
    d_convs_.emplace_back(reg_, "d.conv1", "disc", c, 2 * c, 4, 2, 1, true, Init::dcgan, rng);
    d_convs_.emplace_back(reg_, "d.conv2", "disc", 2 * c, 4 * c, 4, 2, 1, true, Init::dcgan, rng);
    d_src_ = nn::Conv2d(reg_, "d.src", "disc", 4 * c, 1, 3, 1, 1, false, Init::dcgan, rng);
    d_cls_ = nn::Linear(reg_, "d.cls", "disc", 4 * c, nd, true, Init::dcgan, rng);
}

namespace {

Tensor onehot_channels(const Tensor& rows, long h, long w) {
    const long n = rows.shape()[0], nd = rows.shape()[1];
    Tensor out({n, nd, h, w});
    for (long i = 0; i < n; ++i)
        for (long d = 0; d < nd; ++d) {
            const double v = rows.at2(i, d);
            double* p = out.data() + ((i * nd + d) * h * w);
            for (long k = 0; k < h * w; ++k) p[k] = v;
        }
    return out;
}

Tensor onehot_rows(const std::vector<int>& labels, long nd) {
    Tensor rows({static_cast<long>(labels.size()), nd});
    for (size_t i = 0; i < labels.size(); ++i) rows.at2(i, labels[i]) = 1.0;
    return rows;
}

}  // namespace

Var GanEngine::generate(const Var& x, const Tensor& target_onehot_rows) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != 3)
        fail(Errc::invalid_argument, "gan generate: expected (N,3,H,W) input");
    if (target_onehot_rows.shape()[0] != s[0] || target_onehot_rows.shape()[1] != dm_.n())
        fail(Errc::invalid_argument, "gan generate: domain rows misaligned with batch");

    Var h = concat_channels(x, Var::constant(onehot_channels(target_onehot_rows, s[2], s[3])));
    size_t ci = 0, ii = 0;
    for (int down = 0; down < 3; ++down)
        h = relu(g_ins_[ii++].forward(g_convs_[ci++].forward(h)));
    for (long r = 0; r < cfg_.n_res_blocks; ++r) {
        Var y = relu(g_ins_[ii++].forward(g_convs_[ci++].forward(h)));
        y = g_ins_[ii++].forward(g_convs_[ci++].forward(y));
        h = add(h, y);
    }
    for (int up = 0; up < 2; ++up) {
        h = upsample_nearest2x(h);
        h = relu(g_ins_[ii++].forward(g_convs_[ci++].forward(h)));
    }
    return tanh(g_convs_[ci].forward(h));
}

std::pair<Var, Var> GanEngine::discriminate(const Var& x) const {
    Var h = x;
    for (const nn::Conv2d& conv : d_convs_) h = leaky_relu(conv.forward(h), 0.01);
    Var src = d_src_.forward(h);
    Var cls = d_cls_.forward(mean_per_nc(h));
    return {src, cls};
}

Tensor GanEngine::transfer(const Tensor& img, int from_domain, int to_domain) const {
    const auto& s = img.shape();
    if (s.size() != 3 || s[0] != 3 || s[1] != cfg_.image_h || s[2] != cfg_.image_w)
        fail(Errc::invalid_argument, "gan transfer: image does not match the engine's size " +
                                         std::to_string(cfg_.image_h) + "x" +
                                         std::to_string(cfg_.image_w));
    if (from_domain < 0 || from_domain >= dm_.n() || to_domain < 0 || to_domain >= dm_.n())
        fail(Errc::invalid_argument, "gan transfer: domain index out of range");
    NoGradGuard ng;
    Tensor batch({1, 3, s[1], s[2]});
    for (long i = 0; i < img.size(); ++i) batch.data()[i] = img.data()[i];
    Tensor rows({1, dm_.n()});
    rows.at2(0, to_domain) = 1.0;
    const Tensor out = generate(Var::constant(batch), rows).value();
    Tensor res({3, s[1], s[2]});
    for (long i = 0; i < res.size(); ++i) res.data()[i] = out.data()[i];
    return res;
}

namespace {

struct PoolEntry {
    const ImageRecord* rec;
    int domain;
};

double check_finite(double v, const char* what, long iter) {
    if (!std::isfinite(v))
        fail(Errc::state, std::string("gan training: non-finite ") + what + " at iteration " +
                              std::to_string(iter));
    return v;
}

}  // namespace

std::unique_ptr<GanEngine> train_style_engine(const DomainDataset& source,
                                              const DomainDataset& target, const GanConfig& cfg,
                                              GanTrainLog* log) {
    validate_gan_config(cfg);
    if (source.n_images() == 0 || target.n_images() == 0)
        fail(Errc::invalid_argument, "gan training: empty dataset");
    DomainMap dm{source.stats().n_cameras, target.stats().n_cameras};
    auto engine = std::make_unique<GanEngine>(cfg, dm);
    const long nd = dm.n();

    std::vector<PoolEntry> pool;
    pool.reserve(source.n_images() + target.n_images());
    for (const ImageRecord& r : source.records) pool.push_back({&r, dm.index_of(r)});
    for (const ImageRecord& r : target.records) pool.push_back({&r, dm.index_of(r)});

    PixelCache cache(cfg.image_h, cfg.image_w, nullptr, dm, 4096);
    Rng rng(cfg.seed ^ fnv1a64("gan-train"));
    nn::Adam adam_g(cfg.lr, cfg.adam_b1, cfg.adam_b2);
    nn::Adam adam_d(cfg.lr, cfg.adam_b1, cfg.adam_b2);

    const long b = cfg.batch_size;
    auto draw_batch = [&](Tensor& x, std::vector<int>& org, std::vector<int>& trg) {
        x = Tensor({b, 3, cfg.image_h, cfg.image_w});
        org.resize(b);
        trg.resize(b);
        const long per = 3 * cfg.image_h * cfg.image_w;
        for (long i = 0; i < b; ++i) {
            const PoolEntry& e = pool[rng.bounded(pool.size())];
            const Tensor px = cache.get(*e.rec);
            for (long k = 0; k < per; ++k) x.data()[i * per + k] = px.data()[k];
            org[i] = e.domain;
            trg[i] = static_cast<int>(rng.bounded(nd));
        }
    };

    GanTrainLog local;
    GanTrainLog& lg = log ? *log : local;
    double last_d = 0.0;

    for (long g_iter = 0; g_iter < cfg.total_iterations; ++g_iter) {
        for (long k = 0; k < cfg.d_steps_per_g; ++k) {
            Tensor x;
            std::vector<int> org, trg;
            draw_batch(x, org, trg);
            const Tensor trg_rows = onehot_rows(trg, nd);

            Tensor fake_px;
            {
                NoGradGuard ng;
                fake_px = engine->generate(Var::constant(x), trg_rows).value();
            }

            auto [src_real, cls_real] = engine->discriminate(Var::constant(x));
            Var loss_real = neg(mean_all(src_real));
            Var loss_cls = cross_entropy_loss(cls_real, org);
            auto [src_fake, cls_fake] = engine->discriminate(Var::constant(fake_px));
            Var loss_fake = mean_all(src_fake);

            Tensor interp(x.shape());
            const long per = 3 * cfg.image_h * cfg.image_w;
            for (long i = 0; i < b; ++i) {
                const double e = rng.uniform();
                for (long j = 0; j < per; ++j)
                    interp.data()[i * per + j] =
                        e * x.data()[i * per + j] + (1.0 - e) * fake_px.data()[i * per + j];
            }
            Var xhat = Var::param(interp);
            auto [src_hat, cls_hat] = engine->discriminate(xhat);
            Var gnorm = sqrt(sum_per_sample(square(grad_of(sum_all(src_hat), xhat, true))));
            Var gp = mean_all(square(add_scalar(gnorm, -1.0)));

            Var d_loss = add(add(loss_real, loss_fake),
                             add(mul_scalar(loss_cls, cfg.lambda_cls),
                                 mul_scalar(gp, cfg.lambda_gp)));
            last_d = check_finite(d_loss.item(), "critic loss", g_iter);
            GradMap grads = backward(d_loss);
            adam_d.step(engine->registry(), grads, "disc");
            lg.d_updates += 1;
        }

        Tensor x;
        std::vector<int> org, trg;
        draw_batch(x, org, trg);
        const Tensor trg_rows = onehot_rows(trg, nd);
        const Tensor org_rows = onehot_rows(org, nd);

        Var xr = Var::constant(x);
        Var fake = engine->generate(xr, trg_rows);
        auto [src_fake, cls_fake] = engine->discriminate(fake);
        Var g_adv = neg(mean_all(src_fake));
        Var g_cls = cross_entropy_loss(cls_fake, trg);
        Var rec = mean_all(abs(sub(xr, engine->generate(fake, org_rows))));
        Var g_loss = add(g_adv, add(mul_scalar(g_cls, cfg.lambda_cls),
                                    mul_scalar(rec, cfg.lambda_rec)));
        check_finite(g_loss.item(), "generator loss", g_iter);
        GradMap grads = backward(g_loss);
        adam_g.step(engine->registry(), grads, "gen");

        lg.rec.push_back(rec.item());
        lg.d_loss.push_back(last_d);
        lg.g_adv.push_back(g_adv.item());
        lg.g_cls.push_back(g_cls.item());
    }
    return engine;
}

void save_gan_checkpoint(const GanEngine& engine, const std::string& path) {
    nn::save_registry_blob(engine.registry(), path);
    const GanConfig& c = engine.config();
    std::ostringstream meta;
    meta << "lambda_cls = " << format_double(c.lambda_cls) << "\n";
    meta << "lambda_rec = " << format_double(c.lambda_rec) << "\n";
    meta << "lambda_gp = " << format_double(c.lambda_gp) << "\n";
    meta << "d_steps_per_g = " << c.d_steps_per_g << "\n";
    meta << "adam_b1 = " << format_double(c.adam_b1) << "\n";
    meta << "adam_b2 = " << format_double(c.adam_b2) << "\n";
    meta << "lr = " << format_double(c.lr) << "\n";
    meta << "total_iterations = " << c.total_iterations << "\n";
    meta << "image_h = " << c.image_h << "\n";
    meta << "image_w = " << c.image_w << "\n";
    meta << "batch_size = " << c.batch_size << "\n";
    meta << "base_channels = " << c.base_channels << "\n";
    meta << "n_res_blocks = " << c.n_res_blocks << "\n";
    meta << "seed = " << c.seed << "\n";
    meta << "m_source = " << engine.domain_map().m_source << "\n";
    meta << "m_target = " << engine.domain_map().m_target << "\n";
    write_text_file_atomic(path + ".meta", meta.str());
}

std::unique_ptr<GanEngine> load_gan_checkpoint(const std::string& path) {
    const std::string meta = read_text_file(path + ".meta");
    GanConfig cfg;
    DomainMap dm;
    std::istringstream in(meta);
    std::string line;
    while (std::getline(in, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key == "lambda_cls") cfg.lambda_cls = std::stod(val);
        else if (key == "lambda_rec") cfg.lambda_rec = std::stod(val);
        else if (key == "lambda_gp") cfg.lambda_gp = std::stod(val);
        else if (key == "d_steps_per_g") cfg.d_steps_per_g = std::stol(val);
        else if (key == "adam_b1") cfg.adam_b1 = std::stod(val);
        else if (key == "adam_b2") cfg.adam_b2 = std::stod(val);
        else if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "total_iterations") cfg.total_iterations = std::stol(val);
        else if (key == "image_h") cfg.image_h = std::stol(val);
        else if (key == "image_w") cfg.image_w = std::stol(val);
        else if (key == "batch_size") cfg.batch_size = std::stol(val);
        else if (key == "base_channels") cfg.base_channels = std::stol(val);
        else if (key == "n_res_blocks") cfg.n_res_blocks = std::stol(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "m_source") dm.m_source = std::stol(val);
        else if (key == "m_target") dm.m_target = std::stol(val);
    }
    if (dm.m_source < 1 || dm.m_target < 1)
        fail(Errc::io, "gan checkpoint: sidecar misses the camera-domain map");
    auto engine = std::make_unique<GanEngine>(cfg, dm);
    nn::load_registry_blob(engine->registry(), path);
    return engine;
}

}  // namespace xreid
