#include "train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "common.hpp"
#include "eval.hpp"
#include "losses.hpp"

namespace xreid {

using namespace ad;

double lr_at(long epoch, double base_lr, long decay_period) {
    if (epoch < 0) fail(Errc::invalid_argument, "lr_at: negative epoch");
    if (decay_period < 1) fail(Errc::invalid_argument, "lr_at: decay period must be >= 1");
    double p = 1.0;
    for (long k = 0; k < epoch / decay_period; ++k) p *= 10.0;
    return base_lr / p;
}

std::string metrics_line(const StepMetrics& m) {
    std::ostringstream o;
    o << m.step << "\t" << m.epoch << "\t" << format_double(m.lr) << "\t"
      << format_double(m.l_class_src) << "\t" << format_double(m.l_class_stt) << "\t"
      << format_double(m.l_tri_src) << "\t" << format_double(m.l_tri_st) << "\t"
      << format_double(m.l_tri_ttt) << "\t" << format_double(m.total);
    return o.str();
}

StepBatches draw_step_batches(const TrainContext& ctx, Rng& rng) {
    const BatchRecipe& r = ctx.recipe;
    const LossWeights& w = ctx.weights;
    StepBatches b;
    if (w.gamma1 > 0) {
        b.cls = sample_classification_batch(*ctx.s, *ctx.st, r, ctx.label_map, rng);
        b.cofwd = sample_uniform(*ctx.t, r.t_cofwd, rng);
    }
    if (w.gamma2 > 0) {
        if (w.beta1 > 0) b.tri_s = sample_pk_batch(*ctx.s, r.pk_p, r.pk_k, ctx.label_map, rng);
        if (w.beta2 > 0) {
            const long k_st = (r.tri_st + r.pk_p - 1) / r.pk_p;
            b.tri_st = sample_pk_batch(*ctx.st, r.pk_p, k_st, ctx.label_map, rng);
        }
        if (w.beta3 > 0)
            b.tri_ttt = sample_ttt_batch(*ctx.t, *ctx.tt, r.tri_tt_anchors,
                                         r.tri_t_total - r.tri_tt_anchors, rng);
    }
    return b;
}

namespace {

Tensor batch_pixels(const std::vector<ImageRecord>& records, PixelCache& cache) {
    std::vector<Tensor> imgs;
    imgs.reserve(records.size());
    for (const ImageRecord& r : records) imgs.push_back(cache.get(r));
    return stack_images(imgs);
}

Var zero_scalar() { return Var::constant(Tensor::zeros({1})); }

}  // namespace

Var step_loss(const TrainContext& ctx, const StepBatches& b, StepMetrics* m) {
    const LossWeights& w = ctx.weights;
    const long n_src = static_cast<long>(b.cls.records.size()) >= ctx.recipe.class_src
                           ? ctx.recipe.class_src
                           : 0;
    Var l_s = zero_scalar(), l_stt = zero_scalar();
    if (w.gamma1 > 0 && !b.cls.records.empty()) {
        std::vector<ImageRecord> joined = b.cls.records;
        joined.insert(joined.end(), b.cofwd.begin(), b.cofwd.end());
        ForwardOutput out = ctx.model->forward(Var::constant(batch_pixels(joined, *ctx.cache)),
                                               /*training=*/true);
        const long n_st = static_cast<long>(b.cls.records.size()) - n_src;
        if (n_src > 0)
            l_s = cross_entropy_loss(
                slice_rows(out.logits, 0, n_src),
                std::vector<int>(b.cls.labels.begin(), b.cls.labels.begin() + n_src));
        if (n_st > 0)
            l_stt = cross_entropy_loss(
                slice_rows(out.logits, n_src, n_src + n_st),
                std::vector<int>(b.cls.labels.begin() + n_src, b.cls.labels.end()));
    }

    auto triplet_stream = [&](const std::vector<ImageRecord>& recs,
                              const std::vector<int>& labels) {
        ForwardOutput out = ctx.model->forward(Var::constant(batch_pixels(recs, *ctx.cache)),
                                               /*training=*/true);
        return batch_hard_triplet_loss(out.emb128, labels, w.margin);
    };
    Var l_tri_s = zero_scalar(), l_tri_st = zero_scalar(), l_tri_ttt = zero_scalar();
    if (w.gamma2 > 0) {
        if (w.beta1 > 0) l_tri_s = triplet_stream(b.tri_s.records, b.tri_s.labels);
        if (w.beta2 > 0) l_tri_st = triplet_stream(b.tri_st.records, b.tri_st.labels);
        if (w.beta3 > 0) l_tri_ttt = triplet_stream(b.tri_ttt.records, b.tri_ttt.surrogate_labels);
    }

    Var class_dual = dual_classification_loss(l_s, l_stt, w.alpha);
    Var tri_total = total_triplet_loss(l_tri_s, l_tri_st, l_tri_ttt, w.beta1, w.beta2, w.beta3);
    Var total = total_loss(class_dual, tri_total, w.gamma1, w.gamma2);
    if (m) {
        m->l_class_src = l_s.item();
        m->l_class_stt = l_stt.item();
        m->l_tri_src = l_tri_s.item();
        m->l_tri_st = l_tri_st.item();
        m->l_tri_ttt = l_tri_ttt.item();
        m->total = total.item();
    }
    return total;
}

namespace {

void dump_batches(const TrainContext& ctx, const StepBatches& b, long step) {
    if (ctx.run_dir.empty()) return;
    std::ostringstream o;
    auto dump = [&](const char* stream, const std::vector<ImageRecord>& recs) {
        for (const ImageRecord& r : recs)
            o << stream << "\t" << r.filename << "\t" << r.person_id << "\t" << r.camera_id
              << "\n";
    };
    dump("classification", b.cls.records);
    dump("cofwd", b.cofwd);
    dump("tri_src", b.tri_s.records);
    dump("tri_st", b.tri_st.records);
    dump("tri_ttt", b.tri_ttt.records);
    write_text_file_atomic(path_join(ctx.run_dir, "abort_step" + std::to_string(step) +
                                                      ".manifest"),
                           o.str());
}

}  // namespace

std::vector<StepMetrics> train_epoch(TrainContext& ctx, long epoch, long steps_per_epoch,
                                     long step_base, nn::SgdMomentum& opt) {
    if (ctx.weights.gamma1 <= 0 && ctx.weights.gamma2 <= 0)
        fail(Errc::invalid_argument, "training: both objective weights are zero");
    const double lr_new = lr_at(epoch, ctx.schedule.base_lr_new, ctx.schedule.decay_period);
    const double lr_back = ctx.model->config().backbone == "resnet50"
                               ? lr_at(epoch, ctx.schedule.base_lr_backbone,
                                       ctx.schedule.decay_period)
                               : lr_new;
    auto lr_of = [&](const std::string& group) { return group == "backbone" ? lr_back : lr_new; };

    // per-epoch stream so an interrupted run resumes with the same batches
    Rng rng(ctx.model->config().seed ^ fnv1a64("train-epoch:" + std::to_string(epoch)));

    std::vector<StepMetrics> out;
    out.reserve(steps_per_epoch);
    for (long s = 0; s < steps_per_epoch; ++s) {
        StepBatches b = draw_step_batches(ctx, rng);
        StepMetrics m;
        m.step = step_base + s;
        m.epoch = epoch;
        m.lr = lr_new;
        Var total = step_loss(ctx, b, &m);
        if (!std::isfinite(m.total)) {
            dump_batches(ctx, b, m.step);
            fail(Errc::state, "training: non-finite loss at step " + std::to_string(m.step) +
                                  (ctx.run_dir.empty() ? "" : ", offending batches dumped"));
        }
        GradMap grads = backward(total);
        opt.step(ctx.model->registry(), grads, lr_of);
        out.push_back(m);
    }
    return out;
}

namespace {

long find_resume_epoch(const std::string& dir, long max_epoch) {
    if (!dir_exists(dir)) return 0;
    long best = 0;
    for (const std::string& name : list_dir_sorted(dir)) {
        if (name.rfind("ckpt_epoch", 0) != 0) continue;
        if (name.size() > 5 && name.compare(name.size() - 5, 5, ".meta") == 0) continue;
        try {
            const long k = std::stol(name.substr(10));
            if (k > best && k <= max_epoch) best = k;
        } catch (const std::exception&) {
        }
    }
    return best;
}

}  // namespace

TrainResult run_training(const ExperimentConfig& cfg, const DomainDataset& s,
                         const DomainDataset& t, const DomainDataset& st,
                         const DomainDataset& tt) {
    if (cfg.out_dir.empty()) fail(Errc::invalid_argument, "training: output directory not set");
    if (cfg.weights.gamma1 <= 0 && cfg.weights.gamma2 <= 0)
        fail(Errc::invalid_argument, "training: both objective weights are zero");
    make_dirs(cfg.out_dir);

    ModelConfig mc = cfg.model;
    mc.n_classes = s.stats().n_identities;
    ReIDModel model(mc);
    const std::string hash = config_hash(cfg);
    write_text_file_atomic(path_join(cfg.out_dir, "config.resolved"), render_resolved(cfg));

    DomainMap dm{s.stats().n_cameras, t.stats().n_cameras};
    PixelCache cache(cfg.image_h, cfg.image_w, nullptr, dm);

    TrainContext ctx;
    ctx.model = &model;
    ctx.s = &s;
    ctx.t = &t;
    ctx.st = &st;
    ctx.tt = &tt;
    ctx.cache = &cache;
    ctx.label_map = s.label_map();
    ctx.recipe = cfg.recipe;
    ctx.weights = cfg.weights;
    ctx.schedule = cfg.schedule;
    ctx.run_dir = cfg.out_dir;

    const long steps_per_epoch =
        (s.n_images() + std::max(1L, cfg.recipe.class_src) - 1) /
        std::max(1L, cfg.recipe.class_src);

    const long start_epoch = find_resume_epoch(cfg.out_dir, cfg.schedule.total_epochs);
    if (start_epoch > 0) {
        const std::string path =
            path_join(cfg.out_dir, "ckpt_epoch" + std::to_string(start_epoch));
        const long recorded = load_model_checkpoint(model, path, hash);
        if (recorded != start_epoch) fail(Errc::state, "training: checkpoint epoch mismatch");
    }

    std::ofstream metrics(path_join(cfg.out_dir, "metrics.log"),
                          start_epoch > 0 ? std::ios::app : std::ios::trunc);
    std::ofstream timing(path_join(cfg.out_dir, "timing.log"),
                         start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics || !timing) fail(Errc::io, "training: cannot open logs in " + cfg.out_dir);

    nn::SgdMomentum opt(cfg.schedule.momentum, cfg.schedule.weight_decay);
    TrainResult res;
    res.completed_epochs = start_epoch;
    std::string last_ckpt =
        start_epoch > 0 ? path_join(cfg.out_dir, "ckpt_epoch" + std::to_string(start_epoch)) : "";

    for (long e = start_epoch; e < cfg.schedule.total_epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<StepMetrics> h = train_epoch(ctx, e, steps_per_epoch, e * steps_per_epoch,
                                                 opt);
        for (const StepMetrics& m : h) metrics << metrics_line(m) << "\n";
        metrics.flush();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        timing << "epoch\t" << e << "\t" << format_double(secs) << "\n";
        timing.flush();
        res.history.insert(res.history.end(), h.begin(), h.end());
        res.completed_epochs = e + 1;

        const bool last = e + 1 == cfg.schedule.total_epochs;
        if ((e + 1) % cfg.save_every == 0 || last) {
            last_ckpt = path_join(cfg.out_dir, "ckpt_epoch" + std::to_string(e + 1));
            save_model_checkpoint(model, last_ckpt, hash, e + 1);
        }
    }
    res.final_checkpoint = last_ckpt;
    return res;
}

double finite_difference_check(const TrainContext& ctx, long n_params, double eps, Rng& rng) {
    if (n_params < 1 || eps <= 0) fail(Errc::invalid_argument, "gradient check: bad parameters");
    Rng batch_rng = rng.fork("fd-batches");
    const StepBatches b = draw_step_batches(ctx, batch_rng);

    Var total = step_loss(ctx, b, nullptr);
    GradMap grads = backward(total);

    auto loss_value = [&]() {
        NoGradGuard ng;
        return step_loss(ctx, b, nullptr).item();
    };

    std::vector<std::pair<nn::Entry*, long>> coords;
    {
        std::vector<nn::Entry*> trainable;
        long total_scalars = 0;
        for (nn::Entry& e : ctx.model->registry().entries())
            if (e.trainable) {
                trainable.push_back(&e);
                total_scalars += e.var.value().size();
            }
        if (total_scalars == 0) fail(Errc::state, "gradient check: no trainable parameters");
        for (long k = 0; k < n_params; ++k) {
            long flat = static_cast<long>(rng.bounded(static_cast<std::size_t>(total_scalars)));
            for (nn::Entry* e : trainable) {
                const long sz = e->var.value().size();
                if (flat < sz) {
                    coords.emplace_back(e, flat);
                    break;
                }
                flat -= sz;
            }
        }
    }

    double max_rel = 0.0;
    for (auto& [entry, idx] : coords) {
        double* p = entry->var.value().data() + idx;
        const double keep = *p;
        *p = keep + eps;
        const double f_plus = loss_value();
        *p = keep - eps;
        const double f_minus = loss_value();
        *p = keep;
        const double fd = (f_plus - f_minus) / (2.0 * eps);

        double a = 0.0;
        auto git = grads.find(entry->var.node());
        if (git != grads.end()) a = git->second.value().data()[idx];

        const double denom = std::max({1e-8, std::abs(a), std::abs(fd)});
        max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
    return max_rel;
}

}  // namespace xreid
