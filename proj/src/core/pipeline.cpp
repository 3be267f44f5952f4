#include "pipeline.hpp"

#include <sstream>
#include <utility>

#include "common.hpp"
#include "dataset.hpp"
#include "style.hpp"
#include "synth.hpp"

namespace xreid {

namespace {

void require_out_dir(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) fail(Errc::invalid_argument, "[run] out_dir or --out is required");
}

// camera ids with at least one image, ascending
std::vector<int> cameras_of(const DomainDataset& ds) {
    const DatasetStats st = ds.stats();
    std::vector<int> cams;
    for (std::size_t i = 0; i < st.per_camera_counts.size(); ++i)
        if (st.per_camera_counts[i] > 0) cams.push_back(static_cast<int>(i) + 1);
    return cams;
}

// labelled source + unlabelled target train splits
std::pair<DomainDataset, DomainDataset> load_train_datasets(const ExperimentConfig& cfg) {
    std::string source_root, target_root;
    if (cfg.dataset_kind == "synthetic") {
        if (!file_exists(path_join(cfg.world_dir, "world.manifest")))
            fail(Errc::state, "no world found at " + cfg.world_dir + "; run the synth command first");
        source_root = path_join(cfg.world_dir, "source");
        target_root = path_join(cfg.world_dir, "target");
    } else {
        source_root = cfg.source_root;
        target_root = cfg.target_root;
    }
    DomainDataset s = load_domain(source_root, Split::train, true, DomainTag::S);
    DomainDataset t = load_domain(target_root, Split::train, false, DomainTag::T);
    return {std::move(s), std::move(t)};
}

std::string st_manifest_path(const ExperimentConfig& cfg) {
    return path_join(cfg.out_dir, "st.manifest");
}
std::string tt_manifest_path(const ExperimentConfig& cfg) {
    return path_join(cfg.out_dir, "tt.manifest");
}

// generated ST/TT pairs written earlier by cmd_generate
std::pair<DomainDataset, DomainDataset> load_generated_datasets(const ExperimentConfig& cfg) {
    const std::string stm = st_manifest_path(cfg);
    const std::string ttm = tt_manifest_path(cfg);
    if (!file_exists(stm) || !file_exists(ttm))
        fail(Errc::state,
             "generated manifests not found under " + cfg.out_dir + "; run the generate command first");
    DomainDataset st = load_manifest(stm, path_join(cfg.out_dir, "st"));
    DomainDataset tt = load_manifest(ttm, path_join(cfg.out_dir, "tt"));
    return {std::move(st), std::move(tt)};
}

// newest ckpt_epoch<k> in dir
std::string latest_checkpoint(const std::string& dir) {
    long best = -1;
    for (const std::string& name : list_dir_sorted(dir)) {
        if (name.rfind("ckpt_epoch", 0) != 0) continue;
        if (name.size() >= 5 && name.substr(name.size() - 5) == ".meta") continue;
        try {
            long e = std::stol(name.substr(10));
            if (e > best) best = e;
        } catch (const std::exception&) {
        }
    }
    if (best < 0)
        fail(Errc::state, "no model checkpoint under " + dir + "; run the train command first");
    return path_join(dir, "ckpt_epoch" + std::to_string(best));
}

long meta_n_classes(const std::string& ckpt_path) {
    std::istringstream in(read_text_file(ckpt_path + ".meta"));
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        if (trim(line.substr(0, eq)) == "n_classes") return std::stol(trim(line.substr(eq + 1)));
    }
    fail(Errc::io, "checkpoint sidecar " + ckpt_path + ".meta has no n_classes entry");
}

RankingResult run_ranking(ExperimentConfig cfg, bool use_oracle) {
    resolve_config(cfg);
    require_out_dir(cfg);

    const std::string ckpt = latest_checkpoint(cfg.out_dir);
    ModelConfig mc = cfg.model;
    mc.n_classes = meta_n_classes(ckpt);
    ReIDModel model(mc);
    load_model_checkpoint(model, ckpt, config_hash(cfg));

    const std::string eval_root =
        cfg.dataset_kind == "synthetic" ? path_join(cfg.world_dir, "target") : cfg.target_root;
    if (!dir_exists(path_join(eval_root, "query"))) {
        std::string msg = "no query split under " + eval_root;
        if (cfg.dataset_kind == "synthetic")
            msg += "; run the synth command with [dataset] n_eval_ids > 0 first";
        fail(Errc::state, msg);
    }
    DomainDataset query = load_domain(eval_root, Split::query, true, DomainTag::T);
    DomainDataset gallery = load_domain(eval_root, Split::gallery, true, DomainTag::T);

    PixelCache cache(cfg.image_h, cfg.image_w, nullptr, DomainMap{});
    Tensor qd = model.extract_descriptors(query, cache);
    Tensor gd = model.extract_descriptors(gallery, cache);

    RankingResult r = use_oracle ? oracle_evaluate(query, qd, gallery, gd, cfg.eval_max_rank)
                                 : evaluate(query, qd, gallery, gd, cfg.eval_max_rank);
    const std::string name = use_oracle ? "report_oracle.json" : "report.json";
    write_text_file_atomic(path_join(cfg.out_dir, name), ranking_report_json(r, config_hash(cfg)));
    return r;
}

}  // namespace

std::unique_ptr<StyleEngine> make_engine(const ExperimentConfig& cfg) {
    if (cfg.engine_kind == "parametric")
        return std::make_unique<ParametricEngine>(joint_styles(cfg.world));
    const std::string path = path_join(cfg.out_dir, "style_engine");
    if (!file_exists(path))
        fail(Errc::state,
             "translation engine checkpoint not found at " + path +
                 "; run the train-style command first");
    return load_gan_checkpoint(path);
}

void cmd_synth(ExperimentConfig cfg) {
    resolve_config(cfg);
    if (cfg.dataset_kind != "synthetic")
        fail(Errc::invalid_argument, "synth only applies to synthetic datasets");
    synthesize_world(cfg.world, cfg.world_dir);
}

void cmd_train_style(ExperimentConfig cfg) {
    resolve_config(cfg);
    require_out_dir(cfg);
    if (cfg.engine_kind != "gan")
        fail(Errc::invalid_argument,
             "the parametric engine has no trainable state; set [engine] kind = gan");
    auto [s, t] = load_train_datasets(cfg);
    make_dirs(cfg.out_dir);

    GanTrainLog log;
    std::unique_ptr<GanEngine> engine = train_style_engine(s, t, cfg.gan, &log);
    save_gan_checkpoint(*engine, path_join(cfg.out_dir, "style_engine"));

    std::ostringstream os;
    os << "iter\trec\td_loss\tg_adv\tg_cls\n";
    for (std::size_t i = 0; i < log.rec.size(); ++i)
        os << (i + 1) << "\t" << format_double(log.rec[i]) << "\t" << format_double(log.d_loss[i])
           << "\t" << format_double(log.g_adv[i]) << "\t" << format_double(log.g_cls[i]) << "\n";
    write_text_file_atomic(path_join(cfg.out_dir, "gan_train.log"), os.str());
}

void cmd_generate(ExperimentConfig cfg) {
    resolve_config(cfg);
    require_out_dir(cfg);
    auto [s, t] = load_train_datasets(cfg);
    std::unique_ptr<StyleEngine> engine = make_engine(cfg);

    const std::vector<int> target_cams = cameras_of(t);
    const long mt = static_cast<long>(target_cams.size());
    DomainDataset st = build_imitated_dataset(s, target_cams);
    DomainDataset tt = build_pseudo_dataset(t, target_cams);
    if (st.n_images() != s.n_images() * mt)
        fail(Errc::state, "imitated set size " + std::to_string(st.n_images()) + " != " +
                              std::to_string(s.n_images()) + " x " + std::to_string(mt));
    if (tt.n_images() != t.n_images() * mt)
        fail(Errc::state, "pseudo set size " + std::to_string(tt.n_images()) + " != " +
                              std::to_string(t.n_images()) + " x " + std::to_string(mt));

    DomainMap dm{s.stats().n_cameras, t.stats().n_cameras};
    make_dirs(cfg.out_dir);
    st = materialize_dataset(st, *engine, dm, cfg.image_h, cfg.image_w,
                             path_join(cfg.out_dir, "st"));
    save_manifest(st, st_manifest_path(cfg));
    tt = materialize_dataset(tt, *engine, dm, cfg.image_h, cfg.image_w,
                             path_join(cfg.out_dir, "tt"));
    save_manifest(tt, tt_manifest_path(cfg));
}

TrainResult cmd_train(ExperimentConfig cfg) {
    resolve_config(cfg);
    require_out_dir(cfg);
    auto [s, t] = load_train_datasets(cfg);
    auto [st, tt] = load_generated_datasets(cfg);
    return run_training(cfg, s, t, st, tt);
}

RankingResult cmd_eval(ExperimentConfig cfg) { return run_ranking(std::move(cfg), false); }

RankingResult cmd_oracle(ExperimentConfig cfg) { return run_ranking(std::move(cfg), true); }

double cmd_gradcheck(ExperimentConfig cfg, long n_params, double eps) {
    resolve_config(cfg);
    require_out_dir(cfg);
    auto [s, t] = load_train_datasets(cfg);
    auto [st, tt] = load_generated_datasets(cfg);

    ModelConfig mc = cfg.model;
    mc.n_classes = s.stats().n_identities;
    ReIDModel model(mc);

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

    Rng rng(cfg.seed ^ fnv1a64("gradcheck"));
    const double max_rel = finite_difference_check(ctx, n_params, eps, rng);

    make_dirs(cfg.out_dir);
    std::ostringstream os;
    os << "n_params = " << n_params << "\n";
    os << "eps = " << format_double(eps) << "\n";
    os << "max_rel_err = " << format_double(max_rel) << "\n";
    write_text_file_atomic(path_join(cfg.out_dir, "gradcheck.txt"), os.str());
    return max_rel;
}

}  // namespace xreid
