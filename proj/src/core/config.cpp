#include "config.hpp"

#include <sstream>
#include <vector>

#include "common.hpp"

namespace xreid {

namespace {

long parse_long(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const long r = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        fail(Errc::invalid_argument, "config: key '" + key + "' wants an integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const unsigned long long r = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        fail(Errc::invalid_argument,
             "config: key '" + key + "' wants an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        const double r = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        fail(Errc::invalid_argument, "config: key '" + key + "' wants a number, got '" + v + "'");
    }
}

CameraStyle parse_style(const std::string& key, const std::string& v) {
    const std::vector<std::string> parts = split(v, ' ');
    if (parts.size() != 5)
        fail(Errc::invalid_argument,
             "config: key '" + key + "' wants 'gain_r gain_g gain_b brightness sigma'");
    CameraStyle st;
    for (int i = 0; i < 3; ++i) st.gain[i] = parse_double(key, parts[i]);
    st.brightness = parse_double(key, parts[3]);
    st.sigma = parse_double(key, parts[4]);
    return st;
}

void set_style(std::vector<CameraStyle>& styles, long cam, const CameraStyle& st) {
    if (cam < 1 || cam > 64) fail(Errc::invalid_argument, "config: style camera out of range");
    if (static_cast<long>(styles.size()) < cam) styles.resize(cam);
    styles[cam - 1] = st;
}

void apply_weight_preset(ExperimentConfig& cfg, const std::string& v) {
    if (v == "duke2market") cfg.weights = weights_duke2market();
    else if (v == "market2duke") cfg.weights = weights_market2duke();
    else fail(Errc::invalid_argument, "config: unknown weights preset '" + v + "'");
}

void apply_recipe_preset(ExperimentConfig& cfg, const std::string& v) {
    if (v == "duke2market") {
        cfg.recipe.class_src = 64;
        cfg.recipe.class_st = 72;
    } else if (v == "market2duke") {
        cfg.recipe.class_src = 64;
        cfg.recipe.class_st = 128;
    } else {
        fail(Errc::invalid_argument, "config: unknown recipe preset '" + v + "'");
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(Errc::invalid_argument,
                     "config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            const char* known[] = {"dataset", "engine", "model", "weights",
                                   "recipe",  "schedule", "run"};
            bool ok = false;
            for (const char* s : known) ok = ok || section == s;
            if (!ok)
                fail(Errc::invalid_argument, "config line " + std::to_string(line_no) +
                                                 ": unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(Errc::invalid_argument,
                 "config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty())
            fail(Errc::invalid_argument,
                 "config line " + std::to_string(line_no) + ": key before any [section]");

        auto unknown = [&]() {
            fail(Errc::invalid_argument, "config line " + std::to_string(line_no) +
                                             ": unknown key '" + key + "' in [" + section + "]");
        };

        if (section == "dataset") {
            if (key == "kind") cfg.dataset_kind = val;
            else if (key == "source_root") cfg.source_root = val;
            else if (key == "target_root") cfg.target_root = val;
            else if (key == "world_dir") cfg.world_dir = val;
            else if (key == "image_h") cfg.image_h = parse_long(key, val);
            else if (key == "image_w") cfg.image_w = parse_long(key, val);
            else if (key == "n_source_ids") cfg.world.n_source_ids = parse_long(key, val);
            else if (key == "n_target_ids") cfg.world.n_target_ids = parse_long(key, val);
            else if (key == "m_source_cams") cfg.world.m_source_cams = parse_long(key, val);
            else if (key == "m_target_cams") cfg.world.m_target_cams = parse_long(key, val);
            else if (key == "images_per_id_per_cam")
                cfg.world.images_per_id_per_cam = parse_long(key, val);
            else if (key == "n_eval_ids") cfg.world.n_eval_ids = parse_long(key, val);
            else if (key == "eval_images_per_id_per_cam")
                cfg.world.eval_images_per_id_per_cam = parse_long(key, val);
            else if (key.rfind("source_style_", 0) == 0)
                set_style(cfg.world.source_styles, parse_long(key, key.substr(13)),
                          parse_style(key, val));
            else if (key.rfind("target_style_", 0) == 0)
                set_style(cfg.world.target_styles, parse_long(key, key.substr(13)),
                          parse_style(key, val));
            else unknown();
        } else if (section == "engine") {
            if (key == "kind") cfg.engine_kind = val;
            else if (key == "lambda_cls") cfg.gan.lambda_cls = parse_double(key, val);
            else if (key == "lambda_rec") cfg.gan.lambda_rec = parse_double(key, val);
            else if (key == "lambda_gp") cfg.gan.lambda_gp = parse_double(key, val);
            else if (key == "d_steps_per_g") cfg.gan.d_steps_per_g = parse_long(key, val);
            else if (key == "adam_b1") cfg.gan.adam_b1 = parse_double(key, val);
            else if (key == "adam_b2") cfg.gan.adam_b2 = parse_double(key, val);
            else if (key == "lr") cfg.gan.lr = parse_double(key, val);
            else if (key == "total_iterations") cfg.gan.total_iterations = parse_long(key, val);
            else if (key == "batch_size") cfg.gan.batch_size = parse_long(key, val);
            else if (key == "base_channels") cfg.gan.base_channels = parse_long(key, val);
            else if (key == "n_res_blocks") cfg.gan.n_res_blocks = parse_long(key, val);
            else if (key == "log_every") cfg.gan.log_every = parse_long(key, val);
            else unknown();
        } else if (section == "model") {
            if (key == "backbone") cfg.model.backbone = val;
            else unknown();
        } else if (section == "weights") {
            if (key == "preset") apply_weight_preset(cfg, val);
            else if (key == "alpha") cfg.weights.alpha = parse_double(key, val);
            else if (key == "beta1") cfg.weights.beta1 = parse_double(key, val);
            else if (key == "beta2") cfg.weights.beta2 = parse_double(key, val);
            else if (key == "beta3") cfg.weights.beta3 = parse_double(key, val);
            else if (key == "gamma1") cfg.weights.gamma1 = parse_double(key, val);
            else if (key == "gamma2") cfg.weights.gamma2 = parse_double(key, val);
            else if (key == "margin") cfg.weights.margin = parse_double(key, val);
            else unknown();
        } else if (section == "recipe") {
            if (key == "preset") apply_recipe_preset(cfg, val);
            else if (key == "class_src") cfg.recipe.class_src = parse_long(key, val);
            else if (key == "class_st") cfg.recipe.class_st = parse_long(key, val);
            else if (key == "tri_src") cfg.recipe.tri_src = parse_long(key, val);
            else if (key == "tri_st") cfg.recipe.tri_st = parse_long(key, val);
            else if (key == "tri_tt_anchors") cfg.recipe.tri_tt_anchors = parse_long(key, val);
            else if (key == "tri_t_total") cfg.recipe.tri_t_total = parse_long(key, val);
            else if (key == "pk_p") cfg.recipe.pk_p = parse_long(key, val);
            else if (key == "pk_k") cfg.recipe.pk_k = parse_long(key, val);
            else if (key == "t_cofwd") cfg.recipe.t_cofwd = parse_long(key, val);
            else unknown();
        } else if (section == "schedule") {
            if (key == "base_lr_new") cfg.schedule.base_lr_new = parse_double(key, val);
            else if (key == "base_lr_backbone")
                cfg.schedule.base_lr_backbone = parse_double(key, val);
            else if (key == "decay_period") cfg.schedule.decay_period = parse_long(key, val);
            else if (key == "total_epochs") cfg.schedule.total_epochs = parse_long(key, val);
            else if (key == "momentum") cfg.schedule.momentum = parse_double(key, val);
            else if (key == "weight_decay") cfg.schedule.weight_decay = parse_double(key, val);
            else unknown();
        } else if (section == "run") {
            if (key == "seed") {
                cfg.seed = parse_u64(key, val);
                cfg.has_seed = true;
            } else if (key == "out_dir") {
                cfg.out_dir = val;
            } else if (key == "save_every") {
                cfg.save_every = parse_long(key, val);
            } else if (key == "eval_max_rank") {
                cfg.eval_max_rank = parse_long(key, val);
            } else {
                unknown();
            }
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

void resolve_config(ExperimentConfig& cfg) {
    if (!cfg.has_seed)
        fail(Errc::invalid_argument, "config: seed is mandatory ([run] seed or --seed)");
    if (cfg.dataset_kind != "synthetic" && cfg.dataset_kind != "real")
        fail(Errc::invalid_argument, "config: dataset kind must be synthetic or real");
    if (cfg.engine_kind != "parametric" && cfg.engine_kind != "gan")
        fail(Errc::invalid_argument, "config: engine kind must be parametric or gan");
    if (cfg.model.backbone != "desk" && cfg.model.backbone != "resnet50")
        fail(Errc::invalid_argument, "config: backbone must be desk or resnet50");
    if (cfg.image_h < 16 || cfg.image_w < 16)
        fail(Errc::invalid_argument, "config: images must be at least 16x16");

    cfg.world.image_h = cfg.image_h;
    cfg.world.image_w = cfg.image_w;
    cfg.world.seed = cfg.seed;
    cfg.gan.image_h = cfg.image_h;
    cfg.gan.image_w = cfg.image_w;
    cfg.gan.seed = cfg.seed;
    cfg.model.image_h = cfg.image_h;
    cfg.model.image_w = cfg.image_w;
    cfg.model.seed = cfg.seed;

    if (cfg.dataset_kind == "synthetic") {
        if (cfg.world_dir.empty())
            fail(Errc::invalid_argument, "config: synthetic dataset needs world_dir");
        resolve_world_spec(cfg.world);
        cfg.recipe = derive_recipe(cfg.recipe, cfg.world.m_source_cams, cfg.world.m_target_cams);
    } else {
        if (cfg.source_root.empty() || cfg.target_root.empty())
            fail(Errc::invalid_argument, "config: real dataset needs source_root and target_root");
        if (cfg.engine_kind == "parametric")
            fail(Errc::invalid_argument,
                 "config: the parametric engine needs known camera styles; real datasets "
                 "require the gan engine");
        if (cfg.recipe.tri_st == 0 || cfg.recipe.tri_t_total == 0)
            fail(Errc::invalid_argument,
                 "config: real datasets need explicit tri_st and tri_t_total "
                 "(4x target cameras and 4x source cameras)");
        validate_recipe(cfg.recipe);
    }
    validate_weights(cfg.weights);
    if (cfg.engine_kind == "gan") validate_gan_config(cfg.gan);
    if (cfg.schedule.base_lr_new <= 0 || cfg.schedule.base_lr_backbone <= 0)
        fail(Errc::invalid_argument, "config: learning rates must be positive");
    if (cfg.schedule.decay_period < 1 || cfg.schedule.total_epochs < 1)
        fail(Errc::invalid_argument, "config: schedule periods must be >= 1");
    if (cfg.schedule.momentum < 0 || cfg.schedule.momentum >= 1)
        fail(Errc::invalid_argument, "config: momentum must lie in [0,1)");
    if (cfg.schedule.weight_decay < 0)
        fail(Errc::invalid_argument, "config: weight decay must be >= 0");
    if (cfg.save_every < 1) fail(Errc::invalid_argument, "config: save_every must be >= 1");
    if (cfg.eval_max_rank < 1) fail(Errc::invalid_argument, "config: eval_max_rank must be >= 1");
}

std::string render_resolved(const ExperimentConfig& cfg) {
    std::ostringstream o;
    o << "[dataset]\n";
    o << "kind = " << cfg.dataset_kind << "\n";
    o << "image_h = " << cfg.image_h << "\n";
    o << "image_w = " << cfg.image_w << "\n";
    if (cfg.dataset_kind == "real") {
        o << "source_root = " << cfg.source_root << "\n";
        o << "target_root = " << cfg.target_root << "\n";
    } else {
        o << "world_dir = " << cfg.world_dir << "\n";
        o << "n_source_ids = " << cfg.world.n_source_ids << "\n";
        o << "n_target_ids = " << cfg.world.n_target_ids << "\n";
        o << "m_source_cams = " << cfg.world.m_source_cams << "\n";
        o << "m_target_cams = " << cfg.world.m_target_cams << "\n";
        o << "images_per_id_per_cam = " << cfg.world.images_per_id_per_cam << "\n";
        o << "n_eval_ids = " << cfg.world.n_eval_ids << "\n";
        o << "eval_images_per_id_per_cam = " << cfg.world.eval_images_per_id_per_cam << "\n";
        auto styles = [&](const char* prefix, const std::vector<CameraStyle>& v) {
            for (size_t i = 0; i < v.size(); ++i) {
                o << prefix << (i + 1) << " = " << format_double(v[i].gain[0]) << " "
                  << format_double(v[i].gain[1]) << " " << format_double(v[i].gain[2]) << " "
                  << format_double(v[i].brightness) << " " << format_double(v[i].sigma) << "\n";
            }
        };
        styles("source_style_", cfg.world.source_styles);
        styles("target_style_", cfg.world.target_styles);
    }
    o << "\n[engine]\n";
    o << "kind = " << cfg.engine_kind << "\n";
    if (cfg.engine_kind == "gan") {
        o << "lambda_cls = " << format_double(cfg.gan.lambda_cls) << "\n";
        o << "lambda_rec = " << format_double(cfg.gan.lambda_rec) << "\n";
        o << "lambda_gp = " << format_double(cfg.gan.lambda_gp) << "\n";
        o << "d_steps_per_g = " << cfg.gan.d_steps_per_g << "\n";
        o << "adam_b1 = " << format_double(cfg.gan.adam_b1) << "\n";
        o << "adam_b2 = " << format_double(cfg.gan.adam_b2) << "\n";
        o << "lr = " << format_double(cfg.gan.lr) << "\n";
        o << "total_iterations = " << cfg.gan.total_iterations << "\n";
        o << "batch_size = " << cfg.gan.batch_size << "\n";
        o << "base_channels = " << cfg.gan.base_channels << "\n";
        o << "n_res_blocks = " << cfg.gan.n_res_blocks << "\n";
        o << "log_every = " << cfg.gan.log_every << "\n";
    }
    o << "\n[model]\n";
    o << "backbone = " << cfg.model.backbone << "\n";
    o << "\n[weights]\n";
    o << "alpha = " << format_double(cfg.weights.alpha) << "\n";
    o << "beta1 = " << format_double(cfg.weights.beta1) << "\n";
    o << "beta2 = " << format_double(cfg.weights.beta2) << "\n";
    o << "beta3 = " << format_double(cfg.weights.beta3) << "\n";
    o << "gamma1 = " << format_double(cfg.weights.gamma1) << "\n";
    o << "gamma2 = " << format_double(cfg.weights.gamma2) << "\n";
    o << "margin = " << format_double(cfg.weights.margin) << "\n";
    o << "\n[recipe]\n";
    o << "class_src = " << cfg.recipe.class_src << "\n";
    o << "class_st = " << cfg.recipe.class_st << "\n";
    o << "tri_src = " << cfg.recipe.tri_src << "\n";
    o << "tri_st = " << cfg.recipe.tri_st << "\n";
    o << "tri_tt_anchors = " << cfg.recipe.tri_tt_anchors << "\n";
    o << "tri_t_total = " << cfg.recipe.tri_t_total << "\n";
    o << "pk_p = " << cfg.recipe.pk_p << "\n";
    o << "pk_k = " << cfg.recipe.pk_k << "\n";
    o << "t_cofwd = " << cfg.recipe.t_cofwd << "\n";
    o << "\n[schedule]\n";
    o << "base_lr_new = " << format_double(cfg.schedule.base_lr_new) << "\n";
    o << "base_lr_backbone = " << format_double(cfg.schedule.base_lr_backbone) << "\n";
    o << "decay_period = " << cfg.schedule.decay_period << "\n";
    o << "total_epochs = " << cfg.schedule.total_epochs << "\n";
    o << "momentum = " << format_double(cfg.schedule.momentum) << "\n";
    o << "weight_decay = " << format_double(cfg.schedule.weight_decay) << "\n";
    o << "\n[run]\n";
    o << "seed = " << cfg.seed << "\n";
    o << "save_every = " << cfg.save_every << "\n";
    o << "eval_max_rank = " << cfg.eval_max_rank << "\n";
    return o.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
    return hex64(fnv1a64(render_resolved(cfg)));
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& out_dir,
                     const std::optional<std::uint64_t>& seed) {
    if (out_dir) cfg.out_dir = *out_dir;
    if (seed) {
        cfg.seed = *seed;
        cfg.has_seed = true;
    }
}

}  // namespace xreid
