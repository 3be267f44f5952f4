#include "synth.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "image.hpp"

namespace xreid {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

CameraStyle default_camera_style(bool target_side, long cam, long n_cams) {
    CameraStyle st;
    const double t = 2.0 * kPi * static_cast<double>(cam - 1) / static_cast<double>(n_cams);
    const double ga = target_side ? 0.40 : 0.10;
    const double ba = target_side ? 0.18 : 0.05;
    st.gain[0] = 1.0 + ga * std::cos(t);
    st.gain[1] = 1.0 + ga * std::cos(t + 2.1);
    st.gain[2] = 1.0 + ga * std::cos(t + 4.2);
    st.brightness = ba * std::sin(t + 0.7);
    st.sigma = target_side ? 0.02 : 0.01;
    return st;
}

void resolve_world_spec(SyntheticWorldSpec& spec) {
    if (spec.n_source_ids <= 0 || spec.n_target_ids <= 0 || spec.m_source_cams <= 0 ||
        spec.m_target_cams <= 0 || spec.images_per_id_per_cam <= 0)
        fail(Errc::invalid_argument, "world spec: all counts must be positive");
    if (spec.image_h < 16 || spec.image_w < 16)
        fail(Errc::invalid_argument, "world spec: image_size too small to render patterns");
    if (spec.n_source_ids >= kTargetIdBase - kSourceIdBase ||
        spec.n_target_ids >= kEvalIdBase - kTargetIdBase)
        fail(Errc::invalid_argument, "world spec: identity count exceeds reserved range");
    if (spec.eval_images_per_id_per_cam == 0)
        spec.eval_images_per_id_per_cam = spec.images_per_id_per_cam;
    if (spec.n_eval_ids > 0 && spec.eval_images_per_id_per_cam < 2)
        fail(Errc::invalid_argument, "world spec: eval split needs >= 2 images per id per camera");
    if (spec.source_styles.empty())
        for (long c = 1; c <= spec.m_source_cams; ++c)
            spec.source_styles.push_back(default_camera_style(false, c, spec.m_source_cams));
    if (spec.target_styles.empty())
        for (long c = 1; c <= spec.m_target_cams; ++c)
            spec.target_styles.push_back(default_camera_style(true, c, spec.m_target_cams));
    if (static_cast<long>(spec.source_styles.size()) != spec.m_source_cams ||
        static_cast<long>(spec.target_styles.size()) != spec.m_target_cams)
        fail(Errc::invalid_argument, "world spec: one style per camera required");
}

namespace {

double byte_to(double lo, double hi, std::uint64_t h, int byte) {
    const double u = static_cast<double>((h >> (8 * byte)) & 0xFF) / 255.0;
    return lo + (hi - lo) * u;
}

void fill_rect(Tensor& img, long y0, long y1, long x0, long x1, const double rgb[3]) {
    const long h = img.shape()[1], w = img.shape()[2];
    y0 = std::max(0L, y0);
    x0 = std::max(0L, x0);
    y1 = std::min(h, y1);
    x1 = std::min(w, x1);
    for (long c = 0; c < 3; ++c)
        for (long y = y0; y < y1; ++y)
            for (long x = x0; x < x1; ++x) img.data()[(c * h + y) * w + x] = rgb[c];
}

}  // namespace

Tensor render_identity(long pid, long h, long w, Rng& rng) {
    const std::uint64_t h1 = fnv1a64("identity:" + std::to_string(pid));
    const std::uint64_t h2 = fnv1a64("identity-extra:" + std::to_string(pid));

    Tensor img({3, h, w});
    const double bg = rng.uniform(-0.15, 0.05);
    for (long i = 0; i < img.size(); ++i) img.data()[i] = bg + rng.uniform(-0.03, 0.03);

    // per-instance placement jitter
    const long dx = static_cast<long>(std::lround(rng.uniform(-0.08, 0.08) * w));
    const long dy = static_cast<long>(std::lround(rng.uniform(-0.04, 0.04) * h));
    const double cj[3] = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                          rng.uniform(-0.05, 0.05)};

    double head[3], torso[3], stripe[3], legs[3];
    for (int c = 0; c < 3; ++c) {
        head[c] = byte_to(-0.7, 0.7, h1, c) + cj[c];
        torso[c] = byte_to(-0.8, 0.8, h1, c + 3) + cj[c];
        stripe[c] = byte_to(-0.8, 0.8, h2, c) + cj[c];
        legs[c] = byte_to(-0.8, 0.8, h2, c + 3) + cj[c];
    }
    const long period = 2 + static_cast<long>((h1 >> 48) & 0x3);  // 2..5 rows
    const bool striped = ((h1 >> 56) & 1) != 0;
    const double head_hw = byte_to(0.10, 0.16, h2, 6) * w;
    const double torso_hw = byte_to(0.22, 0.34, h2, 7) * w;
    const double legs_hw = torso_hw * 0.75;

    const long cx = w / 2 + dx;
    const long head_y0 = static_cast<long>(0.08 * h) + dy;
    const long head_y1 = static_cast<long>(0.30 * h) + dy;
    const long torso_y1 = static_cast<long>(0.62 * h) + dy;
    const long legs_y1 = static_cast<long>(0.95 * h) + dy;

    fill_rect(img, head_y0, head_y1, cx - static_cast<long>(head_hw),
              cx + static_cast<long>(head_hw), head);
    fill_rect(img, head_y1, torso_y1, cx - static_cast<long>(torso_hw),
              cx + static_cast<long>(torso_hw), torso);
    if (striped)
        for (long y = head_y1; y < torso_y1; y += 2 * period)
            fill_rect(img, y, y + period, cx - static_cast<long>(torso_hw),
                      cx + static_cast<long>(torso_hw), stripe);
    fill_rect(img, torso_y1, legs_y1, cx - static_cast<long>(legs_hw),
              cx + static_cast<long>(legs_hw), legs);
    return img;
}

Tensor apply_camera_style(const Tensor& img, const CameraStyle& st, Rng* noise_rng) {
    const auto& s = img.shape();
    if (s.size() != 3 || s[0] != 3) fail(Errc::invalid_argument, "apply_camera_style: (3,H,W) required");
    Tensor out(s);
    const long hw = s[1] * s[2];
    for (long c = 0; c < 3; ++c)
        for (long i = 0; i < hw; ++i) {
            double v = st.gain[c] * img.data()[c * hw + i] + st.brightness;
            if (noise_rng && st.sigma > 0.0) v += st.sigma * noise_rng->normal();
            if (v < -1.0) v = -1.0;
            if (v > 1.0) v = 1.0;
            out.data()[c * hw + i] = v;
        }
    return out;
}

namespace {

struct WorldWriter {
    const SyntheticWorldSpec& spec;
    const std::string& root;
    DomainDataset manifest_all;

    ImageRecord emit(long pid, long cam, long seq, const CameraStyle& st, DomainTag tag,
                     const std::string& rel_dir) {
        const std::string name = render_record_name(static_cast<int>(pid), static_cast<int>(cam),
                                                    seq, "ppm");
        const std::string key = rel_dir + "/" + name;
        Rng rec_rng(spec.seed ^ fnv1a64("record:" + key));
        Tensor content = render_identity(pid, spec.image_h, spec.image_w, rec_rng);
        Rng noise_rng(spec.seed ^ fnv1a64("noise:" + key));
        Tensor styled = apply_camera_style(content, st, &noise_rng);
        save_ppm(path_join(root, key), styled);

        ImageRecord r;
        r.filename = key;  // world-root relative
        r.path = path_join(root, key);
        r.person_id = static_cast<int>(pid);
        r.camera_id = static_cast<int>(cam);
        r.domain_tag = tag;
        manifest_all.records.push_back(r);
        return r;
    }
};

}  // namespace

std::pair<DomainDataset, DomainDataset> synthesize_world(const SyntheticWorldSpec& spec_in,
                                                         const std::string& out_dir) {
    SyntheticWorldSpec spec = spec_in;
    resolve_world_spec(spec);

    const std::string src_train = "source/bounding_box_train";
    const std::string tgt_train = "target/bounding_box_train";
    const std::string tgt_gallery = "target/bounding_box_test";
    const std::string tgt_query = "target/query";
    make_dirs(path_join(out_dir, src_train));
    make_dirs(path_join(out_dir, tgt_train));
    if (spec.n_eval_ids > 0) {
        make_dirs(path_join(out_dir, tgt_gallery));
        make_dirs(path_join(out_dir, tgt_query));
    }

    WorldWriter ww{spec, out_dir, {}};
    DomainDataset source, target;

    for (long i = 0; i < spec.n_source_ids; ++i)
        for (long c = 1; c <= spec.m_source_cams; ++c)
            for (long k = 1; k <= spec.images_per_id_per_cam; ++k)
                source.records.push_back(ww.emit(kSourceIdBase + i, c, k,
                                                 spec.source_styles[c - 1], DomainTag::S,
                                                 src_train));
    for (long i = 0; i < spec.n_target_ids; ++i)
        for (long c = 1; c <= spec.m_target_cams; ++c)
            for (long k = 1; k <= spec.images_per_id_per_cam; ++k)
                target.records.push_back(ww.emit(kTargetIdBase + i, c, k,
                                                 spec.target_styles[c - 1], DomainTag::T,
                                                 tgt_train));
    for (long i = 0; i < spec.n_eval_ids; ++i)
        for (long c = 1; c <= spec.m_target_cams; ++c)
            for (long k = 1; k <= spec.eval_images_per_id_per_cam; ++k)
                ww.emit(kEvalIdBase + i, c, k, spec.target_styles[c - 1], DomainTag::T,
                        k == 1 ? tgt_query : tgt_gallery);

    save_manifest(ww.manifest_all, path_join(out_dir, "world.manifest"));
    return {std::move(source), std::move(target)};
}

}  // namespace xreid
