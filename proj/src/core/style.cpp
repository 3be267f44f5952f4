#include "style.hpp"

#include "common.hpp"
#include "image.hpp"

namespace xreid {

int DomainMap::source_index(int cam) const {
    if (cam < 1 || cam > m_source) fail(Errc::invalid_argument, "domain map: bad source camera");
    return cam - 1;
}

int DomainMap::target_index(int cam) const {
    if (cam < 1 || cam > m_target) fail(Errc::invalid_argument, "domain map: bad target camera");
    return static_cast<int>(m_source) + cam - 1;
}

int DomainMap::index_of(const ImageRecord& r) const {
    switch (r.domain_tag) {
        case DomainTag::S: return source_index(r.camera_id);
        case DomainTag::T: return target_index(r.camera_id);
        case DomainTag::ST:
        case DomainTag::TT: return target_index(r.style_camera);
    }
    fail(Errc::state, "domain map: bad record tag");
}

ParametricEngine::ParametricEngine(std::vector<CameraStyle> styles) : styles_(std::move(styles)) {
    if (styles_.empty()) fail(Errc::invalid_argument, "parametric engine: no styles");
    for (const CameraStyle& st : styles_)
        for (double g : st.gain)
            if (g == 0.0) fail(Errc::invalid_argument, "parametric engine: zero gain not invertible");
}

const CameraStyle& ParametricEngine::style(int domain) const {
    if (domain < 0 || domain >= static_cast<int>(styles_.size()))
        fail(Errc::invalid_argument, "parametric engine: unknown camera index");
    return styles_[domain];
}

Tensor ParametricEngine::transfer(const Tensor& img, int from_domain, int to_domain) const {
    const CameraStyle& a = style(from_domain);
    const CameraStyle& b = style(to_domain);
    const auto& s = img.shape();
    if (s.size() != 3 || s[0] != 3) fail(Errc::invalid_argument, "transfer: (3,H,W) required");
    Tensor out(s);
    const long hw = s[1] * s[2];
    for (long c = 0; c < 3; ++c) {
        const double scale = b.gain[c] / a.gain[c];
        const double shift = b.brightness - b.gain[c] * a.brightness / a.gain[c];
        for (long i = 0; i < hw; ++i) {
            double v = scale * img.data()[c * hw + i] + shift;
            if (v < -1.0) v = -1.0;
            if (v > 1.0) v = 1.0;
            out.data()[c * hw + i] = v;
        }
    }
    return out;
}

std::vector<CameraStyle> joint_styles(const SyntheticWorldSpec& spec) {
    std::vector<CameraStyle> js = spec.source_styles;
    js.insert(js.end(), spec.target_styles.begin(), spec.target_styles.end());
    return js;
}

namespace {

std::string stem_of(const std::string& filename) {
    std::string s = basename_of(filename);
    const size_t dot = s.rfind('.');
    return dot == std::string::npos ? s : s.substr(0, dot);
}

}  // namespace

DomainDataset build_imitated_dataset(const DomainDataset& source,
                                     const std::vector<int>& target_cams) {
    if (target_cams.empty()) fail(Errc::invalid_argument, "imitated dataset: empty target camera set");
    DomainDataset st;
    st.records.reserve(source.records.size() * target_cams.size());
    for (const ImageRecord& s : source.records)
        for (int cam : target_cams) {
            ImageRecord r;
            r.filename = stem_of(s.filename) + "__to_c" + std::to_string(cam) + ".ppm";
            r.person_id = s.person_id;
            r.camera_id = cam;
            r.domain_tag = DomainTag::ST;
            r.style_camera = cam;
            r.source_filename = s.filename;
            r.source_path = s.path;
            r.source_camera = s.camera_id;
            st.records.push_back(std::move(r));
        }
    return st;
}

DomainDataset build_pseudo_dataset(const DomainDataset& target,
                                   const std::vector<int>& target_cams) {
    if (target_cams.empty()) fail(Errc::invalid_argument, "pseudo dataset: empty target camera set");
    DomainDataset tt;
    tt.records.reserve(target.records.size() * target_cams.size());
    for (const ImageRecord& t : target.records)
        for (int cam : target_cams) {
            ImageRecord r;
            r.filename = stem_of(t.filename) + "__to_c" + std::to_string(cam) + ".ppm";
            r.person_id = kUnlabelledId;
            r.camera_id = cam;
            r.domain_tag = DomainTag::TT;
            r.style_camera = cam;
            r.source_filename = t.filename;
            r.source_path = t.path;
            r.source_camera = t.camera_id;
            tt.records.push_back(std::move(r));
        }
    return tt;
}

Tensor record_pixels(const ImageRecord& r, const StyleEngine* engine, const DomainMap& dm, long h,
                     long w) {
    if (!r.path.empty()) return load_image(r.path, h, w);
    if (r.source_path.empty())
        fail(Errc::state, "record " + r.filename + " has neither pixels nor a source");
    if (engine == nullptr)
        fail(Errc::state, "record " + r.filename + " needs a style engine to resolve pixels");
    const Tensor src = load_image(r.source_path, h, w);
    ImageRecord from = r;  // the source's own domain
    from.domain_tag = r.domain_tag == DomainTag::ST ? DomainTag::S : DomainTag::T;
    from.camera_id = r.source_camera;
    return engine->transfer(src, dm.index_of(from), dm.target_index(r.style_camera));
}

DomainDataset materialize_dataset(const DomainDataset& lazy, const StyleEngine& engine,
                                  const DomainMap& dm, long h, long w,
                                  const std::string& out_dir) {
    make_dirs(out_dir);
    DomainDataset out = lazy;
    for (ImageRecord& r : out.records) {
        if (!r.path.empty()) continue;
        const Tensor img = record_pixels(r, &engine, dm, h, w);
        const std::string path = path_join(out_dir, r.filename);
        save_ppm(path, img);
        r.path = path;
    }
    return out;
}

Tensor PixelCache::get(const ImageRecord& r) {
    std::string key;
    if (!r.path.empty())
        key = r.path;
    else
        key = r.source_path + "#" + domain_tag_name(r.domain_tag) + std::to_string(r.style_camera);
    auto it = map_.find(key);
    if (it != map_.end()) return it->second;
    Tensor img = record_pixels(r, engine_, dm_, h_, w_);
    if (map_.size() >= max_entries_) map_.clear();
    map_.emplace(std::move(key), img);
    return img;
}

}  // namespace xreid
