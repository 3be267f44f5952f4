#include "dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <set>
#include <sstream>

#include "common.hpp"

namespace xreid {

const char* domain_tag_name(DomainTag t) {
    switch (t) {
        case DomainTag::S: return "S";
        case DomainTag::T: return "T";
        case DomainTag::ST: return "ST";
        case DomainTag::TT: return "TT";
    }
    return "?";
}

DomainTag domain_tag_from(const std::string& s) {
    if (s == "S") return DomainTag::S;
    if (s == "T") return DomainTag::T;
    if (s == "ST") return DomainTag::ST;
    if (s == "TT") return DomainTag::TT;
    fail(Errc::invalid_argument, "unknown domain tag: " + s);
}

DatasetStats DomainDataset::stats() const {
    DatasetStats st;
    st.n_images = n_images();
    std::set<int> ids;
    std::set<int> cams;
    long max_cam = 0;
    for (const ImageRecord& r : records) {
        if (r.person_id >= 0) ids.insert(r.person_id);
        cams.insert(r.camera_id);
        max_cam = std::max(max_cam, static_cast<long>(r.camera_id));
    }
    st.n_identities = static_cast<long>(ids.size());
    st.n_cameras = static_cast<long>(cams.size());
    if (st.n_images > 0) {
        st.per_camera_counts.assign(max_cam, 0);
        for (const ImageRecord& r : records) ++st.per_camera_counts[r.camera_id - 1];
    }
    return st;
}

std::unordered_map<int, int> DomainDataset::label_map() const {
    std::unordered_map<int, int> m;
    for (const ImageRecord& r : records) {
        if (r.person_id < 0) continue;
        if (!m.count(r.person_id)) {
            const int next = static_cast<int>(m.size());
            m[r.person_id] = next;
        }
    }
    return m;
}

std::pair<int, int> parse_record_name(const std::string& filename) {
    const auto bad = [&](const std::string& why) {
        fail(Errc::invalid_argument, "record name '" + filename + "': " + why);
    };
    const size_t dot = filename.rfind('.');
    if (dot == std::string::npos || dot == 0) bad("missing extension");
    const std::string stem = filename.substr(0, dot);
    const size_t us = stem.find('_');
    if (us == std::string::npos || us == 0) bad("missing '_c' separator");
    const std::string pid_str = stem.substr(0, us);
    size_t i = 0;
    bool negative = false;
    if (pid_str[i] == '-') {
        negative = true;
        ++i;
    }
    if (i >= pid_str.size()) bad("empty person id");
    long pid = 0;
    for (; i < pid_str.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(pid_str[i]))) bad("non-numeric person id");
        pid = pid * 10 + (pid_str[i] - '0');
        if (pid > 1000000000L) bad("person id out of range");
    }
    if (negative) pid = -pid;
    if (pid < -1) bad("person id below junk sentinel");
    size_t p = us + 1;
    if (p >= stem.size() || stem[p] != 'c') bad("missing 'c' camera marker");
    ++p;
    if (p >= stem.size() || !std::isdigit(static_cast<unsigned char>(stem[p]))) bad("missing camera digits");
    long cam = 0;
    while (p < stem.size() && std::isdigit(static_cast<unsigned char>(stem[p]))) {
        cam = cam * 10 + (stem[p] - '0');
        if (cam > 1000000L) bad("camera id out of range");
        ++p;
    }
    if (cam < 1) bad("camera id must be positive");
    return {static_cast<int>(pid), static_cast<int>(cam)};
}

std::string render_record_name(int pid, int cam, long seq, const std::string& ext) {
    if (pid < -1) fail(Errc::invalid_argument, "render_record_name: id below junk sentinel");
    if (cam < 1) fail(Errc::invalid_argument, "render_record_name: camera must be positive");
    char buf[64];
    if (pid >= 0)
        std::snprintf(buf, sizeof(buf), "%04d_c%d_%06ld", pid, cam, seq);
    else
        std::snprintf(buf, sizeof(buf), "-1_c%d_%06ld", cam, seq);
    return std::string(buf) + "." + ext;
}

namespace {

const char* split_dir(Split s) {
    switch (s) {
        case Split::train: return "bounding_box_train";
        case Split::gallery: return "bounding_box_test";
        case Split::query: return "query";
    }
    return "";
}

bool has_image_ext(const std::string& name) {
    const auto ends = [&](const char* e) {
        const size_t n = std::strlen(e);
        return name.size() >= n && name.compare(name.size() - n, n, e) == 0;
    };
    return ends(".ppm") || ends(".jpg") || ends(".jpeg");
}

}  // namespace

DomainDataset load_domain(const std::string& root, Split split, bool labelled, DomainTag tag) {
    const std::string dir = path_join(root, split_dir(split));
    if (!dir_exists(dir)) fail(Errc::io, "load_domain: no such directory: " + dir);
    DomainDataset ds;
    std::set<std::string> seen;
    for (const std::string& name : list_dir_sorted(dir)) {
        if (!has_image_ext(name)) continue;
        if (!seen.insert(name).second) fail(Errc::invalid_argument, "duplicate filename: " + name);
        auto [pid, cam] = parse_record_name(name);
        ImageRecord r;
        r.filename = name;
        r.path = path_join(dir, name);
        r.person_id = pid;
        if (!labelled && pid >= 0) r.person_id = kUnlabelledId;
        r.camera_id = cam;
        r.domain_tag = tag;
        ds.records.push_back(std::move(r));
    }
    if (ds.records.empty()) fail(Errc::io, "load_domain: no images under " + dir);
    return ds;
}

DomainDataset load_manifest(const std::string& manifest_path, const std::string& img_root) {
    const std::string text = read_text_file(manifest_path);
    DomainDataset ds;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols = split(line, '\t');
        if (cols.size() != 5 && cols.size() != 6)
            fail(Errc::invalid_argument, manifest_path + ":" + std::to_string(lineno) +
                                             ": expected 5 or 6 tab-separated columns");
        ImageRecord r;
        r.filename = cols[0];
        r.path = path_join(img_root, cols[0]);
        r.person_id = std::stoi(cols[1]);
        r.camera_id = std::stoi(cols[2]);
        r.domain_tag = domain_tag_from(cols[3]);
        r.style_camera = cols[4] == "-" ? 0 : std::stoi(cols[4]);
        if (cols.size() == 6) r.source_filename = cols[5];
        const bool generated = r.domain_tag == DomainTag::ST || r.domain_tag == DomainTag::TT;
        if (generated != (r.style_camera != 0))
            fail(Errc::invalid_argument, manifest_path + ":" + std::to_string(lineno) +
                                             ": style_camera present iff generated record");
        if (!seen.insert(r.filename).second)
            fail(Errc::invalid_argument, "duplicate filename in manifest: " + r.filename);
        ds.records.push_back(std::move(r));
    }
    return ds;
}

void save_manifest(const DomainDataset& ds, const std::string& path) {
    std::string out;
    for (const ImageRecord& r : ds.records) {
        out += r.filename;
        out += '\t';
        out += std::to_string(r.person_id);
        out += '\t';
        out += std::to_string(r.camera_id);
        out += '\t';
        out += domain_tag_name(r.domain_tag);
        out += '\t';
        out += r.style_camera == 0 ? std::string("-") : std::to_string(r.style_camera);
        if (!r.source_filename.empty()) {
            out += '\t';
            out += r.source_filename;
        }
        out += '\n';
    }
    write_text_file_atomic(path, out);
}

DatasetStats dataset_stats(const DomainDataset& ds) { return ds.stats(); }

}  // namespace xreid
