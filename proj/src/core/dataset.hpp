#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace xreid {

// person_id sentinels
inline constexpr int kJunkId = -1;        // distractor, gallery-exclusion only
inline constexpr int kUnlabelledId = -2;  // label deliberately withheld

enum class DomainTag { S, T, ST, TT };

const char* domain_tag_name(DomainTag t);
DomainTag domain_tag_from(const std::string& s);

struct ImageRecord {
    std::string filename;   // name as listed in directory or manifest
    std::string path;       // absolute pixel location; empty for lazy records
    int person_id = kUnlabelledId;
    int camera_id = 0;      // 1-based
    DomainTag domain_tag = DomainTag::S;
    // generated records only:
    int style_camera = 0;            // camera whose style was applied, 0 = absent
    std::string source_filename;     // originating record's filename
    std::string source_path;         // originating record's pixel location
    int source_camera = 0;           // originating record's camera id
};

struct DatasetStats {
    long n_images = 0;
    long n_identities = 0;  // distinct person_id >= 0
    long n_cameras = 0;     // distinct camera ids present
    std::vector<long> per_camera_counts;  // index 0 = camera 1, ordered by camera id
};

struct DomainDataset {
    std::vector<ImageRecord> records;

    long n_images() const { return static_cast<long>(records.size()); }
    DatasetStats stats() const;
    // distinct non-sentinel ids in first-appearance order -> [0, P)
    std::unordered_map<int, int> label_map() const;
};

// `<pid>_c<cam>[suffix].<ext>`; pid -1 is the junk sentinel.
std::pair<int, int> parse_record_name(const std::string& filename);
std::string render_record_name(int pid, int cam, long seq, const std::string& ext);

enum class Split { train, gallery, query };

// Scans `<root>/bounding_box_train|bounding_box_test|query`. With labelled
// false every non-junk id is replaced by the unlabelled sentinel.
DomainDataset load_domain(const std::string& root, Split split, bool labelled, DomainTag tag);

// Tab-separated manifest: filename, person_id, camera_id, domain_tag,
// style_camera ("-" if absent) [, source_filename]. Pixel paths resolve
// against img_root.
DomainDataset load_manifest(const std::string& manifest_path, const std::string& img_root);
void save_manifest(const DomainDataset& ds, const std::string& path);

DatasetStats dataset_stats(const DomainDataset& ds);

}  // namespace xreid
