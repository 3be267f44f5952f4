#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dataset.hpp"
#include "synth.hpp"

namespace xreid {

// Joint camera-domain indexing: source cameras first, then target cameras.
struct DomainMap {
    long m_source = 0;
    long m_target = 0;

    long n() const { return m_source + m_target; }
    int source_index(int cam) const;
    int target_index(int cam) const;
    // the style domain a record currently lives in
    int index_of(const ImageRecord& r) const;
};

class StyleEngine {
public:
    virtual ~StyleEngine() = default;
    // from/to are joint domain indices; output shape equals input, range [-1,1]
    virtual Tensor transfer(const Tensor& img, int from_domain, int to_domain) const = 0;
    virtual long n_domains() const = 0;
};

// Exact engine over invertible affine color styles: removes the source
// camera's map analytically, applies the target's, clamps. Noise is never
// re-added.
class ParametricEngine : public StyleEngine {
public:
    explicit ParametricEngine(std::vector<CameraStyle> styles);
    Tensor transfer(const Tensor& img, int from_domain, int to_domain) const override;
    long n_domains() const override { return static_cast<long>(styles_.size()); }
    const CameraStyle& style(int domain) const;

private:
    std::vector<CameraStyle> styles_;
};

// joint style list for a world spec (source cameras first)
std::vector<CameraStyle> joint_styles(const SyntheticWorldSpec& spec);

// ---- generated datasets -------------------------------------------------------

// Lazy ST: for each source record, one child per target camera, identity
// preserved, in source-record-major order. Pixels resolve via record_pixels.
DomainDataset build_imitated_dataset(const DomainDataset& source,
                                     const std::vector<int>& target_cams);

// Lazy TT: children of record i occupy indices [i*M^t, (i+1)*M^t), covering
// every target camera including the record's own. person_id is unlabelled.
DomainDataset build_pseudo_dataset(const DomainDataset& target,
                                   const std::vector<int>& target_cams);

// Writes every lazy record's pixels under out_dir and fills in paths.
DomainDataset materialize_dataset(const DomainDataset& lazy, const StyleEngine& engine,
                                  const DomainMap& dm, long h, long w,
                                  const std::string& out_dir);

// Loads from disk when the record has a path, otherwise applies the engine to
// the source record's pixels.
Tensor record_pixels(const ImageRecord& r, const StyleEngine* engine, const DomainMap& dm, long h,
                     long w);

// Decode/transfer cache; evicts wholesale when full (deterministic).
class PixelCache {
public:
    PixelCache(long h, long w, const StyleEngine* engine, DomainMap dm, size_t max_entries = 8192)
        : h_(h), w_(w), engine_(engine), dm_(dm), max_entries_(max_entries) {}

    Tensor get(const ImageRecord& r);

private:
    long h_, w_;
    const StyleEngine* engine_;
    DomainMap dm_;
    size_t max_entries_;
    std::unordered_map<std::string, Tensor> map_;
};

}  // namespace xreid
