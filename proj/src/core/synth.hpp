#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace xreid {

// Invertible affine color map plus additive noise; the noise is applied only
// when rendering, never by the parametric transfer.
struct CameraStyle {
    double gain[3] = {1.0, 1.0, 1.0};
    double brightness = 0.0;
    double sigma = 0.0;
};

struct SyntheticWorldSpec {
    long n_source_ids = 0;
    long n_target_ids = 0;
    long m_source_cams = 0;
    long m_target_cams = 0;
    long images_per_id_per_cam = 0;
    // extra target identities rendered into query/gallery splits; 0 disables
    long n_eval_ids = 0;
    long eval_images_per_id_per_cam = 0;  // 0 -> images_per_id_per_cam
    long image_h = 64;
    long image_w = 32;
    std::vector<CameraStyle> source_styles;  // empty -> defaults
    std::vector<CameraStyle> target_styles;
    std::uint64_t seed = 0;
};

// Fixed spread of gains/brightness around the identity; target cameras get a
// much stronger spread than source cameras so cross-camera matching is the
// dominant difficulty.
CameraStyle default_camera_style(bool target_side, long cam, long n_cams);

// Fills empty style vectors with defaults and validates counts.
void resolve_world_spec(SyntheticWorldSpec& spec);

// Deterministic person pattern (head/torso/legs blocks, per-id colors and
// stripes, per-instance placement jitter), before any camera style.
Tensor render_identity(long pid, long h, long w, Rng& rng);

Tensor apply_camera_style(const Tensor& img, const CameraStyle& st, Rng* noise_rng);

// Writes source/bounding_box_train, target/bounding_box_train and, when
// n_eval_ids > 0, target/{bounding_box_test,query}, plus world.manifest with
// root-relative filenames. Returns the two train datasets.
std::pair<DomainDataset, DomainDataset> synthesize_world(const SyntheticWorldSpec& spec,
                                                         const std::string& out_dir);

// identity number ranges; source, target-train and eval ids never collide
inline constexpr long kSourceIdBase = 1;
inline constexpr long kTargetIdBase = 1001;
inline constexpr long kEvalIdBase = 2001;

}  // namespace xreid
