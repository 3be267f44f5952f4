#pragma once

#include <optional>
#include <string>

#include "gan.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "sampling.hpp"
#include "synth.hpp"

namespace xreid {

// Learning-rate plan: step decay by 0.1 every decay_period epochs, separate
// base rates for pretrained and newly added layers.
struct Schedule {
    double base_lr_new = 0.1;
    double base_lr_backbone = 0.01;
    long decay_period = 40;
    long total_epochs = 60;
    double momentum = 0.9;       // conventional default, not a published value
    double weight_decay = 5e-4;  // conventional default, not a published value
};

struct ExperimentConfig {
    // [dataset]
    std::string dataset_kind = "synthetic";  // synthetic | real
    std::string source_root;                 // real-dataset roots
    std::string target_root;
    std::string world_dir;  // synthetic world location
    SyntheticWorldSpec world;
    long image_h = 64;
    long image_w = 32;

    // [engine]
    std::string engine_kind = "parametric";  // parametric | gan
    GanConfig gan;

    // [model]
    ModelConfig model;

    // [weights]
    LossWeights weights;

    // [recipe]
    BatchRecipe recipe;

    // [schedule]
    Schedule schedule;

    // [run]
    bool has_seed = false;
    std::uint64_t seed = 0;
    std::string out_dir;
    long save_every = 10;
    long eval_max_rank = 50;
};

// Strict key = value parser under [section] headers; '#' starts a comment.
// Unknown sections or keys are errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Materializes every default (world styles, derived recipe streams, seed
// propagation into world/gan/model) and validates the result.
void resolve_config(ExperimentConfig& cfg);

// Canonical full rendering of a resolved config; equal configs render equal.
std::string render_resolved(const ExperimentConfig& cfg);

// FNV-1a of the canonical rendering, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& out_dir,
                     const std::optional<std::uint64_t>& seed);

}  // namespace xreid
