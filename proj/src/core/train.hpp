#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "config.hpp"
#include "sampling.hpp"
#include "style.hpp"

namespace xreid {

// Step decay, one decade per decay_period epochs. Dividing by the integer
// power of ten keeps the canonical rate values exact (0.1 -> 0.01 -> 0.001).
double lr_at(long epoch, double base_lr, long decay_period = 40);

struct StepMetrics {
    long step = 0;
    long epoch = 0;
    double lr = 0.0;
    double l_class_src = 0.0;
    double l_class_stt = 0.0;
    double l_tri_src = 0.0;
    double l_tri_st = 0.0;
    double l_tri_ttt = 0.0;
    double total = 0.0;
};

// step, epoch, lr, the five components, total; tab-separated, %.17g floats
std::string metrics_line(const StepMetrics& m);

// Everything one optimization step needs. Generated datasets must be
// materialized (records with paths); the streams with zero weight are
// skipped and logged as zero.
struct TrainContext {
    ReIDModel* model = nullptr;
    const DomainDataset* s = nullptr;
    const DomainDataset* t = nullptr;
    const DomainDataset* st = nullptr;
    const DomainDataset* tt = nullptr;
    PixelCache* cache = nullptr;
    std::unordered_map<int, int> label_map;
    BatchRecipe recipe;
    LossWeights weights;
    Schedule schedule;
    std::string run_dir;  // batch dump location for non-finite aborts
};

struct StepBatches {
    LabelledBatch cls;
    std::vector<ImageRecord> cofwd;
    LabelledBatch tri_s;
    LabelledBatch tri_st;
    SurrogateLabelledBatch tri_ttt;
};

StepBatches draw_step_batches(const TrainContext& ctx, Rng& rng);

// Full objective on fixed batches: classification streams share one forward
// (the unlabelled co-forward rows shape the batch statistics), each triplet
// stream runs its own. Fills the loss components of m when given.
ad::Var step_loss(const TrainContext& ctx, const StepBatches& b, StepMetrics* m);

std::vector<StepMetrics> train_epoch(TrainContext& ctx, long epoch, long steps_per_epoch,
                                     long step_base, nn::SgdMomentum& opt);

struct TrainResult {
    std::vector<StepMetrics> history;
    std::string final_checkpoint;
    long completed_epochs = 0;
};

// Orchestrates epochs, metrics/timing logs, config.resolved and periodic
// atomic checkpoints under cfg.out_dir; resumes from the newest checkpoint.
TrainResult run_training(const ExperimentConfig& cfg, const DomainDataset& s,
                         const DomainDataset& t, const DomainDataset& st,
                         const DomainDataset& tt);

// Central differences on n_params uniformly chosen parameter scalars against
// the analytic gradient; returns the max relative error (denominators floored
// at 1e-8).
double finite_difference_check(const TrainContext& ctx, long n_params, double eps, Rng& rng);

}  // namespace xreid
