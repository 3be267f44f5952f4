#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "nn.hpp"
#include "style.hpp"

namespace xreid {

struct ModelConfig {
    std::string backbone = "desk";  // "desk" | "resnet50"
    long image_h = 64;
    long image_w = 32;
    long n_classes = 0;  // source identity count
    std::uint64_t seed = 0;
};

struct ForwardOutput {
    ad::Var pool_feat;  // (N, D_pool) test-time descriptor
    ad::Var emb1024;    // (N, 1024)
    ad::Var logits;     // (N, n_classes)
    ad::Var emb128;     // (N, 128) commonality space
};

// backbone -> pooled descriptor -> embedding-1024 -> {classifier, embedding-128}
class ReIDModel {
public:
    explicit ReIDModel(const ModelConfig& cfg);

    ForwardOutput forward(const ad::Var& images, bool training);
    long d_pool() const { return d_pool_; }
    const ModelConfig& config() const { return cfg_; }
    nn::Registry& registry() { return reg_; }
    const nn::Registry& registry() const { return reg_; }

    // eval-mode pooled descriptors, one row per record, record order
    Tensor extract_descriptors(const DomainDataset& ds, PixelCache& cache, long batch_size = 32);

private:
    ad::Var backbone_forward(const ad::Var& x, bool training);

    ModelConfig cfg_;
    nn::Registry reg_;
    long d_pool_ = 0;

    std::vector<nn::Conv2d> convs_;
    std::vector<nn::BatchNorm2d> bns_;
    // resnet wiring: per bottleneck, indices into convs_/bns_ plus optional
    // downsample; encoded during construction
    struct BottleneckRef {
        int c1, c2, c3;
        int down = -1;  // conv index of projection shortcut
    };
    std::vector<BottleneckRef> blocks_;
    std::vector<int> stage_sizes_;

    nn::Linear emb1024_fc_;
    nn::BatchNorm1d emb1024_bn_;
    nn::Linear classifier_;
    nn::Linear emb128_fc_;
};

// (N,3,H,W) from per-image tensors
Tensor stack_images(const std::vector<Tensor>& imgs);

// model checkpoint = registry blob + text sidecar `<path>.meta`
void save_model_checkpoint(const ReIDModel& model, const std::string& path,
                           const std::string& config_hash, long epoch);
// returns the epoch recorded in the sidecar; validates backbone and classes
long load_model_checkpoint(ReIDModel& model, const std::string& path,
                           const std::string& expect_hash);

}  // namespace xreid
