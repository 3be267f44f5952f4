#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "nn.hpp"
#include "style.hpp"

namespace xreid {

// Multi-domain translation trained once over the joint camera set. Critic
// with gradient penalty; the generator adds domain classification and cycle
// reconstruction terms.
struct GanConfig {
    double lambda_cls = 1.0;
    double lambda_rec = 10.0;
    double lambda_gp = 10.0;
    long d_steps_per_g = 5;
    double adam_b1 = 0.5;
    double adam_b2 = 0.999;
    double lr = 1e-4;
    long total_iterations = 2000;  // generator iterations
    long image_h = 64;
    long image_w = 32;
    long batch_size = 4;
    long base_channels = 16;
    long n_res_blocks = 2;
    long log_every = 100;
    std::uint64_t seed = 1;
};

void validate_gan_config(const GanConfig& cfg);

// Per generator iteration: cycle reconstruction L1, critic loss, generator
// adversarial and domain-classification terms.
struct GanTrainLog {
    std::vector<double> rec;
    std::vector<double> d_loss;
    std::vector<double> g_adv;
    std::vector<double> g_cls;
    long d_updates = 0;
};

class GanEngine : public StyleEngine {
public:
    GanEngine(const GanConfig& cfg, const DomainMap& dm);

    Tensor transfer(const Tensor& img, int from_domain, int to_domain) const override;
    long n_domains() const override { return dm_.n(); }

    const GanConfig& config() const { return cfg_; }
    const DomainMap& domain_map() const { return dm_; }
    nn::Registry& registry() { return reg_; }
    const nn::Registry& registry() const { return reg_; }

    // graph-building forwards, used by the trainer and by transfer
    ad::Var generate(const ad::Var& x, const Tensor& target_onehot_rows) const;
    // critic patch scores (N,1,h,w) and domain logits (N, n_domains)
    std::pair<ad::Var, ad::Var> discriminate(const ad::Var& x) const;

private:
    GanConfig cfg_;
    DomainMap dm_;
    nn::Registry reg_;

    std::vector<nn::Conv2d> g_convs_;
    std::vector<nn::InstanceNorm2d> g_ins_;
    std::vector<nn::Conv2d> d_convs_;
    nn::Conv2d d_src_;
    nn::Linear d_cls_;
    long n_down_ = 2;
};

// Alternating optimization: d_steps_per_g critic updates, then one generator
// update, for total_iterations generator updates.
std::unique_ptr<GanEngine> train_style_engine(const DomainDataset& source,
                                              const DomainDataset& target, const GanConfig& cfg,
                                              GanTrainLog* log = nullptr);

// registry blob plus `<path>.meta` sidecar holding the config and domain map
void save_gan_checkpoint(const GanEngine& engine, const std::string& path);
std::unique_ptr<GanEngine> load_gan_checkpoint(const std::string& path);

}  // namespace xreid
