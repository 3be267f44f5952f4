#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ops.hpp"
#include "rng.hpp"

namespace xreid::nn {

using ad::Var;

// Parameter groups drive per-group learning rates: "backbone" runs at the
// pretrained rate, "new" at the fresh-layer rate.
struct Entry {
    std::string name;
    std::string group;
    bool trainable = true;
    Var var;
};

class Registry {
public:
    Var add_param(const std::string& name, const std::string& group, Tensor init);
    Var add_buffer(const std::string& name, Tensor init);

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    const Entry& at(const std::string& name) const;

    // Flat serialization in registration order.
    std::vector<std::pair<std::string, Tensor>> state() const;
    void load_state(const std::vector<std::pair<std::string, Tensor>>& st);

    long param_count() const;  // trainable scalars

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

enum class Init { he, dcgan, classifier, zeros, ones };

Tensor init_tensor(const std::vector<long>& shape, Init kind, long fan_in, Rng& rng);

// ---- layers --------------------------------------------------------------------

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;
    bool has_bias = true;

    Conv2d() = default;
    Conv2d(Registry& r, const std::string& name, const std::string& group, long cin, long cout,
           int k, int stride, int pad, bool bias, Init init, Rng& rng);
    Var forward(const Var& x) const;
};

struct Linear {
    Var w, b;  // w is (out, in)
    bool has_bias = true;

    Linear() = default;
    Linear(Registry& r, const std::string& name, const std::string& group, long in, long out,
           bool bias, Init init, Rng& rng);
    Var forward(const Var& x) const;
};

struct BatchNorm2d {
    Var gamma, beta;
    Var running_mean, running_var;  // buffers, updated in place during training
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm2d() = default;
    BatchNorm2d(Registry& r, const std::string& name, const std::string& group, long c);
    Var forward(const Var& x, bool training);
};

struct BatchNorm1d {
    Var gamma, beta;
    Var running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm1d() = default;
    BatchNorm1d(Registry& r, const std::string& name, const std::string& group, long d);
    Var forward(const Var& x, bool training);
};

struct InstanceNorm2d {
    Var gamma, beta;  // per-channel affine, no running stats
    double eps = 1e-5;

    InstanceNorm2d() = default;
    InstanceNorm2d(Registry& r, const std::string& name, const std::string& group, long c);
    Var forward(const Var& x) const;
};

// ---- optimizers ------------------------------------------------------------------

// PyTorch-style SGD: g += wd*p; v = mu*v + g; p -= lr*v.
class SgdMomentum {
public:
    SgdMomentum(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    // lr_of maps a parameter group to its current learning rate. Parameters
    // without a gradient entry are left untouched (state included).
    void step(Registry& reg, const ad::GradMap& grads,
              const std::function<double(const std::string&)>& lr_of);

private:
    double momentum_, weight_decay_;
    std::unordered_map<const ad::Node*, Tensor> velocity_;
};

class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // group filters which entries move; empty means all. Entries without a
    // gradient are untouched either way.
    void step(Registry& reg, const ad::GradMap& grads, const std::string& group = "");

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<const ad::Node*, Tensor> m_, v_;
};

// ---- parameter blob --------------------------------------------------------------

// Little-endian binary: magic "XRBLOB1\n", u64 count, then per entry
// u32 name_len, name, u32 rank, u64 dims, f64 data. Written atomically.
void save_registry_blob(const Registry& reg, const std::string& path);
void load_registry_blob(Registry& reg, const std::string& path);

}  // namespace xreid::nn
