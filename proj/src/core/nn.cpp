#include "nn.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>

#include "common.hpp"

namespace xreid::nn {

using namespace ad;

Var Registry::add_param(const std::string& name, const std::string& group, Tensor init) {
    if (index_.count(name)) fail(Errc::state, "registry: duplicate name " + name);
    Entry e;
    e.name = name;
    e.group = group;
    e.trainable = true;
    e.var = Var::param(std::move(init));
    index_[name] = entries_.size();
    entries_.push_back(e);
    return entries_.back().var;
}

Var Registry::add_buffer(const std::string& name, Tensor init) {
    if (index_.count(name)) fail(Errc::state, "registry: duplicate name " + name);
    Entry e;
    e.name = name;
    e.group = "buffer";
    e.trainable = false;
    e.var = Var::constant(std::move(init));
    index_[name] = entries_.size();
    entries_.push_back(e);
    return entries_.back().var;
}

const Entry& Registry::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(Errc::invalid_argument, "registry: unknown name " + name);
    return entries_[it->second];
}

std::vector<std::pair<std::string, Tensor>> Registry::state() const {
    std::vector<std::pair<std::string, Tensor>> st;
    st.reserve(entries_.size());
    for (const Entry& e : entries_) st.emplace_back(e.name, e.var.value());
    return st;
}

void Registry::load_state(const std::vector<std::pair<std::string, Tensor>>& st) {
    if (st.size() != entries_.size())
        fail(Errc::invalid_argument, "load_state: entry count mismatch (" +
                                         std::to_string(st.size()) + " vs " +
                                         std::to_string(entries_.size()) + ")");
    for (size_t i = 0; i < st.size(); ++i) {
        Entry& e = entries_[i];
        if (st[i].first != e.name)
            fail(Errc::invalid_argument, "load_state: name mismatch at " + std::to_string(i) +
                                             ": " + st[i].first + " vs " + e.name);
        if (!st[i].second.same_shape(e.var.value()))
            fail(Errc::invalid_argument, "load_state: shape mismatch for " + e.name);
        // copy into existing storage so live graph leaves see the new values
        Tensor& dst = e.var.value();
        const Tensor& src = st[i].second;
        for (long j = 0; j < dst.size(); ++j) dst.data()[j] = src.data()[j];
    }
}

long Registry::param_count() const {
    long n = 0;
    for (const Entry& e : entries_)
        if (e.trainable) n += e.var.value().size();
    return n;
}

Tensor init_tensor(const std::vector<long>& shape, Init kind, long fan_in, Rng& rng) {
    Tensor t(shape);
    double* p = t.data();
    const long n = t.size();
    switch (kind) {
        case Init::he: {
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (long i = 0; i < n; ++i) p[i] = rng.normal() * std;
            break;
        }
        case Init::dcgan:
            for (long i = 0; i < n; ++i) p[i] = rng.normal() * 0.02;
            break;
        case Init::classifier:
            for (long i = 0; i < n; ++i) p[i] = rng.normal() * 0.001;
            break;
        case Init::zeros:
            break;
        case Init::ones:
            for (long i = 0; i < n; ++i) p[i] = 1.0;
            break;
    }
    return t;
}

// ---- layers ------------------------------------------------------------------------

Conv2d::Conv2d(Registry& r, const std::string& name, const std::string& group, long cin, long cout,
               int k, int stride_, int pad_, bool bias, Init init, Rng& rng)
    : stride(stride_), pad(pad_), has_bias(bias) {
    w = r.add_param(name + ".w", group, init_tensor({cout, cin, k, k}, init, cin * k * k, rng));
    if (bias) b = r.add_param(name + ".b", group, Tensor({cout}));
}

Var Conv2d::forward(const Var& x) const {
    Var y = conv2d(x, w, stride, pad);
    if (has_bias) y = add(y, bcast_per_channel(b, y.shape()));
    return y;
}

Linear::Linear(Registry& r, const std::string& name, const std::string& group, long in, long out,
               bool bias, Init init, Rng& rng)
    : has_bias(bias) {
    w = r.add_param(name + ".w", group, init_tensor({out, in}, init, in, rng));
    if (bias) b = r.add_param(name + ".b", group, Tensor({out}));
}

Var Linear::forward(const Var& x) const {
    Var y = matmul(x, w, false, true);
    if (has_bias) y = add(y, bcast_over_rows(b, x.shape()[0]));
    return y;
}

BatchNorm2d::BatchNorm2d(Registry& r, const std::string& name, const std::string& group, long c) {
    gamma = r.add_param(name + ".gamma", group, Tensor::full({c}, 1.0));
    beta = r.add_param(name + ".beta", group, Tensor({c}));
    running_mean = r.add_buffer(name + ".running_mean", Tensor({c}));
    running_var = r.add_buffer(name + ".running_var", Tensor::full({c}, 1.0));
}

Var BatchNorm2d::forward(const Var& x, bool training) {
    const auto& s = x.shape();
    Var mean_v, var_v;
    if (training) {
        mean_v = mean_per_channel(x);
        Var xc = sub(x, bcast_per_channel(mean_v, s));
        var_v = mean_per_channel(square(xc));
        // running stats track the unbiased variance
        const long cnt = s[0] * s[2] * s[3];
        const double unbias = cnt > 1 ? static_cast<double>(cnt) / (cnt - 1) : 1.0;
        Tensor& rm = running_mean.value();
        Tensor& rv = running_var.value();
        for (long c = 0; c < s[1]; ++c) {
            rm.data()[c] = (1.0 - momentum) * rm.data()[c] + momentum * mean_v.value().data()[c];
            rv.data()[c] =
                (1.0 - momentum) * rv.data()[c] + momentum * unbias * var_v.value().data()[c];
        }
        Var denom = sqrt(add_scalar(var_v, eps));
        Var xhat = div(xc, bcast_per_channel(denom, s));
        return add(mul(xhat, bcast_per_channel(gamma, s)), bcast_per_channel(beta, s));
    }
    Var xc = sub(x, bcast_per_channel(running_mean.detach(), s));
    Var denom = sqrt(add_scalar(running_var.detach(), eps));
    Var xhat = div(xc, bcast_per_channel(denom, s));
    return add(mul(xhat, bcast_per_channel(gamma, s)), bcast_per_channel(beta, s));
}

BatchNorm1d::BatchNorm1d(Registry& r, const std::string& name, const std::string& group, long d) {
    gamma = r.add_param(name + ".gamma", group, Tensor::full({d}, 1.0));
    beta = r.add_param(name + ".beta", group, Tensor({d}));
    running_mean = r.add_buffer(name + ".running_mean", Tensor({d}));
    running_var = r.add_buffer(name + ".running_var", Tensor::full({d}, 1.0));
}

Var BatchNorm1d::forward(const Var& x, bool training) {
    const auto& s = x.shape();
    const long n = s[0], d = s[1];
    if (training) {
        Var mean_v = mean_over_rows(x);
        Var xc = sub(x, bcast_over_rows(mean_v, n));
        Var var_v = mean_over_rows(square(xc));
        const double unbias = n > 1 ? static_cast<double>(n) / (n - 1) : 1.0;
        Tensor& rm = running_mean.value();
        Tensor& rv = running_var.value();
        for (long j = 0; j < d; ++j) {
            rm.data()[j] = (1.0 - momentum) * rm.data()[j] + momentum * mean_v.value().data()[j];
            rv.data()[j] =
                (1.0 - momentum) * rv.data()[j] + momentum * unbias * var_v.value().data()[j];
        }
        Var denom = sqrt(add_scalar(var_v, eps));
        Var xhat = div(xc, bcast_over_rows(denom, n));
        return add(mul(xhat, bcast_over_rows(gamma, n)), bcast_over_rows(beta, n));
    }
    Var xc = sub(x, bcast_over_rows(running_mean.detach(), n));
    Var denom = sqrt(add_scalar(running_var.detach(), eps));
    Var xhat = div(xc, bcast_over_rows(denom, n));
    return add(mul(xhat, bcast_over_rows(gamma, n)), bcast_over_rows(beta, n));
}

InstanceNorm2d::InstanceNorm2d(Registry& r, const std::string& name, const std::string& group,
                               long c) {
    gamma = r.add_param(name + ".gamma", group, Tensor::full({c}, 1.0));
    beta = r.add_param(name + ".beta", group, Tensor({c}));
}

Var InstanceNorm2d::forward(const Var& x) const {
    const auto& s = x.shape();
    Var mean_v = mean_per_nc(x);
    Var xc = sub(x, bcast_per_nc(mean_v, s));
    Var var_v = mean_per_nc(square(xc));
    Var denom = sqrt(add_scalar(var_v, eps));
    Var xhat = div(xc, bcast_per_nc(denom, s));
    return add(mul(xhat, bcast_per_channel(gamma, s)), bcast_per_channel(beta, s));
}

// ---- optimizers ----------------------------------------------------------------------

void SgdMomentum::step(Registry& reg, const ad::GradMap& grads,
                       const std::function<double(const std::string&)>& lr_of) {
    for (Entry& e : reg.entries()) {
        if (!e.trainable) continue;
        auto git = grads.find(e.var.node());
        if (git == grads.end()) continue;
        const double lr = lr_of(e.group);
        Tensor& p = e.var.value();
        const Tensor& g = git->second.value();
        if (!g.same_shape(p)) fail(Errc::state, "sgd: grad shape mismatch for " + e.name);
        auto [vit, fresh] = velocity_.try_emplace(e.var.node());
        if (fresh) vit->second = Tensor(p.shape());
        Tensor& v = vit->second;
        for (long i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i] + weight_decay_ * p.data()[i];
            v.data()[i] = momentum_ * v.data()[i] + gi;
            p.data()[i] -= lr * v.data()[i];
        }
    }
}

void Adam::step(Registry& reg, const ad::GradMap& grads, const std::string& group) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (Entry& e : reg.entries()) {
        if (!e.trainable) continue;
        if (!group.empty() && e.group != group) continue;
        auto git = grads.find(e.var.node());
        if (git == grads.end()) continue;
        Tensor& p = e.var.value();
        const Tensor& g = git->second.value();
        if (!g.same_shape(p)) fail(Errc::state, "adam: grad shape mismatch for " + e.name);
        auto [mit, mf] = m_.try_emplace(e.var.node());
        if (mf) mit->second = Tensor(p.shape());
        auto [vit, vf] = v_.try_emplace(e.var.node());
        if (vf) vit->second = Tensor(p.shape());
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (long i = 0; i < p.size(); ++i) {
            const double gi = g.data()[i];
            m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * gi;
            v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            p.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

// ---- parameter blob ----------------------------------------------------------------

namespace {

template <class T>
void put(std::string& out, T v) {
    // little-endian, byte by byte so the format is host-order independent
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put(out, bits);
}

template <class T>
T take(const std::string& in, size_t& pos) {
    if (pos + sizeof(T) > in.size()) fail(Errc::io, "blob: truncated");
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += sizeof(T);
    return v;
}

double take_f64(const std::string& in, size_t& pos) {
    const std::uint64_t bits = take<std::uint64_t>(in, pos);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr const char* kBlobMagic = "XRBLOB1\n";

}  // namespace

void save_registry_blob(const Registry& reg, const std::string& path) {
    std::string out = kBlobMagic;
    put<std::uint64_t>(out, reg.entries().size());
    for (const Entry& e : reg.entries()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        const Tensor& t = e.var.value();
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (long d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        for (long i = 0; i < t.size(); ++i) put_f64(out, t.data()[i]);
    }
    write_binary_file_atomic(path, out.data(), out.size());
}

void load_registry_blob(Registry& reg, const std::string& path) {
    const std::string in = read_text_file(path);
    size_t pos = std::strlen(kBlobMagic);
    if (in.size() < pos || in.compare(0, pos, kBlobMagic) != 0)
        fail(Errc::io, "blob: bad magic in " + path);
    const auto count = take<std::uint64_t>(in, pos);
    std::vector<std::pair<std::string, Tensor>> st;
    st.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = take<std::uint32_t>(in, pos);
        if (pos + name_len > in.size()) fail(Errc::io, "blob: truncated name");
        std::string name = in.substr(pos, name_len);
        pos += name_len;
        const auto rank = take<std::uint32_t>(in, pos);
        if (rank > 8) fail(Errc::io, "blob: implausible rank");
        std::vector<long> shape(rank);
        for (auto& d : shape) d = static_cast<long>(take<std::uint64_t>(in, pos));
        Tensor t(shape);
        for (long i = 0; i < t.size(); ++i) t.data()[i] = take_f64(in, pos);
        st.emplace_back(std::move(name), std::move(t));
    }
    reg.load_state(st);
}

}  // namespace xreid::nn
