#include "ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <optional>
#include <unordered_set>

#include "common.hpp"

namespace xreid::ad {

namespace {

thread_local bool t_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

Var::Var(Tensor value, bool requires_grad) {
    n_ = std::make_shared<Node>();
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
    n_->op = "leaf";
}

Var Var::detach() const {
    Var v;
    if (!n_) return v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = n_->value;  // shares storage
    v.n_->requires_grad = false;
    v.n_->op = "detach";
    return v;
}

using BackFn = std::function<std::vector<Var>(const Var&, const std::vector<Var>&)>;

Var make_op(Tensor value, std::vector<Var> inputs, BackFn bwd, const char* name) {
    Var v;
    v.n_ = std::make_shared<Node>();
    v.n_->value = std::move(value);
    v.n_->op = name;
    bool rg = false;
    if (t_grad_enabled) {
        for (const Var& in : inputs)
            if (in.requires_grad()) { rg = true; break; }
    }
    v.n_->requires_grad = rg;
    if (rg) {
        v.n_->inputs = std::move(inputs);
        v.n_->backward = std::move(bwd);
    }
    return v;
}

// ---- backward engine ---------------------------------------------------------

GradMap backward(const Var& root, bool create_graph) {
    if (!root.defined()) fail(Errc::invalid_argument, "backward: undefined root");
    if (root.value().size() != 1) fail(Errc::invalid_argument, "backward: root must be scalar");
    GradMap grads;
    if (!root.requires_grad()) return grads;

    // post-order over the grad-requiring subgraph
    std::vector<Node*> order;
    std::unordered_set<const Node*> seen;
    struct Frame { Node* n; size_t i; };
    std::vector<Frame> st;
    st.push_back({root.node(), 0});
    seen.insert(root.node());
    while (!st.empty()) {
        Frame& f = st.back();
        if (f.i < f.n->inputs.size()) {
            const Var& in = f.n->inputs[f.i++];
            if (in.defined() && in.requires_grad() && !seen.count(in.node())) {
                seen.insert(in.node());
                st.push_back({in.node(), 0});
            }
        } else {
            order.push_back(f.n);
            st.pop_back();
        }
    }

    std::optional<NoGradGuard> guard;
    if (!create_graph) guard.emplace();

    grads.emplace(root.node(), Var::constant(Tensor::full(root.shape(), 1.0)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto git = grads.find(n);
        if (git == grads.end() || !n->backward) continue;
        Var g = git->second;
        std::vector<Var> gins = n->backward(g, n->inputs);
        if (gins.size() != n->inputs.size())
            fail(Errc::state, std::string("backward arity mismatch in op ") + n->op);
        for (size_t i = 0; i < gins.size(); ++i) {
            const Var& in = n->inputs[i];
            if (!in.defined() || !in.requires_grad() || !gins[i].defined()) continue;
            auto [slot, fresh] = grads.try_emplace(in.node());
            slot->second = fresh ? gins[i] : add(slot->second, gins[i]);
        }
    }
    return grads;
}

Var grad_of(const Var& root, const Var& wrt, bool create_graph) {
    GradMap g = backward(root, create_graph);
    auto it = g.find(wrt.node());
    if (it != g.end()) return it->second;
    return Var::constant(Tensor(wrt.shape()));
}

// ---- elementwise kernels -------------------------------------------------------

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        fail(Errc::invalid_argument, std::string(op) + ": shape mismatch " +
                                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class F>
Tensor ew2(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const long n = a.size();
    for (long i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <class F>
Tensor ew1(const Tensor& a, F f) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const long n = a.size();
    for (long i = 0; i < n; ++i) po[i] = f(pa[i]);
    return out;
}

// coeff * a^p where a > 0, else 0. Closed under differentiation, which keeps
// sqrt gradients finite (and zero) at exact-zero distances.
Var pow_masked(const Var& a, double p, double coeff) {
    Tensor out = ew1(a.value(), [&](double x) -> double {
        if (x <= 0.0) return 0.0;
        if (p == 0.5) return coeff * std::sqrt(x);
        if (p == -0.5) return coeff / std::sqrt(x);
        if (p == 1.0) return coeff * x;
        return coeff * std::pow(x, p);
    });
    return make_op(std::move(out), {a},
                   [p, coeff](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {mul(g, pow_masked(in[0], p - 1.0, coeff * p))};
                   },
                   "pow_masked");
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_op(ew2(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {g, g};
                   },
                   "add");
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_op(ew2(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {g, neg(g)};
                   },
                   "sub");
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return make_op(ew2(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {mul(g, in[1]), mul(g, in[0])};
                   },
                   "mul");
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    return make_op(ew2(a.value(), b.value(), [](double x, double y) { return x / y; }), {a, b},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Var da = div(g, in[1]);
                       Var db = neg(mul(da, div(in[0], in[1])));
                       return {da, db};
                   },
                   "div");
}

Var add_scalar(const Var& a, double s) {
    return make_op(ew1(a.value(), [s](double x) { return x + s; }), {a},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {g};
                   },
                   "add_scalar");
}

Var mul_scalar(const Var& a, double s) {
    return make_op(ew1(a.value(), [s](double x) { return x * s; }), {a},
                   [s](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {mul_scalar(g, s)};
                   },
                   "mul_scalar");
}

Var neg(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return -x; }), {a},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {neg(g)};
                   },
                   "neg");
}

Var exp(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return std::exp(x); }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {mul(g, exp(in[0]))};
                   },
                   "exp");
}

Var log(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return std::log(x); }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {div(g, in[0])};
                   },
                   "log");
}

Var sqrt(const Var& a) { return pow_masked(a, 0.5, 1.0); }

Var abs(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return std::fabs(x); }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Tensor sign = ew1(in[0].value(), [](double x) -> double {
                           return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                       });
                       return {mul(g, Var::constant(std::move(sign)))};
                   },
                   "abs");
}

Var square(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return x * x; }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {mul(g, mul_scalar(in[0], 2.0))};
                   },
                   "square");
}

Var relu(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Tensor mask = ew1(in[0].value(),
                                         [](double x) -> double { return x > 0.0 ? 1.0 : 0.0; });
                       return {mul(g, Var::constant(std::move(mask)))};
                   },
                   "relu");
}

Var leaky_relu(const Var& a, double slope) {
    return make_op(ew1(a.value(), [slope](double x) { return x > 0.0 ? x : slope * x; }), {a},
                   [slope](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Tensor mask = ew1(in[0].value(), [slope](double x) -> double {
                           return x > 0.0 ? 1.0 : slope;
                       });
                       return {mul(g, Var::constant(std::move(mask)))};
                   },
                   "leaky_relu");
}

Var tanh(const Var& a) {
    return make_op(ew1(a.value(), [](double x) { return std::tanh(x); }), {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Var t = tanh(in[0]);
                       return {mul(g, add_scalar(neg(square(t)), 1.0))};
                   },
                   "tanh");
}
Var sigmoid(const Var& a) {
    return make_op(ew1(a.value(),
                       [](double x) {
                           return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                           : std::exp(x) / (1.0 + std::exp(x));
                       }),
                   {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Var s = sigmoid(in[0]);
                       return {mul(g, mul(s, add_scalar(neg(s), 1.0)))};
                   },
                   "sigmoid");
}
Var softplus(const Var& a) {
    return make_op(ew1(a.value(),
                       [](double x) {
                           return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
                       }),
                   {a},
                   [](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       return {mul(g, sigmoid(in[0]))};
                   },
                   "softplus");
}

// ---- matmul --------------------------------------------------------------------

namespace {

Tensor matmul_kernel(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.rank() != 2 || b.rank() != 2) fail(Errc::invalid_argument, "matmul: rank-2 inputs required");
    const long am = a.shape()[0], an = a.shape()[1];
    const long bm = b.shape()[0], bn = b.shape()[1];
    const long m = ta ? an : am;
    const long k = ta ? am : an;
    const long k2 = tb ? bn : bm;
    const long n = tb ? bm : bn;
    if (k != k2)
        fail(Errc::invalid_argument, "matmul: inner dims " + shape_str(a.shape()) + " x " +
                                         shape_str(b.shape()));
    Tensor y({m, n});
    CMapMat A(a.data(), am, an);
    CMapMat B(b.data(), bm, bn);
    MapMat Y(y.data(), m, n);
    if (!ta && !tb)
        Y.noalias() = A * B;
    else if (ta && !tb)
        Y.noalias() = A.transpose() * B;
    else if (!ta && tb)
        Y.noalias() = A * B.transpose();
    else
        Y.noalias() = A.transpose() * B.transpose();
    return y;
}

}  // namespace

Var matmul(const Var& a, const Var& b, bool ta, bool tb) {
    return make_op(matmul_kernel(a.value(), b.value(), ta, tb), {a, b},
                   [ta, tb](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       Var da = ta ? matmul(in[1], g, tb, true) : matmul(g, in[1], false, !tb);
                       Var db = tb ? matmul(g, in[0], true, ta) : matmul(in[0], g, !ta, false);
                       return {da, db};
                   },
                   "matmul");
}

// ---- convolution ---------------------------------------------------------------

namespace {

struct ConvDims {
    long N, Cin, H, W, Cout, kh, kw, Ho, Wo;
};

ConvDims conv_dims(const std::vector<long>& xs, const std::vector<long>& ws, int stride, int pad) {
    if (xs.size() != 4 || ws.size() != 4) fail(Errc::invalid_argument, "conv2d: NCHW tensors required");
    ConvDims d;
    d.N = xs[0]; d.Cin = xs[1]; d.H = xs[2]; d.W = xs[3];
    d.Cout = ws[0]; d.kh = ws[2]; d.kw = ws[3];
    if (ws[1] != d.Cin) fail(Errc::invalid_argument, "conv2d: channel mismatch");
    if (stride < 1 || pad < 0) fail(Errc::invalid_argument, "conv2d: bad stride/pad");
    d.Ho = (d.H + 2 * pad - d.kh) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.kw) / stride + 1;
    if (d.H + 2 * pad < d.kh || d.W + 2 * pad < d.kw)
        fail(Errc::invalid_argument, "conv2d: kernel larger than padded input");
    return d;
}

// col is (Cin*kh*kw, Ho*Wo) row-major for one sample
void im2col(const double* x, const ConvDims& d, int stride, int pad, double* col) {
    const long HoWo = d.Ho * d.Wo;
    for (long ci = 0; ci < d.Cin; ++ci) {
        const double* xc = x + ci * d.H * d.W;
        for (long i = 0; i < d.kh; ++i) {
            for (long j = 0; j < d.kw; ++j) {
                double* row = col + ((ci * d.kh + i) * d.kw + j) * HoWo;
                for (long ho = 0; ho < d.Ho; ++ho) {
                    const long h = ho * stride - pad + i;
                    if (h < 0 || h >= d.H) {
                        for (long wo = 0; wo < d.Wo; ++wo) row[ho * d.Wo + wo] = 0.0;
                        continue;
                    }
                    for (long wo = 0; wo < d.Wo; ++wo) {
                        const long w = wo * stride - pad + j;
                        row[ho * d.Wo + wo] = (w < 0 || w >= d.W) ? 0.0 : xc[h * d.W + w];
                    }
                }
            }
        }
    }
}

// scatter-add of col layout back into one sample
void col2im(const double* col, const ConvDims& d, int stride, int pad, double* x) {
    const long HoWo = d.Ho * d.Wo;
    for (long ci = 0; ci < d.Cin; ++ci) {
        double* xc = x + ci * d.H * d.W;
        for (long i = 0; i < d.kh; ++i) {
            for (long j = 0; j < d.kw; ++j) {
                const double* row = col + ((ci * d.kh + i) * d.kw + j) * HoWo;
                for (long ho = 0; ho < d.Ho; ++ho) {
                    const long h = ho * stride - pad + i;
                    if (h < 0 || h >= d.H) continue;
                    for (long wo = 0; wo < d.Wo; ++wo) {
                        const long w = wo * stride - pad + j;
                        if (w < 0 || w >= d.W) continue;
                        xc[h * d.W + w] += row[ho * d.Wo + wo];
                    }
                }
            }
        }
    }
}

Tensor conv2d_kernel(const Tensor& x, const Tensor& w, int stride, int pad) {
    ConvDims d = conv_dims(x.shape(), w.shape(), stride, pad);
    Tensor y({d.N, d.Cout, d.Ho, d.Wo});
    const long K = d.Cin * d.kh * d.kw;
    const long HoWo = d.Ho * d.Wo;
    std::vector<double> col(static_cast<size_t>(K) * HoWo);
    CMapMat W(w.data(), d.Cout, K);
    for (long n = 0; n < d.N; ++n) {
        im2col(x.data() + n * d.Cin * d.H * d.W, d, stride, pad, col.data());
        CMapMat C(col.data(), K, HoWo);
        MapMat Y(y.data() + n * d.Cout * HoWo, d.Cout, HoWo);
        Y.noalias() = W * C;
    }
    return y;
}

Tensor conv2d_data_grad_kernel(const Tensor& gy, const Tensor& w, int stride, int pad, long xh,
                               long xw) {
    const auto& gs = gy.shape();
    const auto& ws = w.shape();
    if (gs.size() != 4 || ws.size() != 4) fail(Errc::invalid_argument, "conv2d_data_grad: NCHW required");
    ConvDims d = conv_dims({gs[0], ws[1], xh, xw}, ws, stride, pad);
    if (d.Ho != gs[2] || d.Wo != gs[3] || d.Cout != gs[1])
        fail(Errc::invalid_argument, "conv2d_data_grad: inconsistent output grad shape");
    Tensor gx({d.N, d.Cin, d.H, d.W});
    const long K = d.Cin * d.kh * d.kw;
    const long HoWo = d.Ho * d.Wo;
    std::vector<double> col(static_cast<size_t>(K) * HoWo);
    CMapMat W(w.data(), d.Cout, K);
    for (long n = 0; n < d.N; ++n) {
        CMapMat G(gy.data() + n * d.Cout * HoWo, d.Cout, HoWo);
        MapMat C(col.data(), K, HoWo);
        C.noalias() = W.transpose() * G;
        col2im(col.data(), d, stride, pad, gx.data() + n * d.Cin * d.H * d.W);
    }
    return gx;
}

Tensor conv2d_weight_grad_kernel(const Tensor& x, const Tensor& gy, int stride, int pad, long kh,
                                 long kw) {
    const auto& xs = x.shape();
    const auto& gs = gy.shape();
    if (xs.size() != 4 || gs.size() != 4) fail(Errc::invalid_argument, "conv2d_weight_grad: NCHW required");
    ConvDims d = conv_dims(xs, {gs[1], xs[1], kh, kw}, stride, pad);
    if (d.Ho != gs[2] || d.Wo != gs[3] || d.N != gs[0])
        fail(Errc::invalid_argument, "conv2d_weight_grad: inconsistent output grad shape");
    Tensor gw({d.Cout, d.Cin, d.kh, d.kw});
    const long K = d.Cin * d.kh * d.kw;
    const long HoWo = d.Ho * d.Wo;
    std::vector<double> col(static_cast<size_t>(K) * HoWo);
    MapMat GW(gw.data(), d.Cout, K);
    for (long n = 0; n < d.N; ++n) {
        im2col(x.data() + n * d.Cin * d.H * d.W, d, stride, pad, col.data());
        CMapMat C(col.data(), K, HoWo);
        CMapMat G(gy.data() + n * d.Cout * HoWo, d.Cout, HoWo);
        GW.noalias() += G * C.transpose();
    }
    return gw;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, int stride, int pad) {
    Tensor y = conv2d_kernel(x.value(), w.value(), stride, pad);
    const long xh = x.shape()[2], xw = x.shape()[3];
    const long kh = w.shape()[2], kw = w.shape()[3];
    return make_op(std::move(y), {x, w},
                   [stride, pad, xh, xw, kh, kw](const Var& g,
                                                 const std::vector<Var>& in) -> std::vector<Var> {
                       return {conv2d_data_grad(g, in[1], stride, pad, xh, xw),
                               conv2d_weight_grad(in[0], g, stride, pad, kh, kw)};
                   },
                   "conv2d");
}

Var conv2d_data_grad(const Var& gy, const Var& w, int stride, int pad, long xh, long xw) {
    Tensor gx = conv2d_data_grad_kernel(gy.value(), w.value(), stride, pad, xh, xw);
    const long kh = w.shape()[2], kw = w.shape()[3];
    return make_op(std::move(gx), {gy, w},
                   [stride, pad, kh, kw](const Var& g,
                                         const std::vector<Var>& in) -> std::vector<Var> {
                       return {conv2d(g, in[1], stride, pad),
                               conv2d_weight_grad(g, in[0], stride, pad, kh, kw)};
                   },
                   "conv2d_data_grad");
}

Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int pad, long kh, long kw) {
    Tensor gw = conv2d_weight_grad_kernel(x.value(), gy.value(), stride, pad, kh, kw);
    const long xh = x.shape()[2], xw = x.shape()[3];
    return make_op(std::move(gw), {x, gy},
                   [stride, pad, xh, xw](const Var& g,
                                         const std::vector<Var>& in) -> std::vector<Var> {
                       return {conv2d_data_grad(in[1], g, stride, pad, xh, xw),
                               conv2d(in[0], g, stride, pad)};
                   },
                   "conv2d_weight_grad");
}

// ---- gather / scatter over flat indices ------------------------------------------

namespace {

Var scatter_flat(const Var& v, Tensor idx, std::vector<long> out_shape);

Var gather_flat_impl(const Var& x, Tensor idx) {
    const Tensor& xv = x.value();
    Tensor out(idx.shape());
    const long n = idx.size();
    const long xn = xv.size();
    for (long i = 0; i < n; ++i) {
        const long k = static_cast<long>(idx.data()[i]);
        if (k < 0 || k >= xn) fail(Errc::invalid_argument, "gather_flat: index out of range");
        out.data()[i] = xv.data()[k];
    }
    std::vector<long> xshape = xv.shape();
    return make_op(std::move(out), {x},
                   [idx, xshape](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {scatter_flat(g, idx, xshape)};
                   },
                   "gather_flat");
}

Var scatter_flat(const Var& v, Tensor idx, std::vector<long> out_shape) {
    Tensor out(out_shape);
    const long n = idx.size();
    const long on = out.size();
    const Tensor& vv = v.value();
    for (long i = 0; i < n; ++i) {
        const long k = static_cast<long>(idx.data()[i]);
        if (k < 0 || k >= on) fail(Errc::invalid_argument, "scatter_flat: index out of range");
        out.data()[k] += vv.data()[i];
    }
    return make_op(std::move(out), {v},
                   [idx](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {gather_flat_impl(g, idx)};
                   },
                   "scatter_flat");
}

}  // namespace

Var gather_flat(const Var& x, Tensor idx) { return gather_flat_impl(x, std::move(idx)); }

// ---- pooling / resampling --------------------------------------------------------

Var maxpool2d(const Var& x, int k, int stride, int pad) {
    const auto& s = x.shape();
    if (s.size() != 4) fail(Errc::invalid_argument, "maxpool2d: NCHW required");
    if (pad >= k) fail(Errc::invalid_argument, "maxpool2d: pad must be < kernel");
    const long N = s[0], C = s[1], H = s[2], W = s[3];
    const long Ho = (H + 2 * pad - k) / stride + 1;
    const long Wo = (W + 2 * pad - k) / stride + 1;
    Tensor y({N, C, Ho, Wo});
    Tensor idx({N, C, Ho, Wo});
    const double* xp = x.value().data();
    double* yp = y.data();
    double* ip = idx.data();
    long o = 0;
    for (long n = 0; n < N; ++n)
        for (long c = 0; c < C; ++c) {
            const double* xc = xp + (n * C + c) * H * W;
            for (long ho = 0; ho < Ho; ++ho)
                for (long wo = 0; wo < Wo; ++wo, ++o) {
                    double best = 0.0;
                    long bi = -1;
                    for (long i = 0; i < k; ++i) {
                        const long h = ho * stride - pad + i;
                        if (h < 0 || h >= H) continue;
                        for (long j = 0; j < k; ++j) {
                            const long w = wo * stride - pad + j;
                            if (w < 0 || w >= W) continue;
                            const double v = xc[h * W + w];
                            if (bi < 0 || v > best) {
                                best = v;
                                bi = (n * C + c) * H * W + h * W + w;
                            }
                        }
                    }
                    if (bi < 0) fail(Errc::invalid_argument, "maxpool2d: empty window");
                    yp[o] = best;
                    ip[o] = static_cast<double>(bi);
                }
        }
    std::vector<long> xshape = s;
    return make_op(std::move(y), {x},
                   [idx, xshape](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {scatter_flat(g, idx, xshape)};
                   },
                   "maxpool2d");
}

namespace {
Var sumpool2x(const Var& x);
}

Var upsample_nearest2x(const Var& x) {
    const auto& s = x.shape();
    if (s.size() != 4) fail(Errc::invalid_argument, "upsample_nearest2x: NCHW required");
    const long N = s[0], C = s[1], H = s[2], W = s[3];
    Tensor y({N, C, 2 * H, 2 * W});
    const double* xp = x.value().data();
    double* yp = y.data();
    for (long nc = 0; nc < N * C; ++nc) {
        const double* xc = xp + nc * H * W;
        double* yc = yp + nc * 4 * H * W;
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w) {
                const double v = xc[h * W + w];
                yc[(2 * h) * 2 * W + 2 * w] = v;
                yc[(2 * h) * 2 * W + 2 * w + 1] = v;
                yc[(2 * h + 1) * 2 * W + 2 * w] = v;
                yc[(2 * h + 1) * 2 * W + 2 * w + 1] = v;
            }
    }
    return make_op(std::move(y), {x},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {sumpool2x(g)};
                   },
                   "upsample_nearest2x");
}

namespace {

Var sumpool2x(const Var& x) {
    const auto& s = x.shape();
    if (s.size() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0)
        fail(Errc::invalid_argument, "sumpool2x: even NCHW required");
    const long N = s[0], C = s[1], H = s[2] / 2, W = s[3] / 2;
    Tensor y({N, C, H, W});
    const double* xp = x.value().data();
    double* yp = y.data();
    for (long nc = 0; nc < N * C; ++nc) {
        const double* xc = xp + nc * 4 * H * W;
        double* yc = yp + nc * H * W;
        for (long h = 0; h < H; ++h)
            for (long w = 0; w < W; ++w)
                yc[h * W + w] = xc[(2 * h) * 2 * W + 2 * w] + xc[(2 * h) * 2 * W + 2 * w + 1] +
                                xc[(2 * h + 1) * 2 * W + 2 * w] +
                                xc[(2 * h + 1) * 2 * W + 2 * w + 1];
    }
    return make_op(std::move(y), {x},
                   [](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {upsample_nearest2x(g)};
                   },
                   "sumpool2x");
}

}  // namespace

// ---- shape ops --------------------------------------------------------------------

Var reshape(const Var& x, std::vector<long> shape) {
    Tensor y = x.value().reshaped(shape);
    std::vector<long> xshape = x.shape();
    return make_op(std::move(y), {x},
                   [xshape](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {reshape(g, xshape)};
                   },
                   "reshape");
}

namespace {

// shapes treated as (N, C, rest); works for rank 2 and rank 4
void split_ncr(const std::vector<long>& s, long& n, long& c, long& r, const char* op) {
    if (s.size() < 2) fail(Errc::invalid_argument, std::string(op) + ": rank >= 2 required");
    n = s[0];
    c = s[1];
    r = 1;
    for (size_t i = 2; i < s.size(); ++i) r *= s[i];
}

Var pad_channels(const Var& x, long c0, long c_total);

}  // namespace

Var concat_channels(const Var& a, const Var& b) {
    long na, ca, ra, nb, cb, rb;
    split_ncr(a.shape(), na, ca, ra, "concat_channels");
    split_ncr(b.shape(), nb, cb, rb, "concat_channels");
    if (na != nb || ra != rb) fail(Errc::invalid_argument, "concat_channels: incompatible shapes");
    std::vector<long> oshape = a.shape();
    oshape[1] = ca + cb;
    Tensor y(oshape);
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* py = y.data();
    for (long n = 0; n < na; ++n) {
        std::memcpy(py + (n * (ca + cb)) * ra, pa + n * ca * ra, sizeof(double) * ca * ra);
        std::memcpy(py + (n * (ca + cb) + ca) * ra, pb + n * cb * ra, sizeof(double) * cb * ra);
    }
    return make_op(std::move(y), {a, b},
                   [ca, cb](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {slice_channels(g, 0, ca), slice_channels(g, ca, ca + cb)};
                   },
                   "concat_channels");
}

Var slice_channels(const Var& x, long c0, long c1) {
    long n, c, r;
    split_ncr(x.shape(), n, c, r, "slice_channels");
    if (c0 < 0 || c1 > c || c0 >= c1) fail(Errc::invalid_argument, "slice_channels: bad range");
    std::vector<long> oshape = x.shape();
    oshape[1] = c1 - c0;
    Tensor y(oshape);
    const double* px = x.value().data();
    double* py = y.data();
    for (long i = 0; i < n; ++i)
        std::memcpy(py + i * (c1 - c0) * r, px + (i * c + c0) * r, sizeof(double) * (c1 - c0) * r);
    return make_op(std::move(y), {x},
                   [c0, c](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {pad_channels(g, c0, c)};
                   },
                   "slice_channels");
}

namespace {

Var pad_channels(const Var& x, long c0, long c_total) {
    long n, c, r;
    split_ncr(x.shape(), n, c, r, "pad_channels");
    std::vector<long> oshape = x.shape();
    oshape[1] = c_total;
    Tensor y(oshape);
    const double* px = x.value().data();
    double* py = y.data();
    for (long i = 0; i < n; ++i)
        std::memcpy(py + (i * c_total + c0) * r, px + i * c * r, sizeof(double) * c * r);
    return make_op(std::move(y), {x},
                   [c0, c](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {slice_channels(g, c0, c0 + c)};
                   },
                   "pad_channels");
}

Var place_row(const Var& v, long row, long n_rows);
Var pad_rows(const Var& x, long r0, long n_total);

}  // namespace

Var slice_rows(const Var& x, long r0, long r1) {
    const auto& s = x.shape();
    if (s.empty()) fail(Errc::invalid_argument, "slice_rows: rank >= 1 required");
    if (r0 < 0 || r1 > s[0] || r0 >= r1) fail(Errc::invalid_argument, "slice_rows: bad range");
    long stride = 1;
    for (size_t i = 1; i < s.size(); ++i) stride *= s[i];
    std::vector<long> oshape = s;
    oshape[0] = r1 - r0;
    Tensor y(oshape);
    std::memcpy(y.data(), x.value().data() + r0 * stride, sizeof(double) * (r1 - r0) * stride);
    const long n = s[0];
    return make_op(std::move(y), {x},
                   [r0, n](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {pad_rows(g, r0, n)};
                   },
                   "slice_rows");
}

namespace {

Var pad_rows(const Var& x, long r0, long n_total) {
    const auto& s = x.shape();
    long stride = 1;
    for (size_t i = 1; i < s.size(); ++i) stride *= s[i];
    std::vector<long> oshape = s;
    oshape[0] = n_total;
    Tensor y(oshape);
    std::memcpy(y.data() + r0 * stride, x.value().data(), sizeof(double) * s[0] * stride);
    const long rows = s[0];
    return make_op(std::move(y), {x},
                   [r0, rows](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {slice_rows(g, r0, r0 + rows)};
                   },
                   "pad_rows");
}

}  // namespace

Var select_row(const Var& x, long row) {
    const auto& s = x.shape();
    if (s.size() != 2) fail(Errc::invalid_argument, "select_row: rank-2 required");
    if (row < 0 || row >= s[0]) fail(Errc::invalid_argument, "select_row: row out of range");
    const long d = s[1];
    Tensor y({d});
    std::memcpy(y.data(), x.value().data() + row * d, sizeof(double) * d);
    const long n = s[0];
    return make_op(std::move(y), {x},
                   [row, n](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {place_row(g, row, n)};
                   },
                   "select_row");
}

namespace {

Var place_row(const Var& v, long row, long n_rows) {
    const auto& s = v.shape();
    if (s.size() != 1) fail(Errc::invalid_argument, "place_row: rank-1 required");
    const long d = s[0];
    Tensor y({n_rows, d});
    std::memcpy(y.data() + row * d, v.value().data(), sizeof(double) * d);
    return make_op(std::move(y), {v},
                   [row](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {select_row(g, row)};
                   },
                   "place_row");
}

}  // namespace

// ---- label gather / scatter ---------------------------------------------------------

Var gather_labels(const Var& logits, const std::vector<int>& labels) {
    const auto& s = logits.shape();
    if (s.size() != 2) fail(Errc::invalid_argument, "gather_labels: rank-2 logits required");
    const long n = s[0], c = s[1];
    if (static_cast<long>(labels.size()) != n)
        fail(Errc::invalid_argument, "gather_labels: label count mismatch");
    Tensor y({n});
    for (long i = 0; i < n; ++i) {
        const int l = labels[i];
        if (l < 0 || l >= c) fail(Errc::invalid_argument, "gather_labels: label out of range");
        y.data()[i] = logits.value().data()[i * c + l];
    }
    return make_op(std::move(y), {logits},
                   [labels, c](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {scatter_labels(g, labels, c)};
                   },
                   "gather_labels");
}

Var scatter_labels(const Var& g, const std::vector<int>& labels, long n_classes) {
    const auto& s = g.shape();
    if (s.size() != 1) fail(Errc::invalid_argument, "scatter_labels: rank-1 required");
    const long n = s[0];
    if (static_cast<long>(labels.size()) != n)
        fail(Errc::invalid_argument, "scatter_labels: label count mismatch");
    Tensor y({n, n_classes});
    for (long i = 0; i < n; ++i) {
        const int l = labels[i];
        if (l < 0 || l >= n_classes) fail(Errc::invalid_argument, "scatter_labels: label out of range");
        y.data()[i * n_classes + l] = g.value().data()[i];
    }
    return make_op(std::move(y), {g},
                   [labels](const Var& gg, const std::vector<Var>&) -> std::vector<Var> {
                       return {gather_labels(gg, labels)};
                   },
                   "scatter_labels");
}

Var row_max_const(const Var& logits) {
    const auto& s = logits.shape();
    if (s.size() != 2) fail(Errc::invalid_argument, "row_max_const: rank-2 required");
    const long n = s[0], c = s[1];
    Tensor y({n});
    const double* p = logits.value().data();
    for (long i = 0; i < n; ++i) {
        double m = p[i * c];
        for (long j = 1; j < c; ++j) m = std::max(m, p[i * c + j]);
        y.data()[i] = m;
    }
    return Var::constant(std::move(y));
}

// ---- reductions / broadcasts ----------------------------------------------------------

namespace {

// Every axis-aligned reduction here is sum over the outer A and inner C of an
// (A,B,C) view, keeping B. Loop order is fixed, so results are reproducible.
Var bcast_abc(const Var& v, long A, long B, long C, std::vector<long> out_shape);

Var reduce_abc(const Var& x, long A, long B, long C, bool mean, std::vector<long> out_shape) {
    if (x.value().size() != A * B * C) fail(Errc::state, "reduce_abc: size mismatch");
    Tensor y(out_shape);
    if (y.size() != B) fail(Errc::state, "reduce_abc: bad output shape");
    const double* px = x.value().data();
    double* py = y.data();
    const double denom = static_cast<double>(A) * static_cast<double>(C);
    for (long b = 0; b < B; ++b) {
        double acc = 0.0;
        for (long a = 0; a < A; ++a) {
            const double* base = px + (a * B + b) * C;
            for (long c = 0; c < C; ++c) acc += base[c];
        }
        py[b] = mean ? acc / denom : acc;
    }
    std::vector<long> xshape = x.shape();
    return make_op(std::move(y), {x},
                   [A, B, C, mean, xshape](const Var& g,
                                           const std::vector<Var>&) -> std::vector<Var> {
                       Var gg = mean ? mul_scalar(g, 1.0 / (static_cast<double>(A) *
                                                            static_cast<double>(C)))
                                     : g;
                       return {bcast_abc(gg, A, B, C, xshape)};
                   },
                   "reduce_abc");
}

Var bcast_abc(const Var& v, long A, long B, long C, std::vector<long> out_shape) {
    if (v.value().size() != B) fail(Errc::state, "bcast_abc: size mismatch");
    Tensor y(out_shape);
    if (y.size() != A * B * C) fail(Errc::state, "bcast_abc: bad output shape");
    const double* pv = v.value().data();
    double* py = y.data();
    for (long a = 0; a < A; ++a)
        for (long b = 0; b < B; ++b) {
            double* base = py + (a * B + b) * C;
            const double val = pv[b];
            for (long c = 0; c < C; ++c) base[c] = val;
        }
    std::vector<long> vshape = v.shape();
    return make_op(std::move(y), {v},
                   [A, B, C, vshape](const Var& g, const std::vector<Var>&) -> std::vector<Var> {
                       return {reduce_abc(g, A, B, C, false, vshape)};
                   },
                   "bcast_abc");
}

void need_rank(const Var& x, size_t r, const char* op) {
    if (x.shape().size() != r)
        fail(Errc::invalid_argument, std::string(op) + ": rank-" + std::to_string(r) + " required");
}

}  // namespace

Var sum_all(const Var& x) { return reduce_abc(x, 1, 1, x.value().size(), false, {1}); }

Var mean_all(const Var& x) { return reduce_abc(x, 1, 1, x.value().size(), true, {1}); }

Var sum_cols(const Var& x) {
    need_rank(x, 2, "sum_cols");
    return reduce_abc(x, 1, x.shape()[0], x.shape()[1], false, {x.shape()[0]});
}

Var mean_over_rows(const Var& x) {
    need_rank(x, 2, "mean_over_rows");
    return reduce_abc(x, x.shape()[0], x.shape()[1], 1, true, {x.shape()[1]});
}

Var mean_per_channel(const Var& x) {
    need_rank(x, 4, "mean_per_channel");
    const auto& s = x.shape();
    return reduce_abc(x, s[0], s[1], s[2] * s[3], true, {s[1]});
}

Var mean_per_nc(const Var& x) {
    need_rank(x, 4, "mean_per_nc");
    const auto& s = x.shape();
    return reduce_abc(x, 1, s[0] * s[1], s[2] * s[3], true, {s[0], s[1]});
}

Var sum_per_sample(const Var& x) {
    const auto& s = x.shape();
    if (s.empty()) fail(Errc::invalid_argument, "sum_per_sample: rank >= 1 required");
    long rest = 1;
    for (size_t i = 1; i < s.size(); ++i) rest *= s[i];
    return reduce_abc(x, 1, s[0], rest, false, {s[0]});
}

Var bcast_cols(const Var& v, long c) {
    need_rank(v, 1, "bcast_cols");
    return bcast_abc(v, 1, v.shape()[0], c, {v.shape()[0], c});
}

Var bcast_over_rows(const Var& v, long n) {
    need_rank(v, 1, "bcast_over_rows");
    return bcast_abc(v, n, v.shape()[0], 1, {n, v.shape()[0]});
}

Var bcast_per_channel(const Var& v, const std::vector<long>& nchw) {
    need_rank(v, 1, "bcast_per_channel");
    if (nchw.size() != 4 || nchw[1] != v.shape()[0])
        fail(Errc::invalid_argument, "bcast_per_channel: shape mismatch");
    return bcast_abc(v, nchw[0], nchw[1], nchw[2] * nchw[3], nchw);
}

Var bcast_per_nc(const Var& v, const std::vector<long>& nchw) {
    need_rank(v, 2, "bcast_per_nc");
    if (nchw.size() != 4 || nchw[0] != v.shape()[0] || nchw[1] != v.shape()[1])
        fail(Errc::invalid_argument, "bcast_per_nc: shape mismatch");
    return bcast_abc(v, 1, nchw[0] * nchw[1], nchw[2] * nchw[3], nchw);
}

Var bcast_per_sample(const Var& v, const std::vector<long>& shape) {
    need_rank(v, 1, "bcast_per_sample");
    if (shape.empty() || shape[0] != v.shape()[0])
        fail(Errc::invalid_argument, "bcast_per_sample: shape mismatch");
    long rest = 1;
    for (size_t i = 1; i < shape.size(); ++i) rest *= shape[i];
    return bcast_abc(v, 1, shape[0], rest, shape);
}

Var bcast_all(const Var& v, const std::vector<long>& shape) {
    if (v.value().size() != 1) fail(Errc::invalid_argument, "bcast_all: scalar required");
    long n = 1;
    for (long d : shape) n *= d;
    return bcast_abc(v, 1, 1, n, shape);
}

// ---- pairwise distances ------------------------------------------------------------

Var pairwise_l2(const Var& f) {
    need_rank(f, 2, "pairwise_l2");
    const long B = f.shape()[0], D = f.shape()[1];
    Tensor dist({B, B});
    const double* pf = f.value().data();
    double* pd = dist.data();
    for (long i = 0; i < B; ++i) {
        pd[i * B + i] = 0.0;
        for (long j = i + 1; j < B; ++j) {
            double ss = 0.0;
            const double* fi = pf + i * D;
            const double* fj = pf + j * D;
            for (long k = 0; k < D; ++k) {
                const double d = fi[k] - fj[k];
                ss += d * d;
            }
            const double v = ss > 0.0 ? std::sqrt(ss) : 0.0;
            pd[i * B + j] = v;
            pd[j * B + i] = v;
        }
    }
    Tensor dcache = dist;  // shared storage; read-only from here on
    return make_op(std::move(dist), {f},
                   [B, D, dcache](const Var& g, const std::vector<Var>& in) -> std::vector<Var> {
                       // d d_ij / d f_ik = (f_ik - f_jk) / d_ij, zero at d_ij == 0
                       Tensor gf({B, D});
                       const double* pg = g.value().data();
                       const double* pf2 = in[0].value().data();
                       const double* pd2 = dcache.data();
                       double* po = gf.data();
                       for (long i = 0; i < B; ++i)
                           for (long j = 0; j < B; ++j) {
                               if (i == j) continue;
                               const double dij = pd2[i * B + j];
                               if (dij <= 0.0) continue;
                               const double w = (pg[i * B + j] + pg[j * B + i]) / dij;
                               if (w == 0.0) continue;
                               for (long k = 0; k < D; ++k)
                                   po[i * D + k] += w * (pf2[i * D + k] - pf2[j * D + k]);
                           }
                       return {Var::constant(std::move(gf))};
                   },
                   "pairwise_l2");
}

}  // namespace xreid::ad
