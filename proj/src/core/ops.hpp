#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace xreid::ad {

class Var;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<Var> inputs;
    // Builds input gradients from the upstream gradient. Implemented with the
    // public ops below so that gradients are themselves differentiable
    // (needed by the gradient penalty, which backpropagates twice).
    std::function<std::vector<Var>(const Var& gout, const std::vector<Var>& inputs)> backward;
    const char* op = "";
};

// Reference-semantics handle to a graph node. Copy is cheap.
class Var {
public:
    Var() = default;
    // Leaf: a parameter when requires_grad, a plain input otherwise.
    explicit Var(Tensor value, bool requires_grad = false);
    static Var constant(Tensor value) { return Var(std::move(value), false); }
    static Var param(Tensor value) { return Var(std::move(value), true); }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value() { return n_->value; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    Node* node() const { return n_.get(); }

    Var detach() const;  // same storage, no graph

    double item() const { return value().item(); }
    const std::vector<long>& shape() const { return value().shape(); }

private:
    friend Var make_op(Tensor value, std::vector<Var> inputs,
                       std::function<std::vector<Var>(const Var&, const std::vector<Var>&)> bwd,
                       const char* name);
    std::shared_ptr<Node> n_;
};

// ---- grad mode -------------------------------------------------------------

bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- backward --------------------------------------------------------------

using GradMap = std::unordered_map<const Node*, Var>;

// Reverse-mode sweep from a scalar root. With create_graph the returned
// gradients carry their own graph and can be differentiated again.
GradMap backward(const Var& root, bool create_graph = false);

// Gradient of a scalar w.r.t. one variable (zeros if unreachable).
Var grad_of(const Var& root, const Var& wrt, bool create_graph = false);

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);  // gradient defined as 0 where input == 0
Var abs(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);  // ln(1 + e^x), kink-free

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return mul_scalar(a, s); }
inline Var operator*(const Var& a, double s) { return mul_scalar(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a) { return neg(a); }

// ---- linear algebra ----------------------------------------------------------

// op(a) @ op(b) where op transposes when the flag is set; a,b are rank-2
Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false);

// ---- convolution (the trilinear trio; each one's backward uses the others) --

// x: (N,Cin,H,W)  w: (Cout,Cin,kh,kw) -> (N,Cout,Ho,Wo)
Var conv2d(const Var& x, const Var& w, int stride, int pad);
// adjoint of conv2d in the data slot: gy: (N,Cout,Ho,Wo) -> (N,Cin,xh,xw)
Var conv2d_data_grad(const Var& gy, const Var& w, int stride, int pad, long xh, long xw);
// adjoint in the weight slot: -> (Cout,Cin,kh,kw)
Var conv2d_weight_grad(const Var& x, const Var& gy, int stride, int pad, long kh, long kw);

// ---- pooling / resampling ----------------------------------------------------

Var maxpool2d(const Var& x, int k, int stride, int pad);  // no double-backward
Var upsample_nearest2x(const Var& x);

// ---- shape -------------------------------------------------------------------

Var reshape(const Var& x, std::vector<long> shape);
Var concat_channels(const Var& a, const Var& b);          // along dim 1 of NCHW
Var slice_channels(const Var& x, long c0, long c1);       // [c0, c1)
Var slice_rows(const Var& x, long r0, long r1);           // [r0, r1) along dim 0
Var select_row(const Var& x, long row);                   // (N,D) -> (D)

// ---- classification helpers ---------------------------------------------------

// logits: (N,C), labels: size-N class indices -> (N) picked logits
Var gather_labels(const Var& logits, const std::vector<int>& labels);
// adjoint: g: (N) -> (N,C) with g_i at column labels[i]
Var scatter_labels(const Var& g, const std::vector<int>& labels, long n_classes);
// per-row max as a constant (log-sum-exp stabilizer)
Var row_max_const(const Var& logits);
// out[i] = x.flat[idx[i]]; output takes idx's shape. idx holds flat indices.
Var gather_flat(const Var& x, Tensor idx);

// ---- reductions / broadcasts ---------------------------------------------------

Var sum_all(const Var& x);                       // -> (1)
Var mean_all(const Var& x);                      // -> (1)
Var sum_cols(const Var& x);                      // (N,C) -> (N)
Var mean_over_rows(const Var& x);                // (N,D) -> (D)
Var mean_per_channel(const Var& x);              // (N,C,H,W) -> (C)
Var mean_per_nc(const Var& x);                   // (N,C,H,W) -> (N,C)
Var sum_per_sample(const Var& x);                // (N,...) -> (N)
Var bcast_cols(const Var& v, long c);            // (N) -> (N,C)
Var bcast_over_rows(const Var& v, long n);       // (D) -> (N,D)
Var bcast_per_channel(const Var& v, const std::vector<long>& nchw);  // (C) -> (N,C,H,W)
Var bcast_per_nc(const Var& v, const std::vector<long>& nchw);       // (N,C) -> (N,C,H,W)
Var bcast_per_sample(const Var& v, const std::vector<long>& shape);  // (N) -> (N,...)
Var bcast_all(const Var& v, const std::vector<long>& shape);         // (1) -> shape

// ---- metric helpers ------------------------------------------------------------

// f: (B,D) -> (B,B) euclidean distances, exactly 0 on ties/diagonal.
// First-order gradient only (its backward is opaque to further differentiation).
Var pairwise_l2(const Var& f);

}  // namespace xreid::ad
