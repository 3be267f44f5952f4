#include "losses.hpp"

#include <unordered_map>

#include "common.hpp"

namespace xreid {

using namespace ad;

LossWeights weights_duke2market() { return {1.0, 0.9, 0.8, 0.2, 0.5, 0.8, 0.3}; }
LossWeights weights_market2duke() { return {1.4, 1.0, 1.0, 0.2, 0.5, 0.6, 0.3}; }

void validate_weights(const LossWeights& w) {
    const double vals[] = {w.alpha, w.beta1, w.beta2, w.beta3, w.gamma1, w.gamma2, w.margin};
    for (double v : vals)
        if (!(v >= 0.0)) fail(Errc::invalid_argument, "loss weights must be >= 0");
}

Var cross_entropy_loss(const Var& logits, const std::vector<int>& labels) {
    const auto& s = logits.shape();
    if (s.size() != 2) fail(Errc::invalid_argument, "cross_entropy: logits must be (B,C)");
    const long b = s[0], c = s[1];
    if (static_cast<long>(labels.size()) != b)
        fail(Errc::invalid_argument, "cross_entropy: label count mismatch");
    for (int l : labels)
        if (l < 0 || l >= c)
            fail(Errc::invalid_argument,
                 "cross_entropy: label " + std::to_string(l) + " outside [0," +
                     std::to_string(c) + ")");
    Var shifted = sub(logits, bcast_cols(row_max_const(logits), c));
    Var lse = log(sum_cols(exp(shifted)));
    Var picked = gather_labels(shifted, labels);
    return mean_all(sub(lse, picked));
}

Var batch_hard_triplet_loss(const Var& emb, const std::vector<int>& labels, double margin,
                            TripletStats* stats) {
    const auto& s = emb.shape();
    if (s.size() != 2) fail(Errc::invalid_argument, "triplet: embeddings must be (B,D)");
    const long b = s[0];
    if (static_cast<long>(labels.size()) != b)
        fail(Errc::invalid_argument, "triplet: label count mismatch");

    std::unordered_map<int, long> class_sizes;
    for (int l : labels) ++class_sizes[l];
    if (class_sizes.size() < 2)
        fail(Errc::invalid_argument, "triplet: batch holds a single class, no negatives exist");

    Var dist = pairwise_l2(emb);
    const Tensor& d = dist.value();

    TripletStats local;
    TripletStats& st = stats ? *stats : local;
    st = TripletStats{};
    for (long i = 0; i < b; ++i) {
        long jp = -1, jn = -1;
        for (long j = 0; j < b; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                if (jp < 0 || d.at2(i, j) > d.at2(i, jp)) jp = j;
            } else {
                if (jn < 0 || d.at2(i, j) < d.at2(i, jn)) jn = j;
            }
        }
        if (jp < 0) {
            ++st.n_skipped;
            continue;
        }
        st.anchors.push_back(i);
        st.hardest_positive.push_back(jp);
        st.hardest_negative.push_back(jn);
    }
    st.n_anchors = static_cast<long>(st.anchors.size());
    if (st.n_anchors == 0)
        fail(Errc::invalid_argument, "triplet: no anchor has a positive partner");

    Tensor pos_idx({st.n_anchors}), neg_idx({st.n_anchors});
    for (long k = 0; k < st.n_anchors; ++k) {
        pos_idx.data()[k] = static_cast<double>(st.anchors[k] * b + st.hardest_positive[k]);
        neg_idx.data()[k] = static_cast<double>(st.anchors[k] * b + st.hardest_negative[k]);
    }
    Var d_ap = gather_flat(dist, pos_idx);
    Var d_an = gather_flat(dist, neg_idx);
    return mean_all(relu(add_scalar(sub(d_ap, d_an), margin)));
}

}  // namespace xreid
