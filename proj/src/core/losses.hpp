#pragma once

#include <vector>

#include "ops.hpp"

namespace xreid {

// Objective weights. margin is in distance units of the emb128 space.
struct LossWeights {
    double alpha = 1.0;
    double beta1 = 0.9, beta2 = 0.8, beta3 = 0.2;
    double gamma1 = 0.5, gamma2 = 0.8;
    double margin = 0.3;
};

LossWeights weights_duke2market();
LossWeights weights_market2duke();
void validate_weights(const LossWeights& w);  // all weights >= 0

// Mean over the batch of -log softmax probability of the true class.
ad::Var cross_entropy_loss(const ad::Var& logits, const std::vector<int>& labels);

// Per kept anchor: index of the selected hardest positive/negative.
// Anchors with no same-label partner are skipped and counted.
struct TripletStats {
    long n_anchors = 0;
    long n_skipped = 0;
    std::vector<long> anchors;
    std::vector<long> hardest_positive;
    std::vector<long> hardest_negative;
};

// Batch-hard hinge: per anchor max(0, m + max_pos D - min_neg D), mean over
// kept anchors. Ties resolve to the lowest index. Errors on a single-class
// batch and when no anchor has a positive.
ad::Var batch_hard_triplet_loss(const ad::Var& emb, const std::vector<int>& labels, double margin,
                                TripletStats* stats = nullptr);

// Composite objectives; linear in their components, defined for plain values
// and for graph nodes alike.
template <class T>
T dual_classification_loss(const T& l_src, const T& l_stt, double alpha) {
    return l_src + l_stt * alpha;
}

template <class T>
T total_triplet_loss(const T& l_src, const T& l_st, const T& l_ttt, double beta1, double beta2,
                     double beta3) {
    return l_src * beta1 + l_st * beta2 + l_ttt * beta3;
}

template <class T>
T total_loss(const T& class_dual, const T& tri_total, double gamma1, double gamma2) {
    return class_dual * gamma1 + tri_total * gamma2;
}

}  // namespace xreid
