#pragma once

#include <unordered_map>
#include <vector>

#include "dataset.hpp"
#include "rng.hpp"

namespace xreid {

// Per-step stream sizes. pk_p/pk_k drive the labelled PK triplet streams;
// class counts drive the classification streams.
struct BatchRecipe {
    long class_src = 64;
    long class_st = 72;
    long tri_src = 32;
    long tri_st = 0;         // 4 * M_target when derived from a dataset pair
    long tri_tt_anchors = 4;
    long tri_t_total = 0;    // 4 * M_source when derived
    long pk_p = 8;
    long pk_k = 4;
    long t_cofwd = 16;       // unlabelled target images co-forwarded per classification step
};

// tri_st and tri_t_total from camera counts; keeps pk_p*pk_k == tri_src.
BatchRecipe derive_recipe(const BatchRecipe& base, long m_source, long m_target);
void validate_recipe(const BatchRecipe& r);

struct LabelledBatch {
    std::vector<ImageRecord> records;
    std::vector<int> labels;
};

// One surrogate class per anchor (anchor plus its pseudo variants); every
// other target image is a singleton class.
struct SurrogateLabelledBatch {
    std::vector<ImageRecord> records;
    std::vector<int> surrogate_labels;
    long n_anchors = 0;
    long m_t = 0;  // pseudo variants per anchor
};

// P distinct identities, K instances each (with replacement when an identity
// holds fewer than K images). Labels come from label_map.
LabelledBatch sample_pk_batch(const DomainDataset& ds, long p, long k,
                              const std::unordered_map<int, int>& label_map, Rng& rng);

// Anchors drawn from T, expanded with their pseudo variants from TT (children
// of T record i occupy TT records [i*M_t, (i+1)*M_t)), plus singleton
// negatives from distinct non-anchor target images.
SurrogateLabelledBatch sample_ttt_batch(const DomainDataset& t, const DomainDataset& tt,
                                        long n_anchors, long n_negatives, Rng& rng);

// class_src uniform draws from S plus class_st uniform draws from ST, labels
// in the shared source-identity space.
LabelledBatch sample_classification_batch(const DomainDataset& s, const DomainDataset& st,
                                          const BatchRecipe& recipe,
                                          const std::unordered_map<int, int>& label_map, Rng& rng);

// count uniform draws, no labels (the unlabelled co-forward stream).
std::vector<ImageRecord> sample_uniform(const DomainDataset& ds, long count, Rng& rng);

}  // namespace xreid
