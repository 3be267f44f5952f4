#include "sampling.hpp"

#include <algorithm>

#include "common.hpp"

namespace xreid {

BatchRecipe derive_recipe(const BatchRecipe& base, long m_source, long m_target) {
    BatchRecipe r = base;
    if (r.tri_st == 0) r.tri_st = 4 * m_target;
    if (r.tri_t_total == 0) r.tri_t_total = 4 * m_source;
    validate_recipe(r);
    return r;
}

void validate_recipe(const BatchRecipe& r) {
    if (r.class_src < 0 || r.class_st < 0)
        fail(Errc::invalid_argument, "recipe: negative classification stream size");
    if (r.pk_p < 1 || r.pk_k < 1) fail(Errc::invalid_argument, "recipe: pk_p and pk_k must be >= 1");
    if (r.pk_p * r.pk_k != r.tri_src)
        fail(Errc::invalid_argument, "recipe: pk_p*pk_k must equal tri_src");
    if (r.tri_tt_anchors < 1) fail(Errc::invalid_argument, "recipe: need at least one anchor");
    if (r.tri_t_total < r.tri_tt_anchors)
        fail(Errc::invalid_argument, "recipe: tri_t_total must cover the anchors");
    if (r.tri_st < 1) fail(Errc::invalid_argument, "recipe: empty imitated triplet stream");
    if (r.t_cofwd < 0) fail(Errc::invalid_argument, "recipe: negative co-forward count");
}

LabelledBatch sample_pk_batch(const DomainDataset& ds, long p, long k,
                              const std::unordered_map<int, int>& label_map, Rng& rng) {
    std::unordered_map<int, std::vector<long>> by_id;
    std::vector<int> ids;
    for (long i = 0; i < ds.n_images(); ++i) {
        const int pid = ds.records[i].person_id;
        if (pid < 0) continue;
        auto [it, fresh] = by_id.try_emplace(pid);
        if (fresh) ids.push_back(pid);
        it->second.push_back(i);
    }
    if (static_cast<long>(ids.size()) < p)
        fail(Errc::invalid_argument, "pk sampling: batch wants " + std::to_string(p) +
                                         " identities, dataset holds " +
                                         std::to_string(ids.size()));

    rng.shuffle(ids);
    LabelledBatch out;
    out.records.reserve(p * k);
    out.labels.reserve(p * k);
    for (long pi = 0; pi < p; ++pi) {
        const int pid = ids[pi];
        auto lit = label_map.find(pid);
        if (lit == label_map.end())
            fail(Errc::invalid_argument, "pk sampling: identity " + std::to_string(pid) +
                                             " missing from the label space");
        std::vector<long> pool = by_id[pid];
        rng.shuffle(pool);
        for (long ki = 0; ki < k; ++ki) {
            const long idx = ki < static_cast<long>(pool.size())
                                 ? pool[ki]
                                 : pool[rng.bounded(pool.size())];
            out.records.push_back(ds.records[idx]);
            out.labels.push_back(lit->second);
        }
    }
    return out;
}

SurrogateLabelledBatch sample_ttt_batch(const DomainDataset& t, const DomainDataset& tt,
                                        long n_anchors, long n_negatives, Rng& rng) {
    const long nt = t.n_images();
    if (nt == 0 || tt.n_images() == 0)
        fail(Errc::invalid_argument, "surrogate sampling: empty dataset");
    if (tt.n_images() % nt != 0)
        fail(Errc::invalid_argument, "surrogate sampling: pseudo set is not a whole multiple of "
                                     "the target set");
    const long m_t = tt.n_images() / nt;
    if (n_anchors < 1 || n_negatives < 1)
        fail(Errc::invalid_argument, "surrogate sampling: need anchors and negatives");
    if (n_anchors + n_negatives > nt)
        fail(Errc::invalid_argument, "surrogate sampling: batch wants " +
                                         std::to_string(n_anchors + n_negatives) +
                                         " target images, dataset holds " + std::to_string(nt));

    std::vector<long> order(nt);
    for (long i = 0; i < nt; ++i) order[i] = i;
    rng.shuffle(order);

    SurrogateLabelledBatch out;
    out.n_anchors = n_anchors;
    out.m_t = m_t;
    out.records.reserve(n_anchors * (m_t + 1) + n_negatives);
    int next_label = 0;
    for (long a = 0; a < n_anchors; ++a) {
        const long ti = order[a];
        const int label = next_label++;
        out.records.push_back(t.records[ti]);
        out.surrogate_labels.push_back(label);
        for (long v = 0; v < m_t; ++v) {
            const ImageRecord& child = tt.records[ti * m_t + v];
            if (child.source_filename != t.records[ti].filename)
                fail(Errc::invalid_argument,
                     "surrogate sampling: pseudo set was not built from this target set");
            out.records.push_back(child);
            out.surrogate_labels.push_back(label);
        }
    }
    for (long j = 0; j < n_negatives; ++j) {
        out.records.push_back(t.records[order[n_anchors + j]]);
        out.surrogate_labels.push_back(next_label++);
    }
    return out;
}

LabelledBatch sample_classification_batch(const DomainDataset& s, const DomainDataset& st,
                                          const BatchRecipe& recipe,
                                          const std::unordered_map<int, int>& label_map,
                                          Rng& rng) {
    LabelledBatch out;
    out.records.reserve(recipe.class_src + recipe.class_st);
    auto draw = [&](const DomainDataset& ds, long count, const char* which) {
        if (count == 0) return;
        if (ds.n_images() == 0)
            fail(Errc::invalid_argument,
                 std::string("classification sampling: empty ") + which + " dataset");
        for (long i = 0; i < count; ++i) {
            const ImageRecord& r = ds.records[rng.bounded(ds.n_images())];
            auto lit = label_map.find(r.person_id);
            if (lit == label_map.end())
                fail(Errc::invalid_argument, "classification sampling: identity " +
                                                 std::to_string(r.person_id) +
                                                 " missing from the label space");
            out.records.push_back(r);
            out.labels.push_back(lit->second);
        }
    };
    draw(s, recipe.class_src, "source");
    draw(st, recipe.class_st, "imitated");
    return out;
}

std::vector<ImageRecord> sample_uniform(const DomainDataset& ds, long count, Rng& rng) {
    if (count > 0 && ds.n_images() == 0)
        fail(Errc::invalid_argument, "uniform sampling: empty dataset");
    std::vector<ImageRecord> out;
    out.reserve(count);
    for (long i = 0; i < count; ++i) out.push_back(ds.records[rng.bounded(ds.n_images())]);
    return out;
}

}  // namespace xreid
