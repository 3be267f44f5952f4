#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "common.hpp"

namespace xreid {

Tensor pairwise_distances(const Tensor& q, const Tensor& g) {
    const auto& qs = q.shape();
    const auto& gs = g.shape();
    if (qs.size() != 2 || gs.size() != 2 || qs[1] != gs[1])
        fail(Errc::invalid_argument, "pairwise_distances: need (q,D) and (g,D) with equal D");
    const long nq = qs[0], ng = gs[0], d = qs[1];
    Tensor out({nq, ng});
    for (long i = 0; i < nq; ++i)
        for (long j = 0; j < ng; ++j) {
            double acc = 0.0;
            for (long k = 0; k < d; ++k) {
                const double t = q.at2(i, k) - g.at2(j, k);
                acc += t * t;
            }
            out.at2(i, j) = std::sqrt(acc);
        }
    return out;
}

double average_precision(const std::vector<int>& rel) {
    long n_rel = 0;
    double acc = 0.0;
    for (size_t k = 0; k < rel.size(); ++k) {
        if (!rel[k]) continue;
        ++n_rel;
        acc += static_cast<double>(n_rel) / static_cast<double>(k + 1);
    }
    if (n_rel == 0) fail(Errc::invalid_argument, "average_precision: no relevant entries");
    return acc / static_cast<double>(n_rel);
}

namespace {

void check_eval_inputs(const DomainDataset& query, const Tensor& qd, const DomainDataset& gallery,
                       const Tensor& gd, long max_rank) {
    if (max_rank < 1) fail(Errc::invalid_argument, "evaluate: max_rank must be >= 1");
    const auto& qs = qd.shape();
    const auto& gs = gd.shape();
    if (qs.size() != 2 || gs.size() != 2 || qs[1] != gs[1])
        fail(Errc::invalid_argument, "evaluate: descriptor dimensionality mismatch");
    if (qs[0] != query.n_images() || gs[0] != gallery.n_images())
        fail(Errc::invalid_argument, "evaluate: descriptors not aligned with records");
    if (query.n_images() == 0 || gallery.n_images() == 0)
        fail(Errc::invalid_argument, "evaluate: empty split");
    for (const ImageRecord& r : query.records)
        if (r.person_id < 0)
            fail(Errc::invalid_argument, "evaluate: query split must be labelled");
    bool any_usable = false;
    for (const ImageRecord& r : gallery.records)
        if (r.person_id != kJunkId) {
            if (r.person_id < 0)
                fail(Errc::invalid_argument, "evaluate: gallery split must be labelled");
            any_usable = true;
        }
    if (!any_usable) fail(Errc::invalid_argument, "evaluate: gallery holds only junk entries");
}

}  // namespace

RankingResult evaluate(const DomainDataset& query, const Tensor& query_desc,
                       const DomainDataset& gallery, const Tensor& gallery_desc, long max_rank) {
    check_eval_inputs(query, query_desc, gallery, gallery_desc, max_rank);
    const long nq = query.n_images(), ng = gallery.n_images();
    const Tensor dist = pairwise_distances(query_desc, gallery_desc);

    RankingResult res;
    res.cmc.assign(max_rank, 0.0);
    std::vector<long> first_rank_hits(max_rank, 0);
    double ap_sum = 0.0;

    std::vector<std::pair<double, long>> order;
    std::vector<int> rel;
    for (long i = 0; i < nq; ++i) {
        const ImageRecord& qr = query.records[i];
        order.clear();
        bool has_match = false;
        for (long j = 0; j < ng; ++j) {
            const ImageRecord& gr = gallery.records[j];
            if (gr.person_id == kJunkId) continue;
            if (gr.person_id == qr.person_id && gr.camera_id == qr.camera_id) continue;
            order.emplace_back(dist.at2(i, j), j);
            has_match = has_match || gr.person_id == qr.person_id;
        }
        if (!has_match) {
            ++res.n_queries_skipped;
            continue;
        }
        std::sort(order.begin(), order.end());

        rel.clear();
        rel.reserve(order.size());
        for (const auto& [d, j] : order)
            rel.push_back(gallery.records[j].person_id == qr.person_id ? 1 : 0);

        long first = 0;
        while (!rel[first]) ++first;
        if (first < max_rank) ++first_rank_hits[first];
        res.per_query_first_rank.push_back(first + 1);
        const double ap = average_precision(rel);
        res.per_query_ap.push_back(ap);
        ap_sum += ap;
        ++res.n_queries_evaluated;
    }
    if (res.n_queries_evaluated == 0)
        fail(Errc::invalid_argument, "evaluate: no query has a valid cross-camera match");

    long cum = 0;
    for (long k = 0; k < max_rank; ++k) {
        cum += first_rank_hits[k];
        res.cmc[k] = static_cast<double>(cum) / static_cast<double>(res.n_queries_evaluated);
    }
    res.map = ap_sum / static_cast<double>(res.n_queries_evaluated);
    return res;
}

RankingResult oracle_evaluate(const DomainDataset& query, const Tensor& query_desc,
                              const DomainDataset& gallery, const Tensor& gallery_desc,
                              long max_rank) {
    check_eval_inputs(query, query_desc, gallery, gallery_desc, max_rank);
    const long nq = query.n_images(), ng = gallery.n_images();
    const long dim = query_desc.shape()[1];

    RankingResult res;
    res.cmc.assign(max_rank, 0.0);
    double ap_sum = 0.0;

    for (long i = 0; i < nq; ++i) {
        const ImageRecord& qr = query.records[i];

        // candidate gallery indices, one at a time
        std::vector<long> cand;
        for (long j = 0; j < ng; ++j) {
            const ImageRecord& gr = gallery.records[j];
            const bool junk = gr.person_id == kJunkId;
            const bool same_view = gr.person_id == qr.person_id && gr.camera_id == qr.camera_id;
            if (!junk && !same_view) cand.push_back(j);
        }
        long n_match = 0;
        for (long j : cand)
            if (gallery.records[j].person_id == qr.person_id) ++n_match;
        if (n_match == 0) {
            ++res.n_queries_skipped;
            continue;
        }

        std::vector<double> cd(cand.size());
        for (size_t c = 0; c < cand.size(); ++c) {
            double acc = 0.0;
            for (long k = 0; k < dim; ++k) {
                const double t = query_desc.at2(i, k) - gallery_desc.at2(cand[c], k);
                acc += t * t;
            }
            cd[c] = std::sqrt(acc);
        }

        // selection sort, smallest (distance, gallery index) first
        std::vector<long> ranked;
        std::vector<bool> used(cand.size(), false);
        for (size_t step = 0; step < cand.size(); ++step) {
            long best = -1;
            for (size_t c = 0; c < cand.size(); ++c) {
                if (used[c]) continue;
                if (best < 0 || cd[c] < cd[best] ||
                    (cd[c] == cd[best] && cand[c] < cand[best]))
                    best = static_cast<long>(c);
            }
            used[best] = true;
            ranked.push_back(cand[best]);
        }

        long first = -1;
        for (size_t r = 0; r < ranked.size(); ++r)
            if (gallery.records[ranked[r]].person_id == qr.person_id) {
                first = static_cast<long>(r);
                break;
            }
        for (long k = first; k < max_rank; ++k) res.cmc[k] += 1.0;
        res.per_query_first_rank.push_back(first + 1);

        // precision recomputed from scratch at every relevant position
        double ap = 0.0;
        for (size_t r = 0; r < ranked.size(); ++r) {
            if (gallery.records[ranked[r]].person_id != qr.person_id) continue;
            long rel_in_top = 0;
            for (size_t t = 0; t <= r; ++t)
                if (gallery.records[ranked[t]].person_id == qr.person_id) ++rel_in_top;
            ap += static_cast<double>(rel_in_top) / static_cast<double>(r + 1);
        }
        ap /= static_cast<double>(n_match);
        res.per_query_ap.push_back(ap);
        ap_sum += ap;
        ++res.n_queries_evaluated;
    }
    if (res.n_queries_evaluated == 0)
        fail(Errc::invalid_argument, "evaluate: no query has a valid cross-camera match");

    for (long k = 0; k < max_rank; ++k)
        res.cmc[k] /= static_cast<double>(res.n_queries_evaluated);
    res.map = ap_sum / static_cast<double>(res.n_queries_evaluated);
    return res;
}

std::string ranking_report_json(const RankingResult& r, const std::string& config_hash) {
    auto rank_at = [&](long k) {
        return k <= static_cast<long>(r.cmc.size()) ? r.cmc[k - 1] : r.cmc.back();
    };
    std::ostringstream out;
    out << "{\n";
    out << "  \"cmc\": {";
    const long ranks[] = {1, 5, 10, 20};
    for (int i = 0; i < 4; ++i)
        out << (i ? ", " : "") << "\"" << ranks[i] << "\": " << format_double(rank_at(ranks[i]));
    out << "},\n";
    out << "  \"map\": " << format_double(r.map) << ",\n";
    out << "  \"n_queries\": " << r.n_queries_evaluated << ",\n";
    out << "  \"n_queries_skipped\": " << r.n_queries_skipped << ",\n";
    out << "  \"config_hash\": \"" << config_hash << "\"\n";
    out << "}\n";
    return out.str();
}

}  // namespace xreid
