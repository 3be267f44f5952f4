#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"
#include "tensor.hpp"

namespace xreid {

struct RankingResult {
    std::vector<double> cmc;  // index k holds rank-(k+1) accuracy
    double map = 0.0;
    long n_queries_evaluated = 0;
    long n_queries_skipped = 0;  // queries with no valid cross-camera match
    std::vector<double> per_query_ap;
    std::vector<long> per_query_first_rank;  // 1-based
};

// (i,j) = Euclidean distance between query row i and gallery row j.
Tensor pairwise_distances(const Tensor& q, const Tensor& g);

// Mean over relevant positions k of (number relevant in top k)/k.
// At least one relevant entry required.
double average_precision(const std::vector<int>& relevance_in_rank_order);

// Cross-camera retrieval: per query, gallery entries sharing both person and
// camera are excluded, junk entries always; ranking by ascending distance with
// ties broken by gallery record index.
RankingResult evaluate(const DomainDataset& query, const Tensor& query_desc,
                       const DomainDataset& gallery, const Tensor& gallery_desc, long max_rank);

// Same contract, written as explicit enumeration with its own distance,
// ordering, and precision accumulation. Kept free of shared code so the two
// can check each other.
RankingResult oracle_evaluate(const DomainDataset& query, const Tensor& query_desc,
                              const DomainDataset& gallery, const Tensor& gallery_desc,
                              long max_rank);

// JSON report with cmc[1,5,10,20], map, n_queries and the config hash.
std::string ranking_report_json(const RankingResult& r, const std::string& config_hash);

}  // namespace xreid
