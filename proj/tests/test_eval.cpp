#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/common.hpp"
#include "core/dataset.hpp"
#include "core/eval.hpp"
#include "core/rng.hpp"

using namespace xreid;

namespace {

Tensor rows(const std::vector<std::vector<double>>& v) {
    const long n = static_cast<long>(v.size());
    const long d = static_cast<long>(v[0].size());
    Tensor t({n, d});
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < d; ++j) t.at2(i, j) = v[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return t;
}

DomainDataset records(const std::vector<std::pair<int, int>>& pid_cam) {
    DomainDataset ds;
    long seq = 0;
    for (auto [pid, cam] : pid_cam) {
        ImageRecord r;
        r.filename = render_record_name(pid, cam, seq++, "ppm");
        r.person_id = pid;
        r.camera_id = cam;
        r.domain_tag = DomainTag::T;
        ds.records.push_back(std::move(r));
    }
    return ds;
}

bool same_result(const RankingResult& a, const RankingResult& b) {
    if (a.cmc != b.cmc) return false;  // CMC entries are exact count ratios
    if (std::fabs(a.map - b.map) > 1e-9) return false;
    return a.n_queries_evaluated == b.n_queries_evaluated &&
           a.n_queries_skipped == b.n_queries_skipped;
}

}  // namespace

TEST_CASE("pairwise distances") {
    const Tensor q = rows({{0.0, 0.0}, {1.0, 1.0}});
    const Tensor g = rows({{3.0, 4.0}, {0.0, 0.0}, {1.0, 1.0}});
    const Tensor d = pairwise_distances(q, g);
    REQUIRE(d.shape() == std::vector<long>{2, 3});
    CHECK(d.at2(0, 0) == 5.0);
    CHECK(d.at2(0, 1) == 0.0);
    CHECK(d.at2(1, 2) == 0.0);
    CHECK(d.at2(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

    // symmetry through swapped arguments
    const Tensor dt = pairwise_distances(g, q);
    for (long i = 0; i < 2; ++i)
        for (long j = 0; j < 3; ++j) CHECK(d.at2(i, j) == dt.at2(j, i));
}

TEST_CASE("average precision") {
    CHECK(average_precision({1}) == 1.0);
    CHECK(average_precision({1, 1, 1}) == 1.0);
    CHECK(average_precision({0, 1}) == 0.5);
    // relevant at ranks 1 and 3: (1/1 + 2/3)/2 = 5/6
    CHECK(average_precision({1, 0, 1}) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    CHECK(average_precision({0, 0, 0, 1}) == 0.25);
    CHECK_THROWS_AS(average_precision({0, 0}), Error);
    CHECK_THROWS_AS(average_precision({}), Error);
}

TEST_CASE("retrieval on constructed galleries") {
    SUBCASE("perfect gallery") {
        // one query, its match is the unique nearest cross-camera entry
        DomainDataset q = records({{1, 1}});
        DomainDataset g = records({{1, 2}, {2, 2}, {3, 1}});
        const Tensor qd = rows({{0.0, 0.0}});
        const Tensor gd = rows({{0.1, 0.0}, {5.0, 0.0}, {9.0, 0.0}});
        RankingResult r = evaluate(q, qd, g, gd, 3);
        CHECK(r.cmc == std::vector<double>{1.0, 1.0, 1.0});
        CHECK(r.map == 1.0);
        CHECK(r.n_queries_evaluated == 1);
        CHECK(r.n_queries_skipped == 0);
        CHECK(r.per_query_first_rank == std::vector<long>{1});
    }

    SUBCASE("same-camera matches are excluded") {
        // nearest same-person entry shares the query camera and must not count;
        // two legal matches end up at ranks 2 and 4 of the filtered gallery
        DomainDataset q = records({{7, 1}});
        DomainDataset g = records({{7, 1}, {9, 2}, {7, 2}, {9, 1}, {7, 3}});
        const Tensor qd = rows({{0.0}});
        const Tensor gd = rows({{0.01}, {1.0}, {2.0}, {3.0}, {4.0}});
        RankingResult r = evaluate(q, qd, g, gd, 4);
        // filtered gallery by distance: (9,c2) d=1, (7,c2) d=2, (9,c1) d=3, (7,c3) d=4
        CHECK(r.cmc == std::vector<double>{0.0, 1.0, 1.0, 1.0});
        CHECK(r.per_query_first_rank == std::vector<long>{2});
        CHECK(r.map == doctest::Approx(0.5 * (1.0 / 2.0 + 2.0 / 4.0)).epsilon(1e-12));
    }

    SUBCASE("junk gallery entries never participate") {
        DomainDataset q = records({{4, 1}});
        DomainDataset g = records({{kJunkId, 2}, {4, 2}});
        const Tensor qd = rows({{0.0}});
        const Tensor gd = rows({{0.0}, {1.0}});  // the junk entry is closer
        RankingResult r = evaluate(q, qd, g, gd, 2);
        CHECK(r.cmc[0] == 1.0);
        CHECK(r.map == 1.0);
    }

    SUBCASE("queries with no cross-camera match are skipped") {
        DomainDataset q = records({{5, 1}, {1, 1}});
        DomainDataset g = records({{5, 1}, {1, 2}});  // pid 5 only appears on the query camera
        const Tensor qd = rows({{0.0}, {1.0}});
        const Tensor gd = rows({{0.0}, {1.0}});
        RankingResult r = evaluate(q, qd, g, gd, 2);
        CHECK(r.n_queries_evaluated == 1);
        CHECK(r.n_queries_skipped == 1);
        CHECK(r.cmc[0] == 1.0);
    }

    SUBCASE("an all-skip query set is an error") {
        DomainDataset q = records({{5, 1}});
        DomainDataset g = records({{5, 1}});
        CHECK_THROWS_AS(evaluate(q, rows({{0.0}}), g, rows({{0.0}}), 1), Error);
    }

    SUBCASE("distance ties break on gallery order") {
        DomainDataset q = records({{1, 1}});
        DomainDataset g = records({{2, 2}, {1, 2}});             // wrong id listed first
        const Tensor qd = rows({{0.0}});
        const Tensor gd = rows({{1.0}, {1.0}});                  // equidistant
        RankingResult r = evaluate(q, qd, g, gd, 2);
        CHECK(r.cmc == std::vector<double>{0.0, 1.0});           // index order puts it second
        RankingResult o = oracle_evaluate(q, qd, g, gd, 2);
        CHECK(same_result(r, o));
    }

    SUBCASE("cmc is monotone and capped at max_rank") {
        DomainDataset q = records({{1, 1}, {2, 1}, {3, 1}});
        DomainDataset g = records({{1, 2}, {2, 2}, {3, 2}, {4, 2}});
        Rng rng(8);
        Tensor qd({3, 4}), gd({4, 4});
        for (long i = 0; i < qd.size(); ++i) qd[i] = rng.normal();
        for (long i = 0; i < gd.size(); ++i) gd[i] = rng.normal();
        RankingResult r = evaluate(q, qd, g, gd, 3);
        REQUIRE(r.cmc.size() == 3);
        for (size_t k = 1; k < r.cmc.size(); ++k) CHECK(r.cmc[k] >= r.cmc[k - 1]);
    }

    SUBCASE("descriptor scaling preserves the ranking") {
        DomainDataset q = records({{1, 1}, {2, 1}});
        DomainDataset g = records({{1, 2}, {2, 2}, {3, 2}});
        Rng rng(21);
        Tensor qd({2, 8}), gd({3, 8});
        for (long i = 0; i < qd.size(); ++i) qd[i] = rng.normal();
        for (long i = 0; i < gd.size(); ++i) gd[i] = rng.normal();
        RankingResult r1 = evaluate(q, qd, g, gd, 3);
        Tensor qs = qd.clone(), gs = gd.clone();
        qs.scale_inplace(4.0);
        gs.scale_inplace(4.0);
        RankingResult r2 = evaluate(q, qs, g, gs, 3);
        CHECK(r1.cmc == r2.cmc);
        CHECK(r1.map == doctest::Approx(r2.map).epsilon(1e-12));
    }
}

TEST_CASE("independent scorer agreement on random instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 40; ++trial) {
        const long n_ids = 2 + static_cast<long>(rng.uniform() * 4);
        const long n_cams = 2 + static_cast<long>(rng.uniform() * 3);
        const long nq = 2 + static_cast<long>(rng.uniform() * 8);
        const long ng = 5 + static_cast<long>(rng.uniform() * 45);
        const long d = 1 + static_cast<long>(rng.uniform() * 6);

        std::vector<std::pair<int, int>> qspec, gspec;
        for (long i = 0; i < nq; ++i)
            qspec.push_back({static_cast<int>(rng.bounded(n_ids)) + 1,
                             static_cast<int>(rng.bounded(n_cams)) + 1});
        for (long i = 0; i < ng; ++i) {
            // sprinkle junk entries in
            const bool junk = rng.uniform() < 0.1;
            gspec.push_back({junk ? kJunkId : static_cast<int>(rng.bounded(n_ids)) + 1,
                             static_cast<int>(rng.bounded(n_cams)) + 1});
        }
        // guarantee every query has a legal match somewhere
        for (long i = 0; i < nq; ++i)
            gspec.push_back({qspec[static_cast<size_t>(i)].first,
                             (qspec[static_cast<size_t>(i)].second % n_cams) + 1});

        DomainDataset q = records(qspec), g = records(gspec);
        Tensor qd({nq, d}), gd({static_cast<long>(gspec.size()), d});
        for (long i = 0; i < qd.size(); ++i) qd[i] = rng.normal();
        for (long i = 0; i < gd.size(); ++i) gd[i] = rng.normal();
        // duplicated descriptors force distance ties
        if (gd.shape()[0] >= 2)
            for (long j = 0; j < d; ++j) gd.at2(1, j) = gd.at2(0, j);

        const long max_rank = 1 + static_cast<long>(rng.uniform() * 10);
        RankingResult a = evaluate(q, qd, g, gd, max_rank);
        RankingResult b = oracle_evaluate(q, qd, g, gd, max_rank);
        CHECK(same_result(a, b));
        CHECK(a.per_query_ap.size() == b.per_query_ap.size());
        for (size_t i = 0; i < a.per_query_ap.size(); ++i)
            CHECK(std::fabs(a.per_query_ap[i] - b.per_query_ap[i]) <= 1e-9);
        CHECK(a.per_query_first_rank == b.per_query_first_rank);
    }
}

TEST_CASE("report json") {
    RankingResult r;
    r.cmc = {0.5, 0.6, 0.7, 0.75, 0.8};
    r.map = 0.42;
    r.n_queries_evaluated = 100;
    r.n_queries_skipped = 3;
    const std::string text = ranking_report_json(r, "abc123");
    const auto j = nlohmann::json::parse(text);
    CHECK(j["cmc"]["1"] == 0.5);
    CHECK(j["cmc"]["5"] == 0.8);
    // ranks past the computed range hold the deepest known value
    CHECK(j["cmc"]["10"] == 0.8);
    CHECK(j["cmc"]["20"] == 0.8);
    CHECK(j["map"] == 0.42);
    CHECK(j["n_queries"] == 100);
    CHECK(j["n_queries_skipped"] == 3);
    CHECK(j["config_hash"] == "abc123");
}
