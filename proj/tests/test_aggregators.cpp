#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "bfl/aggregators.hpp"
#include "bfl/oracle.hpp"
#include "bfl/rng.hpp"

using namespace bfl;

namespace {

ClientUpdate upd(std::size_t id, std::vector<double> v, std::size_t count = 1)
{
    return {id, ParamVector(std::move(v)), count};
}

std::vector<ClientUpdate> random_updates(Rng& rng, std::size_t n, std::size_t d)
{
    std::vector<ClientUpdate> out;
    for (std::size_t i = 0; i < n; ++i) {
        ParamVector p(d);
        for (auto& v : p.values) {
            v = rng.normal(0.0, 2.0);
        }
        out.push_back({i * 2 + 1, p, 1 + rng.below(20)});
    }
    return out;
}

void check_close(const ParamVector& a, const ParamVector& b, double tol)
{
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a[i] - b[i]) <= tol);
    }
}

const AggregatorKind kAll[] = {AggregatorKind::fedavg,     AggregatorKind::median,     AggregatorKind::trim_avg,
                               AggregatorKind::geo_median, AggregatorKind::multi_krum, AggregatorKind::nnm_krum};

}  // namespace

TEST_CASE("fedavg examples")
{
    CHECK(fedavg(std::vector{upd(0, {1, 3}), upd(1, {3, 5})}) == ParamVector(std::vector<double>{2, 4}));
    CHECK(fedavg(std::vector{upd(0, {0, 0}, 1), upd(1, {4, 8}, 3)}) == ParamVector(std::vector<double>{3, 6}));
    CHECK(fedavg(std::vector{upd(5, {1.5, -2})}) == ParamVector(std::vector<double>{1.5, -2}));
    CHECK_THROWS(fedavg(std::vector<ClientUpdate>{}));
    CHECK_THROWS(fedavg(std::vector{upd(0, {1}), upd(1, {1, 2})}));
}

TEST_CASE("coordinate median examples")
{
    CHECK(coord_median(std::vector{upd(0, {1, 10}), upd(1, {2, 20}), upd(2, {3, 30})}) ==
          ParamVector(std::vector<double>{2, 20}));
    CHECK(coord_median(std::vector{upd(0, {1}), upd(1, {3})}) == ParamVector(std::vector<double>{2}));
}

TEST_CASE("median and trimmed mean match sort oracles on random instances")
{
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const auto u = random_updates(rng, 1 + rng.below(12), 1 + rng.below(6));
        CHECK(coord_median(u) == oracle::median(u));
        const double beta = 0.1 * static_cast<double>(rng.below(5));
        const auto k = static_cast<std::size_t>(std::floor(beta * static_cast<double>(u.size()) + 1e-9));
        if (2 * k < u.size()) {
            CHECK(trimmed_mean(u, beta) == oracle::trimmed_mean(u, k));
        }
    }
}

TEST_CASE("trimmed mean examples")
{
    std::vector<ClientUpdate> u;
    for (double v : {0.0, 1.0, 2.0, 3.0, 100.0}) {
        u.push_back(upd(u.size(), {v, -v}));
    }
    CHECK(trimmed_mean(u, 0.2) == ParamVector(std::vector<double>{2, -2}));
    // beta = 0 is the unweighted mean, even with unequal counts.
    u[0].sample_count = 50;
    check_close(trimmed_mean(u, 0.0), ParamVector(std::vector<double>{21.2, -21.2}), 1e-12);
    CHECK_THROWS(trimmed_mean(std::vector{upd(0, {1}), upd(1, {2})}, 0.5));
}

TEST_CASE("geometric median examples")
{
    const auto same = geometric_median(std::vector{upd(0, {1, 2}), upd(1, {1, 2}), upd(2, {1, 2})});
    check_close(same.point, ParamVector(std::vector<double>{1, 2}), 1e-9);

    const auto dup = geometric_median(std::vector{upd(0, {0, 0}), upd(1, {0, 0}), upd(2, {10, 0})});
    check_close(dup.point, ParamVector(std::vector<double>{0, 0}), 1e-6);

    const auto tri = geometric_median(std::vector{upd(0, {0, 0}), upd(1, {1, 0}), upd(2, {0.5, 0.8660})});
    CHECK(tri.point[0] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(std::abs(tri.point[1] - 0.28868) <= 1e-3);
}

TEST_CASE("geometric median is no worse than any input or the grid oracle")
{
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto u = random_updates(rng, 3 + rng.below(6), 2);
        const auto gm = geometric_median(u);
        const double obj = oracle::sum_of_distances(u, gm.point);
        CHECK(obj <= oracle::sum_of_distances(u, oracle::geometric_median_2d(u)) + 1e-6);
        for (const auto& x : u) {
            CHECK(obj <= oracle::sum_of_distances(u, x.params) + 1e-9);
        }
    }
}

TEST_CASE("krum family: identical updates")
{
    std::vector<ClientUpdate> u;
    for (std::size_t i = 0; i < 6; ++i) {
        u.push_back(upd(i, {3, -1}));
    }
    for (double s : krum_scores(u, 1)) {
        CHECK(s == 0.0);
    }
    const auto mk = multi_krum(u, 0.1);
    CHECK(mk.selected_ids.size() == 5);
    CHECK(mk.params == ParamVector(std::vector<double>{3, -1}));
    for (const auto& m : nearest_neighbor_mix(u, 1)) {
        CHECK(m.params == u[0].params);
    }
    CHECK(nnm_krum(u, 0.1).params == ParamVector(std::vector<double>{3, -1}));
}

TEST_CASE("krum family: far outlier is excluded")
{
    const std::vector u{upd(0, {0, 0}), upd(1, {0.1, 0}), upd(2, {0, 0.1}), upd(3, {50, 50})};
    CHECK(assumed_malicious_count(4, 0.25) == 1);
    const auto mk = multi_krum(u, 0.25);
    CHECK(mk.selected_ids == std::vector<std::size_t>{0, 1, 2});
    CHECK(mk.selected_ids == oracle::multi_krum_ids(u, 1));

    const auto mixed = nearest_neighbor_mix(u, 1);
    CHECK(norm(mixed[3].params) < norm(u[3].params));
    const auto nk = nnm_krum(u, 0.25);
    CHECK(nk.selected_ids == oracle::nnm_krum_ids(u, 1));
    CHECK(std::find(nk.selected_ids.begin(), nk.selected_ids.end(), 3) == nk.selected_ids.end());
}

TEST_CASE("nnm with beta zero averages everything")
{
    Rng rng(31);
    const auto u = random_updates(rng, 5, 3);
    ParamVector mean(3);
    for (const auto& x : u) {
        mean += x.params;
    }
    mean *= 1.0 / 5.0;
    for (const auto& m : nearest_neighbor_mix(u, 0)) {
        check_close(m.params, mean, 1e-12);
    }
}

TEST_CASE("assumed malicious count guards rounding")
{
    CHECK(assumed_malicious_count(10, 0.3) == 3);
    CHECK(assumed_malicious_count(10, 0.1) == 1);
    CHECK(assumed_malicious_count(7, 0.2) == 2);
    CHECK(assumed_malicious_count(5, 0.0) == 0);
}

TEST_CASE("brute-force oracle suites")
{
    for (auto kind : kAll) {
        const auto r = oracle::run_suite(kind, 100, 7);
        INFO(to_string(kind));
        CHECK(r.instances == 100);
        CHECK(r.passed());
    }
}

TEST_CASE("every rule is invariant to input order")
{
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        auto u = random_updates(rng, 4 + rng.below(5), 1 + rng.below(4));
        for (auto kind : kAll) {
            AggregatorConfig cfg{kind, 0.2, 1e-9, 1000};
            const Selection a = aggregate(u, cfg);
            auto shuffled = u;
            rng.shuffle(std::span<ClientUpdate>(shuffled));
            const Selection b = aggregate(shuffled, cfg);
            CHECK(a.selected_ids == b.selected_ids);
            CHECK(a.params == b.params);
        }
    }
}

TEST_CASE("every rule is translation equivariant")
{
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const auto u = random_updates(rng, 5 + rng.below(4), 3);
        ParamVector shift(3);
        for (auto& v : shift.values) {
            v = rng.normal(0.0, 5.0);
        }
        auto moved = u;
        for (auto& x : moved) {
            x.params += shift;
        }
        for (auto kind : kAll) {
            AggregatorConfig cfg{kind, 0.2, 1e-12, 5000};
            const Selection a = aggregate(u, cfg);
            const Selection b = aggregate(moved, cfg);
            check_close(b.params, a.params + shift, 1e-9);
        }
    }
}

TEST_CASE("robust rules stay bounded under a huge outlier")
{
    std::vector<ClientUpdate> u;
    Rng rng(47);
    for (std::size_t i = 0; i < 9; ++i) {
        u.push_back(upd(i, {rng.normal(0.0, 0.1), rng.normal(0.0, 0.1)}));
    }
    u.push_back(upd(9, {1e6, -1e6}));
    for (auto kind : {AggregatorKind::median, AggregatorKind::trim_avg, AggregatorKind::geo_median,
                      AggregatorKind::multi_krum, AggregatorKind::nnm_krum}) {
        const auto s = aggregate(u, AggregatorConfig{kind, 0.1, 1e-9, 1000});
        INFO(to_string(kind));
        CHECK(norm(s.params) < 1.0);
    }
    CHECK(norm(aggregate(u, AggregatorConfig{}).params) > 1e4);
}

TEST_CASE("aggregate lists every id for non-selecting rules")
{
    const std::vector u{upd(8, {1}), upd(2, {2}), upd(5, {3})};
    for (auto kind : {AggregatorKind::fedavg, AggregatorKind::median, AggregatorKind::geo_median}) {
        CHECK(aggregate(u, AggregatorConfig{kind}).selected_ids == std::vector<std::size_t>{2, 5, 8});
    }
    for (auto kind : kAll) {
        CHECK(parse_aggregator_kind(to_string(kind)) == kind);
    }
}
