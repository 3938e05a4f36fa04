#include "bfl/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bfl::oracle {

namespace {

using Mask = std::uint32_t;

std::vector<Mask> masks_of_size(std::size_t n, std::size_t k)
{
    if (n > 20) {
        throw std::invalid_argument("oracle enumeration is limited to 20 items");
    }
    std::vector<Mask> out;
    for (Mask m = 0; m < (Mask{1} << n); ++m) {
        if (static_cast<std::size_t>(std::popcount(m)) == k) {
            out.push_back(m);
        }
    }
    return out;
}

std::vector<std::size_t> ids_of(std::span<const ClientUpdate> updates, Mask m)
{
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < updates.size(); ++i) {
        if (m & (Mask{1} << i)) {
            ids.push_back(updates[i].client_id);
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

double sq_dist(const ParamVector& a, const ParamVector& b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return acc;
}

bool nearly_equal(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

// Mask with the smallest cost; near-equal costs go to the smallest id list.
template <typename Cost>
Mask best_mask(std::span<const ClientUpdate> updates, const std::vector<Mask>& candidates, Cost cost)
{
    Mask best = candidates.front();
    double best_cost = cost(best);
    for (Mask m : candidates) {
        const double c = cost(m);
        if (nearly_equal(c, best_cost)) {
            if (ids_of(updates, m) < ids_of(updates, best)) {
                best = m;
                best_cost = std::min(best_cost, c);
            }
        } else if (c < best_cost) {
            best = m;
            best_cost = c;
        }
    }
    return best;
}

}  // namespace

ParamVector median(std::span<const ClientUpdate> updates)
{
    const std::size_t n = updates.size();
    ParamVector out(updates.front().params.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::vector<double> col;
        for (const auto& u : updates) {
            col.push_back(u.params[i]);
        }
        std::sort(col.begin(), col.end());
        out[i] = n % 2 ? col[n / 2] : (col[n / 2 - 1] + col[n / 2]) / 2.0;
    }
    return out;
}

ParamVector trimmed_mean(std::span<const ClientUpdate> updates, std::size_t k)
{
    const std::size_t n = updates.size();
    ParamVector out(updates.front().params.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::vector<double> col;
        for (const auto& u : updates) {
            col.push_back(u.params[i]);
        }
        std::sort(col.begin(), col.end());
        double acc = 0.0;
        for (std::size_t j = k; j < n - k; ++j) {
            acc += col[j];
        }
        out[i] = acc * (1.0 / static_cast<double>(n - 2 * k));
    }
    return out;
}

std::vector<double> krum_scores(std::span<const ClientUpdate> updates, std::size_t f)
{
    const std::size_t n = updates.size();
    const std::size_t m = n - f - 2;
    const auto candidates = masks_of_size(n, m);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Mask mask : candidates) {
            if (mask & (Mask{1} << i)) {
                continue;
            }
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (mask & (Mask{1} << j)) {
                    total += sq_dist(updates[i].params, updates[j].params);
                }
            }
            best = std::min(best, total);
        }
        scores[i] = best;
    }
    return scores;
}

std::vector<std::size_t> multi_krum_ids(std::span<const ClientUpdate> updates, std::size_t f)
{
    const auto scores = oracle::krum_scores(updates, f);
    const auto candidates = masks_of_size(updates.size(), updates.size() - f);
    const Mask best = best_mask(updates, candidates, [&](Mask m) {
        double total = 0.0;
        for (std::size_t i = 0; i < updates.size(); ++i) {
            if (m & (Mask{1} << i)) {
                total += scores[i];
            }
        }
        return total;
    });
    return ids_of(updates, best);
}

std::vector<ClientUpdate> nnm_mix(std::span<const ClientUpdate> updates, std::size_t f)
{
    const std::size_t n = updates.size();
    const auto candidates = masks_of_size(n, n - f);
    std::vector<ClientUpdate> mixed;
    for (std::size_t i = 0; i < n; ++i) {
        const Mask best = best_mask(updates, candidates, [&](Mask m) {
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (m & (Mask{1} << j)) {
                    total += sq_dist(updates[i].params, updates[j].params);
                }
            }
            return total;
        });
        ClientUpdate u = updates[i];
        u.params = ParamVector(u.params.size());
        for (std::size_t j = 0; j < n; ++j) {
            if (best & (Mask{1} << j)) {
                for (std::size_t c = 0; c < u.params.size(); ++c) {
                    u.params[c] += updates[j].params[c];
                }
            }
        }
        for (double& v : u.params.values) {
            v /= static_cast<double>(n - f);
        }
        mixed.push_back(std::move(u));
    }
    return mixed;
}

std::vector<std::size_t> nnm_krum_ids(std::span<const ClientUpdate> updates, std::size_t f)
{
    const auto mixed = nnm_mix(updates, f);
    return multi_krum_ids(mixed, f);
}

double sum_of_distances(std::span<const ClientUpdate> updates, const ParamVector& x)
{
    double total = 0.0;
    for (const auto& u : updates) {
        total += std::sqrt(sq_dist(u.params, x));
    }
    return total;
}

ParamVector geometric_median_2d(std::span<const ClientUpdate> updates)
{
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-lo[0], -lo[1]};
    for (const auto& u : updates) {
        for (int a = 0; a < 2; ++a) {
            lo[a] = std::min(lo[a], u.params[a]);
            hi[a] = std::max(hi[a], u.params[a]);
        }
    }
    // The minimizer lies in the convex hull, hence in the bounding box.
    double centre[2] = {(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2};
    double half = std::max({(hi[0] - lo[0]) / 2, (hi[1] - lo[1]) / 2, 1e-9});
    constexpr int kGrid = 40;
    ParamVector best(2);
    best[0] = centre[0];
    best[1] = centre[1];
    for (int level = 0; level < 80; ++level) {
        double best_obj = std::numeric_limits<double>::infinity();
        ParamVector probe(2);
        for (int i = 0; i <= kGrid; ++i) {
            for (int j = 0; j <= kGrid; ++j) {
                probe[0] = centre[0] - half + 2 * half * i / kGrid;
                probe[1] = centre[1] - half + 2 * half * j / kGrid;
                const double obj = sum_of_distances(updates, probe);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = probe;
                }
            }
        }
        centre[0] = best[0];
        centre[1] = best[1];
        half *= 0.25;
    }
    return best;
}

double two_means_wcss(std::span<const double> values)
{
    const std::size_t n = values.size();
    if (n < 2 || n > 20) {
        throw std::invalid_argument("two_means_wcss needs 2..20 values");
    }
    auto cluster_cost = [&](Mask m, bool inside) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<bool>(m & (Mask{1} << i)) == inside) {
                sum += values[i];
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<bool>(m & (Mask{1} << i)) == inside) {
                acc += (values[i] - mean) * (values[i] - mean);
            }
        }
        return acc;
    };
    double best = std::numeric_limits<double>::infinity();
    for (Mask m = 1; m + 1 < (Mask{1} << n); ++m) {
        best = std::min(best, cluster_cost(m, true) + cluster_cost(m, false));
    }
    return best;
}

namespace {

std::vector<ClientUpdate> random_instance(Rng& rng, std::size_t n, std::size_t d)
{
    // Ids are a shuffled, gapped range so that neither input order nor id
    // order matches the position.
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = 3 * i + 7;
    }
    rng.shuffle(std::span<std::size_t>(ids));
    std::vector<ClientUpdate> out;
    const bool clustered = rng.uniform() < 0.5;
    for (std::size_t i = 0; i < n; ++i) {
        ClientUpdate u;
        u.client_id = ids[i];
        u.sample_count = 1 + rng.below(50);
        u.params = ParamVector(d);
        const double scale = clustered && rng.uniform() < 0.25 ? 20.0 : 1.0;
        for (double& v : u.params.values) {
            v = scale * rng.normal();
        }
        out.push_back(std::move(u));
    }
    return out;
}

bool same(const ParamVector& a, const ParamVector& b) { return a.values == b.values; }

}  // namespace

SuiteResult run_suite(AggregatorKind kind, std::size_t instances, std::uint64_t seed)
{
    Rng rng(seed);
    SuiteResult result;
    const double betas[] = {0.1, 0.2, 0.3};
    for (std::size_t k = 0; k < instances; ++k) {
        const double beta = betas[k % 3];
        std::size_t n = 3 + rng.below(6);
        std::size_t d = 1 + rng.below(5);
        if (kind == AggregatorKind::geo_median) {
            d = 2;
        }
        if (kind == AggregatorKind::multi_krum || kind == AggregatorKind::nnm_krum) {
            // Krum needs n - f - 2 >= 1.
            while (n < assumed_malicious_count(n, beta) + 3) {
                n = 3 + rng.below(6);
            }
        }
        const std::size_t f = assumed_malicious_count(n, beta);
        const auto updates = random_instance(rng, n, d);
        ++result.instances;
        std::string problem;
        switch (kind) {
        case AggregatorKind::fedavg: {
            ParamVector expect(d);
            double total = 0.0;
            for (const auto& u : updates) {
                total += static_cast<double>(u.sample_count);
            }
            for (const auto& u : updates) {
                for (std::size_t c = 0; c < d; ++c) {
                    expect[c] += static_cast<double>(u.sample_count) / total * u.params[c];
                }
            }
            const ParamVector got = fedavg(updates);
            for (std::size_t c = 0; c < d; ++c) {
                if (!(std::abs(got[c] - expect[c]) <= 1e-12 * std::max(1.0, std::abs(expect[c])))) {
                    problem = "weighted mean differs";
                }
            }
            break;
        }
        case AggregatorKind::median:
            if (!same(coord_median(updates), median(updates))) {
                problem = "median differs";
            }
            break;
        case AggregatorKind::trim_avg: {
            const auto trim = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n) + 1e-9));
            if (!same(bfl::trimmed_mean(updates, beta), trimmed_mean(updates, trim))) {
                problem = "trimmed mean differs";
            }
            break;
        }
        case AggregatorKind::geo_median: {
            const double got = sum_of_distances(updates, geometric_median(updates).point);
            const double want = sum_of_distances(updates, geometric_median_2d(updates));
            if (!(std::abs(got - want) <= 1e-6)) {
                problem = "objective " + std::to_string(got) + " vs oracle " + std::to_string(want);
            }
            break;
        }
        case AggregatorKind::multi_krum:
            if (bfl::multi_krum(updates, beta).selected_ids != multi_krum_ids(updates, f)) {
                problem = "selected ids differ";
            }
            break;
        case AggregatorKind::nnm_krum:
            if (bfl::nnm_krum(updates, beta).selected_ids != nnm_krum_ids(updates, f)) {
                problem = "selected ids differ";
            }
            break;
        }
        if (!problem.empty()) {
            ++result.mismatches;
            result.failures.push_back("instance " + std::to_string(k) + " (n=" + std::to_string(n) +
                                      ", d=" + std::to_string(d) + ", beta=" + std::to_string(beta) +
                                      "): " + problem);
        }
    }
    return result;
}

}  // namespace bfl::oracle
