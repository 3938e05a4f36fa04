#include "bfl/aggregators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bfl {

namespace {

// Updates sorted by client id; every rule works in this order so results do
// not depend on how the caller listed the updates.
std::vector<const ClientUpdate*> canonical(std::span<const ClientUpdate> updates, const char* rule)
{
    if (updates.empty()) {
        throw std::invalid_argument(std::string(rule) + ": no updates to aggregate");
    }
    std::vector<const ClientUpdate*> out;
    out.reserve(updates.size());
    const std::size_t d = updates.front().params.size();
    for (const auto& u : updates) {
        if (u.params.size() != d) {
            throw DimensionError(std::string(rule) + ": updates differ in dimension");
        }
        out.push_back(&u);
    }
    std::sort(out.begin(), out.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) { return a->client_id < b->client_id; });
    return out;
}

ParamVector plain_mean(const std::vector<const ClientUpdate*>& items)
{
    ParamVector acc(items.front()->params.size());
    for (const auto* u : items) {
        acc += u->params;
    }
    acc *= 1.0 / static_cast<double>(items.size());
    return acc;
}

std::vector<std::size_t> all_ids(const std::vector<const ClientUpdate*>& items)
{
    std::vector<std::size_t> ids;
    for (const auto* u : items) {
        ids.push_back(u->client_id);
    }
    return ids;
}

}  // namespace

std::string to_string(AggregatorKind kind)
{
    switch (kind) {
    case AggregatorKind::fedavg:
        return "fedavg";
    case AggregatorKind::median:
        return "median";
    case AggregatorKind::trim_avg:
        return "trim_avg";
    case AggregatorKind::geo_median:
        return "geo_median";
    case AggregatorKind::multi_krum:
        return "multi_krum";
    case AggregatorKind::nnm_krum:
        return "nnm_krum";
    }
    return "fedavg";
}

std::optional<AggregatorKind> parse_aggregator_kind(const std::string& name)
{
    for (auto k : {AggregatorKind::fedavg, AggregatorKind::median, AggregatorKind::trim_avg,
                   AggregatorKind::geo_median, AggregatorKind::multi_krum, AggregatorKind::nnm_krum}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

ParamVector fedavg(std::span<const ClientUpdate> updates)
{
    const auto items = canonical(updates, "fedavg");
    double total = 0.0;
    ParamVector acc(items.front()->params.size());
    for (const auto* u : items) {
        const double w = static_cast<double>(u->sample_count);
        total += w;
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += w * u->params[i];
        }
    }
    if (total <= 0.0) {
        throw std::invalid_argument("fedavg: total sample count is zero");
    }
    acc *= 1.0 / total;
    return acc;
}

ParamVector coord_median(std::span<const ClientUpdate> updates)
{
    const auto items = canonical(updates, "median");
    const std::size_t n = items.size();
    ParamVector out(items.front()->params.size());
    std::vector<double> column(n);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            column[k] = items[k]->params[i];
        }
        std::sort(column.begin(), column.end());
        out[i] = n % 2 == 1 ? column[n / 2] : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    }
    return out;
}

ParamVector trimmed_mean(std::span<const ClientUpdate> updates, double beta)
{
    const auto items = canonical(updates, "trim_avg");
    const std::size_t n = items.size();
    if (!(beta >= 0.0 && beta <= 0.5)) {
        throw std::invalid_argument("trim_avg: beta must lie in [0, 0.5)");
    }
    const auto k = static_cast<std::size_t>(std::floor(beta * static_cast<double>(n) + 1e-9));
    if (2 * k >= n) {
        throw std::invalid_argument("trim_avg: trimming " + std::to_string(k) + " from each end of " +
                                    std::to_string(n) + " updates leaves nothing");
    }
    ParamVector out(items.front()->params.size());
    std::vector<double> column(n);
    const double inv = 1.0 / static_cast<double>(n - 2 * k);
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            column[j] = items[j]->params[i];
        }
        std::sort(column.begin(), column.end());
        double acc = 0.0;
        for (std::size_t j = k; j < n - k; ++j) {
            acc += column[j];
        }
        out[i] = acc * inv;
    }
    return out;
}

GeometricMedianResult geometric_median(std::span<const ClientUpdate> updates, double tol, std::size_t max_iter)
{
    const auto items = canonical(updates, "geo_median");
    const std::size_t n = items.size();
    GeometricMedianResult result;
    result.point = plain_mean(items);
    ParamVector& x = result.point;
    std::vector<double> dist(n);

    auto measure = [&] {
        bool coincides = false;
        for (std::size_t k = 0; k < n; ++k) {
            dist[k] = std::sqrt(squared_distance(x, items[k]->params));
            coincides = coincides || dist[k] < 1e-12;
        }
        return coincides;
    };

    while (result.iterations < max_iter) {
        ++result.iterations;
        if (measure()) {
            for (double& v : x.values) {
                v += 1e-10;
            }
            measure();
        }
        ParamVector next(x.size());
        double weight_sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            // A second coincidence right after the nudge cannot happen for
            // distinct inputs; guard the division anyway.
            const double w = 1.0 / std::max(dist[k], 1e-300);
            weight_sum += w;
            for (std::size_t i = 0; i < next.size(); ++i) {
                next[i] += w * items[k]->params[i];
            }
        }
        next *= 1.0 / weight_sum;
        const double step = std::sqrt(squared_distance(next, x));
        x = std::move(next);
        if (step < tol) {
            break;
        }
    }
    return result;
}

std::size_t assumed_malicious_count(std::size_t n, double beta)
{
    return static_cast<std::size_t>(std::ceil(beta * static_cast<double>(n) - 1e-9));
}

std::vector<double> krum_scores(std::span<const ClientUpdate> updates, std::size_t f)
{
    const std::size_t n = updates.size();
    if (n < f + 3) {
        throw std::invalid_argument("krum: " + std::to_string(n) + " updates are too few for " + std::to_string(f) +
                                    " assumed malicious (need n - f - 2 >= 1)");
    }
    const std::size_t neighbours = n - f - 2;
    std::vector<double> scores(n, 0.0);
    std::vector<std::pair<double, std::size_t>> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.emplace_back(squared_distance(updates[i].params, updates[j].params), updates[j].client_id);
            }
        }
        std::sort(row.begin(), row.end());
        double acc = 0.0;
        for (std::size_t k = 0; k < neighbours; ++k) {
            acc += row[k].first;
        }
        scores[i] = acc;
    }
    return scores;
}

namespace {

Selection multi_krum_sorted(const std::vector<const ClientUpdate*>& items, std::size_t f)
{
    std::vector<ClientUpdate> view;
    view.reserve(items.size());
    for (const auto* u : items) {
        view.push_back(*u);
    }
    const auto scores = krum_scores(view, f);
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    // items are id-sorted, so a stable sort breaks score ties toward lower ids.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    order.resize(items.size() - f);
    std::sort(order.begin(), order.end());

    std::vector<const ClientUpdate*> chosen;
    Selection out;
    for (std::size_t k : order) {
        chosen.push_back(items[k]);
        out.selected_ids.push_back(items[k]->client_id);
    }
    out.params = plain_mean(chosen);
    return out;
}

}  // namespace

Selection multi_krum(std::span<const ClientUpdate> updates, double beta)
{
    const auto items = canonical(updates, "multi_krum");
    return multi_krum_sorted(items, assumed_malicious_count(items.size(), beta));
}

std::vector<ClientUpdate> nearest_neighbor_mix(std::span<const ClientUpdate> updates, std::size_t f)
{
    const std::size_t n = updates.size();
    if (f >= n) {
        throw std::invalid_argument("nnm: neighbourhood would be empty");
    }
    const std::size_t k = n - f;
    std::vector<ClientUpdate> mixed;
    mixed.reserve(n);
    std::vector<std::tuple<double, std::size_t, std::size_t>> row;  // distance, id, position
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            row.emplace_back(squared_distance(updates[i].params, updates[j].params), updates[j].client_id, j);
        }
        std::sort(row.begin(), row.end());
        row.resize(k);
        // Sum neighbours in id order so equal neighbourhoods give equal bits.
        std::sort(row.begin(), row.end(),
                  [](const auto& a, const auto& b) { return std::get<1>(a) < std::get<1>(b); });
        ClientUpdate m = updates[i];
        m.params = ParamVector(updates[i].params.size());
        for (const auto& entry : row) {
            m.params += updates[std::get<2>(entry)].params;
        }
        m.params *= 1.0 / static_cast<double>(k);
        mixed.push_back(std::move(m));
    }
    return mixed;
}

Selection nnm_krum(std::span<const ClientUpdate> updates, double beta)
{
    const auto items = canonical(updates, "nnm_krum");
    const std::size_t f = assumed_malicious_count(items.size(), beta);
    if (items.size() < f + 3) {
        throw std::invalid_argument("nnm_krum: " + std::to_string(items.size()) + " updates are too few for " +
                                    std::to_string(f) + " assumed malicious (need n - f - 2 >= 1)");
    }
    std::vector<ClientUpdate> sorted;
    for (const auto* u : items) {
        sorted.push_back(*u);
    }
    const auto mixed = nearest_neighbor_mix(sorted, f);
    std::vector<const ClientUpdate*> mixed_items;
    for (const auto& m : mixed) {
        mixed_items.push_back(&m);
    }
    return multi_krum_sorted(mixed_items, f);
}

Selection aggregate(std::span<const ClientUpdate> updates, const AggregatorConfig& cfg)
{
    switch (cfg.kind) {
    case AggregatorKind::multi_krum:
        return multi_krum(updates, cfg.beta);
    case AggregatorKind::nnm_krum:
        return nnm_krum(updates, cfg.beta);
    default:
        break;
    }
    Selection out;
    out.selected_ids = all_ids(canonical(updates, to_string(cfg.kind).c_str()));
    switch (cfg.kind) {
    case AggregatorKind::fedavg:
        out.params = fedavg(updates);
        break;
    case AggregatorKind::median:
        out.params = coord_median(updates);
        break;
    case AggregatorKind::trim_avg:
        out.params = trimmed_mean(updates, cfg.beta);
        break;
    case AggregatorKind::geo_median:
        out.params = geometric_median(updates, cfg.weiszfeld_tol, cfg.weiszfeld_max_iter).point;
        break;
    default:
        break;
    }
    return out;
}

}  // namespace bfl
