#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bfl/nn.hpp"

namespace bfl {

struct ClientUpdate {
    std::size_t client_id = 0;
    ParamVector params;  // full local weights w_t^i
    std::size_t sample_count = 0;
};

enum class AggregatorKind { fedavg, median, trim_avg, geo_median, multi_krum, nnm_krum };

std::string to_string(AggregatorKind kind);
std::optional<AggregatorKind> parse_aggregator_kind(const std::string& name);

struct AggregatorConfig {
    AggregatorKind kind = AggregatorKind::fedavg;
    double beta = 0.1;  // trim ratio (TrimAvg) or assumed malicious fraction (Krum family)
    double weiszfeld_tol = 1e-9;
    std::size_t weiszfeld_max_iter = 1000;
};

/// Sample-count weighted mean.
ParamVector fedavg(std::span<const ClientUpdate> updates);

/// Per-coordinate median; an even count takes the midpoint of the middle pair.
ParamVector coord_median(std::span<const ClientUpdate> updates);

/// Per coordinate, drops floor(beta * n) values from each end and averages the rest.
ParamVector trimmed_mean(std::span<const ClientUpdate> updates, double beta);

struct GeometricMedianResult {
    ParamVector point;
    std::size_t iterations = 0;
};

/// Weiszfeld iteration started from the coordinate mean. An iterate within
/// 1e-12 of an input point is nudged by 1e-10 on every axis.
GeometricMedianResult geometric_median(std::span<const ClientUpdate> updates, double tol = 1e-9,
                                       std::size_t max_iter = 1000);

struct Selection {
    std::vector<std::size_t> selected_ids;  // sorted
    ParamVector params;
};

/// ceil(beta * n), guarded against representation error in beta * n.
std::size_t assumed_malicious_count(std::size_t n, double beta);

/// Krum scores (sum of squared distances to the n - f - 2 nearest others),
/// indexed like `updates`.
std::vector<double> krum_scores(std::span<const ClientUpdate> updates, std::size_t f);

/// Keeps the n - f lowest Krum scores (f = ceil(beta n), ties to lower id) and
/// averages them unweighted.
Selection multi_krum(std::span<const ClientUpdate> updates, double beta);

/// Nearest-neighbour mixing over the n - f closest updates (self included),
/// returned in the input order.
std::vector<ClientUpdate> nearest_neighbor_mix(std::span<const ClientUpdate> updates, std::size_t f);

/// Mixing followed by MultiKrum on the mixed vectors.
Selection nnm_krum(std::span<const ClientUpdate> updates, double beta);

/// Dispatch on `cfg.kind`. For rules that do not select, `selected_ids` lists every input.
Selection aggregate(std::span<const ClientUpdate> updates, const AggregatorConfig& cfg);

}  // namespace bfl
