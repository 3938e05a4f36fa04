#pragma once

#include <string>
#include <vector>

#include "bfl/aggregators.hpp"

// Brute-force reference implementations. They enumerate instead of sorting or
// iterating, and share no code with the production rules they check.
namespace bfl::oracle {

/// Sort each coordinate and index the middle.
ParamVector median(std::span<const ClientUpdate> updates);

/// Sort each coordinate, slice off k from each end, average.
ParamVector trimmed_mean(std::span<const ClientUpdate> updates, std::size_t k);

/// Krum score as the minimum, over all (n - f - 2)-subsets of the other
/// updates, of the summed squared distances.
std::vector<double> krum_scores(std::span<const ClientUpdate> updates, std::size_t f);

/// Subset of size n - f with the smallest total Krum score; ties go to the
/// lexicographically smallest sorted id list.
std::vector<std::size_t> multi_krum_ids(std::span<const ClientUpdate> updates, std::size_t f);

/// For each update, the mean of the (n - f)-subset (containing it or not)
/// with the smallest summed squared distance to it.
std::vector<ClientUpdate> nnm_mix(std::span<const ClientUpdate> updates, std::size_t f);

std::vector<std::size_t> nnm_krum_ids(std::span<const ClientUpdate> updates, std::size_t f);

double sum_of_distances(std::span<const ClientUpdate> updates, const ParamVector& x);

/// Geometric median of 2-D points by repeatedly refined grid search.
ParamVector geometric_median_2d(std::span<const ClientUpdate> updates);

/// Minimum WCSS over every two-way partition of `values` (2^n subsets).
double two_means_wcss(std::span<const double> values);

struct SuiteResult {
    std::size_t instances = 0;
    std::size_t mismatches = 0;
    std::vector<std::string> failures;

    bool passed() const { return mismatches == 0; }
};

/// Random instances (n <= 8, d <= 5, beta in {0.1, 0.2, 0.3}) comparing the
/// production rule with its brute-force oracle. Accepts every aggregator name.
SuiteResult run_suite(AggregatorKind kind, std::size_t instances, std::uint64_t seed);

}  // namespace bfl::oracle
