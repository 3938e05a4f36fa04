#include "bfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

namespace bfl {

Dataset Dataset::subset(std::span<const std::size_t> indices) const
{
    Dataset out;
    out.num_classes = num_classes;
    out.features = Tensor2(indices.size(), features.cols);
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = features.row(indices[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
        out.labels.push_back(labels[indices[r]]);
    }
    return out;
}

std::vector<std::size_t> Dataset::class_histogram() const
{
    std::vector<std::size_t> hist(static_cast<std::size_t>(std::max(num_classes, 0)), 0);
    for (int y : labels) {
        ++hist[static_cast<std::size_t>(y)];
    }
    return hist;
}

void validate(const Dataset& data)
{
    if (data.labels.size() != data.features.rows) {
        throw std::invalid_argument("dataset has " + std::to_string(data.features.rows) + " rows but " +
                                    std::to_string(data.labels.size()) + " labels");
    }
    for (int y : data.labels) {
        if (y < 0 || y >= data.num_classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(data.num_classes) + ")");
        }
    }
}

std::vector<Point2> regular_polygon_centers(int num_classes, double radius)
{
    std::vector<Point2> centers;
    for (int k = 0; k < num_classes; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / num_classes;
        centers.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    }
    return centers;
}

Dataset make_toy_blobs(std::uint64_t seed, int num_classes, std::size_t per_class, std::span<const Point2> centers,
                       double spread)
{
    if (num_classes < 1 || per_class < 1) {
        throw std::invalid_argument("toy blobs need at least one class and one sample per class");
    }
    if (centers.size() != static_cast<std::size_t>(num_classes)) {
        throw std::invalid_argument("expected " + std::to_string(num_classes) + " blob centers, got " +
                                    std::to_string(centers.size()));
    }
    if (!(spread >= 0.0)) {
        throw std::invalid_argument("blob spread must be non-negative");
    }
    Rng rng(seed);
    Dataset data;
    data.num_classes = num_classes;
    data.features = Tensor2(per_class * static_cast<std::size_t>(num_classes), 2);
    std::size_t row = 0;
    for (int k = 0; k < num_classes; ++k) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            data.features(row, 0) = centers[static_cast<std::size_t>(k)][0] + spread * rng.normal();
            data.features(row, 1) = centers[static_cast<std::size_t>(k)][1] + spread * rng.normal();
            data.labels.push_back(k);
        }
    }
    return data;
}

namespace {

// Integer counts summing to `total`, proportional to `weights`; leftover units
// go to the largest fractional parts, lower index first on ties.
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t total)
{
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    const std::size_t n = weights.size();
    std::vector<std::size_t> counts(n, 0);
    std::vector<double> fractional(n, 0.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double share = sum > 0.0 ? weights[i] / sum : 1.0 / static_cast<double>(n);
        const double quota = share * static_cast<double>(total);
        const double whole = std::floor(quota);
        counts[i] = static_cast<std::size_t>(whole);
        fractional[i] = quota - whole;
        assigned += counts[i];
    }
    // Rounding in the quota computation can overshoot by a unit.
    while (assigned > total) {
        auto it = std::max_element(counts.begin(), counts.end());
        --*it;
        --assigned;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fractional[a] > fractional[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % n) {
        ++counts[order[k]];
        ++assigned;
    }
    return counts;
}

}  // namespace

std::vector<ClientDataset> dirichlet_partition(const Dataset& data, const PartitionConfig& cfg)
{
    if (data.size() == 0) {
        throw std::invalid_argument("cannot partition an empty dataset");
    }
    if (cfg.num_clients < 1) {
        throw std::invalid_argument("partition needs at least one client");
    }
    if (cfg.num_clients > data.size()) {
        throw std::invalid_argument("partition asks for " + std::to_string(cfg.num_clients) +
                                    " clients but the dataset has only " + std::to_string(data.size()) +
                                    " samples");
    }
    if (!(cfg.alpha > 0.0)) {
        throw std::invalid_argument("Dirichlet concentration must be positive");
    }

    Rng rng(cfg.seed);
    const std::size_t n_clients = cfg.num_clients;
    std::vector<std::vector<std::size_t>> assigned(n_clients);

    for (int c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.labels[i] == c) {
                members.push_back(i);
            }
        }
        // Draw even for empty classes so the stream layout does not depend on the data.
        std::vector<double> proportions(n_clients);
        for (double& p : proportions) {
            p = rng.gamma(cfg.alpha);
        }
        rng.shuffle(std::span<std::size_t>(members));
        const auto counts = largest_remainder(proportions, members.size());
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n_clients; ++k) {
            assigned[k].insert(assigned[k].end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                               members.begin() + static_cast<std::ptrdiff_t>(offset + counts[k]));
            offset += counts[k];
        }
    }

    for (std::size_t k = 0; k < n_clients; ++k) {
        if (!assigned[k].empty()) {
            continue;
        }
        std::size_t donor = 0;
        for (std::size_t j = 1; j < n_clients; ++j) {
            if (assigned[j].size() > assigned[donor].size()) {
                donor = j;
            }
        }
        assigned[k].push_back(assigned[donor].back());
        assigned[donor].pop_back();
    }

    std::vector<ClientDataset> clients(n_clients);
    for (std::size_t k = 0; k < n_clients; ++k) {
        std::sort(assigned[k].begin(), assigned[k].end());
        clients[k].client_id = k;
        clients[k].data = data.subset(assigned[k]);
        clients[k].indices = std::move(assigned[k]);
    }
    return clients;
}

SplitResult train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed)
{
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test fraction must lie strictly between 0 and 1");
    }
    Rng rng(seed);
    SplitResult out;
    for (int c = 0; c < data.num_classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.labels[i] == c) {
                members.push_back(i);
            }
        }
        rng.shuffle(std::span<std::size_t>(members));
        const auto n_test =
            static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
        out.test_indices.insert(out.test_indices.end(), members.begin(),
                                members.begin() + static_cast<std::ptrdiff_t>(n_test));
        out.train_indices.insert(out.train_indices.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                                 members.end());
    }
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    out.train = data.subset(out.train_indices);
    out.test = data.subset(out.test_indices);
    return out;
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    for (std::size_t c = 0; c < data.feature_dim(); ++c) {
        out << 'x' << (c + 1) << ',';
    }
    out << "label\n";
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (double v : data.features.row(r)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << buf << ',';
        }
        out << data.labels[r] << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

}  // namespace bfl
