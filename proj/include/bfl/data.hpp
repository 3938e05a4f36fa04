#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfl/nn.hpp"

namespace bfl {

struct Dataset {
    Tensor2 features;  // one sample per row
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.cols; }

    /// Rows `indices` in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;

    std::vector<std::size_t> class_histogram() const;

    bool operator==(const Dataset&) const = default;
};

/// Throws std::invalid_argument if labels and rows disagree or a label is out of range.
void validate(const Dataset& data);

struct ClientDataset {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;  // rows of the parent dataset
    Dataset data;
};

struct PartitionConfig {
    std::size_t num_clients = 1;
    double alpha = 100.0;
    std::uint64_t seed = 0;
};

using Point2 = std::array<double, 2>;

/// Vertices of a regular polygon, starting on the positive x axis.
std::vector<Point2> regular_polygon_centers(int num_classes, double radius = 3.0);

/// Isotropic Gaussian blobs in 2-D, exactly `per_class` samples per class,
/// emitted class by class.
Dataset make_toy_blobs(std::uint64_t seed, int num_classes, std::size_t per_class, std::span<const Point2> centers,
                       double spread);

/// Per class, a Dirichlet(alpha, ..., alpha) draw over the clients sets that
/// class's share for each client; counts use largest-remainder rounding. A
/// client left with no samples takes one from the currently largest client.
std::vector<ClientDataset> dirichlet_partition(const Dataset& data, const PartitionConfig& cfg);

struct SplitResult {
    Dataset train;
    Dataset test;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

/// Stratified split: each class contributes round(fraction * class_count)
/// samples to the test side. Index lists are sorted.
SplitResult train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Writes `x1,...,xd,label` rows with a header line.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// IDX files (big-endian; 0x00000803 images, 0x00000801 labels).

enum class IdxErrorKind { io, bad_magic, truncated, count_mismatch };

class IdxError : public std::runtime_error {
public:
    IdxError(IdxErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    IdxErrorKind kind() const { return kind_; }

private:
    IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Pixels are scaled by 1/255. num_classes is max(label) + 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Parse in-memory IDX contents; `load_idx` reads the files and calls this.
Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes);

}  // namespace bfl
