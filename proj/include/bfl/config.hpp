#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bfl/aggregators.hpp"
#include "bfl/attacks.hpp"
#include "bfl/defense.hpp"
#include "bfl/nn.hpp"

namespace bfl {

/// Invalid or unreadable experiment configuration. `field()` is the JSON path
/// of the offending entry ("attack.epsilon"), empty for file-level problems.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field))
    {
    }
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class DatasetKind { toy, idx };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::toy;
    // toy blobs
    int num_classes = 3;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double radius = 3.0;
    double spread = 0.6;
    // idx files; a missing test pair means the train files are split
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    double test_fraction = 0.2;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::size_t rounds = 30;
    std::size_t clients = 20;
    std::size_t sampled_per_round = 10;
    std::size_t local_epochs = 10;
    std::size_t batch = 128;
    SgdConfig sgd;
    DatasetSpec dataset;
    std::vector<std::size_t> hidden{32};  // classifier hidden widths
    double alpha = 100.0;                 // Dirichlet concentration
    AttackConfig attack;
    AggregatorConfig aggregator;
    std::optional<DefenseConfig> defense;
    std::size_t threads = 1;
    bool record_wall_time = false;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Throws ConfigError naming the path if it cannot be read or parsed.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Cross-field checks (n <= N, trim feasibility, tau presence, ...).
void validate(const ExperimentConfig& cfg);

}  // namespace bfl
