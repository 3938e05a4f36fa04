#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "bfl/config.hpp"
#include "bfl/data.hpp"
#include "bfl/defense.hpp"

namespace bfl {

struct LocalResult {
    Delta delta;
    std::size_t sample_count = 0;
};

/// `epochs` passes of mini-batch SGD over `data` starting from `start`, with a
/// fresh shuffle per epoch and fresh momentum buffers. Batches are clipped to
/// the dataset size.
LocalResult local_training(const Dataset& data, const MlpModel& start, const SgdConfig& sgd, std::size_t epochs,
                           std::size_t batch, Rng& rng);

struct DetectionRates {
    double tpr = 0.0;
    double tnr = 1.0;
};

/// Positives are malicious clients; rejecting one is a true positive.
/// No malicious clients sampled gives TPR 0; no benign ones gives TNR 1.
DetectionRates compute_tpr_tnr(std::span<const std::size_t> accepted, std::span<const std::size_t> sampled,
                               std::span<const std::size_t> malicious);

/// Fraction of argmax-correct predictions (ties to the lowest class index).
double evaluate_global(const MlpModel& model, const Dataset& test);

struct RoundRecord {
    std::size_t round = 0;  // 1-based
    double acc = 0.0;
    double tpr = 0.0;
    double tnr = 1.0;
    std::vector<std::size_t> sampled;
    std::vector<std::size_t> accepted;
    std::vector<std::size_t> rejected;
    std::vector<std::size_t> malicious_sampled;
    std::size_t gan_iters = 0;
    ScoreBoard scores;  // empty without a defense
    double wall_ms = 0.0;
};

struct RunReport {
    ExperimentConfig config;
    std::vector<std::size_t> malicious;
    std::vector<RoundRecord> rounds;
    double initial_acc = 0.0;
    double final_acc = 0.0;
    double mean_tpr = 0.0;  // over rounds with at least one malicious client sampled
    double mean_tnr = 1.0;  // same rounds; all rounds if there were none
    std::size_t attack_rounds = 0;
};

/// Algorithm state across rounds: data, partition, roles and the global model.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg);

    RoundRecord run_round();

    const ExperimentConfig& config() const { return cfg_; }
    const MlpModel& global_model() const { return global_; }
    void set_global_model(MlpModel model) { global_ = std::move(model); }
    const std::vector<std::size_t>& malicious() const { return malicious_; }
    const std::vector<ClientDataset>& clients() const { return clients_; }
    const Dataset& train_set() const { return train_; }
    const Dataset& test_set() const { return test_; }
    const FeatureBounds& feature_bounds() const { return bounds_; }
    std::size_t rounds_done() const { return round_; }

    /// Ids sampled in round `round` (1-based); depends only on the seed.
    std::vector<std::size_t> sample_clients(std::size_t round) const;

private:
    bool is_malicious(std::size_t id) const;
    std::vector<LocalResult> train_clients(const std::vector<std::size_t>& sampled, std::size_t round) const;

    ExperimentConfig cfg_;
    Dataset train_;
    Dataset test_;
    std::vector<ClientDataset> clients_;
    std::vector<std::size_t> malicious_;
    MlpModel global_;
    FeatureBounds bounds_;
    std::optional<GeneratorModel> generator_;  // kept only for warm starts
    std::size_t round_ = 0;
};

RunReport run_experiment(const ExperimentConfig& cfg);

/// CSV header and rows, exactly as written by `emit_report`.
std::string report_csv(const RunReport& report);
nlohmann::json report_json(const RunReport& report);

/// Writes both files; throws std::runtime_error if either cannot be written.
void emit_report(const RunReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path);

}  // namespace bfl
