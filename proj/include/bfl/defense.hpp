#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bfl/aggregators.hpp"
#include "bfl/data.hpp"
#include "bfl/nn.hpp"

namespace bfl {

enum class FilterKind { fixed, adaptive_mean, cluster };
enum class EvalMetric { accuracy, loss };

std::string to_string(FilterKind kind);
std::optional<FilterKind> parse_filter_kind(const std::string& name);
std::string to_string(EvalMetric metric);
std::optional<EvalMetric> parse_eval_metric(const std::string& name);

struct DefenseConfig {
    std::size_t noise_dim = 16;
    std::size_t q = 64;  // synthetic samples per class
    FilterKind filter = FilterKind::adaptive_mean;
    std::optional<double> tau;  // fixed filter only
    EvalMetric metric = EvalMetric::accuracy;
    double gen_lr = 0.01;
    double gen_momentum = 0.9;
    std::size_t gen_max_iter = 2000;
    double early_stop_loss = 0.1;
    std::size_t early_stop_patience = 50;
    std::size_t gen_batch = 64;
    std::size_t gen_hidden = 64;
    bool warm_start = false;
};

/// Box the generator writes into, per feature.
struct FeatureBounds {
    std::vector<double> lo;
    std::vector<double> hi;

    static FeatureBounds uniform(std::size_t dim, double lo, double hi);
};

/// Conditional generator: input is noise followed by a one-hot label; the
/// backbone ends in tanh, mapped affinely onto `bounds`.
struct GeneratorModel {
    MlpModel backbone;
    std::size_t noise_dim = 0;
    int num_classes = 0;
    FeatureBounds bounds;

    std::size_t output_dim() const { return backbone.output_dim(); }
};

GeneratorModel make_generator(std::size_t noise_dim, int num_classes, std::size_t hidden, FeatureBounds bounds,
                              Rng& rng);

/// Noise rows concatenated with one-hot labels.
Tensor2 generator_input(const Tensor2& noise, std::span<const int> labels, int num_classes);

Tensor2 generate(const GeneratorModel& gen, const Tensor2& noise, std::span<const int> labels);

struct GeneratorTraining {
    GeneratorModel generator;
    std::size_t iterations = 0;
    double running_loss = 0.0;  // mean CE over the last `early_stop_patience` iterations
    bool early_stopped = false;
};

/// Trains only the generator so that the frozen classifier assigns each
/// sample its conditioning label. Stops once the mean CE over the last
/// `early_stop_patience` iterations drops below `early_stop_loss`, or after
/// `gen_max_iter` iterations. `initial` continues from an existing generator.
GeneratorTraining train_generator(const MlpModel& classifier, const DefenseConfig& cfg, const FeatureBounds& bounds,
                                  std::uint64_t seed, const GeneratorModel* initial = nullptr);

/// Exactly q samples per class, grouped by class.
Dataset synthesize(const GeneratorModel& gen, std::size_t q, std::uint64_t seed);

/// Accuracy or mean CE of `params` (shaped like `classifier_shape`) on `syn`.
double eval_update(const ParamVector& params, const MlpModel& classifier_shape, const Dataset& syn,
                   EvalMetric metric);

struct ScoreEntry {
    std::size_t client_id = 0;
    double metric = 0.0;
    double score = 0.0;  // higher is better
    bool accepted = false;
};

using ScoreBoard = std::vector<ScoreEntry>;

double orient(double metric, EvalMetric kind);

/// Evaluates every update on `syn`; entries are ordered by client id.
ScoreBoard score_updates(std::span<const ClientUpdate> updates, const MlpModel& classifier_shape,
                         const Dataset& syn, EvalMetric metric);

struct TwoMeans {
    std::vector<std::size_t> lower;  // ids
    std::vector<std::size_t> upper;  // ids; holds the best-scoring entry
    double wcss = 0.0;
};

/// Within-cluster sum of squares of a set of scores.
double wcss(std::span<const double> values);

/// Optimal 1-D two-means by scanning every split of the sorted scores.
/// Entries sort by score, then by descending id, so the best entry (highest
/// score, lowest id among equals) is last and always lands in `upper`. Equal
/// WCSS prefers the split with the larger upper cluster.
TwoMeans kmeans_1d_two(std::span<const ScoreEntry> entries);

/// Marks accepted entries in place and returns the accepted ids, sorted.
/// All rules keep scores strictly above their threshold; the cluster rule
/// keeps the cluster holding the best client.
std::vector<std::size_t> filter_updates(ScoreBoard& board, FilterKind filter, std::optional<double> tau);

struct DefenseOutcome {
    GeneratorTraining training;
    Dataset synthetic;
    ScoreBoard board;
    std::vector<std::size_t> accepted;
};

/// One server-side pass: train a generator on the frozen global model,
/// synthesize a validation set, score and filter. Reads no client data.
DefenseOutcome run_defense(const MlpModel& global, std::span<const ClientUpdate> updates, const DefenseConfig& cfg,
                           const FeatureBounds& bounds, std::uint64_t seed,
                           const GeneratorModel* warm_start = nullptr);

}  // namespace bfl
