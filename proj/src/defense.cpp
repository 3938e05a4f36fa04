#include "bfl/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bfl {

std::string to_string(FilterKind kind)
{
    switch (kind) {
    case FilterKind::fixed:
        return "fixed";
    case FilterKind::adaptive_mean:
        return "adaptive_mean";
    case FilterKind::cluster:
        return "cluster";
    }
    return "adaptive_mean";
}

std::optional<FilterKind> parse_filter_kind(const std::string& name)
{
    for (auto k : {FilterKind::fixed, FilterKind::adaptive_mean, FilterKind::cluster}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::string to_string(EvalMetric metric) { return metric == EvalMetric::loss ? "loss" : "accuracy"; }

std::optional<EvalMetric> parse_eval_metric(const std::string& name)
{
    if (name == "accuracy") {
        return EvalMetric::accuracy;
    }
    if (name == "loss") {
        return EvalMetric::loss;
    }
    return std::nullopt;
}

FeatureBounds FeatureBounds::uniform(std::size_t dim, double lo, double hi)
{
    return {std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
}

GeneratorModel make_generator(std::size_t noise_dim, int num_classes, std::size_t hidden, FeatureBounds bounds,
                              Rng& rng)
{
    if (bounds.lo.size() != bounds.hi.size() || bounds.lo.empty()) {
        throw DimensionError("generator bounds must be non-empty and of equal length");
    }
    const std::size_t dims[] = {noise_dim + static_cast<std::size_t>(num_classes), hidden, hidden, bounds.lo.size()};
    GeneratorModel gen;
    gen.backbone = make_mlp(dims, Activation::relu, Activation::tanh, rng);
    gen.noise_dim = noise_dim;
    gen.num_classes = num_classes;
    gen.bounds = std::move(bounds);
    return gen;
}

Tensor2 generator_input(const Tensor2& noise, std::span<const int> labels, int num_classes)
{
    if (noise.rows != labels.size()) {
        throw DimensionError("noise rows and label count differ");
    }
    const std::size_t width = noise.cols + static_cast<std::size_t>(num_classes);
    Tensor2 input(noise.rows, width);
    for (std::size_t r = 0; r < noise.rows; ++r) {
        const auto src = noise.row(r);
        std::copy(src.begin(), src.end(), input.row(r).begin());
        input(r, noise.cols + static_cast<std::size_t>(labels[r])) = 1.0;
    }
    return input;
}

namespace {

// tanh output t in [-1, 1] -> lo + (hi - lo)(t + 1) / 2
Tensor2 to_feature_range(const Tensor2& t, const FeatureBounds& b)
{
    Tensor2 out = t;
    for (std::size_t r = 0; r < out.rows; ++r) {
        for (std::size_t c = 0; c < out.cols; ++c) {
            out(r, c) = b.lo[c] + 0.5 * (b.hi[c] - b.lo[c]) * (t(r, c) + 1.0);
        }
    }
    return out;
}

Tensor2 normal_matrix(std::size_t rows, std::size_t cols, Rng& rng)
{
    Tensor2 m(rows, cols);
    for (double& v : m.values) {
        v = rng.normal();
    }
    return m;
}

}  // namespace

Tensor2 generate(const GeneratorModel& gen, const Tensor2& noise, std::span<const int> labels)
{
    return to_feature_range(forward(gen.backbone, generator_input(noise, labels, gen.num_classes)), gen.bounds);
}

GeneratorTraining train_generator(const MlpModel& classifier, const DefenseConfig& cfg, const FeatureBounds& bounds,
                                  std::uint64_t seed, const GeneratorModel* initial)
{
    if (bounds.lo.size() != classifier.input_dim()) {
        throw DimensionError("generator bounds do not match the classifier input width");
    }
    const int num_classes = static_cast<int>(classifier.output_dim());
    Rng init_rng(derive_seed(seed, Stream::generator_init));
    Rng noise_rng(derive_seed(seed, Stream::generator_noise));

    GeneratorTraining result;
    result.generator =
        initial != nullptr ? *initial : make_generator(cfg.noise_dim, num_classes, cfg.gen_hidden, bounds, init_rng);
    GeneratorModel& gen = result.generator;

    const SgdConfig sgd{cfg.gen_lr, cfg.gen_momentum, 0.0, true};
    SgdState state;
    const std::size_t window = std::max<std::size_t>(cfg.early_stop_patience, 1);
    std::vector<double> recent(window, 0.0);
    double window_sum = 0.0;
    std::vector<int> labels(cfg.gen_batch);

    for (std::size_t iter = 0; iter < cfg.gen_max_iter; ++iter) {
        const Tensor2 noise = normal_matrix(cfg.gen_batch, gen.noise_dim, noise_rng);
        for (int& y : labels) {
            y = static_cast<int>(noise_rng.below(static_cast<std::uint64_t>(num_classes)));
        }
        const ForwardTrace gen_trace = forward_trace(gen.backbone, generator_input(noise, labels, num_classes));
        const Tensor2 samples = to_feature_range(gen_trace.output, gen.bounds);
        const ForwardTrace cls_trace = forward_trace(classifier, samples);
        const LossResult ce = softmax_cross_entropy(cls_trace.output, labels);

        // The classifier stays frozen: only the gradient w.r.t. its input is needed.
        Tensor2 dsamples = backprop(classifier, cls_trace, ce.dlogits, nullptr);
        for (std::size_t r = 0; r < dsamples.rows; ++r) {
            for (std::size_t c = 0; c < dsamples.cols; ++c) {
                dsamples(r, c) *= 0.5 * (gen.bounds.hi[c] - gen.bounds.lo[c]);
            }
        }
        Gradients grads = Gradients::zeros_like(gen.backbone);
        backprop(gen.backbone, gen_trace, dsamples, &grads);
        sgd_step(gen.backbone, grads, sgd, state);

        double& slot = recent[iter % window];
        window_sum += ce.loss - slot;
        slot = ce.loss;
        result.iterations = iter + 1;
        const std::size_t filled = std::min(result.iterations, window);
        result.running_loss = window_sum / static_cast<double>(filled);
        if (result.iterations >= window && result.running_loss < cfg.early_stop_loss) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

Dataset synthesize(const GeneratorModel& gen, std::size_t q, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, Stream::synthesis));
    Dataset syn;
    syn.num_classes = gen.num_classes;
    for (int c = 0; c < gen.num_classes; ++c) {
        syn.labels.insert(syn.labels.end(), q, c);
    }
    const Tensor2 noise = normal_matrix(syn.labels.size(), gen.noise_dim, rng);
    syn.features = generate(gen, noise, syn.labels);
    return syn;
}

double eval_update(const ParamVector& params, const MlpModel& classifier_shape, const Dataset& syn,
                   EvalMetric metric)
{
    const MlpModel model = unflatten(classifier_shape, params);
    const Tensor2 logits = forward(model, syn.features);
    if (metric == EvalMetric::loss) {
        return softmax_cross_entropy(logits, syn.labels).loss;
    }
    if (syn.size() == 0) {
        return 0.0;
    }
    const auto predicted = argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        correct += predicted[i] == syn.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(syn.size());
}

double orient(double metric, EvalMetric kind) { return kind == EvalMetric::loss ? -metric : metric; }

ScoreBoard score_updates(std::span<const ClientUpdate> updates, const MlpModel& classifier_shape,
                         const Dataset& syn, EvalMetric metric)
{
    ScoreBoard board;
    board.reserve(updates.size());
    for (const auto& u : updates) {
        ScoreEntry e;
        e.client_id = u.client_id;
        e.metric = eval_update(u.params, classifier_shape, syn, metric);
        e.score = orient(e.metric, metric);
        board.push_back(e);
    }
    std::sort(board.begin(), board.end(),
              [](const ScoreEntry& a, const ScoreEntry& b) { return a.client_id < b.client_id; });
    return board;
}

double wcss(std::span<const double> values)
{
    if (values.empty()) {
        return 0.0;
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double acc = 0.0;
    for (double v : values) {
        acc += (v - mean) * (v - mean);
    }
    return acc;
}

TwoMeans kmeans_1d_two(std::span<const ScoreEntry> entries)
{
    if (entries.size() < 2) {
        throw std::invalid_argument("two-means needs at least two scores");
    }
    std::vector<ScoreEntry> sorted(entries.begin(), entries.end());
    std::sort(sorted.begin(), sorted.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
        if (a.score != b.score) {
            return a.score < b.score;
        }
        return a.client_id > b.client_id;
    });
    std::vector<double> values;
    for (const auto& e : sorted) {
        values.push_back(e.score);
    }
    const std::span<const double> all(values);

    std::size_t best_split = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < values.size(); ++k) {
        const double cost = wcss(all.first(k)) + wcss(all.subspan(k));
        if (cost < best) {
            best = cost;
            best_split = k;
        }
    }
    TwoMeans out;
    out.wcss = best;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        (i < best_split ? out.lower : out.upper).push_back(sorted[i].client_id);
    }
    std::sort(out.lower.begin(), out.lower.end());
    std::sort(out.upper.begin(), out.upper.end());
    return out;
}

std::vector<std::size_t> filter_updates(ScoreBoard& board, FilterKind filter, std::optional<double> tau)
{
    if (board.empty()) {
        throw std::invalid_argument("cannot filter an empty scoreboard");
    }
    switch (filter) {
    case FilterKind::fixed: {
        if (!tau) {
            throw std::invalid_argument("fixed filter needs a threshold tau");
        }
        for (auto& e : board) {
            e.accepted = e.score > *tau;
        }
        break;
    }
    case FilterKind::adaptive_mean: {
        double sum = 0.0;
        for (const auto& e : board) {
            sum += e.score;
        }
        const double threshold = sum / static_cast<double>(board.size());
        for (auto& e : board) {
            e.accepted = e.score > threshold;
        }
        break;
    }
    case FilterKind::cluster: {
        if (board.size() == 1) {
            board.front().accepted = true;
            break;
        }
        const TwoMeans split = kmeans_1d_two(board);
        for (auto& e : board) {
            e.accepted = std::binary_search(split.upper.begin(), split.upper.end(), e.client_id);
        }
        break;
    }
    }
    std::vector<std::size_t> accepted;
    for (const auto& e : board) {
        if (e.accepted) {
            accepted.push_back(e.client_id);
        }
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

DefenseOutcome run_defense(const MlpModel& global, std::span<const ClientUpdate> updates, const DefenseConfig& cfg,
                           const FeatureBounds& bounds, std::uint64_t seed, const GeneratorModel* warm_start)
{
    DefenseOutcome out;
    out.training = train_generator(global, cfg, bounds, seed, warm_start);
    out.synthetic = synthesize(out.training.generator, cfg.q, seed);
    out.board = score_updates(updates, global, out.synthetic, cfg.metric);
    out.accepted = filter_updates(out.board, cfg.filter, cfg.tau);
    return out;
}

}  // namespace bfl
