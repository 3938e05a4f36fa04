#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfl/rng.hpp"

namespace bfl {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
struct Tensor2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Tensor2() = default;
    Tensor2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    bool operator==(const Tensor2&) const = default;
};

/// Flat parameter vector exchanged between clients and server.
struct ParamVector {
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(std::size_t d, double fill = 0.0) : values(d, fill) {}
    explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double s);

    bool operator==(const ParamVector&) const = default;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double s, ParamVector a);

double dot(const ParamVector& a, const ParamVector& b);
double squared_distance(const ParamVector& a, const ParamVector& b);
double norm(const ParamVector& a);

enum class Activation { relu, tanh, identity };

struct DenseLayer {
    Tensor2 weight;  // out x in
    std::vector<double> bias;
    Activation activation = Activation::identity;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }

    bool operator==(const DenseLayer&) const = default;
};

struct MlpModel {
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
    std::size_t parameter_count() const;

    bool operator==(const MlpModel&) const = default;
};

/// Build an MLP with layer widths `dims` (input first). Hidden layers use
/// `hidden`, the last layer uses `output`. Weights are drawn He-uniform for relu
/// and Glorot-uniform otherwise; biases start at zero.
MlpModel make_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng);

/// Throws DimensionError if layers do not chain or bias sizes disagree.
void validate(const MlpModel& model);

Tensor2 forward(const MlpModel& model, const Tensor2& batch);

/// Layer inputs and pre-activations recorded during a forward pass.
struct ForwardTrace {
    std::vector<Tensor2> inputs;          // inputs[l] feeds layer l
    std::vector<Tensor2> preactivations;  // z = W x + b for layer l
    Tensor2 output;
};

ForwardTrace forward_trace(const MlpModel& model, const Tensor2& batch);

struct Gradients {
    std::vector<Tensor2> weights;
    std::vector<std::vector<double>> biases;

    static Gradients zeros_like(const MlpModel& model);
};

struct LossResult {
    double loss = 0.0;
    Tensor2 dlogits;
};

/// Mean softmax cross-entropy over the batch, with gradient
/// (softmax - onehot) / rows. Uses a max-shifted log-sum-exp.
LossResult softmax_cross_entropy(const Tensor2& logits, std::span<const int> labels);

/// Reverse pass from an output gradient. Accumulates parameter gradients into
/// `grads` (shaped like `model`) unless it is null, and returns d(loss)/d(input).
Tensor2 backprop(const MlpModel& model, const ForwardTrace& trace, const Tensor2& doutput, Gradients* grads);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

/// Mean cross-entropy loss and its exact parameter gradients.
BackwardResult backward(const MlpModel& model, const Tensor2& batch, std::span<const int> labels);

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    bool nesterov = true;
};

/// Momentum buffers, owned by whoever owns the model being trained.
struct SgdState {
    Gradients velocity;
    bool initialized = false;
};

/// One SGD step. Weight decay is added to the weight gradients only
/// (g <- g + lambda * w); then v <- mu v + g and the step direction is
/// g + mu v (Nesterov) or v (heavy ball).
void sgd_step(MlpModel& model, const Gradients& grads, const SgdConfig& cfg, SgdState& state);

/// Layer 0 weights (row-major), layer 0 bias, layer 1 weights, ...
ParamVector flatten(const MlpModel& model);

MlpModel unflatten(const MlpModel& shape_template, const ParamVector& params);

/// Index of the largest logit per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Tensor2& logits);

}  // namespace bfl
