#include "bfl/nn.hpp"

#include <algorithm>
#include <cmath>

namespace bfl {

namespace {

void require_same_size(const ParamVector& a, const ParamVector& b)
{
    if (a.size() != b.size()) {
        throw DimensionError("parameter vectors differ in length: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
}

double activate(Activation act, double z)
{
    switch (act) {
    case Activation::relu:
        return z > 0.0 ? z : 0.0;
    case Activation::tanh:
        return std::tanh(z);
    case Activation::identity:
        break;
    }
    return z;
}

double activation_derivative(Activation act, double z)
{
    switch (act) {
    case Activation::relu:
        return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    case Activation::identity:
        break;
    }
    return 1.0;
}

// z = x W^T + b, one row per sample.
Tensor2 affine(const DenseLayer& layer, const Tensor2& x)
{
    Tensor2 z(x.rows, layer.out_dim());
    const std::size_t in = layer.in_dim();
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* xr = x.values.data() + r * in;
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const double* wo = layer.weight.values.data() + o * in;
            double acc = layer.bias[o];
            for (std::size_t i = 0; i < in; ++i) {
                acc += wo[i] * xr[i];
            }
            z(r, o) = acc;
        }
    }
    return z;
}

}  // namespace

ParamVector& ParamVector::operator+=(const ParamVector& other)
{
    require_same_size(*this, other);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] += other.values[i];
    }
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other)
{
    require_same_size(*this, other);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] -= other.values[i];
    }
    return *this;
}

ParamVector& ParamVector::operator*=(double s)
{
    for (double& v : values) {
        v *= s;
    }
    return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double s, ParamVector a) { return a *= s; }

double dot(const ParamVector& a, const ParamVector& b)
{
    require_same_size(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

double squared_distance(const ParamVector& a, const ParamVector& b)
{
    require_same_size(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

double norm(const ParamVector& a) { return std::sqrt(dot(a, a)); }

std::size_t MlpModel::parameter_count() const
{
    std::size_t count = 0;
    for (const auto& layer : layers) {
        count += layer.weight.values.size() + layer.bias.size();
    }
    return count;
}

MlpModel make_mlp(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng)
{
    if (dims.size() < 2) {
        throw DimensionError("an MLP needs at least an input and an output width");
    }
    MlpModel model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const bool last = l + 2 == dims.size();
        DenseLayer layer;
        layer.activation = last ? output : hidden;
        layer.weight = Tensor2(dims[l + 1], dims[l]);
        layer.bias.assign(dims[l + 1], 0.0);
        const double fan_in = static_cast<double>(dims[l]);
        const double fan_out = static_cast<double>(dims[l + 1]);
        const double limit = layer.activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                                  : std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : layer.weight.values) {
            w = (2.0 * rng.uniform() - 1.0) * limit;
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

void validate(const MlpModel& model)
{
    if (model.layers.empty()) {
        throw DimensionError("model has no layers");
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        if (layer.bias.size() != layer.out_dim()) {
            throw DimensionError("layer " + std::to_string(l) + ": bias length does not match weight rows");
        }
        if (layer.weight.values.size() != layer.weight.rows * layer.weight.cols) {
            throw DimensionError("layer " + std::to_string(l) + ": weight storage does not match its shape");
        }
        if (l > 0 && model.layers[l - 1].out_dim() != layer.in_dim()) {
            throw DimensionError("layer " + std::to_string(l) + ": input width does not match previous output");
        }
    }
}

ForwardTrace forward_trace(const MlpModel& model, const Tensor2& batch)
{
    if (batch.cols != model.input_dim()) {
        throw DimensionError("batch has " + std::to_string(batch.cols) + " columns, model expects " +
                             std::to_string(model.input_dim()));
    }
    ForwardTrace trace;
    trace.inputs.reserve(model.layers.size());
    trace.preactivations.reserve(model.layers.size());
    Tensor2 x = batch;
    for (const auto& layer : model.layers) {
        Tensor2 z = affine(layer, x);
        Tensor2 a = z;
        for (double& v : a.values) {
            v = activate(layer.activation, v);
        }
        trace.inputs.push_back(std::move(x));
        trace.preactivations.push_back(std::move(z));
        x = std::move(a);
    }
    trace.output = std::move(x);
    return trace;
}

Tensor2 forward(const MlpModel& model, const Tensor2& batch)
{
    if (batch.cols != model.input_dim()) {
        throw DimensionError("batch has " + std::to_string(batch.cols) + " columns, model expects " +
                             std::to_string(model.input_dim()));
    }
    Tensor2 x = batch;
    for (const auto& layer : model.layers) {
        x = affine(layer, x);
        for (double& v : x.values) {
            v = activate(layer.activation, v);
        }
    }
    return x;
}

Gradients Gradients::zeros_like(const MlpModel& model)
{
    Gradients g;
    for (const auto& layer : model.layers) {
        g.weights.emplace_back(layer.weight.rows, layer.weight.cols);
        g.biases.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

LossResult softmax_cross_entropy(const Tensor2& logits, std::span<const int> labels)
{
    if (labels.size() != logits.rows) {
        throw DimensionError("label count " + std::to_string(labels.size()) + " does not match logit rows " +
                             std::to_string(logits.rows));
    }
    LossResult result;
    result.dlogits = Tensor2(logits.rows, logits.cols);
    if (logits.rows == 0) {
        return result;
    }
    const double inv_batch = 1.0 / static_cast<double>(logits.rows);
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const int label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= logits.cols) {
            throw std::out_of_range("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(logits.cols) + ")");
        }
        const auto row = logits.row(r);
        const double shift = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) {
            sum += std::exp(v - shift);
        }
        const double log_sum = std::log(sum);
        total += -(row[static_cast<std::size_t>(label)] - shift - log_sum);
        for (std::size_t c = 0; c < logits.cols; ++c) {
            const double p = std::exp(row[c] - shift - log_sum);
            result.dlogits(r, c) = (p - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_batch;
        }
    }
    result.loss = total * inv_batch;
    return result;
}

Tensor2 backprop(const MlpModel& model, const ForwardTrace& trace, const Tensor2& doutput, Gradients* grads)
{
    Tensor2 upstream = doutput;
    for (std::size_t l = model.layers.size(); l-- > 0;) {
        const auto& layer = model.layers[l];
        const Tensor2& z = trace.preactivations[l];
        const Tensor2& x = trace.inputs[l];
        Tensor2 dz = upstream;
        if (layer.activation != Activation::identity) {
            for (std::size_t i = 0; i < dz.values.size(); ++i) {
                dz.values[i] *= activation_derivative(layer.activation, z.values[i]);
            }
        }
        double* gw = grads ? grads->weights[l].values.data() : nullptr;
        double* gb = grads ? grads->biases[l].data() : nullptr;
        const std::size_t in = layer.in_dim();
        const std::size_t out = layer.out_dim();
        Tensor2 dx(x.rows, in);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const double* xr = x.values.data() + r * in;
            double* dxr = dx.values.data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double g = dz(r, o);
                if (g == 0.0) {
                    continue;
                }
                const double* wo = layer.weight.values.data() + o * in;
                if (gw != nullptr) {
                    gb[o] += g;
                    double* gwo = gw + o * in;
                    for (std::size_t i = 0; i < in; ++i) {
                        gwo[i] += g * xr[i];
                    }
                }
                for (std::size_t i = 0; i < in; ++i) {
                    dxr[i] += g * wo[i];
                }
            }
        }
        upstream = std::move(dx);
    }
    return upstream;
}

BackwardResult backward(const MlpModel& model, const Tensor2& batch, std::span<const int> labels)
{
    const ForwardTrace trace = forward_trace(model, batch);
    LossResult ce = softmax_cross_entropy(trace.output, labels);
    BackwardResult result;
    result.loss = ce.loss;
    result.grads = Gradients::zeros_like(model);
    backprop(model, trace, ce.dlogits, &result.grads);
    return result;
}

void sgd_step(MlpModel& model, const Gradients& grads, const SgdConfig& cfg, SgdState& state)
{
    if (!state.initialized) {
        state.velocity = Gradients::zeros_like(model);
        state.initialized = true;
    }
    const double lr = cfg.learning_rate;
    const double mu = cfg.momentum;
    auto update = [&](double& w, double g, double& v) {
        v = mu * v + g;
        const double direction = cfg.nesterov ? g + mu * v : v;
        w -= lr * direction;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        auto& vw = state.velocity.weights[l].values;
        const auto& gw = grads.weights[l].values;
        for (std::size_t i = 0; i < layer.weight.values.size(); ++i) {
            double& w = layer.weight.values[i];
            update(w, gw[i] + cfg.weight_decay * w, vw[i]);
        }
        auto& vb = state.velocity.biases[l];
        const auto& gb = grads.biases[l];
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            update(layer.bias[i], gb[i], vb[i]);
        }
    }
}

ParamVector flatten(const MlpModel& model)
{
    ParamVector out;
    out.values.reserve(model.parameter_count());
    for (const auto& layer : model.layers) {
        out.values.insert(out.values.end(), layer.weight.values.begin(), layer.weight.values.end());
        out.values.insert(out.values.end(), layer.bias.begin(), layer.bias.end());
    }
    return out;
}

MlpModel unflatten(const MlpModel& shape_template, const ParamVector& params)
{
    if (params.size() != shape_template.parameter_count()) {
        throw DimensionError("parameter vector has length " + std::to_string(params.size()) + ", model needs " +
                             std::to_string(shape_template.parameter_count()));
    }
    MlpModel model = shape_template;
    auto it = params.values.begin();
    for (auto& layer : model.layers) {
        const auto nw = static_cast<std::ptrdiff_t>(layer.weight.values.size());
        std::copy(it, it + nw, layer.weight.values.begin());
        it += nw;
        const auto nb = static_cast<std::ptrdiff_t>(layer.bias.size());
        std::copy(it, it + nb, layer.bias.begin());
        it += nb;
    }
    return model;
}

std::vector<int> argmax_rows(const Tensor2& logits)
{
    std::vector<int> out(logits.rows, 0);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const auto row = logits.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) {
                best = c;
            }
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

}  // namespace bfl
