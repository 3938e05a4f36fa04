#include "bfl/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace bfl {

double AttackConfig::effective_gamma() const
{
    if (gamma) {
        return *gamma;
    }
    return kind == AttackKind::label_flip ? 4.0 : 5.0;
}

std::string to_string(AttackKind kind)
{
    switch (kind) {
    case AttackKind::none:
        return "none";
    case AttackKind::random_noise:
        return "random_noise";
    case AttackKind::sign_flip:
        return "sign_flip";
    case AttackKind::label_flip:
        return "label_flip";
    case AttackKind::ipm:
        return "ipm";
    }
    return "none";
}

std::optional<AttackKind> parse_attack_kind(const std::string& name)
{
    for (auto k : {AttackKind::none, AttackKind::random_noise, AttackKind::sign_flip, AttackKind::label_flip,
                   AttackKind::ipm}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    return std::nullopt;
}

std::string to_string(IpmCriterion c)
{
    return c == IpmCriterion::inner_product ? "inner_product" : "surrogate_loss";
}

std::optional<IpmCriterion> parse_ipm_criterion(const std::string& name)
{
    if (name == "surrogate_loss") {
        return IpmCriterion::surrogate_loss;
    }
    if (name == "inner_product") {
        return IpmCriterion::inner_product;
    }
    return std::nullopt;
}

std::vector<std::size_t> assign_roles(std::size_t num_clients, double epsilon, std::uint64_t seed)
{
    if (!(epsilon >= 0.0 && epsilon < 1.0)) {
        throw std::invalid_argument("malicious fraction must lie in [0, 1)");
    }
    const auto count = static_cast<std::size_t>(std::llround(epsilon * static_cast<double>(num_clients)));
    std::vector<std::size_t> ids(num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(ids));
    ids.resize(std::min(count, num_clients));
    std::sort(ids.begin(), ids.end());
    return ids;
}

Delta draw_shared_noise(std::size_t dim, double sigma, Rng& rng)
{
    Delta noise(dim);
    for (double& v : noise.values) {
        v = sigma * rng.normal();
    }
    return noise;
}

Delta random_noise_attack(const Delta& reference, const Delta& shared_noise) { return reference + shared_noise; }

Delta sign_flip_attack(const Delta& delta, double gamma) { return -gamma * delta; }

Dataset label_flip_transform(const Dataset& data)
{
    if (data.num_classes < 2) {
        throw std::invalid_argument("label flipping needs at least two classes");
    }
    Dataset out = data;
    for (int& y : out.labels) {
        y = (y + 1) % data.num_classes;
    }
    return out;
}

Delta scale_update(const Delta& delta, double gamma) { return gamma * delta; }

Delta mean_delta(std::span<const Delta> deltas)
{
    if (deltas.empty()) {
        throw std::invalid_argument("cannot average zero deltas");
    }
    Delta acc(deltas.front().size());
    for (const auto& d : deltas) {
        acc += d;
    }
    acc *= 1.0 / static_cast<double>(deltas.size());
    return acc;
}

double ipm_surrogate_loss(const Delta& benign_estimate, double gamma, const Dataset& proxy, const MlpModel& global,
                          std::size_t n, std::size_t m)
{
    const double honest = static_cast<double>(n - m);
    const double attackers = static_cast<double>(m);
    const double coeff = (honest - attackers * gamma) / static_cast<double>(n);
    const ParamVector aggregate = flatten(global) + coeff * benign_estimate;
    const MlpModel simulated = unflatten(global, aggregate);
    return softmax_cross_entropy(forward(simulated, proxy.features), proxy.labels).loss;
}

IpmResult ipm_attack(const Delta& benign_estimate, std::span<const double> gamma_grid, const Dataset& proxy,
                     const MlpModel& global, std::size_t n, std::size_t m, IpmCriterion criterion)
{
    if (gamma_grid.empty()) {
        throw std::invalid_argument("IPM needs a non-empty gamma grid");
    }
    if (m >= n) {
        throw std::invalid_argument("IPM needs fewer attackers than participants");
    }
    IpmResult result;
    const double self_dot = dot(benign_estimate, benign_estimate);
    std::size_t best = 0;
    for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
        const double g = gamma_grid[k];
        const double score = criterion == IpmCriterion::surrogate_loss
                                 ? ipm_surrogate_loss(benign_estimate, g, proxy, global, n, m)
                                 : -g * self_dot;
        result.candidate_scores.push_back(score);
        const double best_score = result.candidate_scores[best];
        if (score > best_score || (score == best_score && g > gamma_grid[best])) {
            best = k;
        }
    }
    result.gamma = gamma_grid[best];
    result.payload = -result.gamma * benign_estimate;
    return result;
}

}  // namespace bfl
