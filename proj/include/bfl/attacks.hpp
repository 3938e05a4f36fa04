#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bfl/data.hpp"
#include "bfl/nn.hpp"

namespace bfl {

/// A client payload: local weights minus the broadcast global weights.
using Delta = ParamVector;

enum class AttackKind { none, random_noise, sign_flip, label_flip, ipm };

/// How the IPM line search ranks candidate scales.
enum class IpmCriterion {
    surrogate_loss,  // maximize proxy CE of the simulated aggregate
    inner_product,   // maximize <-gamma w~, w~> literally (picks the smallest gamma)
};

struct AttackConfig {
    AttackKind kind = AttackKind::none;
    double epsilon = 0.0;
    std::optional<double> gamma;  // defaults: 5 for sign flip, 4 for label flip
    double sigma = 0.5;
    std::vector<double> gamma_grid{0.5, 1.0, 2.0, 5.0, 10.0};
    IpmCriterion ipm_criterion = IpmCriterion::surrogate_loss;

    double effective_gamma() const;
};

std::string to_string(AttackKind kind);
std::optional<AttackKind> parse_attack_kind(const std::string& name);
std::string to_string(IpmCriterion c);
std::optional<IpmCriterion> parse_ipm_criterion(const std::string& name);

/// round(epsilon * num_clients) distinct ids drawn uniformly, returned sorted.
std::vector<std::size_t> assign_roles(std::size_t num_clients, double epsilon, std::uint64_t seed);

/// Shared per-round noise drawn from N(0, sigma^2 I).
Delta draw_shared_noise(std::size_t dim, double sigma, Rng& rng);

/// Every colluding client submits reference + shared_noise.
Delta random_noise_attack(const Delta& reference, const Delta& shared_noise);

Delta sign_flip_attack(const Delta& delta, double gamma);

/// Rotates labels y -> (y + 1) mod C.
Dataset label_flip_transform(const Dataset& data);

Delta scale_update(const Delta& delta, double gamma);

/// Mean of the deltas, in order.
Delta mean_delta(std::span<const Delta> deltas);

struct IpmResult {
    Delta payload;
    double gamma = 0.0;
    std::vector<double> candidate_scores;  // one per grid entry, in grid order
};

/// Scores one candidate scale: CE on `proxy` of the model
/// w_global + ((n - m) w~ + m (-gamma w~)) / n.
double ipm_surrogate_loss(const Delta& benign_estimate, double gamma, const Dataset& proxy, const MlpModel& global,
                          std::size_t n, std::size_t m);

/// Line search over `gamma_grid`; the payload is -gamma* w~. Ties go to the
/// larger gamma.
IpmResult ipm_attack(const Delta& benign_estimate, std::span<const double> gamma_grid, const Dataset& proxy,
                     const MlpModel& global, std::size_t n, std::size_t m,
                     IpmCriterion criterion = IpmCriterion::surrogate_loss);

}  // namespace bfl
