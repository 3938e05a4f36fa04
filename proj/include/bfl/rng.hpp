#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace bfl {

/// Purpose tags for independent random streams derived from one master seed.
enum class Stream : std::uint64_t {
    data = 1,
    partition = 2,
    roles = 3,
    sampling = 4,
    client_training = 5,
    attack_noise = 6,
    generator_init = 7,
    generator_noise = 8,
    synthesis = 9,
    model_init = 10,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Derive a seed for (purpose, a, b) from a master seed. Pure function of its
/// arguments, so streams do not depend on call order or thread schedule.
std::uint64_t derive_seed(std::uint64_t master, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0);

/// Seeded generator with portable distributions.
///
/// std::mt19937_64 output is fixed by the standard, but the std:: distribution
/// objects are not, so sampling is implemented here to keep outputs identical
/// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Gamma(shape, 1) via Marsaglia-Tsang, with the boost for shape < 1.
    double gamma(double shape);

    template <typename T>
    void shuffle(std::span<T> items)
    {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace bfl
