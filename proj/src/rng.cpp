#include "mvlabel/rng.hpp"

#include <cmath>

namespace mvlabel {

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace

std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Xoshiro256ss::Xoshiro256ss(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64_next(sm);
}

std::uint64_t Xoshiro256ss::next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Xoshiro256ss::uniform01() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Xoshiro256ss::uniform(double lo, double hi) {
    return lo + uniform01() * (hi - lo);
}

std::pair<double, double> Xoshiro256ss::normal_pair() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53; // log(0) guard without extra draws
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

int Xoshiro256ss::poisson(double mean, int cap) {
    const double u = uniform01();
    if (mean <= 0.0) return 0;
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < cap) {
        ++k;
        p *= mean / k;
        cdf += p;
    }
    return k;
}

} // namespace mvlabel
