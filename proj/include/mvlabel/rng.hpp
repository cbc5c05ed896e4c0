#ifndef MVLABEL_RNG_HPP
#define MVLABEL_RNG_HPP

#include <array>
#include <cstdint>
#include <utility>

namespace mvlabel {

// Portable seeded generator: xoshiro256** with its state filled by four
// splitmix64 steps, exactly as published by Blackman & Vigna. Fixtures
// generated from a seed must reproduce bit-for-bit across platforms and
// reimplementations, so the generator is part of the file-format contract
// rather than an implementation detail. std::mt19937 & friends are not
// used for anything that lands in a fixture.
//
// Draw accounting (relied on by the simulator's documented stream order):
//   next()        consumes 1 state step
//   uniform01()   consumes exactly 1 draw, returns [0, 1) with 53 bits
//   normal_pair() consumes exactly 2 draws (Box-Muller)
//   poisson()     consumes exactly 1 draw (CDF inversion)
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(std::uint64_t seed);

    std::uint64_t next();

    double uniform01();
    double uniform(double lo, double hi);
    std::pair<double, double> normal_pair();

    // Inversion of the Poisson CDF. Intended for modest means (tens);
    // the count is capped at `cap` to bound the scan.
    int poisson(double mean, int cap);

private:
    std::array<std::uint64_t, 4> state_;
};

std::uint64_t splitmix64_next(std::uint64_t& state);

} // namespace mvlabel

#endif
