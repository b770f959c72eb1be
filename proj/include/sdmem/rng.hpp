#pragma once

#include <boost/random/normal_distribution.hpp>

#include <cstdint>
#include <initializer_list>
#include <random>

#include "sdmem/model.hpp"

namespace sdmem {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Order-sensitive hash of a key path, e.g. (seed, cell, replicate, subject).
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> keys);

inline Engine make_stream(std::uint64_t stream_seed) { return Engine(stream_seed); }

// Standard normal draws (ziggurat).
class NormalSource {
public:
    explicit NormalSource(Engine& engine) : engine_(engine) {}

    double operator()() { return dist_(engine_); }

    void fill(VecOut out) {
        for (Eigen::Index k = 0; k < out.size(); ++k) out[k] = dist_(engine_);
    }

private:
    Engine& engine_;
    boost::random::normal_distribution<double> dist_;
};

}  // namespace sdmem
