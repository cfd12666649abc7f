#pragma once

#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include "hdspc/types.hpp"

namespace hdspc {

using Engine = std::mt19937_64;

/// Independent engine for replication `stream` of an experiment seeded with
/// `seed`. Parallel and serial runs draw the same numbers for a given stream.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eedu};
    return Engine(seq);
}

// Ziggurat normal sampler; much faster than std::normal_distribution for the
// long Monte-Carlo loops.
class NormalSampler {
public:
    double operator()(Engine& eng) { return dist_(eng); }

    void fill(Engine& eng, Eigen::Ref<Vector> out) {
        for (Index i = 0; i < out.size(); ++i) out[i] = dist_(eng);
    }

private:
    boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
/// concurrency). fn must only write to slot i of its outputs.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace hdspc
