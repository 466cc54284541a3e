#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace ktl {

std::uint64_t splitmix64(std::uint64_t x);
/// Seed of stream i derived from a master seed (counter-based split).
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t i);

/// Worker count for path-level parallelism. Defaults to KTL_THREADS or the
/// hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [0, n) on thread_count() workers. Exceptions are
/// rethrown on the caller (the one from the lowest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct Summary {
    std::size_t n = 0;
    double mean = 0.0;
    double stderr_ = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
};

/// Linear-interpolated quantile of a sample (copied and sorted).
double quantile(std::vector<double> x, double q);
Summary summarize(const std::vector<double>& x);

/// log(sum exp(x_i)) without overflow; -inf for an empty input.
double log_sum_exp(const std::vector<double>& x);

} // namespace ktl
