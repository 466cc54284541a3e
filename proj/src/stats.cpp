#include "ktl/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "ktl/errors.hpp"

namespace ktl {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t master, std::uint64_t i) {
    return splitmix64(splitmix64(master) ^ splitmix64(i + 0x632be59bd9b4e019ULL));
}

namespace {
std::atomic<int> g_threads{0};

int default_threads() {
    if (const char* env = std::getenv("KTL_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}
} // namespace

int thread_count() {
    int n = g_threads.load();
    return n > 0 ? n : default_threads();
}

void set_thread_count(int n) {
    if (n < 0) throw InputError("thread count must be >= 0");
    g_threads.store(n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr err;
    std::size_t err_index = n;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(mu);
                if (i < err_index) err_index = i, err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

double quantile(std::vector<double> x, double q) {
    if (x.empty()) throw InputError("quantile of an empty sample");
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - lo) * (x[hi] - x[lo]);
}

Summary summarize(const std::vector<double>& x) {
    Summary s;
    s.n = x.size();
    if (x.empty()) return s;
    double sum = 0.0;
    for (double v : x) sum += v;
    s.mean = sum / s.n;
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : x) ss += (v - s.mean) * (v - s.mean);
        s.stderr_ = std::sqrt(ss / (s.n - 1) / s.n);
    }
    s.median = quantile(x, 0.5);
    s.q1 = quantile(x, 0.25);
    s.q3 = quantile(x, 0.75);
    return s;
}

double log_sum_exp(const std::vector<double>& x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

} // namespace ktl
