#include "evoact/core.hpp"

#include <atomic>
#include <sstream>

namespace evoact {

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

namespace alloc_stats {

namespace {
std::atomic<std::int64_t> g_current{0};
std::atomic<std::int64_t> g_peak{0};
}  // namespace

std::int64_t current_bytes() { return g_current.load(std::memory_order_relaxed); }
std::int64_t peak_bytes() { return g_peak.load(std::memory_order_relaxed); }

void reset_peak() { g_peak.store(g_current.load(std::memory_order_relaxed), std::memory_order_relaxed); }

void add(std::int64_t delta) {
    std::int64_t cur = g_current.fetch_add(delta, std::memory_order_relaxed) + delta;
    std::int64_t peak = g_peak.load(std::memory_order_relaxed);
    while (cur > peak && !g_peak.compare_exchange_weak(peak, cur, std::memory_order_relaxed)) {
    }
}

}  // namespace alloc_stats

}  // namespace evoact
