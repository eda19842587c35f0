#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace evoact {

#ifdef EVOACT_REAL64
using real = double;
#else
using real = float;
#endif

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_str(const std::vector<int>& shape);

std::int64_t shape_numel(const std::vector<int>& shape);

// Process-wide accounting of live tensor payload bytes. The bench memory
// probe reads the high-water mark between reset_peak() and the measurement.
namespace alloc_stats {
std::int64_t current_bytes();
std::int64_t peak_bytes();
void reset_peak();
void add(std::int64_t delta);
}  // namespace alloc_stats

}  // namespace evoact
