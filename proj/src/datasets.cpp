#include "robest/datasets.hpp"

#include <cstdio>

namespace robest {

const Dataset& copper_dataset() {
    static const Dataset data = Dataset::from_observations(
        {2.20, 2.20, 2.40, 2.40, 2.50, 2.70, 2.80, 2.90, 3.03, 3.03, 3.10, 3.37,
         3.40, 3.40, 3.40, 3.50, 3.60, 3.70, 3.70, 3.70, 3.70, 3.77, 5.28, 28.95},
        "copper");
    return data;
}

const Dataset& polonium_dataset() {
    static const Dataset data = Dataset::from_frequency_table(
        {{0, 57}, {1, 203}, {2, 383}, {3, 525}, {4, 532}, {5, 408}, {6, 273}, {7, 139},
         {8, 45}, {9, 27}, {10, 10}, {11, 4}, {12, 0}, {13, 1}, {14, 1}},
        "polonium");
    return data;
}

std::uint64_t dataset_checksum(const Dataset& data) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV offset basis
    auto mix = [&h](const char* s, int len) {
        for (int i = 0; i < len; ++i) {
            h ^= static_cast<unsigned char>(s[i]);
            h *= 1099511628211ULL;
        }
    };
    char buf[64];
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        const int len = std::snprintf(buf, sizeof buf, "%.6g:%.6g;", data.values[i],
                                      data.counts[i]);
        mix(buf, len);
    }
    return h;
}

}  // namespace robest
