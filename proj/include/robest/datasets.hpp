#pragma once

#include <cstdint>

#include "robest/estimators.hpp"

namespace robest {

// 24 copper measurements (ppm) in wholemeal flour
const Dataset& copper_dataset();

// polonium decay counts, frequency table over 0..14, n = 2608
const Dataset& polonium_dataset();

// FNV-1a over the canonical text form; pins the embedded data against edits
std::uint64_t dataset_checksum(const Dataset& data);

}  // namespace robest
