#pragma once

#include <filesystem>
#include <iosfwd>

#include "hcope/core.hpp"

namespace hcope {

inline constexpr const char* kDatasetSchema = "hcope-dataset v1";

// Line format after the header, tab separated:
//   env_id  behavior_id  terminal(0|1)  state_kind+dim  action_kind+dim  steps  final_state
// kind is 'd' (index) or 'c' (vector); steps is the flat space-separated list
// (state..., action..., reward) per step; final_state is '-' when absent.
// Reals use 17 significant digits so a save/load round trip is exact.

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Decimal text with 17 significant digits.
std::string format_real(double x);

}  // namespace hcope
