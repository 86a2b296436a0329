#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "isect/clustering.hpp"
#include "isect/gp_regression.hpp"

namespace isect {

inline constexpr int kReconstructedVersion = 1;

// A reconstructed set is stored as its training samples plus the fitted
// offsets and hyperparameters; loading refits the posteriors, which is
// deterministic and much cheaper than the hyperparameter search.
std::string trajectory_set_to_json(const TrajectorySet& set);
TrajectorySet trajectory_set_from_json(const std::string& text);
void save_trajectory_set(const TrajectorySet& set, const std::filesystem::path& path);
TrajectorySet load_trajectory_set(const std::filesystem::path& path);

// `trajectory_id,cluster`, one row per member in set order.
void save_labels(const std::filesystem::path& path, std::span<const TrajectoryId> ids, std::span<const int> labels);

// Labels aligned with `set`; throws SchemaMismatch if an id is missing or
// unknown, Parse on malformed rows.
ClusterLabeling load_labels(const std::filesystem::path& path, const TrajectorySet& set);

}  // namespace isect
