#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isect/classifier.hpp"
#include "isect/trajectory_data.hpp"
#include "isect/traffic_model.hpp"

namespace isect {

struct EvaluationOptions {
    ClassifierOptions classifier{};
    PreprocessConfig preprocess{};
    std::size_t threads{0};
    // Online latency is measured separately on the first `latency_sample`
    // tracks, repeated `latency_repetitions` times; the median is reported.
    std::size_t latency_sample{100};
    int latency_repetitions{5};
};

struct Quantiles {
    double min{0.0}, p10{0.0}, p25{0.0}, median{0.0}, p75{0.0}, p90{0.0}, max{0.0}, mean{0.0};
};

// Linear interpolation between order statistics; values must be non-empty.
Quantiles quantiles(std::vector<double> values);

struct ClusterReport {
    int cluster{0};
    std::size_t count{0};
    std::size_t converged{0};
    std::vector<double> classification_times;  // converged tracks only
    std::optional<Quantiles> summary;
};

struct LatencyReport {
    double refit_seconds{0.0};     // observation GP refit per frame
    double update_seconds{0.0};    // distance accumulation per frame
    double classify_seconds{0.0};  // decision per frame
    double frame_seconds{0.0};     // sum of the above
    std::size_t frames{0};
};

struct EvaluationReport {
    std::size_t n_input{0};
    std::size_t n_evaluated{0};
    std::vector<TrajectoryId> discarded;
    std::size_t n_converged{0};
    double convergence_rate{0.0};
    std::vector<ClusterReport> clusters;
    LatencyReport latency;
    double wall_seconds{0.0};
    std::vector<TrajectoryId> ids;
    std::vector<int> truth;
    std::vector<std::optional<double>> times;
};

// Replays every (preprocessed) test track through the classifier and
// collects classification times. Throws Precondition for an empty test set
// and Range when a kept track has no ground-truth label.
EvaluationReport evaluate(const TrafficModel& model, std::span<const RawTrajectory> tests,
                          const std::map<TrajectoryId, int>& truth, const EvaluationOptions& options = {});

inline constexpr int kReportVersion = 1;

std::string report_to_json(const EvaluationReport& report);

// One file per cluster, `hist_<k>.csv` with columns bin_start,bin_end,count;
// bins are delimited by consecutive grid times.
void write_histograms(const EvaluationReport& report, const TimeGrid& grid, const std::filesystem::path& dir);

// Provenance of CLI invocations. Each command appends one entry.
struct ManifestEntry {
    std::string command;
    std::string config_digest;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed{0};
    std::vector<std::pair<std::string, double>> stages;  // name, wall seconds
    double wall_seconds{0.0};
};

struct RunManifest {
    int version{1};
    std::vector<ManifestEntry> entries;
};

RunManifest load_manifest(const std::filesystem::path& path);  // missing file -> empty manifest
void save_manifest(const RunManifest& manifest, const std::filesystem::path& path);
void append_manifest(const std::filesystem::path& path, const ManifestEntry& entry);

std::string config_digest(const std::string& canonical_config);

}  // namespace isect
