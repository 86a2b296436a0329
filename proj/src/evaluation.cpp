#include "isect/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "isect/error.hpp"
#include "isect/parallel.hpp"

namespace isect {

using nlohmann::json;

namespace {

double interpolated(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return interpolated(v, 0.5);
}

json quantiles_json(const Quantiles& q) {
    return {{"min", q.min}, {"p10", q.p10}, {"p25", q.p25}, {"median", q.median},
            {"p75", q.p75}, {"p90", q.p90}, {"max", q.max},  {"mean", q.mean}};
}

}  // namespace

Quantiles quantiles(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorKind::Precondition, "quantiles of an empty sample");
    std::sort(values.begin(), values.end());
    Quantiles q;
    q.min = values.front();
    q.max = values.back();
    q.p10 = interpolated(values, 0.10);
    q.p25 = interpolated(values, 0.25);
    q.median = interpolated(values, 0.50);
    q.p75 = interpolated(values, 0.75);
    q.p90 = interpolated(values, 0.90);
    q.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    return q;
}

EvaluationReport evaluate(const TrafficModel& model, std::span<const RawTrajectory> tests,
                          const std::map<TrajectoryId, int>& truth, const EvaluationOptions& options) {
    using Clock = std::chrono::steady_clock;
    const auto wall_start = Clock::now();
    if (tests.empty()) throw Error(ErrorKind::Precondition, "evaluation needs a non-empty test set");

    EvaluationReport report;
    report.n_input = tests.size();
    auto prep = preprocess(tests, options.preprocess);
    report.discarded = std::move(prep.discarded);
    const auto& kept = prep.kept;
    if (kept.empty()) throw Error(ErrorKind::Precondition, "every test trajectory was discarded by preprocessing");

    report.n_evaluated = kept.size();
    report.ids.resize(kept.size());
    report.truth.resize(kept.size());
    report.times.resize(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const auto it = truth.find(kept[i].id);
        if (it == truth.end())
            throw Error(ErrorKind::Range, "no ground truth for trajectory " + std::to_string(kept[i].id));
        report.ids[i] = kept[i].id;
        report.truth[i] = it->second;
    }

    std::shared_ptr<const BatchReplayTargets> batch;
    if (options.classifier.mode == ClassifierMode::BatchReplay)
        batch = std::make_shared<BatchReplayTargets>(model, options.classifier.variance_floor);

    parallel_for(kept.size(), options.threads, [&](std::size_t i) {
        const auto steps = replay(kept[i], model, options.classifier, batch);
        report.times[i] = classification_time(steps, kept[i].times.front(), report.truth[i]);
    });

    report.clusters.resize(static_cast<std::size_t>(model.k()));
    for (int c = 0; c < model.k(); ++c) report.clusters[static_cast<std::size_t>(c)].cluster = c;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const int c = report.truth[i];
        if (c < 0 || c >= model.k()) throw Error(ErrorKind::Range, "ground-truth cluster out of range");
        auto& cr = report.clusters[static_cast<std::size_t>(c)];
        ++cr.count;
        if (report.times[i]) {
            ++cr.converged;
            ++report.n_converged;
            cr.classification_times.push_back(*report.times[i]);
        }
    }
    for (auto& cr : report.clusters)
        if (!cr.classification_times.empty()) cr.summary = quantiles(cr.classification_times);
    report.convergence_rate = static_cast<double>(report.n_converged) / static_cast<double>(report.n_evaluated);

    // Single-threaded so the per-frame numbers are not skewed by contention.
    const std::size_t sample = std::min(options.latency_sample, kept.size());
    std::vector<double> refit, update, classify, frame;
    for (int rep = 0; rep < std::max(1, options.latency_repetitions); ++rep) {
        double r = 0.0, u = 0.0, c = 0.0;
        std::size_t frames = 0;
        for (std::size_t i = 0; i < sample; ++i) {
            for (const auto& step : replay(kept[i], model, options.classifier, batch)) {
                r += step.timing.refit_seconds;
                u += step.timing.update_seconds;
                c += step.classify_seconds;
                ++frames;
            }
        }
        const double n = static_cast<double>(std::max<std::size_t>(frames, 1));
        refit.push_back(r / n);
        update.push_back(u / n);
        classify.push_back(c / n);
        frame.push_back((r + u + c) / n);
        report.latency.frames = frames;
    }
    report.latency.refit_seconds = median(refit);
    report.latency.update_seconds = median(update);
    report.latency.classify_seconds = median(classify);
    report.latency.frame_seconds = median(frame);
    report.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
    return report;
}

std::string report_to_json(const EvaluationReport& report) {
    json doc;
    doc["version"] = kReportVersion;
    doc["n_input"] = report.n_input;
    doc["n_evaluated"] = report.n_evaluated;
    doc["discarded"] = report.discarded;
    doc["n_converged"] = report.n_converged;
    doc["convergence_rate"] = report.convergence_rate;
    json clusters = json::array();
    for (const auto& c : report.clusters) {
        json entry{{"cluster", c.cluster},
                   {"count", c.count},
                   {"converged", c.converged},
                   {"convergence_rate", c.count ? static_cast<double>(c.converged) / static_cast<double>(c.count) : 0.0}};
        entry["classification_time"] = c.summary ? quantiles_json(*c.summary) : json(nullptr);
        clusters.push_back(std::move(entry));
    }
    doc["clusters"] = std::move(clusters);
    doc["latency"] = {{"refit_seconds", report.latency.refit_seconds},
                      {"update_seconds", report.latency.update_seconds},
                      {"classify_seconds", report.latency.classify_seconds},
                      {"frame_seconds", report.latency.frame_seconds},
                      {"frames", report.latency.frames}};
    doc["wall_seconds"] = report.wall_seconds;
    json per = json::array();
    for (std::size_t i = 0; i < report.ids.size(); ++i)
        per.push_back({{"id", report.ids[i]},
                       {"truth", report.truth[i]},
                       {"classification_time", report.times[i] ? json(*report.times[i]) : json(nullptr)}});
    doc["trajectories"] = std::move(per);
    return doc.dump(2);
}

void write_histograms(const EvaluationReport& report, const TimeGrid& grid, const std::filesystem::path& dir) {
    if (grid.size() < 2) throw Error(ErrorKind::Precondition, "histogram needs at least two grid times");
    std::filesystem::create_directories(dir);
    const auto& edges = grid.times;
    for (const auto& c : report.clusters) {
        std::vector<std::size_t> counts(edges.size() - 1, 0);
        for (double t : c.classification_times) {
            auto bin = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), t) - edges.begin());
            bin = std::clamp<std::size_t>(bin, 1, counts.size()) - 1;
            ++counts[bin];
        }
        const auto path = dir / ("hist_" + std::to_string(c.cluster) + ".csv");
        std::ofstream out(path);
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
        out << "bin_start,bin_end,count\n";
        out.precision(17);
        for (std::size_t b = 0; b < counts.size(); ++b) out << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << '\n';
    }
}

RunManifest load_manifest(const std::filesystem::path& path) {
    RunManifest manifest;
    if (!std::filesystem::exists(path)) return manifest;
    std::ifstream in(path);
    json doc;
    try {
        doc = json::parse(in);
        manifest.version = doc.at("version").get<int>();
        for (const auto& e : doc.at("entries")) {
            ManifestEntry entry;
            entry.command = e.at("command").get<std::string>();
            entry.config_digest = e.at("config_digest").get<std::string>();
            entry.inputs = e.at("inputs").get<std::vector<std::string>>();
            entry.outputs = e.at("outputs").get<std::vector<std::string>>();
            entry.seed = e.at("seed").get<std::uint64_t>();
            for (const auto& s : e.at("stages")) entry.stages.emplace_back(s.at("name").get<std::string>(), s.at("seconds").get<double>());
            entry.wall_seconds = e.at("wall_seconds").get<double>();
            manifest.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptFile, "manifest '" + path.string() + "' is unreadable: " + e.what());
    }
    return manifest;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["version"] = manifest.version;
    doc["entries"] = json::array();
    for (const auto& e : manifest.entries) {
        json stages = json::array();
        for (const auto& [name, seconds] : e.stages) stages.push_back({{"name", name}, {"seconds", seconds}});
        doc["entries"].push_back({{"command", e.command},
                                  {"config_digest", e.config_digest},
                                  {"inputs", e.inputs},
                                  {"outputs", e.outputs},
                                  {"seed", e.seed},
                                  {"stages", std::move(stages)},
                                  {"wall_seconds", e.wall_seconds}});
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest '" + path.string() + "'");
    out << doc.dump(2) << '\n';
}

void append_manifest(const std::filesystem::path& path, const ManifestEntry& entry) {
    auto manifest = load_manifest(path);
    manifest.entries.push_back(entry);
    save_manifest(manifest, path);
}

std::string config_digest(const std::string& canonical_config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_config) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace isect
