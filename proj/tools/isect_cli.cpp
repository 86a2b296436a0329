// isect: command-line front end for the intersection traffic model.
//
//   isect generate     --out DIR [--n N] [--seed S]            data.csv, truth.csv
//   isect reconstruct  --input data.csv --out DIR               reconstructed.json
//   isect cluster      --input reconstructed.json --out DIR     labels.csv
//   isect build-model  --input reconstructed.json --labels labels.csv --out DIR   model.json
//   isect classify     --model model.json --input data.csv --out DIR [--id ID]   decisions_<id>.csv
//   isect evaluate     --model model.json --test DIR --out DIR  report.json, hist_<k>.csv
//   isect run          --out DIR                                the whole pipeline
//
// Every command appends an entry to DIR/manifest.json.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "isect/artifacts.hpp"
#include "isect/classifier.hpp"
#include "isect/clustering.hpp"
#include "isect/error.hpp"
#include "isect/evaluation.hpp"
#include "isect/gp_regression.hpp"
#include "isect/simgen.hpp"
#include "isect/traffic_model.hpp"
#include "isect/trajectory_data.hpp"

namespace fs = std::filesystem;
using namespace isect;

namespace {

using Clock = std::chrono::steady_clock;

struct CommonFlags {
    std::uint64_t seed{1};
    double horizon{3.0};
    double rate{20.0};
    int k{3};
    std::string mode{"stream"};
    std::string out{"."};
    std::size_t threads{0};
};

// An error with the module that raised it, for the one-line exit message.
struct TaggedError : std::runtime_error {
    TaggedError(std::string module, const std::string& what) : std::runtime_error(what), module(std::move(module)) {}
    std::string module;
};

template <typename Fn>
auto in_module(const std::string& module, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw TaggedError(module, std::string(to_string(e.kind())) + ": " + e.what());
    }
}

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::size_t grid_size(const CommonFlags& f) {
    const double n = f.horizon * f.rate;
    if (!(n >= 1.0)) throw TaggedError("cli", "horizon * rate must be at least 1");
    return static_cast<std::size_t>(std::llround(n));
}

ClassifierMode parse_mode(const std::string& mode) {
    if (mode == "stream") return ClassifierMode::Stream;
    if (mode == "batch-replay") return ClassifierMode::BatchReplay;
    throw TaggedError("cli", "unknown mode '" + mode + "'");
}

std::string canonical(const CommonFlags& f, const std::string& extra) {
    std::ostringstream s;
    s.precision(17);
    s << "seed=" << f.seed << ";horizon=" << f.horizon << ";rate=" << f.rate << ";k=" << f.k << ";mode=" << f.mode
      << ";" << extra;
    return s.str();
}

void record(const CommonFlags& f, ManifestEntry entry, const std::string& extra, Clock::time_point start) {
    entry.config_digest = config_digest(canonical(f, extra));
    entry.seed = f.seed;
    entry.wall_seconds = seconds_since(start);
    in_module("cli", [&] {
        append_manifest(fs::path(f.out) / "manifest.json", entry);
        return 0;
    });
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw TaggedError("cli", "cannot create output directory '" + dir + "': " + ec.message());
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw TaggedError("cli", what + " '" + path + "' does not exist");
}

GeneratorConfig generator_config(const CommonFlags& f, std::size_t n) {
    GeneratorConfig cfg;
    cfg.n_trajectories = n;
    cfg.seed = f.seed;
    cfg.horizon = f.horizon;
    cfg.rate = f.rate;
    return cfg;
}

ReconstructOptions reconstruct_options() { return {}; }

TrajectorySet reconstruct_dataset(const std::vector<RawTrajectory>& raw, const CommonFlags& f,
                                  std::vector<TrajectoryId>* discarded) {
    PreprocessConfig prep;
    prep.horizon = f.horizon;
    auto kept = in_module("trajectory-data", [&] { return preprocess(raw, prep); });
    if (discarded) *discarded = kept.discarded;
    return in_module("gp-regression", [&] { return build_trajectory_set(kept.kept, reconstruct_options(), f.threads); });
}

ClusterLabeling cluster_set(const TrajectorySet& set, const CommonFlags& f) {
    return in_module("clustering", [&] {
        const auto features = endpoint_features(set, 0.0, f.horizon);
        return canonicalize_labels(kmeans_pp(features, f.k, f.seed), features);
    });
}

TrafficModel build(const TrajectorySet& set, const ClusterLabeling& labels, const CommonFlags& f) {
    return in_module("traffic-model", [&] {
        return build_model(set, labels, TimeGrid::uniform(f.horizon, grid_size(f), f.rate));
    });
}

std::vector<TrajectoryId> ids_of(const TrajectorySet& set) {
    std::vector<TrajectoryId> ids;
    for (const auto& r : set.members()) ids.push_back(r.id);
    return ids;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw TaggedError("cli", "cannot write '" + path.string() + "'");
    out << text << '\n';
}

void write_decision_log(const fs::path& path, const std::vector<ReplayStep>& steps, int k) {
    std::ofstream out(path);
    if (!out) throw TaggedError("cli", "cannot write '" + path.string() + "'");
    out.precision(17);
    out << "timestamp,decision";
    for (int c = 0; c < k; ++c) out << ",D" << c;
    out << ",Dthr_lc,Dthr_rc,excluded\n";
    for (const auto& s : steps) {
        out << s.timestamp << ',' << s.decision.cluster;
        for (double d : s.decision.distances) out << ',' << d;
        out << ',' << (s.decision.excluded_straight ? 1 : 0) << '\n';
    }
}

EvaluationReport evaluate_dir(const TrafficModel& model, const std::string& test_dir, const CommonFlags& f) {
    const auto data = (fs::path(test_dir) / "data.csv").string();
    const auto truth_path = (fs::path(test_dir) / "truth.csv").string();
    require_file(data, "test data");
    require_file(truth_path, "test truth");
    const auto tests = in_module("trajectory-data", [&] { return load_dataset(data, DatasetFormat::Csv); });
    const auto truth = in_module("simgen", [&] { return load_truth(truth_path); });
    EvaluationOptions opts;
    opts.classifier.mode = parse_mode(f.mode);
    opts.preprocess.horizon = f.horizon;
    opts.threads = f.threads;
    return in_module("classifier", [&] { return evaluate(model, tests, truth, opts); });
}

void write_report(const EvaluationReport& report, const TrafficModel& model, const fs::path& out) {
    write_text(out / "report.json", report_to_json(report));
    in_module("cli", [&] {
        write_histograms(report, model.grid, out);
        return 0;
    });
}

void print_summary(const EvaluationReport& r) {
    std::printf("evaluated %zu of %zu trajectories, converged %zu (%.4f)\n", r.n_evaluated, r.n_input, r.n_converged,
                r.convergence_rate);
    for (const auto& c : r.clusters) {
        if (c.summary)
            std::printf("  cluster %d: %zu/%zu converged, median %.3f s, p90 %.3f s\n", c.cluster, c.converged, c.count,
                        c.summary->median, c.summary->p90);
        else
            std::printf("  cluster %d: %zu/%zu converged\n", c.cluster, c.converged, c.count);
    }
    std::printf("  per-frame latency %.3g s (refit %.3g, update %.3g, classify %.3g)\n", r.latency.frame_seconds,
                r.latency.refit_seconds, r.latency.update_seconds, r.latency.classify_seconds);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process intersection traffic model"};
    app.require_subcommand(1);
    CommonFlags f;

    auto add_common = [&f](CLI::App* cmd) {
        cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
        cmd->add_option("--horizon", f.horizon, "Observation horizon in seconds")->capture_default_str();
        cmd->add_option("--rate", f.rate, "Frame rate in Hz (grid has horizon * rate points)")->capture_default_str();
        cmd->add_option("--k", f.k, "Number of clusters")->capture_default_str();
        cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
        cmd->add_option("--threads", f.threads, "Worker threads (0: INTERSECT_GP_THREADS or all cores)");
    };
    auto add_mode = [&f](CLI::App* cmd) {
        cmd->add_option("--mode", f.mode, "stream or batch-replay")
            ->check(CLI::IsMember({"stream", "batch-replay"}))
            ->capture_default_str();
        cmd->add_flag_callback("--stream", [&f] { f.mode = "stream"; }, "Recursive per-time distances");
        cmd->add_flag_callback("--batch-replay", [&f] { f.mode = "batch-replay"; }, "Exact full-prefix distances");
    };

    std::size_t n_train = 1000, n_test = 1000;
    TrajectoryId first_id = 0;
    std::string input, labels_path, model_path, test_dir;
    std::optional<TrajectoryId> classify_id;

    auto* gen = app.add_subcommand("generate", "Write a synthetic labeled dataset");
    add_common(gen);
    gen->add_option("--n", n_train, "Number of trajectories")->capture_default_str();
    gen->add_option("--first-id", first_id, "Id of the first trajectory")->capture_default_str();

    auto* rec = app.add_subcommand("reconstruct", "Fit a GP to every trajectory of a dataset");
    add_common(rec);
    rec->add_option("--input", input, "Dataset (.csv or .json)")->required();

    auto* clu = app.add_subcommand("cluster", "Label reconstructed trajectories with k-means++");
    add_common(clu);
    clu->add_option("--input", input, "reconstructed.json")->required();

    auto* bm = app.add_subcommand("build-model", "Build the traffic model from labeled reconstructions");
    add_common(bm);
    bm->add_option("--input", input, "reconstructed.json")->required();
    bm->add_option("--labels", labels_path, "labels.csv")->required();

    auto* cls = app.add_subcommand("classify", "Replay one trajectory through the online classifier");
    add_common(cls);
    add_mode(cls);
    cls->add_option("--model", model_path, "model.json")->required();
    cls->add_option("--input", input, "Dataset holding the trajectory")->required();
    cls->add_option("--id", classify_id, "Trajectory id (default: first in the file)");

    auto* ev = app.add_subcommand("evaluate", "Classification times over a labeled test set");
    add_common(ev);
    add_mode(ev);
    ev->add_option("--model", model_path, "model.json")->required();
    ev->add_option("--test", test_dir, "Directory with data.csv and truth.csv")->required();

    auto* run = app.add_subcommand("run", "Generate, train and evaluate end to end");
    add_common(run);
    add_mode(run);
    run->add_option("--n-train", n_train, "Training trajectories")->capture_default_str();
    run->add_option("--n-test", n_test, "Held-out trajectories")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    const auto start = Clock::now();
    const fs::path out(f.out);
    try {
        ensure_dir(f.out);
        ManifestEntry entry;

        if (*gen) {
            entry.command = "generate";
            auto cfg = generator_config(f, n_train);
            cfg.first_id = first_id;
            const auto data = in_module("simgen", [&] { return generate(cfg); });
            in_module("simgen", [&] {
                write_dataset(data, out);
                return 0;
            });
            entry.outputs = {(out / "data.csv").string(), (out / "truth.csv").string()};
            entry.stages.emplace_back("generate", seconds_since(start));
            record(f, entry, "n=" + std::to_string(n_train) + ";first_id=" + std::to_string(first_id), start);
            std::printf("wrote %zu trajectories to %s\n", data.trajectories.size(), f.out.c_str());
        } else if (*rec) {
            entry.command = "reconstruct";
            require_file(input, "dataset");
            const auto raw =
                in_module("trajectory-data", [&] { return load_dataset(input, format_from_path(input)); });
            std::vector<TrajectoryId> discarded;
            const auto set = reconstruct_dataset(raw, f, &discarded);
            const auto path = out / "reconstructed.json";
            in_module("gp-regression", [&] {
                save_trajectory_set(set, path);
                return 0;
            });
            entry.inputs = {input};
            entry.outputs = {path.string()};
            entry.stages.emplace_back("dataset_reconstruction", seconds_since(start));
            record(f, entry, "input=" + input, start);
            std::printf("reconstructed %zu trajectories (%zu discarded)\n", set.size(), discarded.size());
        } else if (*clu) {
            entry.command = "cluster";
            require_file(input, "reconstructed set");
            const auto set = in_module("gp-regression", [&] { return load_trajectory_set(input); });
            const auto t0 = Clock::now();
            const auto labels = cluster_set(set, f);
            const double took = seconds_since(t0);
            const auto ids = ids_of(set);
            const auto path = out / "labels.csv";
            in_module("clustering", [&] {
                save_labels(path, ids, labels.labels);
                return 0;
            });
            entry.inputs = {input};
            entry.outputs = {path.string()};
            entry.stages.emplace_back("dataset_clustering", took);
            record(f, entry, "input=" + input, start);
            const auto sizes = labels.cluster_sizes();
            std::printf("clustered %zu trajectories:", set.size());
            for (std::size_t c = 0; c < sizes.size(); ++c) std::printf(" %zu", sizes[c]);
            std::printf("\n");
        } else if (*bm) {
            entry.command = "build-model";
            require_file(input, "reconstructed set");
            require_file(labels_path, "labels");
            const auto set = in_module("gp-regression", [&] { return load_trajectory_set(input); });
            const auto labels = in_module("clustering", [&] { return load_labels(labels_path, set); });
            const auto t0 = Clock::now();
            const auto model = build(set, labels, f);
            const double took = seconds_since(t0);
            const auto path = out / "model.json";
            in_module("traffic-model", [&] {
                save_model(model, path);
                return 0;
            });
            entry.inputs = {input, labels_path};
            entry.outputs = {path.string()};
            entry.stages.emplace_back("traffic_modeling", took);
            record(f, entry, "input=" + input + ";labels=" + labels_path, start);
            std::printf("model with k=%d, %zu grid times written to %s\n", model.k(), model.grid.size(),
                        path.string().c_str());
        } else if (*cls) {
            entry.command = "classify";
            require_file(model_path, "model file");
            require_file(input, "dataset");
            const auto model = in_module("traffic-model", [&] { return load_model(model_path); });
            const auto raw =
                in_module("trajectory-data", [&] { return load_dataset(input, format_from_path(input)); });
            const RawTrajectory* traj = nullptr;
            for (const auto& r : raw)
                if (!classify_id || r.id == *classify_id) {
                    traj = &r;
                    break;
                }
            if (!traj)
                throw TaggedError("cli", classify_id ? "trajectory " + std::to_string(*classify_id) + " not in '" + input + "'"
                                                     : "dataset '" + input + "' is empty");
            ClassifierOptions opts;
            opts.mode = parse_mode(f.mode);
            const auto steps = in_module("classifier", [&] { return replay(*traj, model, opts); });
            const auto path = out / ("decisions_" + std::to_string(traj->id) + ".csv");
            write_decision_log(path, steps, model.k());
            double refit = 0.0, classify = 0.0;
            for (const auto& s : steps) {
                refit += s.timing.refit_seconds;
                classify += s.timing.update_seconds + s.classify_seconds;
            }
            entry.inputs = {model_path, input};
            entry.outputs = {path.string()};
            const double frames = static_cast<double>(std::max<std::size_t>(steps.size(), 1));
            entry.stages.emplace_back("trajectory_reconstruction", refit / frames);
            entry.stages.emplace_back("trajectory_classification", classify / frames);
            record(f, entry, "model=" + model_path + ";input=" + input + ";id=" + std::to_string(traj->id), start);
            std::printf("trajectory %lld: final decision %d after %zu frames\n", static_cast<long long>(traj->id),
                        steps.empty() ? -1 : steps.back().decision.cluster, steps.size());
        } else if (*ev) {
            entry.command = "evaluate";
            require_file(model_path, "model file");
            const auto model = in_module("traffic-model", [&] { return load_model(model_path); });
            const auto report = evaluate_dir(model, test_dir, f);
            write_report(report, model, out);
            entry.inputs = {model_path, test_dir};
            entry.outputs = {(out / "report.json").string()};
            entry.stages.emplace_back("trajectory_reconstruction", report.latency.refit_seconds);
            entry.stages.emplace_back("trajectory_classification",
                                      report.latency.update_seconds + report.latency.classify_seconds);
            record(f, entry, "model=" + model_path + ";test=" + test_dir, start);
            print_summary(report);
        } else if (*run) {
            entry.command = "run";
            const auto train_dir = out / "train", test_path = out / "test";
            auto train_cfg = generator_config(f, n_train);
            auto test_cfg = generator_config(f, n_test);
            test_cfg.seed = f.seed + 1;
            test_cfg.first_id = static_cast<TrajectoryId>(n_train);
            in_module("simgen", [&] {
                write_dataset(generate(train_cfg), train_dir);
                write_dataset(generate(test_cfg), test_path);
                return 0;
            });

            auto t0 = Clock::now();
            const auto raw = in_module("trajectory-data", [&] {
                return load_dataset(train_dir / "data.csv", DatasetFormat::Csv);
            });
            const auto set = reconstruct_dataset(raw, f, nullptr);
            entry.stages.emplace_back("dataset_reconstruction", seconds_since(t0));
            in_module("gp-regression", [&] {
                save_trajectory_set(set, out / "reconstructed.json");
                return 0;
            });

            t0 = Clock::now();
            const auto labels = cluster_set(set, f);
            entry.stages.emplace_back("dataset_clustering", seconds_since(t0));
            const auto ids = ids_of(set);
            in_module("clustering", [&] {
                save_labels(out / "labels.csv", ids, labels.labels);
                return 0;
            });

            t0 = Clock::now();
            const auto model = build(set, labels, f);
            entry.stages.emplace_back("traffic_modeling", seconds_since(t0));
            in_module("traffic-model", [&] {
                save_model(model, out / "model.json");
                return 0;
            });

            const auto report = evaluate_dir(model, test_path.string(), f);
            write_report(report, model, out);
            entry.stages.emplace_back("trajectory_reconstruction", report.latency.refit_seconds);
            entry.stages.emplace_back("trajectory_classification",
                                      report.latency.update_seconds + report.latency.classify_seconds);
            entry.inputs = {};
            entry.outputs = {(out / "model.json").string(), (out / "report.json").string()};
            record(f, entry, "n_train=" + std::to_string(n_train) + ";n_test=" + std::to_string(n_test), start);
            for (const auto& [name, secs] : entry.stages) std::printf("%-26s %.6g s\n", name.c_str(), secs);
            print_summary(report);
        }
    } catch (const TaggedError& e) {
        std::fprintf(stderr, "isect: [%s] %s\n", e.module.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "isect: [cli] %s\n", e.what());
        return 1;
    }
    return 0;
}
