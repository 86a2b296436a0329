#pragma once

// A small model trained once per test binary on generated data.

#include "isect/clustering.hpp"
#include "isect/gp_regression.hpp"
#include "isect/simgen.hpp"
#include "isect/traffic_model.hpp"

namespace fixture {

struct Trained {
    isect::GeneratedDataset data;
    isect::TrajectorySet set;
    isect::ClusterLabeling labels;
    isect::TrafficModel model;
};

inline const Trained& trained() {
    static const Trained t = [] {
        Trained out;
        isect::GeneratorConfig cfg;
        cfg.n_trajectories = 150;
        cfg.seed = 2024;
        out.data = isect::generate(cfg);
        const auto prep = isect::preprocess(out.data.trajectories, {});
        out.set = isect::build_trajectory_set(prep.kept);
        const auto features = isect::endpoint_features(out.set);
        out.labels = isect::canonicalize_labels(isect::kmeans_pp(features, 3, 1), features);
        isect::ModelBuildOptions opts;
        opts.build_time = "2024-01-01T00:00:00Z";
        out.model = isect::build_model(out.set, out.labels, isect::TimeGrid::uniform(), opts);
        return out;
    }();
    return t;
}

}  // namespace fixture
