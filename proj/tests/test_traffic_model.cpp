#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "fixtures.hpp"
#include "isect/error.hpp"
#include "isect/traffic_model.hpp"
#include "oracles.hpp"

using namespace isect;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no isect::Error thrown";
    return ErrorKind::Aggregate;
}

}  // namespace

TEST(TimeGrid, UniformDefaults) {
    const auto g = TimeGrid::uniform();
    ASSERT_EQ(g.size(), 60u);
    EXPECT_EQ(g.times.front(), 0.0);
    EXPECT_DOUBLE_EQ(g.times.back(), 3.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g.times[i] - g.times[i - 1], 3.0 / 59.0, 1e-12);
    EXPECT_EQ(g.covered_count(-0.01), 0u);
    EXPECT_EQ(g.covered_count(0.0), 1u);
    EXPECT_EQ(g.covered_count(g.times[5]), 6u);
    EXPECT_EQ(g.covered_count(10.0), 60u);
}

TEST(EmpiricalMoments, TwoIdenticalMembers) {
    Eigen::MatrixXd s(2, 4);
    s.row(0) << 1, 2, 3, 4;
    s.row(1) = s.row(0);
    Eigen::VectorXd m;
    Eigen::MatrixXd c;
    empirical_moments(s, m, c);
    EXPECT_EQ(c.norm(), 0.0);
    EXPECT_EQ(m, s.row(0).transpose());
}

TEST(EmpiricalMoments, OppositeLinesGiveTwoTiTj) {
    const std::vector<double> t{0.0, 0.5, 1.0, 2.0};
    Eigen::MatrixXd s(2, 4);
    for (int i = 0; i < 4; ++i) s(0, i) = t[static_cast<std::size_t>(i)], s(1, i) = -t[static_cast<std::size_t>(i)];
    Eigen::VectorXd m;
    Eigen::MatrixXd c;
    empirical_moments(s, m, c);
    EXPECT_LE(m.norm(), 1e-15);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(c(i, j), 2.0 * t[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(j)], 1e-15);
}

TEST(EmpiricalMoments, MatchesNaiveOracle) {
    oracle::Gen g(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int j = g.integer(2, 10), n = g.integer(1, 5);
        Eigen::MatrixXd s(j, n);
        for (int r = 0; r < j; ++r)
            for (int c = 0; c < n; ++c) s(r, c) = g.uniform(-20, 20);
        Eigen::VectorXd m;
        Eigen::MatrixXd c;
        empirical_moments(s, m, c);
        EXPECT_LE((c - oracle::naive_covariance(s)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(EmpiricalMoments, NeedsTwoMembers) {
    Eigen::MatrixXd s(1, 3);
    s.setOnes();
    Eigen::VectorXd m;
    Eigen::MatrixXd c;
    EXPECT_EQ(kind_of([&] { empirical_moments(s, m, c); }), ErrorKind::InsufficientCluster);
}

TEST(BuildIntended, MatchesNaiveCovarianceOnReconstructions) {
    const auto& f = fixture::trained();
    const auto grid = TimeGrid::uniform(3.0, 5, 20.0);
    const auto eval = f.set.evaluate(grid.times);
    for (int k = 0; k < 3; ++k) {
        const auto it = build_intended(f.set, f.labels, k, grid);
        Eigen::MatrixXd all_x(static_cast<Eigen::Index>(it.member_count), 5);
        Eigen::Index r = 0;
        for (std::size_t j = 0; j < f.labels.labels.size(); ++j)
            if (f.labels.labels[j] == k) all_x.row(r++) = eval.x.row(static_cast<Eigen::Index>(j));
        EXPECT_LE((it.cov_x - oracle::naive_covariance(all_x)).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + it.cov_x.norm()));
        for (Eigen::Index c = 0; c < 5; ++c) {
            EXPECT_GE(it.mean_x[c], all_x.col(c).minCoeff());
            EXPECT_LE(it.mean_x[c], all_x.col(c).maxCoeff());
        }
    }
}

TEST(BuildIntended, SmallClustersMatchOracleExactly) {
    // J_k <= 10, N <= 5: a subset of the fixture's reconstructions.
    const auto& f = fixture::trained();
    oracle::Gen g(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int j = g.integer(2, 10), n = g.integer(2, 5);
        std::vector<ReconstructedTrajectory> members(f.set.members().begin(), f.set.members().begin() + j);
        const TrajectorySet subset(members);
        ClusterLabeling labels;
        labels.k = 1;
        labels.labels.assign(static_cast<std::size_t>(j), 0);
        const auto grid = TimeGrid::uniform(3.0, static_cast<std::size_t>(n), 20.0);
        const auto it = build_intended(subset, labels, 0, grid);
        const auto eval = subset.evaluate(grid.times);
        EXPECT_LE((it.cov_x - oracle::naive_covariance(eval.x)).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, it.cov_x.cwiseAbs().maxCoeff()));
        EXPECT_LE((it.cov_y - oracle::naive_covariance(eval.y)).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, it.cov_y.cwiseAbs().maxCoeff()));
    }
}

TEST(BuildModel, ShapeAndInvariants) {
    const auto& m = fixture::trained().model;
    ASSERT_EQ(m.k(), 3);
    EXPECT_EQ(m.grid.size(), 60u);
    for (const auto& seq : m.thresholds) EXPECT_EQ(seq.per_time.size(), 60u);
    EXPECT_EQ(m.thresholds[0].side, ThresholdSide::LeftCenter);
    EXPECT_EQ(m.thresholds[1].side, ThresholdSide::RightCenter);
    for (const auto& it : m.intended) {
        EXPECT_GE(it.member_count, 2u);
        for (const auto* cov : {&it.cov_x, &it.cov_y}) {
            EXPECT_LE((*cov - cov->transpose()).cwiseAbs().maxCoeff(), 1e-10);
            EXPECT_GE(cov->diagonal().minCoeff(), 0.0);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*cov);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * std::max(1.0, es.eigenvalues().maxCoeff()));
        }
    }
    EXPECT_EQ(m.metadata.k, 3);
    EXPECT_EQ(m.metadata.j, fixture::trained().set.size());
    EXPECT_FALSE(m.metadata.dataset_digest.empty());
}

TEST(BuildModel, ThresholdMeansAreMidpointsAndEquidistant) {
    const auto& m = fixture::trained().model;
    const std::array<int, 2> turn{kLeftTurn, kRightTurn};
    for (std::size_t side = 0; side < 2; ++side)
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            const auto a = m.intended[static_cast<std::size_t>(turn[side])].marginal(i);
            const auto s = m.intended[kStraight].marginal(i);
            const auto& thr = m.thresholds[side].per_time[i];
            EXPECT_LE((thr.mean - 0.5 * (a.mean + s.mean)).norm(), 1e-12);
            EXPECT_LE(std::abs(wasserstein(thr, a) - wasserstein(thr, s)), 1e-6);
        }
}

TEST(BuildModel, StraightWithItselfGivesStraight) {
    const auto& m = fixture::trained().model;
    for (std::size_t i = 0; i < m.grid.size(); i += 7) {
        const auto s = m.intended[kStraight].marginal(i);
        const std::vector<GaussianDist> pair{s, s};
        const std::vector<double> w{0.5, 0.5};
        const auto b = wasserstein_barycenter(pair, w);
        EXPECT_LE((b.dist.cov - s.cov).norm(), 1e-9);
    }
}

TEST(BuildModel, Deterministic) {
    const auto& f = fixture::trained();
    ModelBuildOptions opts;
    opts.build_time = f.model.metadata.build_time;
    const auto again = build_model(f.set, f.labels, TimeGrid::uniform(), opts);
    EXPECT_EQ(model_to_json(again), model_to_json(f.model));
}

TEST(BuildModel, RequiresThreeClusters) {
    const auto& f = fixture::trained();
    ClusterLabeling two = f.labels;
    two.k = 2;
    for (auto& l : two.labels) l = std::min(l, 1);
    EXPECT_THROW(build_model(f.set, two, TimeGrid::uniform()), Error);
}

TEST(SampleIntention, NodesInterpolationAndRange) {
    const auto& m = fixture::trained().model;
    const auto& it = m.intended[kLeftTurn];
    const auto at = sample_intention(m, kLeftTurn, m.grid.times[10]);
    EXPECT_DOUBLE_EQ(at.mean_x, it.mean_x[10]);
    EXPECT_DOUBLE_EQ(at.var_y, it.cov_y(10, 10));
    const double mid = 0.5 * (m.grid.times[10] + m.grid.times[11]);
    const auto between = sample_intention(m, kLeftTurn, mid);
    EXPECT_NEAR(between.mean_y, 0.5 * (it.mean_y[10] + it.mean_y[11]), 1e-12);
    EXPECT_EQ(kind_of([&] { sample_intention(m, 5, 1.0); }), ErrorKind::Range);
    EXPECT_EQ(kind_of([&] { sample_intention(m, 0, 3.5); }), ErrorKind::Range);
    EXPECT_EQ(kind_of([&] { sample_intention(m, 0, -0.1); }), ErrorKind::Range);
}

TEST(SampleIntention, CommonSourceLaneAtStart) {
    const auto& m = fixture::trained().model;
    GeneratorConfig cfg;
    for (int k = 0; k < 3; ++k) {
        const auto in = sample_intention(m, k, 0.0);
        EXPECT_NEAR(in.mean_x, 0.5 * cfg.lane_width, 3.0 * cfg.lane_offset_std + 2.0 * cfg.noise_std);
        EXPECT_NEAR(in.mean_y, -cfg.approach, 4.0 * cfg.noise_std);
    }
}

TEST(ModelFile, RoundTripExact) {
    const auto& m = fixture::trained().model;
    const auto path = std::filesystem::temp_directory_path() / "isect_model_rt.json";
    save_model(m, path);
    const auto back = load_model(path);
    ASSERT_EQ(back.k(), m.k());
    EXPECT_EQ(back.grid.times, m.grid.times);
    for (int k = 0; k < m.k(); ++k) {
        const auto& a = m.intended[static_cast<std::size_t>(k)];
        const auto& b = back.intended[static_cast<std::size_t>(k)];
        EXPECT_LE((a.mean_x - b.mean_x).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((a.cov_y - b.cov_y).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(a.member_count, b.member_count);
    }
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < m.grid.size(); ++i)
            EXPECT_LE((m.thresholds[s].per_time[i].cov - back.thresholds[s].per_time[i].cov).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(back.metadata.dataset_digest, m.metadata.dataset_digest);
    EXPECT_EQ(back.observation_prior.x.theta, m.observation_prior.x.theta);
    std::filesystem::remove(path);
}

TEST(ModelFile, TruncatedIsCorrupt) {
    const auto text = model_to_json(fixture::trained().model);
    EXPECT_EQ(kind_of([&] { model_from_json(text.substr(0, text.size() / 2)); }), ErrorKind::CorruptFile);
}

TEST(ModelFile, OlderMinorVersionLoadsWithDefaults) {
    auto doc = nlohmann::json::parse(model_to_json(fixture::trained().model));
    doc["version"] = "1.0";
    doc.erase("observation_prior");
    const auto m = model_from_json(doc.dump());
    const ObservationPrior defaults;
    EXPECT_EQ(m.observation_prior.x.theta, defaults.x.theta);
    EXPECT_EQ(m.observation_prior.y.noise_var, defaults.y.noise_var);
    EXPECT_EQ(m.k(), 3);
}

TEST(ModelFile, UnknownMajorAndSchemaErrors) {
    auto doc = nlohmann::json::parse(model_to_json(fixture::trained().model));
    auto v2 = doc;
    v2["version"] = "2.0";
    EXPECT_EQ(kind_of([&] { model_from_json(v2.dump()); }), ErrorKind::SchemaMismatch);
    auto no_clusters = doc;
    no_clusters.erase("clusters");
    EXPECT_EQ(kind_of([&] { model_from_json(no_clusters.dump()); }), ErrorKind::SchemaMismatch);
    auto bad_side = doc;
    bad_side["thresholds"][0]["side"] = "up";
    EXPECT_EQ(kind_of([&] { model_from_json(bad_side.dump()); }), ErrorKind::SchemaMismatch);
    EXPECT_EQ(kind_of([] { load_model("/nonexistent/model.json"); }), ErrorKind::Io);
}

TEST(DatasetDigest, StableAndSensitive) {
    const auto& f = fixture::trained();
    EXPECT_EQ(dataset_digest(f.set), dataset_digest(f.set));
    std::vector<ReconstructedTrajectory> fewer(f.set.members().begin(), f.set.members().end() - 1);
    EXPECT_NE(dataset_digest(TrajectorySet(fewer)), dataset_digest(f.set));
}
