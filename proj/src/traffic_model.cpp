#include "isect/traffic_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "isect/error.hpp"

namespace isect {

using nlohmann::json;

namespace {

constexpr double kGridSlack = 1e-9;

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::VectorXd vector_from(const json& j, std::size_t n, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != n) throw Error(ErrorKind::SchemaMismatch, std::string(what) + ": expected length " + std::to_string(n));
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(n));
}

Eigen::MatrixXd matrix_from(const json& j, std::size_t n, const char* what) {
    if (!j.is_array() || j.size() != n)
        throw Error(ErrorKind::SchemaMismatch, std::string(what) + ": expected " + std::to_string(n) + " rows");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) m.row(static_cast<Eigen::Index>(r)) = vector_from(j[r], n, what);
    return m;
}

json hyper_json(const Hyperparameters& h) { return {{"theta", h.theta}, {"noise_var", h.noise_var}}; }
Hyperparameters hyper_from(const json& j) { return {j.at("theta").get<double>(), j.at("noise_var").get<double>()}; }

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

TimeGrid TimeGrid::uniform(double horizon, std::size_t n, double rate) {
    if (!(horizon > 0.0) || n < 2 || !(rate > 0.0))
        throw Error(ErrorKind::Config, "time grid needs horizon > 0, n >= 2 and rate > 0");
    TimeGrid g;
    g.horizon = horizon;
    g.rate = rate;
    g.times.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.times[i] = horizon * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

std::size_t TimeGrid::covered_count(double t) const {
    return static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t + kGridSlack) - times.begin());
}

GaussianDist IntendedTrajectory::marginal(std::size_t i) const {
    const auto k = static_cast<Eigen::Index>(i);
    GaussianDist g;
    g.mean = Eigen::Vector2d(mean_x[k], mean_y[k]);
    g.cov = Eigen::Matrix2d::Zero();
    g.cov(0, 0) = cov_x(k, k);
    g.cov(1, 1) = cov_y(k, k);
    return g;
}

const char* to_string(ThresholdSide side) noexcept {
    return side == ThresholdSide::LeftCenter ? "left-center" : "right-center";
}

ThresholdSide threshold_side_from_string(const std::string& s) {
    if (s == "left-center") return ThresholdSide::LeftCenter;
    if (s == "right-center") return ThresholdSide::RightCenter;
    throw Error(ErrorKind::SchemaMismatch, "unknown threshold side '" + s + "'");
}

void empirical_moments(const Eigen::MatrixXd& samples, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    if (samples.rows() < 2) throw Error(ErrorKind::InsufficientCluster, "empirical covariance needs >= 2 members");
    mean = samples.colwise().mean().transpose();
    const Eigen::MatrixXd centered = samples.rowwise() - mean.transpose();
    cov = centered.transpose() * centered / static_cast<double>(samples.rows() - 1);
    cov = 0.5 * (cov + cov.transpose());
}

namespace {

IntendedTrajectory intended_from(const TrajectorySet::Evaluation& eval, const ClusterLabeling& labeling, int k) {
    std::vector<Eigen::Index> rows;
    for (std::size_t j = 0; j < labeling.labels.size(); ++j)
        if (labeling.labels[j] == k) rows.push_back(static_cast<Eigen::Index>(j));
    if (rows.size() < 2)
        throw Error(ErrorKind::InsufficientCluster,
                    "cluster " + std::to_string(k) + " has " + std::to_string(rows.size()) + " members, need >= 2");

    const auto n = eval.x.cols();
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(rows.size()), n);
    Eigen::MatrixXd ys(static_cast<Eigen::Index>(rows.size()), n);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        xs.row(static_cast<Eigen::Index>(r)) = eval.x.row(rows[r]);
        ys.row(static_cast<Eigen::Index>(r)) = eval.y.row(rows[r]);
    }
    IntendedTrajectory it;
    it.cluster = k;
    it.member_count = rows.size();
    empirical_moments(xs, it.mean_x, it.cov_x);
    empirical_moments(ys, it.mean_y, it.cov_y);
    return it;
}

void check_labeling(const TrajectorySet& set, const ClusterLabeling& labeling) {
    if (labeling.labels.size() != set.size())
        throw Error(ErrorKind::DimensionMismatch, "labeling has " + std::to_string(labeling.labels.size()) +
                                                      " labels for " + std::to_string(set.size()) + " trajectories");
}

}  // namespace

IntendedTrajectory build_intended(const TrajectorySet& set, const ClusterLabeling& labeling, int k,
                                  const TimeGrid& grid) {
    check_labeling(set, labeling);
    if (k < 0 || k >= labeling.k) throw Error(ErrorKind::Range, "cluster index out of range");
    return intended_from(set.evaluate(grid.times), labeling, k);
}

TrafficModel build_model(const TrajectorySet& set, const ClusterLabeling& labeling, const TimeGrid& grid,
                         const ModelBuildOptions& options) {
    check_labeling(set, labeling);
    if (labeling.k < 3)
        throw Error(ErrorKind::Precondition, "traffic model needs right, left and straight clusters (k >= 3)");

    TrafficModel model;
    model.grid = grid;
    const auto eval = set.evaluate(grid.times);
    for (int k = 0; k < labeling.k; ++k) model.intended.push_back(intended_from(eval, labeling, k));

    const std::array<std::pair<ThresholdSide, int>, 2> sides{{{ThresholdSide::LeftCenter, kLeftTurn},
                                                              {ThresholdSide::RightCenter, kRightTurn}}};
    const std::array<double, 2> weights{0.5, 0.5};
    for (std::size_t s = 0; s < sides.size(); ++s) {
        auto& seq = model.thresholds[s];
        seq.side = sides[s].first;
        const auto& turn = model.intended[static_cast<std::size_t>(sides[s].second)];
        const auto& straight = model.intended[kStraight];
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const std::array<GaussianDist, 2> pair{turn.marginal(i), straight.marginal(i)};
            try {
                seq.per_time.push_back(wasserstein_barycenter(pair, weights, options.barycenter).dist);
            } catch (const Error& e) {
                throw Error(e.kind(), std::string(to_string(seq.side)) + " threshold at t = " +
                                          std::to_string(grid.times[i]) + ": " + e.what());
            }
        }
    }

    std::vector<double> tx, nx, ty, ny;
    for (const auto& m : set.members()) {
        tx.push_back(m.hyper_x().theta);
        nx.push_back(m.hyper_x().noise_var);
        ty.push_back(m.hyper_y().theta);
        ny.push_back(m.hyper_y().noise_var);
    }
    model.observation_prior.x = {median_of(tx), median_of(nx)};
    model.observation_prior.y = {median_of(ty), median_of(ny)};

    model.metadata.build_time = options.build_time.empty() ? utc_now() : options.build_time;
    model.metadata.dataset_digest = dataset_digest(set);
    model.metadata.k = labeling.k;
    model.metadata.j = set.size();
    return model;
}

Intention sample_intention(const TrafficModel& model, int k, double t) {
    if (k < 0 || k >= model.k()) throw Error(ErrorKind::Range, "cluster index " + std::to_string(k) + " out of range");
    const auto& times = model.grid.times;
    if (times.empty() || t < times.front() || t > times.back() || !std::isfinite(t))
        throw Error(ErrorKind::Range, "intention time " + std::to_string(t) + " outside the model grid");
    const auto& it = model.intended[static_cast<std::size_t>(k)];

    auto hi = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), t) - times.begin());
    Intention out;
    out.time = t;
    if (times[hi] == t || hi == 0) {
        const auto i = static_cast<Eigen::Index>(hi);
        out.mean_x = it.mean_x[i];
        out.mean_y = it.mean_y[i];
        out.var_x = it.cov_x(i, i);
        out.var_y = it.cov_y(i, i);
        return out;
    }
    const auto b = static_cast<Eigen::Index>(hi);
    const auto a = b - 1;
    const double w = (t - times[hi - 1]) / (times[hi] - times[hi - 1]);
    out.mean_x = (1 - w) * it.mean_x[a] + w * it.mean_x[b];
    out.mean_y = (1 - w) * it.mean_y[a] + w * it.mean_y[b];
    out.var_x = std::max(0.0, (1 - w) * it.cov_x(a, a) + w * it.cov_x(b, b));
    out.var_y = std::max(0.0, (1 - w) * it.cov_y(a, a) + w * it.cov_y(b, b));
    return out;
}

std::string dataset_digest(const TrajectorySet& set) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& m : set.members()) {
        h = fnv1a(h, &m.id, sizeof m.id);
        for (const GpPosterior* gp : {&m.gp_x, &m.gp_y}) {
            const auto& t = gp->train_times();
            const auto& z = gp->train_values();
            h = fnv1a(h, t.data(), sizeof(double) * static_cast<std::size_t>(t.size()));
            h = fnv1a(h, z.data(), sizeof(double) * static_cast<std::size_t>(z.size()));
        }
        for (const AnchorLine* a : {&m.anchor_x, &m.anchor_y}) {
            h = fnv1a(h, &a->intercept, sizeof a->intercept);
            h = fnv1a(h, &a->slope, sizeof a->slope);
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string model_to_json(const TrafficModel& model) {
    json doc;
    doc["version"] = std::to_string(kModelMajorVersion) + "." + std::to_string(kModelMinorVersion);
    doc["horizon"] = model.grid.horizon;
    doc["rate"] = model.grid.rate;
    doc["n"] = model.grid.size();
    doc["times"] = model.grid.times;
    doc["k"] = model.k();
    json clusters = json::array();
    for (const auto& it : model.intended) {
        clusters.push_back({{"k", it.cluster},
                            {"mean_x", vector_json(it.mean_x)},
                            {"mean_y", vector_json(it.mean_y)},
                            {"cov_x", matrix_json(it.cov_x)},
                            {"cov_y", matrix_json(it.cov_y)},
                            {"count", it.member_count}});
    }
    doc["clusters"] = std::move(clusters);
    json thresholds = json::array();
    for (const auto& seq : model.thresholds) {
        json per_time = json::array();
        for (const auto& g : seq.per_time) per_time.push_back({{"mean", vector_json(g.mean)}, {"cov", matrix_json(g.cov)}});
        thresholds.push_back({{"side", to_string(seq.side)}, {"per_time", std::move(per_time)}});
    }
    doc["thresholds"] = std::move(thresholds);
    doc["metadata"] = {{"build_time", model.metadata.build_time},
                       {"dataset_digest", model.metadata.dataset_digest},
                       {"k", model.metadata.k},
                       {"j", model.metadata.j}};
    doc["observation_prior"] = {{"x", hyper_json(model.observation_prior.x)},
                                {"y", hyper_json(model.observation_prior.y)}};
    return doc.dump();
}

TrafficModel model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::CorruptFile, std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        const auto version = doc.at("version").get<std::string>();
        int major = 0;
        int minor = 0;
        if (std::sscanf(version.c_str(), "%d.%d", &major, &minor) != 2)
            throw Error(ErrorKind::SchemaMismatch, "malformed model version '" + version + "'");
        if (major != kModelMajorVersion)
            throw Error(ErrorKind::SchemaMismatch, "unsupported model major version " + std::to_string(major));

        TrafficModel model;
        const auto n = doc.at("n").get<std::size_t>();
        model.grid.horizon = doc.at("horizon").get<double>();
        model.grid.rate = doc.at("rate").get<double>();
        if (doc.contains("times")) {
            const Eigen::VectorXd t = vector_from(doc["times"], n, "times");
            model.grid.times.assign(t.data(), t.data() + t.size());
        } else {
            model.grid = TimeGrid::uniform(model.grid.horizon, n, model.grid.rate);
        }
        for (const auto& c : doc.at("clusters")) {
            IntendedTrajectory it;
            it.cluster = c.at("k").get<int>();
            it.mean_x = vector_from(c.at("mean_x"), n, "mean_x");
            it.mean_y = vector_from(c.at("mean_y"), n, "mean_y");
            it.cov_x = matrix_from(c.at("cov_x"), n, "cov_x");
            it.cov_y = matrix_from(c.at("cov_y"), n, "cov_y");
            it.member_count = c.at("count").get<std::size_t>();
            if (it.cluster != static_cast<int>(model.intended.size()))
                throw Error(ErrorKind::SchemaMismatch, "clusters must be listed in canonical order");
            model.intended.push_back(std::move(it));
        }
        const auto& thr = doc.at("thresholds");
        if (!thr.is_array() || thr.size() != 2) throw Error(ErrorKind::SchemaMismatch, "expected two threshold sequences");
        for (const auto& seq_json : thr) {
            ThresholdSequence seq;
            seq.side = threshold_side_from_string(seq_json.at("side").get<std::string>());
            for (const auto& g : seq_json.at("per_time"))
                seq.per_time.push_back({vector_from(g.at("mean"), 2, "threshold mean"), matrix_from(g.at("cov"), 2, "threshold cov")});
            if (seq.per_time.size() != n) throw Error(ErrorKind::SchemaMismatch, "threshold length differs from grid");
            model.thresholds[seq.side == ThresholdSide::LeftCenter ? 0 : 1] = std::move(seq);
        }
        if (doc.contains("metadata")) {
            const auto& m = doc["metadata"];
            model.metadata.build_time = m.value("build_time", "");
            model.metadata.dataset_digest = m.value("dataset_digest", "");
            model.metadata.k = m.value("k", model.k());
            model.metadata.j = m.value("j", std::size_t{0});
        } else {
            model.metadata.k = model.k();
        }
        // Added in 1.1; older files fall back to the defaults.
        if (doc.contains("observation_prior")) {
            model.observation_prior.x = hyper_from(doc["observation_prior"].at("x"));
            model.observation_prior.y = hyper_from(doc["observation_prior"].at("y"));
        }
        return model;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("model file does not match the schema: ") + e.what());
    }
}

void save_model(const TrafficModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write model '" + path.string() + "'");
    out << model_to_json(model) << '\n';
    if (!out) throw Error(ErrorKind::Io, "failed writing model '" + path.string() + "'");
}

TrafficModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open model file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace isect
