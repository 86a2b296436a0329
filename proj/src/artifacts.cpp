#include "isect/artifacts.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "isect/error.hpp"

namespace isect {

using nlohmann::json;

namespace {

json hyper_json(const Hyperparameters& h) { return {{"theta", h.theta}, {"noise_var", h.noise_var}}; }

Hyperparameters hyper_from(const json& j) { return {j.at("theta").get<double>(), j.at("noise_var").get<double>()}; }

AnchorLine anchor_from(const json& j) { return {j.at("intercept").get<double>(), j.at("slope").get<double>()}; }

std::vector<double> residuals(const Eigen::VectorXd& values) { return {values.data(), values.data() + values.size()}; }

}  // namespace

std::string trajectory_set_to_json(const TrajectorySet& set) {
    json doc;
    doc["version"] = kReconstructedVersion;
    doc["trajectories"] = json::array();
    for (const auto& r : set.members()) {
        const auto& t = r.gp_x.train_times();
        json entry{{"id", r.id},
                   {"extrapolated", r.extrapolated},
                   {"anchor_x", {{"intercept", r.anchor_x.intercept}, {"slope", r.anchor_x.slope}}},
                   {"anchor_y", {{"intercept", r.anchor_y.intercept}, {"slope", r.anchor_y.slope}}},
                   {"hyper_x", hyper_json(r.hyper_x())},
                   {"hyper_y", hyper_json(r.hyper_y())},
                   {"times", std::vector<double>(t.data(), t.data() + t.size())},
                   {"residual_x", residuals(r.gp_x.train_values())},
                   {"residual_y", residuals(r.gp_y.train_values())}};
        doc["trajectories"].push_back(std::move(entry));
    }
    return doc.dump();
}

TrajectorySet trajectory_set_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptFile, std::string("reconstructed set is not valid JSON: ") + e.what());
    }
    std::vector<ReconstructedTrajectory> members;
    try {
        if (doc.at("version").get<int>() != kReconstructedVersion)
            throw Error(ErrorKind::SchemaMismatch, "unsupported reconstructed set version");
        for (const auto& e : doc.at("trajectories")) {
            ReconstructedTrajectory r;
            r.id = e.at("id").get<TrajectoryId>();
            r.extrapolated = e.at("extrapolated").get<bool>();
            r.anchor_x = anchor_from(e.at("anchor_x"));
            r.anchor_y = anchor_from(e.at("anchor_y"));
            const auto times = e.at("times").get<std::vector<double>>();
            const auto rx = e.at("residual_x").get<std::vector<double>>();
            const auto ry = e.at("residual_y").get<std::vector<double>>();
            if (rx.size() != times.size() || ry.size() != times.size())
                throw Error(ErrorKind::SchemaMismatch, "trajectory " + std::to_string(r.id) + ": column lengths differ");
            const auto hx = hyper_from(e.at("hyper_x"));
            const auto hy = hyper_from(e.at("hyper_y"));
            r.gp_x = GpPosterior::fit(times, rx, WienerVelocityKernel(hx.theta), hx.noise_var);
            r.gp_y = GpPosterior::fit(times, ry, WienerVelocityKernel(hy.theta), hy.noise_var);
            members.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::SchemaMismatch, std::string("reconstructed set: ") + e.what());
    }
    return TrajectorySet(std::move(members));
}

void save_trajectory_set(const TrajectorySet& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << trajectory_set_to_json(set) << '\n';
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

TrajectorySet load_trajectory_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open reconstructed set '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return trajectory_set_from_json(buf.str());
}

void save_labels(const std::filesystem::path& path, std::span<const TrajectoryId> ids, std::span<const int> labels) {
    if (ids.size() != labels.size()) throw Error(ErrorKind::DimensionMismatch, "ids and labels differ in length");
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << "trajectory_id,cluster\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << labels[i] << '\n';
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

ClusterLabeling load_labels(const std::filesystem::path& path, const TrajectorySet& set) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open labels '" + path.string() + "'");
    std::map<TrajectoryId, int> by_id;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty() || line == "\r") continue;
        std::istringstream row(line);
        TrajectoryId id = 0;
        int cluster = 0;
        char comma = 0;
        if (!(row >> id >> comma >> cluster) || comma != ',' || cluster < 0)
            throw Error(ErrorKind::Parse, "labels line " + std::to_string(line_no) + ": malformed row");
        by_id[id] = cluster;
    }
    if (by_id.size() != set.size())
        throw Error(ErrorKind::SchemaMismatch, "labels cover " + std::to_string(by_id.size()) + " trajectories, set has " +
                                                   std::to_string(set.size()));
    ClusterLabeling labeling;
    for (const auto& r : set.members()) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) throw Error(ErrorKind::SchemaMismatch, "no label for trajectory " + std::to_string(r.id));
        labeling.labels.push_back(it->second);
        labeling.k = std::max(labeling.k, it->second + 1);
    }
    return labeling;
}

}  // namespace isect
