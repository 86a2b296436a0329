#include "isect/trajectory_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "isect/error.hpp"

namespace isect {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return fields;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

Error parse_error(std::size_t line_no, const std::string& what) {
    return Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void RawTrajectory::validate() const {
    const auto fail = [this](const std::string& what) {
        return Error(ErrorKind::Precondition, "trajectory " + std::to_string(id) + ": " + what);
    };
    if (xs.size() != times.size() || ys.size() != times.size()) throw fail("column lengths differ");
    if (times.size() < 2) throw fail("fewer than 2 samples");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i]) || !std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw fail("non-finite sample at index " + std::to_string(i));
        if (i > 0 && !(times[i] > times[i - 1])) throw fail("times not strictly increasing");
    }
}

void PreprocessConfig::validate() const {
    if (!(horizon > 0.0)) throw Error(ErrorKind::Config, "horizon must be positive");
    if (!(min_duration_fraction > 0.0 && min_duration_fraction <= 1.0))
        throw Error(ErrorKind::Config, "min_duration_fraction must lie in (0, 1]");
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".json" ? DatasetFormat::Json : DatasetFormat::Csv;
}

std::vector<RawTrajectory> group_samples(std::vector<Sample> samples) {
    // Stable so that the first occurrence of a duplicate (id, t) wins.
    std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        if (a.trajectory_id != b.trajectory_id) return a.trajectory_id < b.trajectory_id;
        return a.timestamp < b.timestamp;
    });

    std::vector<RawTrajectory> out;
    for (const auto& s : samples) {
        if (out.empty() || out.back().id != s.trajectory_id) {
            out.emplace_back();
            out.back().id = s.trajectory_id;
        } else if (out.back().times.back() == s.timestamp) {
            continue;
        }
        out.back().push_back(s.timestamp, s.position.x(), s.position.y());
    }
    return out;
}

std::vector<RawTrajectory> parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;

    // Header: locate the four required columns by name.
    std::array<std::size_t, 4> col{};
    bool have_header = false;
    std::size_t n_columns = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto names = split_commas(line);
        n_columns = names.size();
        constexpr std::array<std::string_view, 4> required{"trajectory_id", "timestamp", "x", "y"};
        for (std::size_t r = 0; r < required.size(); ++r) {
            const auto it = std::find(names.begin(), names.end(), required[r]);
            if (it == names.end())
                throw parse_error(line_no, "header is missing column '" + std::string(required[r]) + "'");
            col[r] = static_cast<std::size_t>(it - names.begin());
        }
        have_header = true;
        break;
    }
    if (!have_header) throw Error(ErrorKind::EmptyDataset, "dataset is empty");

    std::vector<Sample> samples;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_commas(line);
        if (fields.size() != n_columns)
            throw parse_error(line_no, "expected " + std::to_string(n_columns) + " fields, found " +
                                           std::to_string(fields.size()));
        Sample s;
        double x = 0.0;
        double y = 0.0;
        if (!parse_number(fields[col[0]], s.trajectory_id))
            throw parse_error(line_no, "invalid trajectory_id '" + std::string(fields[col[0]]) + "'");
        if (!parse_number(fields[col[1]], s.timestamp) || !std::isfinite(s.timestamp))
            throw parse_error(line_no, "invalid timestamp '" + std::string(fields[col[1]]) + "'");
        if (!parse_number(fields[col[2]], x) || !std::isfinite(x))
            throw parse_error(line_no, "invalid x '" + std::string(fields[col[2]]) + "'");
        if (!parse_number(fields[col[3]], y) || !std::isfinite(y))
            throw parse_error(line_no, "invalid y '" + std::string(fields[col[3]]) + "'");
        s.position = {x, y};
        samples.push_back(s);
    }
    if (samples.empty()) throw Error(ErrorKind::EmptyDataset, "dataset has a header but no rows");
    return group_samples(std::move(samples));
}

std::vector<RawTrajectory> parse_json(std::istream& in) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (trim(text).empty()) throw Error(ErrorKind::EmptyDataset, "dataset is empty");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorKind::Parse, "record 0: top-level value must be an array");
    if (doc.empty()) throw Error(ErrorKind::EmptyDataset, "dataset is empty");

    std::vector<Sample> samples;
    samples.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        try {
            Sample s;
            s.trajectory_id = rec.at("trajectory_id").get<TrajectoryId>();
            s.timestamp = rec.at("timestamp").get<double>();
            s.position = {rec.at("x").get<double>(), rec.at("y").get<double>()};
            if (!std::isfinite(s.timestamp) || !s.position.allFinite())
                throw Error(ErrorKind::Parse, "non-finite value");
            samples.push_back(s);
        } catch (const std::exception& e) {
            throw Error(ErrorKind::Parse, "record " + std::to_string(i) + ": " + e.what());
        }
    }
    return group_samples(std::move(samples));
}

std::vector<RawTrajectory> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open dataset '" + path.string() + "'");
    return format == DatasetFormat::Json ? parse_json(in) : parse_csv(in);
}

void write_csv(std::ostream& out, std::span<const RawTrajectory> trajectories) {
    out << "trajectory_id,timestamp,x,y\n";
    out << std::setprecision(17);
    for (const auto& traj : trajectories)
        for (std::size_t i = 0; i < traj.size(); ++i)
            out << traj.id << ',' << traj.times[i] << ',' << traj.xs[i] << ',' << traj.ys[i] << '\n';
}

void save_dataset(const std::filesystem::path& path, std::span<const RawTrajectory> trajectories) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write dataset '" + path.string() + "'");
    write_csv(out, trajectories);
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

RawTrajectory normalize_start_time(RawTrajectory traj) {
    if (traj.times.empty()) return traj;
    const double t0 = traj.times.front();
    for (auto& t : traj.times) t -= t0;
    return traj;
}

HomogenizeResult homogenize(std::span<const RawTrajectory> trajectories, const PreprocessConfig& cfg) {
    cfg.validate();
    HomogenizeResult result;
    const double min_duration = cfg.min_duration_fraction * cfg.horizon;

    for (const auto& traj : trajectories) {
        if (traj.size() < cfg.min_samples || traj.duration() < min_duration) {
            result.discarded.push_back(traj.id);
            continue;
        }
        RawTrajectory kept = traj;
        if (kept.duration() >= cfg.horizon) {
            const auto cut = std::upper_bound(kept.times.begin(), kept.times.end(), cfg.horizon);
            const auto n = static_cast<std::size_t>(cut - kept.times.begin());
            kept.times.resize(n);
            kept.xs.resize(n);
            kept.ys.resize(n);
            if (kept.size() < cfg.min_samples || kept.duration() < min_duration) {
                result.discarded.push_back(traj.id);
                continue;
            }
        }
        kept.needs_extrapolation = kept.times.back() < cfg.horizon;
        result.kept.push_back(std::move(kept));
    }
    return result;
}

HomogenizeResult preprocess(std::span<const RawTrajectory> trajectories, const PreprocessConfig& cfg) {
    std::vector<RawTrajectory> normalized;
    normalized.reserve(trajectories.size());
    for (const auto& t : trajectories) normalized.push_back(normalize_start_time(t));
    return homogenize(normalized, cfg);
}

}  // namespace isect
