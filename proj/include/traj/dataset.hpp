#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/rng.hpp"
#include "traj/trajectory.hpp"

namespace traj {

// The nine tabletop manipulation actions.
enum class Action {
    PickAndPlace,
    PutOnTop,
    TakeDown,
    PutInside,
    TakeOut,
    Hide,
    Uncover,
    Push,
    Pull,
};

inline const std::array<Action, 9>& all_actions() {
    static const std::array<Action, 9> a = {
        Action::PickAndPlace, Action::PutOnTop, Action::TakeDown,
        Action::PutInside,    Action::TakeOut,  Action::Hide,
        Action::Uncover,      Action::Push,     Action::Pull};
    return a;
}

inline std::string action_name(Action a) {
    switch (a) {
        case Action::PickAndPlace: return "pick_and_place";
        case Action::PutOnTop: return "put_on_top";
        case Action::TakeDown: return "take_down";
        case Action::PutInside: return "put_inside";
        case Action::TakeOut: return "take_out";
        case Action::Hide: return "hide";
        case Action::Uncover: return "uncover";
        case Action::Push: return "push";
        case Action::Pull: return "pull";
    }
    throw std::invalid_argument("unknown action");
}

inline Action action_from_name(const std::string& s) {
    for (Action a : all_actions())
        if (action_name(a) == s) return a;
    throw std::invalid_argument("unknown action name: " + s);
}

// Placemat grid cell. Metric position: 0.10 m spacing, start cell S at the
// origin of the table plane.
struct GridPoint {
    int col = 0;
    int row = 0;

    bool operator==(const GridPoint& o) const { return col == o.col && row == o.row; }
    bool operator!=(const GridPoint& o) const { return !(*this == o); }
    bool operator<(const GridPoint& o) const {
        return col != o.col ? col < o.col : row < o.row;
    }
};

inline constexpr double kGridSpacing = 0.10;  // meters
inline constexpr GridPoint kGridStart{4, 0};  // the S cell

inline Eigen::Vector3d grid_to_metric(const GridPoint& p) {
    return {kGridSpacing * (p.col - kGridStart.col), kGridSpacing * (p.row - kGridStart.row), 0.0};
}

// The 13 target cells of the placemat. Chosen to give a frontal column, a
// lateral row and mixed directions, with several orthogonally collinear
// triplets for the generalization tasks.
inline const std::vector<GridPoint>& placemat_targets() {
    static const std::vector<GridPoint> targets = {
        {1, 0}, {2, 0}, {3, 0}, {6, 0},
        {1, 1}, {4, 1}, {6, 1},
        {1, 2}, {2, 2}, {3, 2}, {4, 2}, {5, 2}, {6, 2}};
    return targets;
}

struct DemoRecord {
    Trajectory trajectory;
    Action action = Action::PickAndPlace;
    int participant = 1;
    GridPoint start;
    GridPoint target;
    int repetition = 1;  // >= 1

    // The grid cell the action is "about": the non-S endpoint.
    GridPoint varied_point() const { return target == kGridStart ? start : target; }
};

enum class Provenance { Synthetic, Loaded };

struct DemoSet {
    std::vector<DemoRecord> records;
    Provenance provenance = Provenance::Synthetic;
};

// Per-action path shape: table heights at the two endpoints, lift arc height,
// and whether the motion runs from the grid cell back to S.
struct ActionProfile {
    double z_start = 0.0;
    double z_end = 0.0;
    double arc = 0.0;   // extra lift above the straight profile, 0 = flat
    bool reversed = false;
};

inline ActionProfile action_profile(Action a) {
    switch (a) {
        case Action::PickAndPlace: return {0.00, 0.00, 0.08, false};
        case Action::PutOnTop: return {0.00, 0.06, 0.06, false};
        case Action::TakeDown: return {0.06, 0.00, 0.06, true};
        case Action::PutInside: return {0.00, 0.02, 0.09, false};
        case Action::TakeOut: return {0.02, 0.00, 0.09, true};
        case Action::Hide: return {0.00, 0.00, 0.07, false};
        case Action::Uncover: return {0.00, 0.00, 0.07, true};
        case Action::Push: return {0.00, 0.00, 0.00, false};
        case Action::Pull: return {0.00, 0.00, 0.00, true};
    }
    throw std::invalid_argument("unknown action");
}

struct SynthConfig {
    std::vector<Action> actions{all_actions().begin(), all_actions().end()};
    std::vector<GridPoint> targets{{1, 0}, {1, 1}, {1, 2}, {2, 2}, {4, 1}};
    int participants = 1;
    int repetitions = 3;
    double noise = 0.005;  // meters, endpoint sigma; also scales shape jitter
    double dt = 0.01;
    std::uint64_t seed = 0;
};

namespace detail {

inline double minjerk_phase(double s) {
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

}  // namespace detail

// Builds one repetition of an action towards a grid target: minimum-jerk
// timing along the straight line, a single sin(pi*m) lift hump, smooth
// per-repetition perturbations and Gaussian endpoint noise, all scaled by the
// noise level. Flat actions (push/pull) stay exactly in the table plane.
inline Trajectory synth_trajectory(Action action, const GridPoint& cell, double noise,
                                   double dt, Rng& rng) {
    const ActionProfile prof = action_profile(action);
    const Eigen::Vector3d grid_pos = grid_to_metric(cell);
    Eigen::Vector3d p0, p1;
    if (!prof.reversed) {
        p0 = Eigen::Vector3d(0.0, 0.0, prof.z_start);
        p1 = grid_pos + Eigen::Vector3d(0.0, 0.0, prof.z_end);
    } else {
        p0 = grid_pos + Eigen::Vector3d(0.0, 0.0, prof.z_start);
        p1 = Eigen::Vector3d(0.0, 0.0, prof.z_end);
    }
    const double dist = (p1.head<2>() - p0.head<2>()).norm();
    double duration = (0.6 + 0.8 * dist) * (1.0 + 10.0 * noise * rng.gaussian());
    duration = std::max(duration, 0.3);
    const std::size_t n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;

    const bool flat = prof.arc == 0.0 && prof.z_start == 0.0 && prof.z_end == 0.0;
    const Eigen::Vector3d zmask = flat ? Eigen::Vector3d(1, 1, 0) : Eigen::Vector3d(1, 1, 1);
    const Eigen::Vector3d d_start = noise * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian()).cwiseProduct(zmask);
    const Eigen::Vector3d d_end = noise * Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian()).cwiseProduct(zmask);
    std::array<Eigen::Vector3d, 3> ripple;
    for (int k = 0; k < 3; ++k)
        ripple[k] = (noise / (k + 1.0)) *
                    Eigen::Vector3d(rng.gaussian(), rng.gaussian(), rng.gaussian()).cwiseProduct(zmask);

    std::vector<Eigen::Vector3d> pos(n);
    const double T = (static_cast<double>(n) - 1.0) * dt;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) * dt / T;
        const double m = detail::minjerk_phase(s);
        Eigen::Vector3d p = (1.0 - m) * p0 + m * p1;
        p.z() += prof.arc * std::sin(M_PI * m);
        p += (1.0 - m) * d_start + m * d_end;
        for (int k = 0; k < 3; ++k) p += std::sin((k + 1.0) * M_PI * s) * ripple[k];
        pos[i] = p;
    }
    return Trajectory(std::move(pos), dt);
}

// Deterministic for a fixed seed: every (action,target,participant,repetition)
// tuple draws from its own derived generator, so ordering and thread count
// cannot change the data.
inline DemoSet synth_generate(const SynthConfig& cfg) {
    if (cfg.actions.empty()) throw std::invalid_argument("synth_generate: empty action list");
    if (cfg.noise < 0.0) throw std::invalid_argument("synth_generate: negative noise level");
    DemoSet set;
    set.provenance = Provenance::Synthetic;
    for (std::size_t ai = 0; ai < cfg.actions.size(); ++ai) {
        const Action action = cfg.actions[ai];
        const ActionProfile prof = action_profile(action);
        for (const GridPoint& cell : cfg.targets) {
            for (int part = 1; part <= cfg.participants; ++part) {
                for (int rep = 1; rep <= cfg.repetitions; ++rep) {
                    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(ai),
                                        static_cast<std::uint64_t>(cell.col + 16),
                                        static_cast<std::uint64_t>(cell.row + 16),
                                        static_cast<std::uint64_t>(part),
                                        static_cast<std::uint64_t>(rep)));
                    DemoRecord rec;
                    rec.trajectory = synth_trajectory(action, cell, cfg.noise, cfg.dt, rng);
                    rec.action = action;
                    rec.participant = part;
                    rec.start = prof.reversed ? cell : kGridStart;
                    rec.target = prof.reversed ? kGridStart : cell;
                    rec.repetition = rep;
                    set.records.push_back(std::move(rec));
                }
            }
        }
    }
    return set;
}

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline Trajectory load_trajectory_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ParseError("cannot open trajectory file: " + file.string());
    std::string line;
    if (!std::getline(in, line) || (line != "t,x,y,z" && line != "t,x,y,z\r"))
        throw ParseError(file.string() + ":1: expected header t,x,y,z");
    std::vector<double> ts;
    std::vector<Eigen::Vector3d> pos;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        double t, x, y, z;
        char extra;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf %c", &t, &x, &y, &z, &extra) != 4)
            throw ParseError(file.string() + ":" + std::to_string(lineno) + ": malformed row");
        if (!ts.empty() && t <= ts.back())
            throw SchemaError(file.string() + ":" + std::to_string(lineno) +
                              ": timestamps not strictly increasing");
        ts.push_back(t);
        pos.emplace_back(x, y, z);
    }
    if (pos.size() < 2) throw ParseError(file.string() + ": fewer than 2 samples");
    const double span = ts.back() - ts.front();
    const double dt_src = span / (static_cast<double>(ts.size()) - 1.0);
    for (std::size_t i = 1; i < ts.size(); ++i)
        if (std::abs((ts[i] - ts[i - 1]) - dt_src) > 1e-6)
            throw SchemaError(file.string() + ": non-uniform sample spacing");
    Trajectory t(std::move(pos), dt_src);
    if (std::abs(dt_src - 0.01) > 1e-9) {
        const std::size_t n = static_cast<std::size_t>(std::llround(span / 0.01)) + 1;
        t = resample(t, std::max<std::size_t>(n, 2));
        t.dt = 0.01;
    }
    return t;
}

}  // namespace detail

// Manifest: JSON array of {file, action, participant, start, target,
// repetition}; file paths are relative to the manifest location.
inline DemoSet load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ParseError("cannot open manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw SchemaError(manifest_path.string() + ": manifest must be an array");
    const auto base = manifest_path.parent_path();
    DemoSet set;
    set.provenance = Provenance::Loaded;
    for (const auto& e : j) {
        DemoRecord rec;
        rec.trajectory = detail::load_trajectory_csv(base / e.at("file").get<std::string>());
        rec.action = action_from_name(e.at("action").get<std::string>());
        rec.participant = e.at("participant").get<int>();
        rec.start = {e.at("start").at(0).get<int>(), e.at("start").at(1).get<int>()};
        rec.target = {e.at("target").at(0).get<int>(), e.at("target").at(1).get<int>()};
        rec.repetition = e.at("repetition").get<int>();
        if (rec.repetition < 1) throw SchemaError("repetition must be >= 1");
        set.records.push_back(std::move(rec));
    }
    return set;
}

// Writes manifest.json plus one CSV per record, full double precision so a
// save/load round trip reproduces positions bit for bit.
inline std::filesystem::path save_dataset(const DemoSet& set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "data");
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const DemoRecord& rec = set.records[i];
        char name[32];
        std::snprintf(name, sizeof(name), "data/%05zu.csv", i);
        std::ofstream out(dir / name);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << "t,x,y,z\n";
        for (std::size_t k = 0; k < rec.trajectory.size(); ++k) {
            const auto& p = rec.trajectory.positions[k];
            out << detail::fmt_double(static_cast<double>(k) * rec.trajectory.dt) << ','
                << detail::fmt_double(p.x()) << ',' << detail::fmt_double(p.y()) << ','
                << detail::fmt_double(p.z()) << '\n';
        }
        manifest.push_back({{"file", name},
                            {"action", action_name(rec.action)},
                            {"participant", rec.participant},
                            {"start", {rec.start.col, rec.start.row}},
                            {"target", {rec.target.col, rec.target.row}},
                            {"repetition", rec.repetition}});
    }
    const auto path = dir / "manifest.json";
    std::ofstream out(path);
    out << manifest.dump(1) << '\n';
    return path;
}

}  // namespace traj
