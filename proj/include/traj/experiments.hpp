#pragma once

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "traj/dataset.hpp"
#include "traj/dmp.hpp"
#include "traj/gmm.hpp"
#include "traj/metrics.hpp"
#include "traj/report.hpp"
#include "traj/seds.hpp"
#include "traj/tpgmm.hpp"

namespace traj {

enum class Scenario { Reconstruction, FewDemoInterp, FewDemoExtrap, ManyDemo };

inline std::string scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Reconstruction: return "recon";
        case Scenario::FewDemoInterp: return "fewdemo_interp";
        case Scenario::FewDemoExtrap: return "fewdemo_extrap";
        case Scenario::ManyDemo: return "manydemo";
    }
    throw std::invalid_argument("unknown scenario");
}

struct ExperimentSpec {
    Scenario scenario = Scenario::Reconstruction;
    std::set<std::string> models = {"dmp", "tpgmm", "seds"};
    std::vector<int> k_values = {3, 6};
    int seds_k_cap = 7;  // optimization time grows too fast above this
    double kappa_override = 0.0;              // 0 = per-K default table
    std::map<int, double> tbgmr_epsilon;      // reconstruction; falls back to default
    double tpgmm_epsilon = 1e-6;              // generalization regularization
    SedsFitOptions seds;
    std::uint64_t seed = 0;

    void validate() const {
        for (int k : k_values)
            if (k < 2 || k > 20) throw std::invalid_argument("K range must lie within [2, 20]");
        if (models.empty()) throw std::invalid_argument("no models selected");
    }

    double kappa_for(int K) const { return kappa_override > 0.0 ? kappa_override : default_kappa(K); }
    double tbgmr_epsilon_for(int K) const {
        auto it = tbgmr_epsilon.find(K);
        return it != tbgmr_epsilon.end() ? it->second : 1e-4;
    }
};

// Orthogonally collinear grid triplets with unit spacing. Each triple yields
// one interpolation task (outer pair toward the middle) and two
// extrapolation tasks (middle plus one outer toward the other outer).
struct TripletTask {
    GridPoint demo_a, demo_b;  // demonstration endpoints
    GridPoint target;
    bool extrapolate = false;

    std::string id() const {
        auto cell = [](const GridPoint& p) {
            return std::to_string(p.col) + "." + std::to_string(p.row);
        };
        return cell(demo_a) + "+" + cell(demo_b) + ">" + cell(target);
    }
};

inline std::vector<TripletTask> enumerate_triplets(const std::vector<GridPoint>& grid) {
    std::set<GridPoint> have(grid.begin(), grid.end());
    std::vector<TripletTask> tasks;
    auto add_line = [&](const GridPoint& a, const GridPoint& m, const GridPoint& b) {
        tasks.push_back({a, b, m, false});
        tasks.push_back({a, m, b, true});
        tasks.push_back({m, b, a, true});
    };
    for (const GridPoint& p : grid) {
        const GridPoint right1{p.col + 1, p.row}, right2{p.col + 2, p.row};
        const GridPoint up1{p.col, p.row + 1}, up2{p.col, p.row + 2};
        if (have.count(right1) && have.count(right2)) add_line(p, right1, right2);
        if (have.count(up1) && have.count(up2)) add_line(p, up1, up2);
    }
    return tasks;
}

// Records whose trajectories were read while fitting. The generalization
// target's repetitions must never appear here; the experiments assert this
// for every case.
class DemoAccessLog {
public:
    explicit DemoAccessLog(const DemoSet& set) : set_(&set) {}

    const Trajectory& fit_read(std::size_t index) {
        fit_reads_.insert(index);
        return set_->records[index].trajectory;
    }

    const std::set<std::size_t>& fit_reads() const { return fit_reads_; }

    void assert_targets_unread(const std::vector<std::size_t>& target_indices) const {
        for (std::size_t t : target_indices)
            if (fit_reads_.count(t))
                throw std::logic_error("experiment read a generalization target during fitting");
    }

private:
    const DemoSet* set_;
    std::set<std::size_t> fit_reads_;
};

inline int worker_count() {
    if (const char* env = std::getenv("BENCH_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

// Runs fn(i) for i in [0, n) on a small pool. Each case writes only its own
// result slot, so scheduling cannot change the output.
template <typename Fn>
inline void parallel_cases(std::size_t n, Fn&& fn) {
    const int workers = std::min<int>(worker_count(), static_cast<int>(n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(body);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

namespace detail {

inline std::vector<double> trajectory_timestamps(const Trajectory& t) {
    std::vector<double> ts(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) ts[i] = static_cast<double>(i) * t.dt;
    return ts;
}

inline Trajectory shifted(const Trajectory& t, const Eigen::Vector3d& offset) {
    std::vector<Eigen::Vector3d> pos(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) pos[i] = t.positions[i] + offset;
    return Trajectory(std::move(pos), t.dt);
}

// varying dimensions of a generalization task: where the involved grid cells
// actually differ (the table plane; height never varies across cells)
inline std::array<bool, 3> varying_dims(const std::vector<GridPoint>& cells) {
    std::array<bool, 3> vary = {false, false, false};
    for (std::size_t i = 1; i < cells.size(); ++i) {
        const Eigen::Vector3d d = grid_to_metric(cells[i]) - grid_to_metric(cells[0]);
        for (int k = 0; k < 3; ++k)
            if (std::abs(d[k]) > 1e-9) vary[static_cast<std::size_t>(k)] = true;
    }
    return vary;
}

// frame-1 image of an endpoint pair: (horizontal reach, climb)
inline Eigen::Vector2d frame1_signature(const Eigen::Vector3d& start, const Eigen::Vector3d& end) {
    const Eigen::Vector3d d = end - start;
    return {std::hypot(d.x(), d.y()), d.z()};
}

}  // namespace detail

// Many-demo exclusion: a demo ending strictly closer than 3 cm to the
// generalization target's end-point provides a direct demonstration and is
// dropped from the demo set.
inline bool manydemo_excluded(const Eigen::Vector3d& demo_varied_end,
                              const Eigen::Vector3d& target_varied_end) {
    return (demo_varied_end - target_varied_end).norm() < 0.03;
}

// ---- reconstruction sweep --------------------------------------------------

inline EvalReport run_reconstruction(const DemoSet& set, const ExperimentSpec& spec) {
    spec.validate();
    struct Case {
        std::size_t rec;
        std::string model;
        int K;
    };
    std::vector<Case> cases;
    for (std::size_t r = 0; r < set.records.size(); ++r)
        for (const std::string& m : spec.models)
            for (int k : spec.k_values) {
                if (m == "seds" && k > spec.seds_k_cap) continue;
                // reconstruction uses the plain time-based encoding
                cases.push_back({r, m == "tpgmm" ? "tbgmr" : m, k});
            }
    std::vector<CaseRecord> out(cases.size());
    parallel_cases(cases.size(), [&](std::size_t ci) {
        const Case& c = cases[ci];
        const DemoRecord& rec = set.records[c.rec];
        const Trajectory& demo = rec.trajectory;
        CaseRecord row;
        row.scenario = scenario_name(Scenario::Reconstruction);
        row.model = c.model;
        row.K = c.K;
        row.action = action_name(rec.action);
        row.participant = rec.participant;
        row.case_id = "rec" + std::to_string(c.rec);
        row.repetition = rec.repetition;
        row.dur_ratio = 1.0;
        try {
            if (c.model == "dmp") {
                DmpConfig cfg;
                cfg.K = c.K;
                cfg.kappa = spec.kappa_for(c.K);
                const DmpModel model = dmp_encode(demo, cfg);
                const Trajectory roll = dmp_integrate(model, demo.front(), demo.back(), demo.size());
                row.d = rms_distance(roll, demo);
                row.d_e = endpoint_distance(roll, demo);
            } else if (c.model == "tbgmr") {
                const Gmm g = tbgmr_encode(demo, c.K, spec.tbgmr_epsilon_for(c.K));
                auto [roll, cov] = tbgmr_reconstruct(g, detail::trajectory_timestamps(demo));
                row.d = rms_distance(roll, demo);
                row.d_e = endpoint_distance(roll, demo);
                try {
                    row.oscillation = oscillation_metric(differentiate(roll), c.K, roll.duration());
                } catch (const UndefinedMetricError&) {
                }
            } else if (c.model == "seds") {
                SedsFitOptions opts = spec.seds;
                opts.K = c.K;
                opts.seed = derive_seed(spec.seed, 0x7ec0ULL, static_cast<std::uint64_t>(ci));
                const SedsFitResult fit = seds_fit({demo}, demo.back(), opts);
                if (fit.ok()) {
                    const IntegrationResult roll =
                        seds_integrate(*fit.model, demo.front(), IntegrateMode::fixed(demo.size()));
                    row.d = rms_distance(roll.trajectory, demo);
                    row.d_e = endpoint_distance(roll.trajectory, demo);
                } else {
                    row.success = false;
                    row.fail_reason = "seds: " + fit.report.last_gate;
                }
            }
        } catch (const std::exception& e) {
            row.success = false;
            row.fail_reason = e.what();
        }
        out[ci] = std::move(row);
    });
    EvalReport rep;
    rep.records = std::move(out);
    rep.canonicalize();
    return rep;
}

// ---- generalization scenarios ----------------------------------------------

namespace detail {

struct GenTask {
    Action action;
    int participant;
    std::string case_id;
    std::vector<std::size_t> demo_indices;
    std::vector<std::size_t> demo_indices_tpgmm;  // after the frame-space exclusion
    std::vector<std::size_t> target_indices;      // repetitions of the target
    std::array<bool, 3> vary = {true, true, false};
    std::string skip_reason;  // nonempty: emit failure rows only
};

// per-(action,participant) index of varied grid cells to repetition records
inline std::map<std::pair<Action, int>, std::map<GridPoint, std::vector<std::size_t>>> group_records(
    const DemoSet& set) {
    std::map<std::pair<Action, int>, std::map<GridPoint, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
        const DemoRecord& r = set.records[i];
        groups[{r.action, r.participant}][r.varied_point()].push_back(i);
    }
    return groups;
}

// Evaluates one generalization task for every requested model and K and
// appends the rows. The access log guards the fit phase.
inline void evaluate_gen_task(const DemoSet& set, const ExperimentSpec& spec, const GenTask& task,
                              const std::string& scenario, std::uint64_t case_salt,
                              std::vector<CaseRecord>& rows) {
    auto base_row = [&](const std::string& model, int K) {
        CaseRecord row;
        row.scenario = scenario;
        row.model = model;
        row.K = K;
        row.action = action_name(task.action);
        row.participant = task.participant;
        row.case_id = task.case_id;
        return row;
    };

    if (!task.skip_reason.empty()) {
        for (const std::string& m : spec.models)
            for (int k : spec.k_values) {
                if (m == "seds" && k > spec.seds_k_cap) continue;
                CaseRecord row = base_row(m, k);
                row.success = false;
                row.fail_reason = task.skip_reason;
                rows.push_back(std::move(row));
            }
        return;
    }

    // human variability baseline, one row per K for plotting alongside models
    if (task.target_indices.size() >= 2) {
        std::vector<Trajectory> reps;
        for (std::size_t t : task.target_indices) reps.push_back(set.records[t].trajectory);
        const double dh = inter_human_variance(reps);
        for (int k : spec.k_values) {
            CaseRecord row = base_row("human", k);
            row.d = dh;
            rows.push_back(std::move(row));
        }
    }

    for (int K : spec.k_values) {
        // --- DMP: weight averaging over the individual encodings
        if (spec.models.count("dmp")) {
            DemoAccessLog log(set);
            try {
                DmpConfig cfg;
                cfg.K = K;
                cfg.kappa = spec.kappa_for(K);
                std::vector<DmpModel> encodings;
                for (std::size_t i : task.demo_indices)
                    encodings.push_back(dmp_encode(log.fit_read(i), cfg));
                log.assert_targets_unread(task.target_indices);
                for (std::size_t t : task.target_indices) {
                    const DemoRecord& target = set.records[t];
                    CaseRecord row = base_row("dmp", K);
                    row.repetition = target.repetition;
                    try {
                        const Eigen::Vector3d offset =
                            target.trajectory.back() - target.trajectory.front();
                        DmpModel gen = dmp_generalize(encodings, offset, task.vary);
                        gen.T = target.trajectory.duration();  // evaluation fixes the duration
                        const Trajectory roll =
                            dmp_integrate(gen, target.trajectory.front(), target.trajectory.back(),
                                          target.trajectory.size());
                        row.d = rms_distance(roll, target.trajectory);
                        row.d_e = endpoint_distance(roll, target.trajectory);
                        row.dur_ratio = 1.0;
                    } catch (const std::exception& e) {
                        row.success = false;
                        row.fail_reason = e.what();
                    }
                    rows.push_back(std::move(row));
                }
            } catch (const std::exception& e) {
                for (std::size_t t : task.target_indices) {
                    CaseRecord row = base_row("dmp", K);
                    row.repetition = set.records[t].repetition;
                    row.success = false;
                    row.fail_reason = e.what();
                    rows.push_back(std::move(row));
                }
            }
        }

        // --- TP-GMM: one multi-frame fit, recombined per target repetition
        if (spec.models.count("tpgmm")) {
            DemoAccessLog log(set);
            try {
                std::vector<Trajectory> demos;
                std::vector<TaskParams> params;
                for (std::size_t i : task.demo_indices_tpgmm) {
                    const Trajectory& d = log.fit_read(i);
                    demos.push_back(d);
                    params.push_back(frame_params_from_endpoints(d.front(), d.back()));
                }
                if (demos.empty()) throw std::runtime_error("empty demo set after exclusion");
                const TpGmm model = tpgmm_fit(demos, params, K, spec.tpgmm_epsilon);
                log.assert_targets_unread(task.target_indices);
                for (std::size_t t : task.target_indices) {
                    const DemoRecord& target = set.records[t];
                    CaseRecord row = base_row("tpgmm", K);
                    row.repetition = target.repetition;
                    try {
                        const Trajectory roll = tpgmm_generalize(
                            model, target.trajectory.front(), target.trajectory.back(),
                            trajectory_timestamps(target.trajectory));
                        row.d = rms_distance(roll, target.trajectory);
                        row.d_e = endpoint_distance(roll, target.trajectory);
                        row.dur_ratio = 1.0;
                        try {
                            row.oscillation =
                                oscillation_metric(differentiate(roll), K, roll.duration());
                        } catch (const UndefinedMetricError&) {
                        }
                    } catch (const std::exception& e) {
                        row.success = false;
                        row.fail_reason = e.what();
                    }
                    rows.push_back(std::move(row));
                }
            } catch (const std::exception& e) {
                for (std::size_t t : task.target_indices) {
                    CaseRecord row = base_row("tpgmm", K);
                    row.repetition = set.records[t].repetition;
                    row.success = false;
                    row.fail_reason = e.what();
                    rows.push_back(std::move(row));
                }
            }
        }

        // --- SEDS: demos shifted to end at the origin; one fit, two
        // integration modes (fixed duration and relaxed SEDS*)
        if (spec.models.count("seds") && K <= spec.seds_k_cap) {
            DemoAccessLog log(set);
            SedsFitResult fit;
            std::string fit_error;
            try {
                std::vector<Trajectory> demos;
                for (std::size_t i : task.demo_indices) {
                    const Trajectory& d = log.fit_read(i);
                    demos.push_back(shifted(d, -d.back()));
                }
                SedsFitOptions opts = spec.seds;
                opts.K = K;
                opts.seed = derive_seed(spec.seed, case_salt, static_cast<std::uint64_t>(K));
                fit = seds_fit(demos, Eigen::Vector3d::Zero(), opts);
                log.assert_targets_unread(task.target_indices);
            } catch (const std::exception& e) {
                fit_error = e.what();
            }
            for (std::size_t t : task.target_indices) {
                const DemoRecord& target = set.records[t];
                CaseRecord fixed_row = base_row("seds", K);
                CaseRecord relaxed_row = base_row("seds*", K);
                fixed_row.repetition = relaxed_row.repetition = target.repetition;
                if (!fit_error.empty() || !fit.ok()) {
                    fixed_row.success = relaxed_row.success = false;
                    fixed_row.fail_reason = relaxed_row.fail_reason =
                        !fit_error.empty() ? fit_error : "seds: " + fit.report.last_gate;
                } else {
                    const Eigen::Vector3d goal = target.trajectory.back();
                    const Eigen::Vector3d start_rel = target.trajectory.front() - goal;
                    const IntegrationResult fixed = seds_integrate(
                        *fit.model, start_rel, IntegrateMode::fixed(target.trajectory.size()));
                    const Trajectory fixed_traj = shifted(fixed.trajectory, goal);
                    fixed_row.d = rms_distance(fixed_traj, target.trajectory);
                    fixed_row.d_e = endpoint_distance(fixed_traj, target.trajectory);
                    fixed_row.dur_ratio = 1.0;

                    const IntegrationResult rel = seds_integrate(
                        *fit.model, start_rel,
                        IntegrateMode::until_converged(10 * target.trajectory.size()));
                    const Trajectory rel_traj = shifted(rel.trajectory, goal);
                    relaxed_row.dur_ratio = rel.converged
                                                ? rel.arrival_time / target.trajectory.duration()
                                                : rel.trajectory.duration() / target.trajectory.duration();
                    relaxed_row.endpoint_converged =
                        rel.converged &&
                        relaxed_time_success(rel.arrival_time, target.trajectory.duration());
                    // the relaxed-condition error is defined among successes
                    if (relaxed_row.endpoint_converged) {
                        relaxed_row.d = rms_distance(rel_traj, target.trajectory);
                        relaxed_row.d_e = endpoint_distance(rel_traj, target.trajectory);
                    }
                }
                rows.push_back(std::move(fixed_row));
                rows.push_back(std::move(relaxed_row));
            }
        }
    }
}

}  // namespace detail

// Few-demonstration generalization over orthogonally collinear grid triplets:
// six demos (two sets of repetitions), one held-out target cell, evaluated
// against each target repetition and participant separately.
inline EvalReport run_fewdemo(const DemoSet& set, const ExperimentSpec& spec) {
    spec.validate();
    const bool extrap = spec.scenario == Scenario::FewDemoExtrap;
    const std::string scen = scenario_name(spec.scenario);
    const auto groups = detail::group_records(set);
    std::vector<detail::GenTask> tasks;
    for (const auto& [key, by_cell] : groups) {
        std::vector<GridPoint> cells;
        for (const auto& [cell, idx] : by_cell) cells.push_back(cell);
        for (const TripletTask& trip : enumerate_triplets(cells)) {
            if (trip.extrapolate != extrap) continue;
            detail::GenTask task;
            task.action = key.first;
            task.participant = key.second;
            task.case_id = trip.id();
            for (std::size_t i : by_cell.at(trip.demo_a)) task.demo_indices.push_back(i);
            for (std::size_t i : by_cell.at(trip.demo_b)) task.demo_indices.push_back(i);
            task.demo_indices_tpgmm = task.demo_indices;
            task.target_indices = by_cell.at(trip.target);
            task.vary = detail::varying_dims({trip.demo_a, trip.demo_b, trip.target});
            tasks.push_back(std::move(task));
        }
    }
    std::vector<std::vector<CaseRecord>> slots(tasks.size());
    parallel_cases(tasks.size(), [&](std::size_t ti) {
        detail::evaluate_gen_task(set, spec, tasks[ti], scen, 0xfe3d0 + ti, slots[ti]);
    });
    EvalReport rep;
    for (auto& s : slots)
        for (auto& r : s) rep.records.push_back(std::move(r));
    rep.canonicalize();
    return rep;
}

// Many-demonstration generalization: per target cell, all same-action
// same-participant demos minus the target and anything ending within 3 cm of
// the target's nominal end-point; TP-GMM additionally drops demos within
// 3 cm of the target in its reference frame.
inline EvalReport run_manydemo(const DemoSet& set, const ExperimentSpec& spec) {
    spec.validate();
    const std::string scen = scenario_name(Scenario::ManyDemo);
    const auto groups = detail::group_records(set);
    std::vector<detail::GenTask> tasks;
    for (const auto& [key, by_cell] : groups) {
        const ActionProfile prof = action_profile(key.first);
        for (const auto& [target_cell, target_idx] : by_cell) {
            detail::GenTask task;
            task.action = key.first;
            task.participant = key.second;
            task.case_id = "to" + std::to_string(target_cell.col) + "." + std::to_string(target_cell.row);
            task.target_indices = target_idx;

            // nominal varied end-point of the target task, from the grid alone
            const double z_varied = prof.reversed ? prof.z_start : prof.z_end;
            const Eigen::Vector3d target_end =
                grid_to_metric(target_cell) + Eigen::Vector3d(0, 0, z_varied);
            const Eigen::Vector3d s_end =
                grid_to_metric(kGridStart) + Eigen::Vector3d(0, 0, prof.reversed ? prof.z_end : prof.z_start);
            const Eigen::Vector2d target_sig = prof.reversed
                                                   ? detail::frame1_signature(target_end, s_end)
                                                   : detail::frame1_signature(s_end, target_end);
            std::vector<GridPoint> cells_used{target_cell};
            for (const auto& [cell, idx] : by_cell) {
                if (cell == target_cell) continue;
                for (std::size_t i : idx) {
                    const DemoRecord& r = set.records[i];
                    // varied end of this demo: trajectory end, or start for
                    // the reversed actions
                    const Eigen::Vector3d varied_end =
                        prof.reversed ? r.trajectory.front() : r.trajectory.back();
                    if (manydemo_excluded(varied_end, target_end)) continue;
                    task.demo_indices.push_back(i);
                    const Eigen::Vector2d sig =
                        detail::frame1_signature(r.trajectory.front(), r.trajectory.back());
                    if ((sig - target_sig).norm() >= 0.03) task.demo_indices_tpgmm.push_back(i);
                    if (std::find(cells_used.begin(), cells_used.end(), cell) == cells_used.end())
                        cells_used.push_back(cell);
                }
            }
            if (task.demo_indices.empty()) task.skip_reason = "empty demo set after exclusion";
            task.vary = detail::varying_dims(cells_used);
            tasks.push_back(std::move(task));
        }
    }
    std::vector<std::vector<CaseRecord>> slots(tasks.size());
    parallel_cases(tasks.size(), [&](std::size_t ti) {
        detail::evaluate_gen_task(set, spec, tasks[ti], scen, 0x3a9d0 + ti, slots[ti]);
    });
    EvalReport rep;
    for (auto& s : slots)
        for (auto& r : s) rep.records.push_back(std::move(r));
    rep.canonicalize();
    return rep;
}

inline EvalReport run_scenario(const DemoSet& set, const ExperimentSpec& spec) {
    switch (spec.scenario) {
        case Scenario::Reconstruction: return run_reconstruction(set, spec);
        case Scenario::FewDemoInterp:
        case Scenario::FewDemoExtrap: return run_fewdemo(set, spec);
        case Scenario::ManyDemo: return run_manydemo(set, spec);
    }
    throw std::invalid_argument("unknown scenario");
}

// ---- hyperparameter searches -----------------------------------------------

inline DemoSet sample_records(const DemoSet& set, std::size_t n, std::uint64_t seed) {
    if (set.records.size() <= n) return set;
    std::vector<std::size_t> idx(set.records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, 0x5a3bULL));
    for (std::size_t i = idx.size() - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.index(i + 1)]);
    DemoSet out;
    out.provenance = set.provenance;
    for (std::size_t i = 0; i < n; ++i) out.records.push_back(set.records[idx[i]]);
    return out;
}

inline const std::vector<double>& dmp_kappa_grid() {
    static const std::vector<double> grid = {0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
    return grid;
}

struct DmpTuneRow {
    int K = 0;
    double kappa = 0.0;
    double median_d = 0.0;
    std::vector<std::pair<double, double>> grid;  // (kappa, median d)
};

// Grid search over kappa minimizing the median reconstruction error.
inline std::vector<DmpTuneRow> hyperparam_search_dmp(const DemoSet& sample,
                                                     const std::vector<int>& k_values) {
    std::vector<DmpTuneRow> table;
    for (int K : k_values) {
        DmpTuneRow row;
        row.K = K;
        row.median_d = std::numeric_limits<double>::infinity();
        for (double kappa : dmp_kappa_grid()) {
            std::vector<double> errs(sample.records.size());
            parallel_cases(sample.records.size(), [&](std::size_t i) {
                const Trajectory& demo = sample.records[i].trajectory;
                DmpConfig cfg;
                cfg.K = K;
                cfg.kappa = kappa;
                const DmpModel m = dmp_encode(demo, cfg);
                const Trajectory roll = dmp_integrate(m, demo.front(), demo.back(), demo.size());
                errs[i] = rms_distance(roll, demo);
            });
            const double med = median(errs);
            row.grid.push_back({kappa, med});
            if (med < row.median_d) {
                row.median_d = med;
                row.kappa = kappa;
            }
        }
        table.push_back(std::move(row));
    }
    return table;
}

inline const std::vector<double>& tbgmr_epsilon_grid() {
    static const std::vector<double> grid = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7};
    return grid;
}

struct EpsilonStats {
    double epsilon = 0.0;
    double median_d = 0.0;
    double median_de = 0.0;
    double median_osc = 0.0;
};

struct EpsilonSelection {
    double epsilon = 0.0;
    bool relaxed = false;      // oscillation bound dropped
    bool endpoint_met = true;  // the 5 mm rule held for the chosen value
};

// Appendix selection rule: the largest epsilon whose median end-point error
// stays below 5 mm while the oscillation ratio stays below 0.2; when both
// cannot hold at once, the oscillation bound is dropped and only the 5 mm
// rule applies. The grid must be ordered from large to small epsilon.
inline EpsilonSelection select_tbgmr_epsilon(const std::vector<EpsilonStats>& grid) {
    if (grid.empty()) throw std::invalid_argument("select_tbgmr_epsilon: empty grid");
    for (const EpsilonStats& s : grid)
        if (s.median_de < 0.005 && s.median_osc < 0.2) return {s.epsilon, false, true};
    for (const EpsilonStats& s : grid)
        if (s.median_de < 0.005) return {s.epsilon, true, true};
    const EpsilonStats* best = &grid.front();
    for (const EpsilonStats& s : grid)
        if (s.median_de < best->median_de) best = &s;
    return {best->epsilon, true, false};
}

struct TbgmrTuneRow {
    int K = 0;
    EpsilonSelection selection;
    std::vector<EpsilonStats> grid;
};

inline std::vector<TbgmrTuneRow> hyperparam_search_tbgmr(const DemoSet& sample,
                                                         const std::vector<int>& k_values) {
    std::vector<TbgmrTuneRow> table;
    for (int K : k_values) {
        TbgmrTuneRow row;
        row.K = K;
        for (double eps : tbgmr_epsilon_grid()) {
            std::vector<double> ds(sample.records.size());
            std::vector<double> des(sample.records.size());
            std::vector<double> oscs(sample.records.size());
            parallel_cases(sample.records.size(), [&](std::size_t i) {
                const Trajectory& demo = sample.records[i].trajectory;
                const Gmm g = tbgmr_encode(demo, K, eps);
                auto [roll, cov] = tbgmr_reconstruct(g, detail::trajectory_timestamps(demo));
                ds[i] = rms_distance(roll, demo);
                des[i] = endpoint_distance(roll, demo);
                try {
                    oscs[i] = oscillation_metric(differentiate(roll), K, roll.duration());
                } catch (const UndefinedMetricError&) {
                    oscs[i] = 0.0;
                }
            });
            row.grid.push_back({eps, median(ds), median(des), median(oscs)});
        }
        row.selection = select_tbgmr_epsilon(row.grid);
        table.push_back(std::move(row));
    }
    return table;
}

}  // namespace traj
