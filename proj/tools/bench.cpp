// Benchmark CLI: runs the reconstruction and generalization studies over a
// synthetic or loaded dataset and emits CSV/JSON reports plus SVG summaries.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "traj/dataset.hpp"
#include "traj/experiments.hpp"
#include "traj/report.hpp"

namespace {

std::vector<int> parse_k_range(const std::string& s) {
    std::vector<int> ks;
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(s.substr(0, dots));
        const int hi = std::stoi(s.substr(dots + 2));
        for (int k = lo; k <= hi; ++k) ks.push_back(k);
        return ks;
    }
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) ks.push_back(std::stoi(tok));
    return ks;
}

std::set<std::string> parse_models(const std::string& s) {
    std::set<std::string> models;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "tbgmr") tok = "tpgmm";
        if (tok != "dmp" && tok != "tpgmm" && tok != "seds")
            throw CLI::ValidationError("--models", "unknown model: " + tok);
        models.insert(tok);
    }
    return models;
}

traj::DemoSet make_dataset(const std::string& source, std::uint64_t seed) {
    if (source == "synth") {
        traj::SynthConfig cfg;
        cfg.seed = seed;
        return traj::synth_generate(cfg);
    }
    return traj::load_dataset(source);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trajectory encoding benchmark"};
    app.require_subcommand(1);

    // ---- run
    auto* run = app.add_subcommand("run", "run a benchmark scenario");
    std::string scenario = "recon";
    std::string models_arg = "dmp,tpgmm,seds";
    std::string k_arg = "3..6";
    std::string dataset_arg = "synth";
    std::string out_dir = "bench-out";
    std::uint64_t seed = 0;
    run->add_option("--scenario", scenario, "recon | fewdemo | manydemo")
        ->check(CLI::IsMember({"recon", "fewdemo", "manydemo"}));
    run->add_option("--models", models_arg, "comma list of dmp,tpgmm,seds");
    run->add_option("--k", k_arg, "kernel counts, e.g. 3..11 or 3,6,11");
    run->add_option("--dataset", dataset_arg, "synth or a manifest.json path");
    run->add_option("--seed", seed, "seed for dataset and fits");
    run->add_option("--out", out_dir, "output directory");

    // ---- tune
    auto* tune = app.add_subcommand("tune", "hyperparameter search");
    std::string tune_model = "dmp";
    std::string tune_k_arg = "3..11";
    std::string tune_dataset = "synth";
    std::uint64_t tune_seed = 0;
    std::string tune_out;
    tune->add_option("--model", tune_model, "dmp | tbgmr")
        ->check(CLI::IsMember({"dmp", "tbgmr"}));
    tune->add_option("--k", tune_k_arg, "kernel counts");
    tune->add_option("--dataset", tune_dataset, "synth or a manifest.json path");
    tune->add_option("--seed", tune_seed, "seed");
    tune->add_option("--out", tune_out, "optional CSV output path");

    // ---- report
    auto* report = app.add_subcommand("report", "re-render reports from report.json");
    std::string report_dir;
    report->add_option("dir", report_dir, "directory containing report.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto t0 = std::chrono::steady_clock::now();
            traj::ExperimentSpec spec;
            spec.models = parse_models(models_arg);
            spec.k_values = parse_k_range(k_arg);
            spec.seed = seed;
            const traj::DemoSet set = make_dataset(dataset_arg, seed);

            traj::EvalReport rep;
            if (scenario == "recon") {
                spec.scenario = traj::Scenario::Reconstruction;
                rep = traj::run_reconstruction(set, spec);
            } else if (scenario == "fewdemo") {
                spec.scenario = traj::Scenario::FewDemoInterp;
                rep = traj::run_fewdemo(set, spec);
                spec.scenario = traj::Scenario::FewDemoExtrap;
                traj::EvalReport extrap = traj::run_fewdemo(set, spec);
                rep.records.insert(rep.records.end(), extrap.records.begin(), extrap.records.end());
                rep.canonicalize();
            } else {
                spec.scenario = traj::Scenario::ManyDemo;
                rep = traj::run_manydemo(set, spec);
            }
            traj::emit_report(rep, out_dir);
            const auto elapsed =
                std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
            std::ofstream timing(std::filesystem::path(out_dir) / "timing.log");
            timing << "scenario=" << scenario << " cases=" << rep.records.size()
                   << " wall_ms=" << elapsed.count() << "\n";
            int failures = 0;
            for (const auto& r : rep.records) failures += r.success ? 0 : 1;
            std::cout << "wrote " << rep.records.size() << " case rows to " << out_dir << " ("
                      << failures << " failed cases)\n";
            return 0;  // per-case failures are data, not errors
        }

        if (*tune) {
            const traj::DemoSet full = make_dataset(tune_dataset, tune_seed);
            const traj::DemoSet sample = traj::sample_records(full, 250, tune_seed);
            const std::vector<int> ks = parse_k_range(tune_k_arg);
            std::string csv;
            if (tune_model == "dmp") {
                csv = "K,kappa,median_d_mm\n";
                for (const auto& row : traj::hyperparam_search_dmp(sample, ks)) {
                    char line[64];
                    std::snprintf(line, sizeof(line), "%d,%.1f,%.6g\n", row.K, row.kappa,
                                  row.median_d * 1000.0);
                    csv += line;
                }
            } else {
                csv = "K,epsilon,relaxed,median_de_mm,median_osc\n";
                for (const auto& row : traj::hyperparam_search_tbgmr(sample, ks)) {
                    const traj::EpsilonStats* chosen = &row.grid.front();
                    for (const auto& s : row.grid)
                        if (s.epsilon == row.selection.epsilon) chosen = &s;
                    char line[96];
                    std::snprintf(line, sizeof(line), "%d,%.0e,%d,%.6g,%.6g\n", row.K,
                                  row.selection.epsilon, row.selection.relaxed ? 1 : 0,
                                  chosen->median_de * 1000.0, chosen->median_osc);
                    csv += line;
                }
            }
            std::cout << csv;
            if (!tune_out.empty()) {
                std::ofstream out(tune_out);
                if (!out) throw std::runtime_error("cannot write " + tune_out);
                out << csv;
            }
            return 0;
        }

        if (*report) {
            std::ifstream in(std::filesystem::path(report_dir) / "report.json");
            if (!in) throw std::runtime_error("cannot open " + report_dir + "/report.json");
            nlohmann::json j;
            in >> j;
            traj::EvalReport rep = traj::report_from_json(j);
            rep.canonicalize();
            traj::emit_report(rep, report_dir);
            std::cout << "re-rendered reports in " << report_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
