#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "traj/metrics.hpp"

namespace traj {

// One evaluated case. d and d_e in meters; NaN marks a failed or
// not-applicable value and is excluded from medians but kept for rates.
struct CaseRecord {
    std::string scenario;
    std::string model;  // dmp, tbgmr, tpgmm, seds, seds*, human
    int K = 0;
    std::string action;
    int participant = 0;
    std::string case_id;  // task key within the scenario
    int repetition = 0;   // target repetition compared against
    double d = std::numeric_limits<double>::quiet_NaN();
    double d_e = std::numeric_limits<double>::quiet_NaN();
    double dur_ratio = std::numeric_limits<double>::quiet_NaN();
    double oscillation = std::numeric_limits<double>::quiet_NaN();
    bool success = true;  // fit/optimization success
    bool endpoint_converged = false;  // SEDS*: arrived within relaxed time
    std::string fail_reason;

    std::string sort_key() const {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%03d|%05d", K, repetition);
        return scenario + '|' + model + '|' + buf + '|' + action + '|' +
               std::to_string(participant) + '|' + case_id;
    }
};

struct EvalReport {
    std::vector<CaseRecord> records;

    void canonicalize() {
        std::stable_sort(records.begin(), records.end(),
                         [](const CaseRecord& a, const CaseRecord& b) {
                             return a.sort_key() < b.sort_key();
                         });
    }
};

namespace detail {

inline std::string fmt_g6(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::vector<double> collect(const std::vector<CaseRecord>& rs, double CaseRecord::*field) {
    std::vector<double> out;
    for (const CaseRecord& r : rs)
        if (r.success && !std::isnan(r.*field)) out.push_back(r.*field);
    return out;
}

}  // namespace detail

// Aggregates grouped by (scenario, model, K); recomputable from the records.
struct GroupStats {
    std::string scenario, model;
    int K = 0;
    int cases = 0, successes = 0, endpoint_conv = 0;
    std::optional<Aggregate> d;
    std::optional<Aggregate> d_e;
};

inline std::vector<GroupStats> report_group_stats(const EvalReport& rep) {
    std::map<std::tuple<std::string, std::string, int>, std::vector<const CaseRecord*>> groups;
    for (const CaseRecord& r : rep.records)
        groups[{r.scenario, r.model, r.K}].push_back(&r);
    std::vector<GroupStats> out;
    for (const auto& [key, rs] : groups) {
        GroupStats g;
        std::tie(g.scenario, g.model, g.K) = key;
        g.cases = static_cast<int>(rs.size());
        std::vector<double> ds, des;
        for (const CaseRecord* r : rs) {
            if (r->success) ++g.successes;
            if (r->endpoint_converged) ++g.endpoint_conv;
            if (r->success && !std::isnan(r->d)) ds.push_back(r->d);
            if (r->success && !std::isnan(r->d_e)) des.push_back(r->d_e);
        }
        if (!ds.empty()) g.d = aggregate(ds);
        if (!des.empty()) g.d_e = aggregate(des);
        out.push_back(std::move(g));
    }
    return out;
}

// SEDS convergence table: per K the optimization success rate and the share
// of cases arriving at the end-point under the relaxed time condition, plus
// the union row over all K.
struct SedsSuccessTable {
    struct Row {
        std::string K;  // number or "all"
        double optim_success = 0.0;
        double endpoint_success = 0.0;
        int cases = 0;
    };
    std::vector<Row> rows;
};

inline SedsSuccessTable seds_success_table(const EvalReport& rep) {
    std::map<int, std::array<int, 3>> per_k;  // cases, optim ok, endpoint ok
    std::map<std::string, std::array<bool, 2>> union_case;
    for (const CaseRecord& r : rep.records) {
        if (r.model != "seds*") continue;
        auto& row = per_k[r.K];
        row[0] += 1;
        row[1] += r.success ? 1 : 0;
        row[2] += r.endpoint_converged ? 1 : 0;
        const std::string key = r.scenario + '|' + r.action + '|' + std::to_string(r.participant) +
                                '|' + r.case_id + '|' + std::to_string(r.repetition);
        auto& u = union_case[key];
        u[0] = u[0] || r.success;
        u[1] = u[1] || r.endpoint_converged;
    }
    SedsSuccessTable t;
    for (const auto& [k, row] : per_k) {
        const double n = std::max(row[0], 1);
        t.rows.push_back({std::to_string(k), row[1] / n, row[2] / n, row[0]});
    }
    if (!union_case.empty()) {
        int ok = 0, conv = 0;
        for (const auto& [key, u] : union_case) {
            ok += u[0] ? 1 : 0;
            conv += u[1] ? 1 : 0;
        }
        const double n = static_cast<double>(union_case.size());
        t.rows.push_back({"all", ok / n, conv / n, static_cast<int>(union_case.size())});
    }
    return t;
}

inline nlohmann::json to_json(const EvalReport& rep) {
    nlohmann::json records = nlohmann::json::array();
    for (const CaseRecord& r : rep.records) {
        nlohmann::json e;
        e["scenario"] = r.scenario;
        e["model"] = r.model;
        e["K"] = r.K;
        e["action"] = r.action;
        e["participant"] = r.participant;
        e["case"] = r.case_id;
        e["repetition"] = r.repetition;
        e["d"] = std::isnan(r.d) ? nlohmann::json() : nlohmann::json(r.d);
        e["d_e"] = std::isnan(r.d_e) ? nlohmann::json() : nlohmann::json(r.d_e);
        e["dur_ratio"] = std::isnan(r.dur_ratio) ? nlohmann::json() : nlohmann::json(r.dur_ratio);
        e["oscillation"] =
            std::isnan(r.oscillation) ? nlohmann::json() : nlohmann::json(r.oscillation);
        e["success"] = r.success;
        e["endpoint_converged"] = r.endpoint_converged;
        if (!r.fail_reason.empty()) e["fail_reason"] = r.fail_reason;
        records.push_back(e);
    }
    nlohmann::json stats = nlohmann::json::array();
    for (const GroupStats& g : report_group_stats(rep)) {
        nlohmann::json e;
        e["scenario"] = g.scenario;
        e["model"] = g.model;
        e["K"] = g.K;
        e["cases"] = g.cases;
        e["success_rate"] = static_cast<double>(g.successes) / std::max(g.cases, 1);
        if (g.d) e["d"] = {{"median", g.d->median}, {"mad", g.d->mad}, {"q1", g.d->q1}, {"q3", g.d->q3}};
        if (g.d_e)
            e["d_e"] = {{"median", g.d_e->median}, {"mad", g.d_e->mad}, {"q1", g.d_e->q1}, {"q3", g.d_e->q3}};
        stats.push_back(e);
    }
    nlohmann::json seds = nlohmann::json::array();
    for (const auto& row : seds_success_table(rep).rows)
        seds.push_back({{"K", row.K},
                        {"optim_success", row.optim_success},
                        {"endpoint_conv_success", row.endpoint_success},
                        {"cases", row.cases}});
    return {{"records", records}, {"aggregates", stats}, {"seds_success", seds}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport rep;
    for (const auto& e : j.at("records")) {
        CaseRecord r;
        r.scenario = e.at("scenario").get<std::string>();
        r.model = e.at("model").get<std::string>();
        r.K = e.at("K").get<int>();
        r.action = e.at("action").get<std::string>();
        r.participant = e.at("participant").get<int>();
        r.case_id = e.at("case").get<std::string>();
        r.repetition = e.at("repetition").get<int>();
        auto opt = [&](const char* key) {
            return e.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN()
                                       : e.at(key).get<double>();
        };
        r.d = opt("d");
        r.d_e = opt("d_e");
        r.dur_ratio = opt("dur_ratio");
        r.oscillation = opt("oscillation");
        r.success = e.at("success").get<bool>();
        r.endpoint_converged = e.at("endpoint_converged").get<bool>();
        if (e.contains("fail_reason")) r.fail_reason = e.at("fail_reason").get<std::string>();
        rep.records.push_back(std::move(r));
    }
    return rep;
}

inline std::string report_csv(const EvalReport& rep) {
    std::string out = "model,K,scenario,action,d_mm,de_mm,dur_ratio,success\n";
    for (const CaseRecord& r : rep.records) {
        out += r.model + ',' + std::to_string(r.K) + ',' + r.scenario + ',' + r.action + ',';
        out += detail::fmt_g6(r.d * 1000.0) + ',';
        out += detail::fmt_g6(r.d_e * 1000.0) + ',';
        out += detail::fmt_g6(r.dur_ratio) + ',';
        out += (r.success ? "1" : "0");
        out += '\n';
    }
    return out;
}

// ---- minimal SVG rendering -------------------------------------------------

namespace svg {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline const char* model_color(const std::string& m) {
    if (m == "dmp") return "#1f77b4";
    if (m == "tbgmr" || m == "tpgmm") return "#d62728";
    if (m == "seds") return "#2ca02c";
    if (m == "seds*") return "#17becf";
    return "#7f7f7f";  // human
}

}  // namespace svg

// Median error vs K per model, with q1..q3 whiskers.
inline std::string render_error_vs_k_svg(const EvalReport& rep) {
    const auto stats = report_group_stats(rep);
    double max_err = 1e-9;
    std::set<int> ks;
    for (const auto& g : stats)
        if (g.d) {
            max_err = std::max(max_err, g.d->q3);
            ks.insert(g.K);
        }
    const double W = 640, H = 420, L = 70, B = 50, T = 30, R = 30;
    auto xmap = [&](double k) {
        const double lo = static_cast<double>(*ks.begin()) - 0.5;
        const double hi = static_cast<double>(*ks.rbegin()) + 0.5;
        return L + (W - L - R) * (k - lo) / (hi - lo);
    };
    auto ymap = [&](double e) { return H - B - (H - B - T) * (e / (1.05 * max_err)); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\">\n";
    s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">median error vs number of kernels</text>\n";
    s += "<line x1=\"" + svg::num(L) + "\" y1=\"" + svg::num(H - B) + "\" x2=\"" + svg::num(W - R) +
         "\" y2=\"" + svg::num(H - B) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + svg::num(L) + "\" y1=\"" + svg::num(T) + "\" x2=\"" + svg::num(L) +
         "\" y2=\"" + svg::num(H - B) + "\" stroke=\"black\"/>\n";
    for (int k : ks)
        s += "<text x=\"" + svg::num(xmap(k)) + "\" y=\"" + svg::num(H - B + 18) +
             "\" text-anchor=\"middle\" font-size=\"12\">" + std::to_string(k) + "</text>\n";
    s += "<text x=\"16\" y=\"" + svg::num(T + 10) + "\" font-size=\"12\">" +
         svg::num(max_err * 1000.0) + " mm</text>\n";
    std::map<std::string, std::vector<std::pair<int, const GroupStats*>>> per_model;
    for (const auto& g : stats)
        if (g.d) per_model[g.model].push_back({g.K, &g});
    double legend_y = T + 12;
    for (auto& [model, pts] : per_model) {
        std::sort(pts.begin(), pts.end());
        const char* col = svg::model_color(model);
        std::string poly;
        for (const auto& [k, g] : pts) {
            const double x = xmap(k), y = ymap(g->d->median);
            poly += svg::num(x) + "," + svg::num(y) + " ";
            s += "<line x1=\"" + svg::num(x) + "\" y1=\"" + svg::num(ymap(g->d->q1)) + "\" x2=\"" +
                 svg::num(x) + "\" y2=\"" + svg::num(ymap(g->d->q3)) + "\" stroke=\"" + col +
                 "\" stroke-width=\"1\"/>\n";
            s += "<circle cx=\"" + svg::num(x) + "\" cy=\"" + svg::num(y) + "\" r=\"3\" fill=\"" +
                 col + "\"/>\n";
        }
        s += "<polyline points=\"" + poly + "\" fill=\"none\" stroke=\"" + col + "\"/>\n";
        s += "<text x=\"" + svg::num(W - R - 90) + "\" y=\"" + svg::num(legend_y) +
             "\" font-size=\"12\" fill=\"" + col + "\">" + model + "</text>\n";
        legend_y += 16;
    }
    s += "</svg>\n";
    return s;
}

// End-point error bars (median with MAD whisker) per model.
inline std::string render_endpoint_svg(const EvalReport& rep) {
    std::map<std::string, std::vector<double>> per_model;
    for (const CaseRecord& r : rep.records)
        if (r.success && !std::isnan(r.d_e) && r.model != "human") per_model[r.model].push_back(r.d_e);
    const double W = 480, H = 360, L = 70, B = 60, T = 30, R = 20;
    double max_v = 1e-9;
    std::map<std::string, Aggregate> aggs;
    for (auto& [m, vs] : per_model) {
        aggs[m] = aggregate(vs);
        max_v = std::max(max_v, aggs[m].median + aggs[m].mad);
    }
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\">\n";
    s += "<rect width=\"480\" height=\"360\" fill=\"white\"/>\n";
    s += "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">median end-point error (MAD whiskers)</text>\n";
    const double n = static_cast<double>(std::max<std::size_t>(aggs.size(), 1));
    const double bw = (W - L - R) / (2.0 * n);
    auto ymap = [&](double v) { return H - B - (H - B - T) * (v / (1.1 * max_v)); };
    double x = L + bw / 2.0;
    for (const auto& [m, a] : aggs) {
        const char* col = svg::model_color(m);
        s += "<rect x=\"" + svg::num(x) + "\" y=\"" + svg::num(ymap(a.median)) + "\" width=\"" +
             svg::num(bw) + "\" height=\"" + svg::num(H - B - ymap(a.median)) + "\" fill=\"" + col +
             "\"/>\n";
        const double cx = x + bw / 2.0;
        s += "<line x1=\"" + svg::num(cx) + "\" y1=\"" + svg::num(ymap(std::max(a.median - a.mad, 0.0))) +
             "\" x2=\"" + svg::num(cx) + "\" y2=\"" + svg::num(ymap(a.median + a.mad)) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + svg::num(cx) + "\" y=\"" + svg::num(H - B + 16) +
             "\" text-anchor=\"middle\" font-size=\"12\">" + m + "</text>\n";
        s += "<text x=\"" + svg::num(cx) + "\" y=\"" + svg::num(ymap(a.median) - 4) +
             "\" text-anchor=\"middle\" font-size=\"10\">" + svg::num(a.median * 1000.0) + "</text>\n";
        x += 2.0 * bw;
    }
    s += "<text x=\"16\" y=\"" + svg::num(T + 10) + "\" font-size=\"12\">mm</text>\n";
    s += "</svg>\n";
    return s;
}

inline std::string render_seds_success_svg(const EvalReport& rep) {
    const SedsSuccessTable t = seds_success_table(rep);
    const double row_h = 24;
    const double H = 70 + row_h * static_cast<double>(t.rows.size());
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"420\" height=\"" +
                    svg::num(H) + "\">\n<rect width=\"420\" height=\"" + svg::num(H) +
                    "\" fill=\"white\"/>\n";
    s += "<text x=\"210\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">SEDS encoding success</text>\n";
    s += "<text x=\"40\" y=\"44\" font-size=\"12\">K</text>"
         "<text x=\"140\" y=\"44\" font-size=\"12\">optim. success</text>"
         "<text x=\"290\" y=\"44\" font-size=\"12\">end-point conv.</text>\n";
    double y = 44 + row_h;
    for (const auto& row : t.rows) {
        char pct1[16], pct2[16];
        std::snprintf(pct1, sizeof(pct1), "%.0f%%", 100.0 * row.optim_success);
        std::snprintf(pct2, sizeof(pct2), "%.0f%%", 100.0 * row.endpoint_success);
        s += "<text x=\"40\" y=\"" + svg::num(y) + "\" font-size=\"12\">" + row.K + "</text>";
        s += "<text x=\"140\" y=\"" + svg::num(y) + "\" font-size=\"12\">" + pct1 + "</text>";
        s += "<text x=\"290\" y=\"" + svg::num(y) + "\" font-size=\"12\">" + pct2 + "</text>\n";
        y += row_h;
    }
    s += "</svg>\n";
    return s;
}

// Writes report.csv, report.json and the SVG summaries. Rendering is
// deterministic, so re-emitting the same report is byte-identical.
inline void emit_report(const EvalReport& rep, const std::filesystem::path& outdir) {
    if (rep.records.empty()) throw std::invalid_argument("emit_report: empty report");
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    auto write = [&](const char* name, const std::string& content) {
        std::ofstream out(outdir / name, std::ios::binary);
        if (!out) throw std::runtime_error("emit_report: cannot write " + (outdir / name).string());
        out << content;
    };
    write("report.csv", report_csv(rep));
    write("report.json", to_json(rep).dump(1) + "\n");
    write("error_vs_k.svg", render_error_vs_k_svg(rep));
    write("endpoint_error.svg", render_endpoint_svg(rep));
    write("seds_success.svg", render_seds_success_svg(rep));
}

}  // namespace traj
