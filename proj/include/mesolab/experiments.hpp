#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "determinant.hpp"
#include "limitlaw.hpp"
#include "parallel.hpp"
#include "statistics.hpp"
#include "testfn.hpp"

namespace mesolab {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct FunctionSpec {
    std::string id = "cosine_hat";
    std::vector<double> params;
    std::optional<double> epsilon;

    TestFunction build() const { return make_builtin(id, params, epsilon); }
};

struct Tolerances {
    double max_final_rel_err = 0.1;   // |exact - limit| / |limit| at the largest size
    bool require_monotone = true;     // error decreasing over the last three sizes
    double ks_max = 0.05;             // KS to the predicted law (mc)
    bool require_beats_gaussian_fit = false;
    bool require_predicted_best = true;  // regime sweep model selection
    double max_exponent = 1.0;           // |lambda| size^{-s} sup|f|
};

struct ExperimentConfig {
    std::string kind = "cgf";  // regime-sweep | cgf | mc | sine
    FunctionSpec function;
    std::string process = "cue";  // mc only: cue | sine
    std::vector<double> n, L, alpha, delta, kappa, lambda;
    std::string gamma_rule = "decaying";  // decaying | fixed
    double gamma_value = 1.0;
    std::size_t replicates = 0;
    std::vector<std::uint64_t> seeds{1};
    std::string output_dir = "lab_out";
    Tolerances tol;
    std::string toeplitz = "levinson";  // levinson | lu
    int fredholm_order = 0;
    unsigned threads = 0;
};

inline ExperimentConfig default_config(const std::string& kind) {
    ExperimentConfig c;
    c.kind = kind;
    if (kind == "cgf") {
        c.n = {256, 512, 1024, 2048, 4096};
        c.alpha = {0.5};
        c.delta = {0.5};
        c.kappa = {1.0};
        c.lambda = {0.1, 0.2, 0.3};
    } else if (kind == "regime-sweep") {
        c.n = {512, 2048};
        c.alpha = {0.3, 0.5, 0.7};
        c.delta = {0.3, 0.5, 0.7};
        c.kappa = {1.0};
        c.lambda = {0.2};
        c.replicates = 1000;
        c.seeds = {1, 2, 3};
    } else if (kind == "mc") {
        c.n = {4096};
        c.alpha = {0.5};
        c.delta = {0.5};
        c.kappa = {2.0 * pi};
        c.replicates = 20000;
        c.tol.require_beats_gaussian_fit = true;
    } else if (kind == "sine") {
        c.L = {50, 100, 200};
        c.delta = {0.5, 1.0, 1.5};
        c.kappa = {1.0};
        c.lambda = {0.1, 0.2, 0.3};
    } else {
        throw std::invalid_argument("unknown experiment kind '" + kind + "'");
    }
    return c;
}

inline json to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.kind;
    j["function"] = {{"id", c.function.id}, {"params", c.function.params}};
    j["function"]["epsilon"] = c.function.epsilon ? json(*c.function.epsilon) : json(nullptr);
    j["process"] = c.process;
    j["grid"] = {{"n", c.n}, {"L", c.L}, {"alpha", c.alpha}, {"delta", c.delta}, {"kappa", c.kappa}, {"lambda", c.lambda}};
    j["gamma"] = {{"rule", c.gamma_rule}, {"value", c.gamma_value}};
    j["replicates"] = c.replicates;
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;
    j["tolerances"] = {{"max_final_rel_err", c.tol.max_final_rel_err},
                       {"require_monotone", c.tol.require_monotone},
                       {"ks_max", c.tol.ks_max},
                       {"require_beats_gaussian_fit", c.tol.require_beats_gaussian_fit},
                       {"require_predicted_best", c.tol.require_predicted_best},
                       {"max_exponent", c.tol.max_exponent}};
    j["toeplitz"] = c.toeplitz;
    j["fredholm_order"] = c.fredholm_order;
    j["threads"] = c.threads;
    return j;
}

// Values missing from j keep the defaults of the experiment kind.
inline ExperimentConfig parse_config(const json& j, const std::string& kind_hint = "") {
    const std::string kind = j.value("experiment", kind_hint.empty() ? std::string("cgf") : kind_hint);
    if (!kind_hint.empty() && kind != kind_hint)
        throw std::invalid_argument("config describes experiment '" + kind + "', expected '" + kind_hint + "'");
    ExperimentConfig c = default_config(kind);
    static const std::set<std::string> known = {"experiment", "function",  "process", "grid",    "gamma",
                                                "replicates", "seeds",     "output_dir", "tolerances", "toeplitz",
                                                "fredholm_order", "threads"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    if (j.contains("function")) {
        const auto& f = j["function"];
        c.function.id = f.value("id", c.function.id);
        if (f.contains("params")) c.function.params = f["params"].get<std::vector<double>>();
        if (f.contains("epsilon") && !f["epsilon"].is_null()) c.function.epsilon = f["epsilon"].get<double>();
    }
    c.process = j.value("process", c.process);
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        auto take = [&](const char* key, std::vector<double>& dst) {
            if (g.contains(key)) dst = g[key].get<std::vector<double>>();
        };
        take("n", c.n);
        take("L", c.L);
        take("alpha", c.alpha);
        take("delta", c.delta);
        take("kappa", c.kappa);
        take("lambda", c.lambda);
    }
    if (j.contains("gamma")) {
        c.gamma_rule = j["gamma"].value("rule", c.gamma_rule);
        c.gamma_value = j["gamma"].value("value", c.gamma_value);
    }
    c.replicates = j.value("replicates", c.replicates);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        c.tol.max_final_rel_err = t.value("max_final_rel_err", c.tol.max_final_rel_err);
        c.tol.require_monotone = t.value("require_monotone", c.tol.require_monotone);
        c.tol.ks_max = t.value("ks_max", c.tol.ks_max);
        c.tol.require_beats_gaussian_fit = t.value("require_beats_gaussian_fit", c.tol.require_beats_gaussian_fit);
        c.tol.require_predicted_best = t.value("require_predicted_best", c.tol.require_predicted_best);
        c.tol.max_exponent = t.value("max_exponent", c.tol.max_exponent);
    }
    c.toeplitz = j.value("toeplitz", c.toeplitz);
    c.fredholm_order = j.value("fredholm_order", c.fredholm_order);
    c.threads = j.value("threads", c.threads);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path, const std::string& kind_hint = "") {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config " + path.string());
    return parse_config(json::parse(is, nullptr, true, true), kind_hint);
}

// Structural checks that do not need any numerics.
inline void validate_config(const ExperimentConfig& c) {
    if (c.gamma_rule != "decaying" && c.gamma_rule != "fixed")
        throw std::invalid_argument("config: gamma.rule must be 'decaying' or 'fixed'");
    if (c.gamma_rule == "fixed" && !(c.gamma_value > 0.0 && c.gamma_value <= 1.0))
        throw std::invalid_argument("config: fixed gamma must lie in (0,1]");
    if (c.toeplitz != "levinson" && c.toeplitz != "lu") throw std::invalid_argument("config: toeplitz must be levinson or lu");
    if (c.process != "cue" && c.process != "sine") throw std::invalid_argument("config: process must be cue or sine");
    const bool sine = c.kind == "sine" || (c.kind == "mc" && c.process == "sine");
    for (double v : sine ? c.L : c.n) {
        if (!(v >= 1.0)) throw std::invalid_argument("config: sizes must be at least 1");
        if (!sine && v != std::floor(v)) throw std::invalid_argument("config: n must be an integer");
    }
    const auto f = c.function.build();
    for (double k : c.kappa)
        if (!(k > 0.0)) throw std::invalid_argument("config: kappa must be positive");
    if (c.gamma_rule == "decaying") {
        for (double d : c.delta)
            for (double k : c.kappa) {
                if (sine) {
                    classify_regime(Process::Sine, 1.0, d, k, f);
                } else {
                    for (double a : c.alpha) classify_regime(Process::Cue, a, d, k, f);
                }
            }
    }
    if ((c.kind == "mc" || c.kind == "regime-sweep") && c.replicates > 0 && c.replicates < 100)
        throw std::invalid_argument("config: replicates must be 0 or at least 100");
    if (c.kind == "mc" && c.replicates == 0) throw std::invalid_argument("config: mc needs replicates");
    if (c.seeds.empty()) throw std::invalid_argument("config: at least one seed required");
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string csv_num(double v) { return format_double(v); }

inline std::string timestamp_line(const std::string& kind) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return "# mesolab " + kind + " " + buf;
}

// Write through a temp file and rename.
inline void atomic_write(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os << content;
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::string join_row(const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
    }
    return s;
}

inline void write_csv(const fs::path& path, const std::string& kind, const CsvTable& t) {
    std::string out = timestamp_line(kind) + "\n" + join_row(t.header) + "\n";
    for (const auto& r : t.rows) out += join_row(r) + "\n";
    atomic_write(path, out);
}

struct GateResult {
    std::string gate;
    std::string params;
    bool passed = true;
    std::string detail;
};

struct ErrorRecord {
    std::string params;
    std::string message;
};

struct RunReport {
    std::vector<fs::path> files;
    std::vector<GateResult> gates;
    std::vector<ErrorRecord> errors;

    bool ok() const {
        if (!errors.empty()) return false;
        for (const auto& g : gates)
            if (!g.passed) return false;
        return true;
    }
    int exit_code() const { return !errors.empty() ? 2 : (ok() ? 0 : 1); }
};

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> c = {"n_or_L",    "alpha",           "delta",
                                               "kappa",     "lambda",          "cgf_exact",
                                               "cgf_asymptotic", "cgf_limit", "abs_err_exact_vs_limit",
                                               "gamma",     "s",               "exact_error_estimate"};
    return c;
}

namespace detail {

// Runs tasks in parallel; each task produces rows written to a per-point part
// file that is renamed into place when complete. Rows are then assembled in
// task order. Failed tasks are reported in `errors`.
inline std::vector<std::vector<std::vector<std::string>>> run_points(
    const fs::path& out_dir, const std::string& tag, std::size_t count,
    const std::function<std::vector<std::vector<std::string>>(std::size_t)>& task,
    const std::function<std::string(std::size_t)>& describe_point, std::vector<ErrorRecord>& errors, unsigned threads) {
    const fs::path parts = out_dir / (".parts_" + tag);
    fs::create_directories(parts);
    std::vector<std::vector<std::vector<std::string>>> results(count);
    std::vector<std::optional<std::string>> failures(count);
    parallel_for(
        count,
        [&](std::size_t i) {
            try {
                results[i] = task(i);
                std::string body;
                for (const auto& r : results[i]) body += join_row(r) + "\n";
                atomic_write(parts / (std::to_string(i) + ".part"), body);
            } catch (const std::exception& e) {
                failures[i] = e.what();
            }
        },
        threads);
    for (std::size_t i = 0; i < count; ++i)
        if (failures[i]) errors.push_back({describe_point(i), *failures[i]});
    fs::remove_all(parts);
    return results;
}

inline void write_errors(const fs::path& dir, const std::string& kind, const std::vector<ErrorRecord>& errors,
                         RunReport& rep) {
    if (errors.empty()) return;
    CsvTable t{{"params", "message"}, {}};
    for (const auto& e : errors) {
        std::string msg = e.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        t.rows.push_back({e.params, msg});
    }
    const auto p = dir / (kind + "_errors.csv");
    write_csv(p, kind, t);
    rep.files.push_back(p);
}

inline void write_gates(const fs::path& dir, const std::string& kind, RunReport& rep) {
    CsvTable t{{"gate", "params", "passed", "detail"}, {}};
    for (const auto& g : rep.gates) t.rows.push_back({g.gate, g.params, g.passed ? "1" : "0", g.detail});
    const auto p = dir / (kind + "_gates.csv");
    write_csv(p, kind, t);
    rep.files.push_back(p);
}

inline std::string key_of(double a, double d, double k, double l) {
    std::ostringstream os;
    os << "alpha=" << a << " delta=" << d << " kappa=" << k << " lambda=" << l;
    return os.str();
}

// Gates over rows of the sweep schema, grouped by (alpha, delta, kappa, lambda).
inline void convergence_gates(const std::vector<std::vector<double>>& rows, const Tolerances& tol, RunReport& rep) {
    std::map<std::vector<double>, std::vector<std::pair<double, std::pair<double, double>>>> groups;
    for (const auto& r : rows) groups[{r[1], r[2], r[3], r[4]}].push_back({r[0], {r[8], r[7]}});
    for (auto& [key, pts] : groups) {
        std::sort(pts.begin(), pts.end());
        const std::string params = key_of(key[0], key[1], key[2], key[3]);
        if (key[3] == 0.0) {
            bool zero = true;
            for (const auto& p : pts) zero = zero && p.second.first == 0.0;
            rep.gates.push_back({"zero_lambda", params, zero, zero ? "all zero" : "nonzero error at lambda=0"});
            continue;
        }
        if (tol.require_monotone && pts.size() >= 3) {
            const std::size_t m = pts.size();
            const bool mono = pts[m - 1].second.first < pts[m - 2].second.first &&
                              pts[m - 2].second.first < pts[m - 3].second.first;
            std::ostringstream os;
            os << "errors " << pts[m - 3].second.first << " " << pts[m - 2].second.first << " " << pts[m - 1].second.first;
            rep.gates.push_back({"monotone_last_three", params, mono, os.str()});
        }
        if (!pts.empty()) {
            const auto& last = pts.back();
            const double rel = last.second.first / std::abs(last.second.second);
            std::ostringstream os;
            os << "relative error " << rel << " at size " << last.first;
            rep.gates.push_back({"final_relative_error", params, rel < tol.max_final_rel_err, os.str()});
        }
    }
}

inline std::vector<double> parse_row(const std::vector<std::string>& r) {
    std::vector<double> v;
    for (const auto& s : r) v.push_back(std::stod(s));
    return v;
}

inline GammaRule gamma_rule_for(const ExperimentConfig& c, double kappa, double delta) {
    if (c.gamma_rule == "fixed") return GammaRule::fixed(c.gamma_value);
    return GammaRule::decaying(kappa, delta);
}

// (delta, kappa) columns of a fixed-gamma row are reported as 0.
inline std::pair<double, double> reported_dk(const ExperimentConfig& c, double delta, double kappa) {
    if (c.gamma_rule == "fixed") return {0.0, 0.0};
    return {delta, kappa};
}

}  // namespace detail

// Rows of the sweep schema for one CUE point.
inline std::vector<std::string> cue_cgf_row(const ExperimentConfig& c, const TestFunction& f, std::size_t n,
                                            double alpha, double delta, double kappa, double lambda) {
    const auto spec = cue_spec(f, alpha, detail::gamma_rule_for(c, kappa, delta));
    const double gamma = spec.gamma_rule.gamma_at(static_cast<double>(n));
    const double s = spec.normalization_s();
    CueCgfOptions opt;
    opt.method = c.toeplitz == "lu" ? ToeplitzMethod::LU : ToeplitzMethod::Levinson;
    opt.max_exponent = c.tol.max_exponent;
    const double shift = lambda * std::pow(static_cast<double>(n), -s) * exact_mean_cue(spec, n);
    const double exact = cue_cgf_exact(f, n, alpha, gamma, s, lambda, opt) - shift;
    SzegoOptions so;
    so.max_exponent = c.tol.max_exponent;
    if (alpha < 1.0 && c.gamma_rule == "decaying") so.truncation_N = choose_N(n, alpha, delta);
    const double asym = cue_cgf_szego(f, n, alpha, gamma, s, lambda, 0, so) - shift;
    const double lim = lambda == 0.0 ? 0.0 : cgf(predicted_law(spec), lambda);
    const auto [d, k] = detail::reported_dk(c, delta, kappa);
    return {csv_num(static_cast<double>(n)), csv_num(alpha), csv_num(d), csv_num(k), csv_num(lambda),
            csv_num(exact), csv_num(asym), csv_num(lim), csv_num(std::abs(exact - lim)), csv_num(gamma), csv_num(s),
            csv_num(0.0)};
}

inline RunReport run_cgf_convergence(const ExperimentConfig& c) {
    validate_config(c);
    const auto f = c.function.build();
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    struct Pt {
        double n, a, d, k, l;
    };
    std::vector<Pt> pts;
    const std::vector<double> deltas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.delta;
    const std::vector<double> kappas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.kappa;
    for (double a : c.alpha)
        for (double d : deltas)
            for (double k : kappas)
                for (double l : c.lambda)
                    for (double n : c.n) pts.push_back({n, a, d, k, l});
    RunReport rep;
    auto res = detail::run_points(
        dir, "cgf", pts.size(),
        [&](std::size_t i) {
            const auto& p = pts[i];
            return std::vector<std::vector<std::string>>{
                cue_cgf_row(c, f, static_cast<std::size_t>(p.n), p.a, p.d, p.k, p.l)};
        },
        [&](std::size_t i) { return "n=" + csv_num(pts[i].n) + " " + detail::key_of(pts[i].a, pts[i].d, pts[i].k, pts[i].l); },
        rep.errors, c.threads);
    CsvTable t{sweep_columns(), {}};
    std::vector<std::vector<double>> num;
    for (auto& r : res)
        for (auto& row : r) {
            num.push_back(detail::parse_row(row));
            t.rows.push_back(std::move(row));
        }
    const auto p = dir / "cgf_convergence.csv";
    write_csv(p, "cgf", t);
    rep.files.push_back(p);
    detail::convergence_gates(num, c.tol, rep);
    detail::write_gates(dir, "cgf", rep);
    detail::write_errors(dir, "cgf", rep.errors, rep);
    return rep;
}

inline RunReport run_sine_study(const ExperimentConfig& c) {
    validate_config(c);
    const auto f = c.function.build();
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    struct Pt {
        double L, d, k, l;
    };
    std::vector<Pt> pts;
    const std::vector<double> deltas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.delta;
    const std::vector<double> kappas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.kappa;
    for (double d : deltas)
        for (double k : kappas)
            for (double l : c.lambda)
                for (double L : c.L) pts.push_back({L, d, k, l});
    RunReport rep;
    auto res = detail::run_points(
        dir, "sine", pts.size(),
        [&](std::size_t i) {
            const auto& p = pts[i];
            const auto spec = sine_spec(f, detail::gamma_rule_for(c, p.k, p.d));
            const double gamma = spec.gamma_rule.gamma_at(p.L);
            const double s = spec.normalization_s();
            const double e = std::abs(p.l) * std::pow(p.L, -s) * f.sup_norm();
            if (e > c.tol.max_exponent) throw std::domain_error("lambda outside the smallness region");
            const double shift = p.l * std::pow(p.L, -s) * exact_moments_sine(spec, p.L).mean;
            const auto ex = sine_cgf_exact(f, p.L, gamma, s, p.l, c.fredholm_order);
            const double exact = ex.value - shift;
            const double asym = sine_cgf_asymptotic(f, p.L, gamma, s, p.l) - shift;
            const double lim = p.l == 0.0 ? 0.0 : cgf(predicted_law(spec), p.l);
            const auto [d, k] = detail::reported_dk(c, p.d, p.k);
            return std::vector<std::vector<std::string>>{{csv_num(p.L), csv_num(1.0), csv_num(d), csv_num(k),
                                                          csv_num(p.l), csv_num(exact), csv_num(asym), csv_num(lim),
                                                          csv_num(std::abs(exact - lim)), csv_num(gamma), csv_num(s),
                                                          csv_num(ex.error_estimate)}};
        },
        [&](std::size_t i) { return "L=" + csv_num(pts[i].L) + " " + detail::key_of(1.0, pts[i].d, pts[i].k, pts[i].l); },
        rep.errors, c.threads);
    CsvTable t{sweep_columns(), {}};
    std::vector<std::vector<double>> num;
    for (auto& r : res)
        for (auto& row : r) {
            num.push_back(detail::parse_row(row));
            t.rows.push_back(std::move(row));
        }
    const auto p = dir / "sine.csv";
    write_csv(p, "sine", t);
    rep.files.push_back(p);
    detail::convergence_gates(num, c.tol, rep);
    detail::write_gates(dir, "sine", rep);
    detail::write_errors(dir, "sine", rep.errors, rep);
    return rep;
}

// Candidate laws for the CUE diagram at (alpha, delta, kappa).
struct CandidateLaws {
    LimitLaw cue_gaussian, poisson_gaussian, infinitely_divisible;
};

inline CandidateLaws candidate_laws(const TestFunction& f, double kappa) {
    const double sf2 = sigma_f_squared(f);
    const double kp = kappa / (2.0 * pi);
    return {Gaussian{sf2}, Gaussian{kp * l2_norm_squared(f)}, InfinitelyDivisible{f, kp, std::sqrt(sf2)}};
}

inline std::string law_name(const LimitLaw& law) {
    if (std::holds_alternative<InfinitelyDivisible>(law)) return "infinitely_divisible";
    return "gaussian";
}

inline RunReport run_regime_sweep(const ExperimentConfig& c) {
    validate_config(c);
    if (c.gamma_rule != "decaying") throw std::invalid_argument("regime-sweep requires the decaying gamma rule");
    const auto f = c.function.build();
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    RunReport rep;

    struct Pt {
        double n, a, d, k, l;
    };
    std::vector<Pt> pts;
    for (double a : c.alpha)
        for (double d : c.delta)
            for (double k : c.kappa)
                for (double l : c.lambda)
                    for (double n : c.n) pts.push_back({n, a, d, k, l});
    auto res = detail::run_points(
        dir, "sweep", pts.size(),
        [&](std::size_t i) {
            const auto& p = pts[i];
            return std::vector<std::vector<std::string>>{
                cue_cgf_row(c, f, static_cast<std::size_t>(p.n), p.a, p.d, p.k, p.l)};
        },
        [&](std::size_t i) { return "n=" + csv_num(pts[i].n) + " " + detail::key_of(pts[i].a, pts[i].d, pts[i].k, pts[i].l); },
        rep.errors, c.threads);
    CsvTable t{sweep_columns(), {}};
    for (auto& r : res)
        for (auto& row : r) t.rows.push_back(std::move(row));
    const auto p = dir / "regime_sweep.csv";
    write_csv(p, "regime-sweep", t);
    rep.files.push_back(p);

    if (c.replicates > 0) {
        struct MPt {
            double n, a, d, k;
            std::uint64_t seed;
        };
        std::vector<MPt> mpts;
        for (double a : c.alpha)
            for (double d : c.delta)
                for (double k : c.kappa)
                    for (double n : c.n)
                        for (auto sd : c.seeds) mpts.push_back({n, a, d, k, sd});
        const unsigned inner = c.threads;
        auto mres = detail::run_points(
            dir, "sweep_mc", mpts.size(),
            [&](std::size_t i) {
                const auto& q = mpts[i];
                const auto n = static_cast<std::size_t>(q.n);
                const auto spec = cue_spec(f, q.a, GammaRule::decaying(q.k, q.d));
                const auto cand = candidate_laws(f, q.k);
                const auto emp = run_ensemble(spec, q.n, c.replicates, q.seed, {CueMethod::Verblunsky, inner});
                const double k1 = ks_distance(emp, cand.cue_gaussian);
                const double k2 = ks_distance(emp, cand.poisson_gaussian);
                const double k3 = ks_distance(emp, cand.infinitely_divisible);
                std::string best = "cue_gaussian";
                if (k2 < k1 && k2 <= k3) best = "poisson_gaussian";
                if (k3 < k1 && k3 < k2) best = "infinitely_divisible";
                std::string predicted = "infinitely_divisible";
                if (q.a < q.d) predicted = "cue_gaussian";
                if (q.a > q.d) predicted = "poisson_gaussian";
                if (std::abs(q.a - q.d) <= 1e-12) predicted = "infinitely_divisible";
                const auto v = exact_variance_thinned(spec, n);
                return std::vector<std::vector<std::string>>{
                    {csv_num(q.n), csv_num(q.a), csv_num(q.d), csv_num(q.k), std::to_string(q.seed),
                     std::to_string(c.replicates), predicted, csv_num(k1), csv_num(k2), csv_num(k3), best,
                     csv_num(v.poissonian / v.total), csv_num(v.cue / v.total)}};
            },
            [&](std::size_t i) {
                return "n=" + csv_num(mpts[i].n) + " " + detail::key_of(mpts[i].a, mpts[i].d, mpts[i].k, 0.0) +
                       " seed=" + std::to_string(mpts[i].seed);
            },
            rep.errors, 1);
        CsvTable mt{{"n", "alpha", "delta", "kappa", "seed", "replicates", "predicted_law", "ks_cue_gaussian",
                     "ks_poisson_gaussian", "ks_infinitely_divisible", "best_law", "poissonian_share", "cue_share"},
                    {}};
        // majority vote across seeds at each (n, alpha, delta, kappa)
        std::map<std::vector<double>, std::pair<int, int>> votes;
        for (auto& r : mres)
            for (auto& row : r) {
                const std::vector<double> key = {std::stod(row[0]), std::stod(row[1]), std::stod(row[2]), std::stod(row[3])};
                auto& v = votes[key];
                v.second += 1;
                if (row[6] == row[10]) v.first += 1;
                mt.rows.push_back(std::move(row));
            }
        const auto mp = dir / "regime_sweep_mc.csv";
        write_csv(mp, "regime-sweep", mt);
        rep.files.push_back(mp);
        if (c.tol.require_predicted_best)
            for (const auto& [key, v] : votes) {
                std::ostringstream os;
                os << v.first << " of " << v.second << " seeds select the predicted law";
                rep.gates.push_back({"predicted_law_best", "n=" + csv_num(key[0]) + " " + detail::key_of(key[1], key[2], key[3], 0.0),
                                     2 * v.first > v.second, os.str()});
            }
    }
    detail::write_gates(dir, "regime_sweep", rep);
    detail::write_errors(dir, "regime_sweep", rep.errors, rep);
    return rep;
}

inline RunReport run_mc(const ExperimentConfig& c) {
    validate_config(c);
    const auto f = c.function.build();
    const fs::path dir = c.output_dir;
    fs::create_directories(dir);
    RunReport rep;
    const bool sine = c.process == "sine";
    struct Pt {
        double size, a, d, k;
        std::uint64_t seed;
    };
    std::vector<Pt> pts;
    const std::vector<double> alphas = sine ? std::vector<double>{1.0} : c.alpha;
    const std::vector<double> deltas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.delta;
    const std::vector<double> kappas = c.gamma_rule == "fixed" ? std::vector<double>{0.0} : c.kappa;
    for (double a : alphas)
        for (double d : deltas)
            for (double k : kappas)
                for (double s : sine ? c.L : c.n)
                    for (auto sd : c.seeds) pts.push_back({s, a, d, k, sd});
    auto res = detail::run_points(
        dir, "mc", pts.size(),
        [&](std::size_t i) {
            const auto& q = pts[i];
            const auto rule = detail::gamma_rule_for(c, q.k, q.d);
            const auto spec = sine ? sine_spec(f, rule) : cue_spec(f, q.a, rule);
            const auto law = predicted_law(spec);
            const auto emp = run_ensemble(spec, q.size, c.replicates, q.seed, {CueMethod::Verblunsky, c.threads});
            const double ks = ks_distance(emp, law);
            const double ks_fit = ks_distance(emp, Gaussian{emp.variance()});
            double exact_var = 0.0;
            if (sine) {
                exact_var = exact_moments_sine(spec, q.size).variance * std::pow(q.size, -2.0 * spec.normalization_s());
            } else {
                exact_var = exact_variance_thinned(spec, static_cast<std::size_t>(q.size)).total *
                            std::pow(q.size, -2.0 * spec.normalization_s());
            }
            const auto stem = std::string("mc_") + std::to_string(i);
            write_empirical(emp, dir / (stem + ".csv"));
            const auto [d, k] = detail::reported_dk(c, q.d, q.k);
            return std::vector<std::vector<std::string>>{
                {c.process, csv_num(q.size), csv_num(q.a), csv_num(d), csv_num(k), std::to_string(q.seed),
                 std::to_string(c.replicates), law_name(law), csv_num(ks), csv_num(ks_fit), csv_num(emp.mean()),
                 csv_num(emp.cumulant_se[0]), csv_num(emp.variance()), csv_num(emp.cumulant_se[1]), csv_num(exact_var),
                 csv_num(emp.cumulants[2]), csv_num(emp.cumulant_se[2]), csv_num(cumulant(law, 3)), stem + ".csv"}};
        },
        [&](std::size_t i) {
            return "size=" + csv_num(pts[i].size) + " " + detail::key_of(pts[i].a, pts[i].d, pts[i].k, 0.0) +
                   " seed=" + std::to_string(pts[i].seed);
        },
        rep.errors, 1);
    CsvTable t{{"process", "n_or_L", "alpha", "delta", "kappa", "seed", "replicates", "predicted_law", "ks_predicted",
                "ks_gaussian_fit", "mean", "mean_se", "variance", "variance_se", "exact_variance", "c3", "c3_se",
                "law_c3", "values_file"},
               {}};
    for (auto& r : res)
        for (auto& row : r) {
            const std::string params = "size=" + row[1] + " alpha=" + row[2] + " delta=" + row[3] + " kappa=" + row[4] +
                                       " seed=" + row[5];
            const double ks = std::stod(row[8]), fit = std::stod(row[9]);
            rep.gates.push_back({"ks_predicted", params, ks < c.tol.ks_max, "KS " + row[8]});
            if (c.tol.require_beats_gaussian_fit)
                rep.gates.push_back({"beats_gaussian_fit", params, ks < fit, "KS " + row[8] + " vs fit " + row[9]});
            t.rows.push_back(std::move(row));
        }
    const auto p = dir / "mc.csv";
    write_csv(p, "mc", t);
    rep.files.push_back(p);
    detail::write_gates(dir, "mc", rep);
    detail::write_errors(dir, "mc", rep.errors, rep);
    return rep;
}

inline RunReport run_experiment(const ExperimentConfig& c) {
    if (c.kind == "cgf") return run_cgf_convergence(c);
    if (c.kind == "sine") return run_sine_study(c);
    if (c.kind == "regime-sweep") return run_regime_sweep(c);
    if (c.kind == "mc") return run_mc(c);
    throw std::invalid_argument("unknown experiment kind '" + c.kind + "'");
}

// ---- plot scripts ----

inline std::vector<std::string> read_csv_header(const fs::path& p) {
    std::ifstream is(p);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
        return cols;
    }
    return {};
}

inline void require_columns(const fs::path& p, const std::vector<std::string>& need) {
    const auto have = read_csv_header(p);
    for (const auto& n : need)
        if (std::find(have.begin(), have.end(), n) == have.end())
            throw std::runtime_error(p.filename().string() + ": missing column '" + n + "'");
}

inline std::string convergence_script(const std::string& csv, const std::string& png) {
    return R"(import csv
import collections
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

rows = [r for r in csv.DictReader(l for l in open(")" +
           csv + R"(") if not l.startswith("#"))]
series = collections.defaultdict(list)
for r in rows:
    key = (r["alpha"], r["delta"], r["kappa"], r["lambda"])
    series[key].append((float(r["n_or_L"]), float(r["abs_err_exact_vs_limit"])))
fig, ax = plt.subplots(figsize=(6, 4.5))
for (a, d, k, lam), pts in sorted(series.items()):
    pts.sort()
    xs = [p[0] for p in pts]
    ys = [max(p[1], 1e-300) for p in pts]
    if float(lam) == 0.0:
        continue
    ax.loglog(xs, ys, marker="o", label=f"a={a} d={d} k={k} l={lam}")
ax.set_xlabel("n or L")
ax.set_ylabel("|centered exact CGF - limit CGF|")
ax.legend(fontsize=6)
fig.tight_layout()
fig.savefig(")" + png + R"(", dpi=150)
)";
}

inline std::string heatmap_script(const std::string& csv, const std::string& png) {
    return R"(import csv
import collections
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

rows = [r for r in csv.DictReader(l for l in open(")" +
           csv + R"(") if not l.startswith("#"))]
col = {"cue_gaussian": "ks_cue_gaussian", "poisson_gaussian": "ks_poisson_gaussian",
       "infinitely_divisible": "ks_infinitely_divisible"}
nmax = max(float(r["n"]) for r in rows)
cells = collections.defaultdict(list)
for r in rows:
    if float(r["n"]) != nmax:
        continue
    cells[(float(r["alpha"]), float(r["delta"]))].append(float(r[col[r["predicted_law"]]]))
alphas = sorted({k[0] for k in cells})
deltas = sorted({k[1] for k in cells})
grid = np.full((len(deltas), len(alphas)), np.nan)
for (a, d), v in cells.items():
    grid[deltas.index(d), alphas.index(a)] = sum(v) / len(v)
fig, ax = plt.subplots(figsize=(5, 4.5))
im = ax.imshow(grid, origin="lower", cmap="viridis")
ax.set_xticks(range(len(alphas)), [str(a) for a in alphas])
ax.set_yticks(range(len(deltas)), [str(d) for d in deltas])
ax.set_xlabel("alpha")
ax.set_ylabel("delta")
ax.set_title(f"KS to predicted law, n={int(nmax)}")
fig.colorbar(im)
fig.tight_layout()
fig.savefig(")" + png + R"(", dpi=150)
)";
}

inline std::string mc_script(const std::string& csv, const std::string& png) {
    return R"(import csv
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

rows = [r for r in csv.DictReader(l for l in open(")" +
           csv + R"(") if not l.startswith("#"))]
fig, ax = plt.subplots(figsize=(6, 4.5))
xs = [float(r["n_or_L"]) for r in rows]
ax.semilogx(xs, [float(r["ks_predicted"]) for r in rows], "o", label="predicted law")
ax.semilogx(xs, [float(r["ks_gaussian_fit"]) for r in rows], "s", label="Gaussian fit")
ax.set_xlabel("n or L")
ax.set_ylabel("KS distance")
ax.legend()
fig.tight_layout()
fig.savefig(")" + png + R"(", dpi=150)
)";
}

// Writes matplotlib scripts next to the recognized CSVs; returns their paths.
inline std::vector<fs::path> emit_plots(const fs::path& dir, std::ostream& warn = std::cerr) {
    if (!fs::is_directory(dir)) throw std::runtime_error("plots: not a directory: " + dir.string());
    std::vector<fs::path> out;
    std::vector<fs::path> csvs;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& p : csvs) {
        const std::string stem = p.stem().string();
        const std::string png = stem + ".png";
        std::string script;
        if (stem == "cgf_convergence" || stem == "sine" || stem == "regime_sweep") {
            require_columns(p, {"n_or_L", "alpha", "delta", "kappa", "lambda", "abs_err_exact_vs_limit"});
            script = convergence_script(p.filename().string(), png);
        } else if (stem == "regime_sweep_mc") {
            require_columns(p, {"n", "alpha", "delta", "predicted_law", "ks_cue_gaussian", "ks_poisson_gaussian",
                                "ks_infinitely_divisible"});
            script = heatmap_script(p.filename().string(), png);
        } else if (stem == "mc") {
            require_columns(p, {"n_or_L", "ks_predicted", "ks_gaussian_fit"});
            script = mc_script(p.filename().string(), png);
        } else {
            continue;
        }
        const auto sp = dir / ("plot_" + stem + ".py");
        atomic_write(sp, script);
        out.push_back(sp);
    }
    if (out.empty()) warn << "warning: no recognized CSV files in " << dir.string() << "; no plot scripts written\n";
    return out;
}

}  // namespace mesolab
