#include <CLI11.hpp>

#include <iostream>
#include <string>

#include <mesolab/experiments.hpp>
#include <mesolab/sampler.hpp>

using namespace mesolab;

namespace {

// Exit codes: 0 all gates pass, 1 a gate failed, 2 a grid point errored,
// 3 invalid usage or configuration.
constexpr int kUsageError = 3;

int run_kind(const std::string& kind, const std::string& config, bool print_config, const std::string& out_dir,
             unsigned threads) {
    ExperimentConfig cfg = config.empty() ? default_config(kind) : load_config(config, kind);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (threads) cfg.threads = threads;
    if (print_config) {
        std::cout << to_json(cfg).dump(2) << "\n";
        return 0;
    }
    const RunReport rep = run_experiment(cfg);
    for (const auto& f : rep.files) std::cout << "wrote " << f.string() << "\n";
    std::size_t failed = 0;
    for (const auto& g : rep.gates)
        if (!g.passed) {
            ++failed;
            std::cout << "FAIL " << g.gate << " [" << g.params << "] " << g.detail << "\n";
        }
    for (const auto& e : rep.errors) std::cerr << "error [" << e.params << "] " << e.message << "\n";
    std::cout << rep.gates.size() - failed << "/" << rep.gates.size() << " gates passed, " << rep.errors.size()
              << " errors\n";
    return rep.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mesoscopic linear statistics lab"};
    app.require_subcommand(1);

    struct KindOpts {
        std::string config, out;
        bool print = false;
        unsigned threads = 0;
    };
    std::map<std::string, KindOpts> opts;
    std::map<std::string, CLI::App*> subs;
    const std::vector<std::pair<std::string, std::string>> kinds = {
        {"regime-sweep", "sweep the (alpha, delta) diagram: CGF errors, KS model selection, variance shares"},
        {"cgf", "exact Toeplitz CGF convergence toward the limit"},
        {"mc", "Monte Carlo ensembles against the predicted law"},
        {"sine", "Fredholm CGF study of the thinned sine process"}};
    for (const auto& [k, help] : kinds) {
        auto* s = app.add_subcommand(k, help);
        auto& o = opts[k];
        s->add_option("--config", o.config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
        s->add_flag("--print-config", o.print, "print the effective config with all defaults and exit");
        s->add_option("--output-dir", o.out, "override output_dir");
        s->add_option("--threads", o.threads, "override thread count (also LAB_THREADS)");
        subs[k] = s;
    }

    std::string plot_dir;
    auto* plots = app.add_subcommand("plots", "write matplotlib scripts for the CSVs in DIR");
    plots->add_option("DIR", plot_dir)->required();

    std::string proc = "cue", dump;
    std::size_t n = 64;
    double lo = -pi, hi = pi, gamma = 1.0;
    std::uint64_t seed = 1;
    auto* sample = app.add_subcommand("sample", "draw one sample and write it as a DPPS binary");
    sample->add_option("--process", proc)->check(CLI::IsMember({"cue", "sine"}));
    sample->add_option("--n", n, "matrix size (cue)");
    sample->add_option("--lo", lo, "window start");
    sample->add_option("--hi", hi, "window end");
    sample->add_option("--gamma", gamma, "retention probability");
    sample->add_option("--seed", seed);
    sample->add_option("--out", dump)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }

    try {
        for (const auto& [k, s] : subs)
            if (s->parsed()) return run_kind(k, opts[k].config, opts[k].print, opts[k].out, opts[k].threads);
        if (plots->parsed()) {
            for (const auto& p : emit_plots(plot_dir)) std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
        if (sample->parsed()) {
            SpectrumSample s;
            if (proc == "cue") {
                s = (lo <= -pi && hi >= pi) ? sample_cue(n, seed) : sample_cue_arc(n, lo, hi, seed);
                if (gamma < 1.0) s = thin(s, gamma, derive_seed(seed, 3, 0));
            } else {
                s = sample_sine_window(lo, hi, gamma, seed);
            }
            dpps::write_file(dump, s);
            std::cout << "wrote " << s.points.size() << " points to " << dump << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return kUsageError;
}
