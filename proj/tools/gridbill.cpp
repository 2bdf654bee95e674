// gridbill command line: run / ablate / report / solve / export-corpus

#include "gridbill/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

using namespace gridbill;

namespace {

RunConfig base_config(const std::string& config_path, const std::optional<std::uint64_t>& seed)
{
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) {
        cfg.corpus.master_seed = *seed;
    }
    cfg.validate();
    return cfg;
}

void print_summary(const json& s)
{
    std::printf("arm %s  seed %s  config %s\n", s["arm"].get<std::string>().c_str(), s["provenance"]["seed"].dump().c_str(),
                s["provenance"]["config_hash"].get<std::string>().c_str());
    std::printf("readings %s\n\n", s["corpus"]["readings"].dump().c_str());
    std::printf("%-10s %9s %9s %9s %9s\n", "method", "MAPE %", "RMSE", "pinball", "cover");
    for (const auto& m : s["forecast"]["methods"]) {
        std::printf("%-10s %9.3f %9.3f %9.4f %9.3f\n", m["method"].get<std::string>().c_str(), m["mape_pct"].get<double>(), m["rmse_kwh"].get<double>(),
                    m["pinball"].get<double>(), m["coverage"].get<double>());
    }
    std::printf("forecaster: %s\n\n", s["forecast"]["forecaster"].get<std::string>().c_str());
    std::printf("DR day %d, %d candidates\n", s["dr"]["day"].get<int>(), s["dr"]["variables"].get<int>());
    std::printf("%-10s %12s %6s %6s %10s %8s\n", "solver", "energy", "iters", "sel", "kg saved", "peak %");
    for (const auto& r : s["dr"]["solvers"]) {
        std::printf("%-10s %12.3f %6d %6d %10.3f %8.3f\n", r["method"].get<std::string>().c_str(), r["energy"].get<double>(), r["iterations"].get<int>(),
                    r["selected"].get<int>(), r["kpis"]["kg_saved"].get<double>(), r["kpis"]["peak_reduction_pct"].get<double>());
    }
    std::printf("optimiser: %s  co2 reduction %.3f %%\n\n", s["dr"]["optimiser"].get<std::string>().c_str(),
                s["dr"]["kpis"]["co2_reduction_pct"].get<double>());
    std::printf("projected CO2 error: mean |%%| %.3f, p95 %.3f, within 3%% %.3f\n", s["co2"]["mean_abs_pct_error"].get<double>(),
                s["co2"]["p95_abs_pct_error"].get<double>(), s["co2"]["within_3pct_fraction"].get<double>());
    std::printf("statements: %s policy, hallucination rate %.3f on %s\n", s["billing"]["policy"].get<std::string>().c_str(),
                s["billing"]["hallucination_rate"].get<double>(), s["billing"]["panel_size"].dump().c_str());
    std::printf("invariants: %s\n", s["invariants"]["ok"].get<bool>() ? "ok" : "FAILED");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Synthetic billing, CO2 attribution and demand-response pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string arm = "full";
    std::string out = "out";

    auto* run = app.add_subcommand("run", "run the five-phase pipeline once");
    run->add_option("--config", config_path, "JSON config");
    run->add_option("--seed", seed, "master seed");
    run->add_option("--ablation", arm, "ablation arm")
        ->check(CLI::IsMember({"full", "no-constrained-decoding", "sma-instead-of-surrogate", "sa-instead-of-sb", "all-three"}));
    run->add_option("--out", out, "output directory");

    auto* ablate = app.add_subcommand("ablate", "run all five ablation arms");
    ablate->add_option("--config", config_path, "JSON config");
    ablate->add_option("--seed", seed, "master seed");
    ablate->add_option("--out", out, "output directory");

    std::string summary_path;
    auto* report = app.add_subcommand("report", "print a run summary");
    report->add_option("--summary", summary_path, "summary.json")->required();

    std::string instance_path;
    std::string method = "bsb";
    std::uint64_t solve_seed = 1;
    bool tune = false;
    std::string trace_out;
    auto* solve = app.add_subcommand("solve", "solve a QUBO instance");
    solve->add_option("--instance", instance_path, "instance JSON")->required();
    solve->add_option("--method", method, "solver")->check(CLI::IsMember({"bsb", "asb", "sa", "greedy", "exact"}));
    solve->add_option("--seed", solve_seed, "solver seed");
    solve->add_flag("--tune-sa", tune, "tune SA by 100-trial random search");
    solve->add_option("--trace", trace_out, "write the trace CSV here");

    auto* exp = app.add_subcommand("export-corpus", "write meter and CI CSVs only");
    exp->add_option("--config", config_path, "JSON config");
    exp->add_option("--seed", seed, "master seed");
    exp->add_option("--out", out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            RunConfig cfg = base_config(config_path, seed);
            cfg.ablation = arm_from_string(arm);
            cfg.output_dir = out;
            const RunSummary s = run_pipeline(cfg);
            print_summary(summary_to_json(s));
            return s.invariants_ok() ? 0 : 1;
        }
        if (ablate->parsed()) {
            RunConfig cfg = base_config(config_path, seed);
            cfg.output_dir = out;
            const auto rows = run_ablation(cfg);
            std::cout << ablation_csv(rows);
            bool ok = true;
            for (const auto& r : rows) {
                ok = ok && r.summary.invariants_ok();
            }
            return ok ? 0 : 1;
        }
        if (report->parsed()) {
            const json s = json::parse(read_file(summary_path));
            print_summary(s);
            return s["invariants"]["ok"].get<bool>() ? 0 : 1;
        }
        if (solve->parsed()) {
            const QuboInstance inst = load_instance(instance_path);
            SolveResult r;
            if (method == "bsb" || method == "asb") {
                SbParams p = default_dr_sb_params();
                p.seed = solve_seed;
                r = method == "bsb" ? solve_bsb(inst, p) : solve_asb(inst, p);
            } else if (method == "sa") {
                SaParams p;
                p.seed = solve_seed;
                if (tune) {
                    p = tune_sa(inst, 100, solve_seed).best;
                }
                r = solve_sa(inst, p);
            } else if (method == "greedy") {
                r = solve_greedy(inst);
            } else {
                r = brute_force(inst);
            }
            json j;
            j["method"] = method;
            j["energy"] = r.energy;
            j["iterations_to_converge"] = r.iterations_to_converge;
            j["assignment"] = r.assignment;
            j["wall_time_s"] = r.wall_time;
            std::cout << j.dump(2) << "\n";
            if (!trace_out.empty()) {
                write_file(trace_out, trace_csv({{method, r.trace}}));
            }
            return 0;
        }
        if (exp->parsed()) {
            const RunConfig cfg = base_config(config_path, seed);
            const Corpus corpus = generate_corpus(cfg.corpus, cfg.tariff);
            write_file(fs::path(out) / "meter_readings.csv", meter_csv(corpus));
            write_file(fs::path(out) / "carbon_intensity.csv", ci_csv(corpus.ci));
            std::printf("%zu readings written to %s\n", corpus.reading_count(), out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
