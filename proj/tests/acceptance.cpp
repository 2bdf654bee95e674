// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
// Usage: acceptance [work_dir]

#include "support.hpp"

#include "gridbill/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace gridbill;

namespace {

using Clock = std::chrono::steady_clock;

double seconds(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Criterion {
    Criterion(int i, std::string t)
        : id(i)
        , title(std::move(t))
    {
    }

    int id;
    std::string title;
    bool ok = true;
    std::vector<std::string> notes;

    void check(bool cond, const std::string& what)
    {
        ok = ok && cond;
        notes.push_back(std::string(cond ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { notes.push_back("info " + what); }
};

std::string num(double v, int prec = 4)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

/// Minimal CSV reader, separate from the library's parsers.
std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

void report(const Criterion& c)
{
    std::printf("%s  criterion %d: %s\n", c.ok ? "PASS" : "FAIL", c.id, c.title.c_str());
    for (const auto& n : c.notes) {
        std::printf("        %s\n", n.c_str());
    }
    std::fflush(stdout);
}

const MetricsRow& metric(const RunSummary& s, const std::string& method)
{
    for (const auto& m : s.forecast_metrics) {
        if (m.method == method) {
            return m;
        }
    }
    throw std::runtime_error("no metrics row for " + method);
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "gridbill_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);
    std::vector<Criterion> results;

    // The ablation run provides the default-seed Full arm used by several criteria.
    RunConfig base;
    base.output_dir = work / "ablation";
    const auto t_ablation = Clock::now();
    const std::vector<AblationRow> ablation = run_ablation(base);
    const double ablation_s = seconds(t_ablation);
    const RunSummary& full = ablation[0].summary;
    const fs::path full_dir = work / "ablation" / "full";

    // 1 -----------------------------------------------------------------
    {
        Criterion c{1, "corpus scale and determinism"};
        RunConfig rc;
        rc.output_dir = work / "repeat";
        const auto t0 = Clock::now();
        const RunSummary again = run_pipeline(rc);
        const double run_s = seconds(t0);
        c.check(full.reading_count == 1'152'000, "readings = " + std::to_string(full.reading_count) + " (expected 1152000)");
        bool same_bytes = true;
        for (const char* rel : {"data/meter_readings.csv", "data/carbon_intensity.csv"}) {
            same_bytes = same_bytes && read_file(full_dir / rel) == read_file(rc.output_dir / rel);
        }
        c.check(same_bytes, "two runs export byte-identical meter and CI CSVs");
        c.check(again.checksums == full.checksums, "all " + std::to_string(full.checksums.size()) + " artefact checksums identical across runs");
        const auto t1 = Clock::now();
        const Corpus corpus = generate_corpus(CorpusConfig{});
        const std::string exported = meter_csv(corpus) + ci_csv(corpus.ci);
        const double gen_s = seconds(t1);
        c.check(gen_s < 10.0, "corpus generation + CSV export " + num(gen_s, 2) + " s (< 10 s)");
        c.note("full single pipeline run " + num(run_s, 2) + " s, export " + std::to_string(exported.size() / 1000000) + " MB");
        results.push_back(c);
        fs::remove_all(rc.output_dir);
    }

    // 2 -----------------------------------------------------------------
    const Corpus& corpus = testing::default_corpus();
    std::map<BaselineKind, MethodEvaluation> evals;
    {
        Criterion c{2, "forecast ordering (Table 1 analog)"};
        const auto t0 = Clock::now();
        for (BaselineKind k : kAllBaselineKinds) {
            evals.emplace(k, evaluate_method(corpus, k));
        }
        const double fc_s = seconds(t0);
        double best_classical = std::numeric_limits<double>::infinity();
        double others_min = std::numeric_limits<double>::infinity();
        for (BaselineKind k : kAllBaselineKinds) {
            const double m = evals.at(k).metrics.mape;
            c.note(std::string(to_string(k)) + " MAPE " + num(m, 3) + " %, RMSE " + num(evals.at(k).metrics.rmse, 3) + " kWh");
            if (k != BaselineKind::Surrogate) {
                best_classical = std::min(best_classical, m);
            }
            if (k != BaselineKind::Surrogate && k != BaselineKind::ArResidual) {
                others_min = std::min(others_min, m);
            }
        }
        const double sur = evals.at(BaselineKind::Surrogate).metrics.mape;
        const double ar = evals.at(BaselineKind::ArResidual).metrics.mape;
        c.check(sur < ar, "surrogate < ARIMA(p) analog");
        c.check(ar <= others_min, "ARIMA(p) analog <= every other baseline (" + num(ar, 3) + " vs " + num(others_min, 3) + ")");
        c.check(sur <= 3.5, "surrogate MAPE " + num(sur, 3) + " % <= 3.5 %");
        c.check(best_classical >= 3.0 && best_classical <= 6.0, "best classical MAPE " + num(best_classical, 3) + " % in [3.0, 6.0]");
        c.check(std::abs(metric(full, "Surrogate").metrics.mape - sur) == 0.0, "pipeline summary reproduces the surrogate MAPE");
        c.check(fc_s < 60.0, "six methods evaluated in " + num(fc_s, 2) + " s (< 60 s)");
        results.push_back(c);
    }

    // 3 -----------------------------------------------------------------
    {
        Criterion c{3, "pinball loss and quantile bands"};
        c.check(pinball_loss(2.0, 1.0, 0.5) == 0.5, "rho_0.5(2 - 1) = 0.5");
        c.check(std::abs(pinball_loss(1.0, 2.0, 0.9) - 0.1) <= 1e-15, "rho_0.9(1 - 2) = 0.1");
        c.check(pinball_loss(1.0, 1.0, 0.1) == 0.0 && pinball_loss(1.0, 1.0, 0.9) == 0.0, "rho_q(0) = 0");

        Rng rng(17);
        bool optimal = true;
        double worst_gap = 0.0;
        std::size_t grid_points = 0;
        for (int trial = 0; trial < 10; ++trial) {
            ResidualsByHour res;
            for (auto& r : res) {
                for (int k = 0; k < 30; ++k) {
                    r.push_back(rng.normal(0.2 * trial, 1.0) * (k % 4 == 0 ? 3.0 : 1.0));
                }
            }
            for (double q : kQuantiles) {
                const DayProfile off = fit_quantile_bands(res, q);
                for (int h = 0; h < kHoursPerDay; ++h) {
                    const auto& r = res[static_cast<std::size_t>(h)];
                    auto loss = [&](double o) {
                        double s = 0.0;
                        for (double v : r) {
                            s += std::max(q * (v - o), (q - 1.0) * (v - o));
                        }
                        return s;
                    };
                    const double best = loss(off[static_cast<std::size_t>(h)]);
                    for (double g = -12.0; g <= 12.0; g += 0.01) {
                        const double gap = best - loss(g);
                        worst_gap = std::max(worst_gap, gap);
                        optimal = optimal && gap <= 1e-12;
                        ++grid_points;
                    }
                }
            }
        }
        c.check(optimal, "fitted offsets never lose to any of " + std::to_string(grid_points) + " grid candidates (worst gap " +
                             std::to_string(worst_gap) + ", tol 1e-12)");
        const double cov = evals.at(BaselineKind::Surrogate).coverage;
        c.check(cov >= 0.70 && cov <= 0.95, "aggregate [q10, q90] coverage " + num(cov, 3) + " in [0.70, 0.95]");
        results.push_back(c);
    }

    // 4 -----------------------------------------------------------------
    {
        Criterion c{4, "CO2 exactness from exported CSVs"};
        const auto meter_rows = read_csv(full_dir / "data/meter_readings.csv");
        const auto ci_rows = read_csv(full_dir / "data/carbon_intensity.csv");
        std::vector<double> ci(ci_rows.size());
        for (const auto& r : ci_rows) {
            ci[static_cast<std::size_t>(std::stoi(r[0]) * 96 + std::stoi(r[1]))] = std::strtod(r[2].c_str(), nullptr);
        }
        std::map<std::pair<int, int>, double> monthly;
        for (const auto& r : meter_rows) {
            const int cust = std::stoi(r[0]);
            const int day = std::stoi(r[1]);
            const int iv = std::stoi(r[2]);
            monthly[{cust, day / 30}] += std::strtod(r[3].c_str(), nullptr) * ci[static_cast<std::size_t>(day * 96 + iv)] / 1000.0;
        }
        double worst = 0.0;
        std::size_t compared = 0;
        for (const auto& r : read_csv(full_dir / "reports/co2_monthly.csv")) {
            const double reported = std::strtod(r[2].c_str(), nullptr);
            const double recomputed = monthly.at({std::stoi(r[0]), std::stoi(r[1])});
            worst = std::max(worst, std::abs(reported - recomputed) / std::abs(recomputed));
            ++compared;
        }
        c.check(compared == 400, std::to_string(compared) + " customer-months recomputed");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", worst);
        c.check(worst <= 1e-9, std::string("max relative error ") + buf + " (<= 1e-9)");
        c.note("projected-basis daily error: mean |%| " + num(full.co2.mean_abs_pct_error, 3) + ", p95 |%| " + num(full.co2.p95_abs_pct_error, 3) +
               ", within +/-3 %: " + num(100.0 * full.co2.within_3pct_fraction, 1) + " % of " + std::to_string(full.co2.scored_days) +
               " customer-days (reported, not gated)");
        results.push_back(c);
    }

    // 5 -----------------------------------------------------------------
    {
        Criterion c{5, "QUBO <-> Ising correspondence"};
        double worst = 0.0;
        std::size_t assignments = 0;
        for (int t = 0; t < 50; ++t) {
            const int n = 1 + (t * 7) % 12;
            const auto inst = testing::random_qubo(n, 77000 + static_cast<std::uint64_t>(t));
            const auto m = qubo_to_ising(inst);
            for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
                const Bits x = testing::bits_of(mask, n);
                worst = std::max(worst, std::abs(ising_energy(m, bits_to_spins(x)) - testing::naive_energy(inst.q, x)));
                ++assignments;
            }
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.3e", worst);
        c.check(worst <= 1e-9, "50 instances, " + std::to_string(assignments) + " assignments, max |diff| " + buf + " (<= 1e-9)");
        results.push_back(c);
    }

    // 6 -----------------------------------------------------------------
    {
        Criterion c{6, "solver exactness at n = 12"};
        const auto t0 = Clock::now();
        int sb = 0;
        int sa = 0;
        for (int t = 0; t < 20; ++t) {
            const auto inst = testing::random_qubo(12, 123000 + static_cast<std::uint64_t>(t));
            const double opt = brute_force(inst).energy;
            SbParams p;
            p.seed = static_cast<std::uint64_t>(t) + 1;
            sb += std::abs(solve_bsb(inst, p).energy - opt) <= 1e-9 ? 1 : 0;
            const auto tuned = tune_sa(inst, 100, static_cast<std::uint64_t>(t) + 1);
            sa += std::abs(solve_sa(inst, tuned.best).energy - opt) <= 1e-9 ? 1 : 0;
        }
        const double el = seconds(t0);
        c.check(sb >= 18, "bSB best-of-8 matches the optimum on " + std::to_string(sb) + "/20 (>= 18)");
        c.check(sa >= 16, "tuned SA matches the optimum on " + std::to_string(sa) + "/20 (>= 16)");
        c.check(el < 30.0, "runtime " + num(el, 2) + " s (< 30 s)");
        results.push_back(c);
    }

    // 7 & 8 -------------------------------------------------------------
    const SolverSummary& bsb = full.solvers.at(0);
    const SolverSummary& sa = full.solvers.at(2);
    {
        Criterion c{7, "convergence ordering on the default DR instance"};
        c.note(std::to_string(full.dr_variables) + " candidates on day " + std::to_string(full.dr_day));
        c.check(bsb.iterations <= 10, "bSB converges at iteration " + std::to_string(bsb.iterations) + " (<= 10)");
        c.check(sa.iterations >= 4 * bsb.iterations,
                "tuned SA converges at iteration " + std::to_string(sa.iterations) + " (>= 4 x " + std::to_string(bsb.iterations) + ")");
        c.check(bsb.energy <= sa.energy, "bSB energy " + num(bsb.energy, 3) + " <= SA energy " + num(sa.energy, 3));
        c.note("aSB " + num(full.solvers.at(1).energy, 3) + " @ " + std::to_string(full.solvers.at(1).iterations) + ", greedy " +
               num(full.solvers.at(3).energy, 3));
        results.push_back(c);
    }
    {
        Criterion c{8, "DR KPI sign"};
        c.check(bsb.kpis.peak_reduction_pct > 0.0, "bSB peak reduction " + num(bsb.kpis.peak_reduction_pct, 3) + " % (> 0)");
        c.check(bsb.kpis.kg_saved >= sa.kpis.kg_saved, "bSB kg saved " + num(bsb.kpis.kg_saved, 3) + " >= SA " + num(sa.kpis.kg_saved, 3));
        c.note("bSB schedule: " + std::to_string(bsb.selected) + " shifts, CO2 reduction " + num(bsb.kpis.co2_reduction_pct, 3) + " % of the day");
        results.push_back(c);
    }

    // 9 -----------------------------------------------------------------
    {
        Criterion c{9, "bill audit soundness and completeness"};
        const RunSummary& nocd = ablation[1].summary;
        c.check(full.panel_size == 30 && full.hallucination_rate == 0.0,
                "constrained panel of " + std::to_string(full.panel_size) + ": rate " + num(full.hallucination_rate, 3) + " (= 0.0)");
        c.check(nocd.panel_size == 30 && nocd.hallucination_rate == 1.0,
                "faulty panel of " + std::to_string(nocd.panel_size) + ": rate " + num(nocd.hallucination_rate, 3) + " (= 1.0)");

        const MethodEvaluation& ev = evals.at(BaselineKind::Surrogate);
        const auto periods = billing_periods(corpus.config.n_days);
        std::size_t mutations = 0;
        std::size_t survived = 0;
        bool files_match = true;
        for (std::size_t cust : panel_customers(corpus.meters.size(), 30)) {
            const BillInput in = assemble_bill_input(corpus, cust, periods.back(), co2_metered(corpus, cust), ev);
            const BillStatement st = generate_statement(in);
            files_match = files_match &&
                          read_file(full_dir / "statements" / (customer_label(corpus.meters[cust].id) + "_p2.txt")) == st.text;
            for (const auto& span : st.numeric_spans) {
                for (std::size_t p = span.begin; p < span.end; ++p) {
                    if (!std::isdigit(static_cast<unsigned char>(st.text[p]))) {
                        continue;
                    }
                    for (char d = '0'; d <= '9'; ++d) {
                        if (d == st.text[p]) {
                            continue;
                        }
                        BillStatement m = st;
                        m.text[p] = d;
                        ++mutations;
                        survived += audit_statement(m, in).passed() ? 1 : 0;
                    }
                }
            }
        }
        c.check(files_match, "panel statements on disk equal regenerated statements");
        c.check(mutations > 0 && survived == 0,
                std::to_string(mutations) + " single-digit mutations, " + std::to_string(survived) + " passed the audit (expected 0)");
        results.push_back(c);
    }

    // 10 ----------------------------------------------------------------
    {
        Criterion c{10, "ablation isolation (Table 3 analog)"};
        std::map<AblationArm, const RunSummary*> arm;
        for (const auto& r : ablation) {
            arm[r.arm] = &r.summary;
            const auto& s = r.summary;
            c.note(std::string(to_string(r.arm)) + ": MAPE " + num(s.forecast_mape, 3) + " %, " + s.optimiser + " iterations " +
                   std::to_string(s.selected.iterations) + ", CO2 reduction " + num(s.selected.kpis.co2_reduction_pct, 3) + " %, hallucination " +
                   num(s.hallucination_rate, 2));
        }
        const RunSummary& f = *arm.at(AblationArm::Full);
        const RunSummary& nocd = *arm.at(AblationArm::NoConstrainedDecoding);
        const RunSummary& sma = *arm.at(AblationArm::SmaInsteadOfSurrogate);
        const RunSummary& sasb = *arm.at(AblationArm::SaInsteadOfSb);
        const RunSummary& all = *arm.at(AblationArm::AllThree);
        auto co2 = [](const RunSummary& s) { return s.selected.kpis.co2_reduction_pct; };
        auto it = [](const RunSummary& s) { return s.selected.iterations; };

        c.check(nocd.hallucination_rate > f.hallucination_rate, "no-constrained-decoding raises the hallucination rate");
        c.check(nocd.forecast_mape == f.forecast_mape && it(nocd) == it(f) && co2(nocd) == co2(f),
                "no-constrained-decoding leaves MAPE, iterations and CO2 reduction unchanged");
        c.check(sma.forecast_mape != f.forecast_mape, "sma-instead-of-surrogate changes forecast MAPE");
        c.check(co2(sma) != co2(f), "sma-instead-of-surrogate changes CO2 reduction");
        c.check(sma.hallucination_rate == f.hallucination_rate, "sma-instead-of-surrogate leaves the hallucination rate unchanged");
        c.check(it(sma) == it(f), "sma-instead-of-surrogate leaves optimiser iterations unchanged (" + std::to_string(it(sma)) + " vs " +
                                      std::to_string(it(f)) + ")");
        c.check(sasb.forecast_mape == f.forecast_mape && sasb.hallucination_rate == f.hallucination_rate,
                "sa-instead-of-sb leaves MAPE and hallucination rate unchanged");
        c.check(it(sasb) > it(f), "sa-instead-of-sb needs more iterations");
        c.check(co2(sasb) != co2(f), "sa-instead-of-sb changes CO2 reduction");
        c.check(all.forecast_mape > f.forecast_mape && it(all) > it(f) && all.hallucination_rate > f.hallucination_rate,
                "all-three degrades forecast, optimiser and statement axes");
        const double lo = std::max({co2(nocd), co2(sma), co2(sasb)});
        const double hi = std::min({co2(nocd), co2(sma), co2(sasb)});
        c.check(co2(f) >= lo && hi >= co2(all), "CO2 reduction: full >= each single ablation >= all-three");
        c.check(fs::is_regular_file(work / "ablation" / "ablation.csv"), "ablation.csv written");
        c.check(ablation_s < 300.0, "five-arm ablation in " + num(ablation_s, 2) + " s (< 300 s)");
        results.push_back(c);
    }

    int failed = 0;
    std::printf("\n");
    for (const auto& r : results) {
        report(r);
        failed += r.ok ? 0 : 1;
    }
    std::printf("\n%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 1;
}
