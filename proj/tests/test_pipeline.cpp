#include "gridbill/pipeline.hpp"

#include <catch_amalgamated.hpp>

using namespace gridbill;

namespace {

const fs::path& work_root()
{
    static const fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "gridbill_pipeline_test";
        fs::remove_all(p);
        return p;
    }();
    return root;
}

RunConfig config_at(const std::string& name, AblationArm arm = AblationArm::Full)
{
    RunConfig c;
    c.output_dir = work_root() / name;
    c.ablation = arm;
    return c;
}

const RunSummary& full_run()
{
    static const RunSummary s = run_pipeline(config_at("full"));
    return s;
}

std::size_t count_files(const fs::path& dir, const std::string& ext)
{
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        n += e.path().extension() == ext ? 1 : 0;
    }
    return n;
}

} // namespace

TEST_CASE("DR KPIs")
{
    DayProfile q50{};
    q50.fill(10.0);
    q50[19] = 30.0; // unique peak
    q50[18] = 25.0; // second level
    DayProfile ci{};
    ci.fill(400.0);
    ci[19] = 600.0;
    ci[3] = 200.0;

    const DrKpis none = compute_dr_kpis({}, q50, ci, 50.0);
    CHECK(none.peak_reduction_pct == 0.0);
    CHECK(none.co2_reduction_pct == 0.0);
    CHECK(none.kg_saved == 0.0);
    CHECK(none.currency_saved == 0.0);

    for (double e : {2.0, 5.0, 8.0}) {
        ShiftCandidate s{CustomerId{0}, Archetype::Mid, 19, 3, e, e * 1.2, e * 0.4, 1.0};
        const std::vector<ShiftCandidate> sched{s};
        const DrKpis k = compute_dr_kpis(sched, q50, ci, 50.0);
        const double drop = std::min(e, 30.0 - 25.0);
        CHECK(k.peak_reduction_pct == Catch::Approx(100.0 * drop / 30.0).epsilon(1e-12));
        CHECK(k.kg_saved == Catch::Approx(e * 0.4));
        CHECK(k.currency_saved == Catch::Approx(50.0 * e * 0.4));
        double day_kg = 0.0;
        for (int h = 0; h < 24; ++h) {
            day_kg += q50[static_cast<std::size_t>(h)] * ci[static_cast<std::size_t>(h)] / 1000.0;
        }
        CHECK(k.co2_reduction_pct == Catch::Approx(100.0 * e * 0.4 / day_kg));
        CHECK(k.shifts == 1);
    }
}

TEST_CASE("arm names and panel selection")
{
    for (AblationArm a : kAllArms) {
        CHECK(arm_from_string(to_string(a)) == a);
    }
    CHECK_THROWS_AS(arm_from_string("nope"), ConfigError);
    CHECK(uses_surrogate(AblationArm::SaInsteadOfSb));
    CHECK_FALSE(uses_surrogate(AblationArm::AllThree));
    CHECK_FALSE(uses_sb(AblationArm::SaInsteadOfSb));
    CHECK_FALSE(uses_constrained_decoding(AblationArm::NoConstrainedDecoding));

    const auto p = panel_customers(200, 30);
    REQUIRE(p.size() == 30);
    CHECK(p.front() == 0);
    CHECK(std::adjacent_find(p.begin(), p.end(), [](auto a, auto b) { return b <= a; }) == p.end());
    CHECK(p.back() < 200);
}

TEST_CASE("full run: summary contents and artefact manifest")
{
    const RunSummary& s = full_run();
    const fs::path out = work_root() / "full";
    CHECK(s.invariants_ok());
    CHECK(s.reading_count == 1'152'000);
    CHECK(s.forecaster == "Surrogate");
    REQUIRE(s.forecast_metrics.size() == 6);
    for (const auto& m : s.forecast_metrics) {
        if (m.method != "Surrogate") {
            CHECK(s.forecast_mape < m.metrics.mape);
        }
    }
    CHECK(s.hallucination_rate == 0.0);
    CHECK(s.statements == 400);
    CHECK(s.statement_audit_failures == 0);
    CHECK(s.dr_day == 48);
    CHECK(s.optimiser == "bSB");

    for (const char* rel : {"summary.json", "reports/co2_daily.csv", "reports/co2_monthly.csv", "reports/dr_packet.json", "tables/forecast_metrics.csv",
                            "tables/headline.csv", "tables/solver_results.csv", "tables/panel.csv", "tables/dr_instance.json",
                            "figures/fig3_forecast_bands.csv", "figures/fig4_convergence.csv", "figures/fig5_co2_daily.csv", "figures/fig6_kpis.csv",
                            "data/meter_readings.csv", "data/carbon_intensity.csv"}) {
        INFO(rel);
        CHECK(fs::is_regular_file(out / rel));
    }
    CHECK(count_files(out / "figures", ".csv") == 4);
    CHECK(count_files(out / "statements", ".txt") == 400);
    CHECK(count_files(out / "statements", ".json") == 400);
    CHECK_FALSE(fs::exists(work_root() / "full.partial"));

    // provenance closure
    REQUIRE_FALSE(s.checksums.empty());
    for (const auto& [rel, sum] : s.checksums) {
        REQUIRE(fnv1a_hex(read_file(out / rel)) == sum);
    }

    const json packet = json::parse(read_file(out / "reports/dr_packet.json"));
    CHECK(packet["shifts"].size() == s.selected.selected);
    CHECK(packet["expected_kg_co2_saved"].get<double>() == s.selected.kpis.kg_saved);
    CHECK(packet["expected_monetary_saving"].get<double>() == Catch::Approx(50.0 * s.selected.kpis.kg_saved));
}

TEST_CASE("summary numbers are re-derivable from the emitted tables")
{
    const RunSummary& s = full_run();
    const fs::path out = work_root() / "full";
    const std::string metrics = read_file(out / "tables/forecast_metrics.csv");
    std::size_t pos = metrics.find('\n') + 1;
    std::size_t row = 0;
    while (pos < metrics.size()) {
        const std::size_t end = metrics.find('\n', pos);
        const auto f = split_csv_line(std::string_view(metrics).substr(pos, end - pos));
        REQUIRE(row < s.forecast_metrics.size());
        CHECK(std::string(f[0]) == s.forecast_metrics[row].method);
        CHECK(parse_double(f[1]) == s.forecast_metrics[row].metrics.mape);
        CHECK(parse_double(f[2]) == s.forecast_metrics[row].metrics.rmse);
        ++row;
        pos = end + 1;
    }
    CHECK(row == 6);

    // re-derive MAPE of the surrogate from the aggregate bands figure
    const std::string fig3 = read_file(out / "figures/fig3_forecast_bands.csv");
    std::vector<double> actual;
    std::vector<double> point;
    pos = fig3.find('\n') + 1;
    while (pos < fig3.size()) {
        const std::size_t end = fig3.find('\n', pos);
        const auto f = split_csv_line(std::string_view(fig3).substr(pos, end - pos));
        actual.push_back(parse_double(f[2]));
        point.push_back(parse_double(f[3]));
        pos = end + 1;
    }
    CHECK(mape(actual, point).percent == Catch::Approx(s.forecast_mape).epsilon(1e-12));

    // DR instance re-solves to the reported energy
    const QuboInstance inst = load_instance(out / "tables/dr_instance.json");
    CHECK(inst.size() == s.dr_variables);
    const json packet = json::parse(read_file(out / "reports/dr_packet.json"));
    Bits x(inst.size(), 0);
    for (const auto& sh : packet["shifts"]) {
        for (std::size_t i = 0; i < inst.size(); ++i) {
            if (inst.candidates[i].customer.value == sh["customer_id"].get<std::uint32_t>()) {
                x[i] = 1;
            }
        }
    }
    CHECK(qubo_energy(inst, x) == Catch::Approx(s.selected.energy).epsilon(1e-12));
}

TEST_CASE("same config twice gives identical output")
{
    const RunSummary& a = full_run();
    const RunSummary b = run_pipeline(config_at("again"));
    CHECK(a.checksums == b.checksums);
    CHECK(a.config_hash == b.config_hash);
    CHECK(read_file(work_root() / "full" / "summary.json") == read_file(work_root() / "again" / "summary.json"));
    fs::remove_all(work_root() / "again");
}

TEST_CASE("ablation arms substitute exactly one component")
{
    const RunSummary& full = full_run();

    const RunSummary sma = run_pipeline(config_at("sma", AblationArm::SmaInsteadOfSurrogate));
    CHECK(sma.forecaster == "SMA");
    const auto row = std::find_if(full.forecast_metrics.begin(), full.forecast_metrics.end(), [](const auto& m) { return m.method == "SMA"; });
    REQUIRE(row != full.forecast_metrics.end());
    CHECK(sma.forecast_mape == row->metrics.mape);
    CHECK(sma.hallucination_rate == full.hallucination_rate);

    const RunSummary nocd = run_pipeline(config_at("nocd", AblationArm::NoConstrainedDecoding));
    CHECK(nocd.hallucination_rate == 1.0);
    CHECK(nocd.forecast_mape == full.forecast_mape);
    CHECK(nocd.selected.iterations == full.selected.iterations);
    CHECK(nocd.selected.energy == full.selected.energy);

    const RunSummary sa = run_pipeline(config_at("sa", AblationArm::SaInsteadOfSb));
    CHECK(sa.optimiser == "SA-tuned");
    CHECK(sa.forecast_mape == full.forecast_mape);
    CHECK(sa.hallucination_rate == full.hallucination_rate);
    CHECK(sa.selected.iterations > full.selected.iterations);
    CHECK(sa.selected.kpis.co2_reduction_pct <= full.selected.kpis.co2_reduction_pct);
    for (const char* d : {"sma", "nocd", "sa"}) {
        fs::remove_all(work_root() / d);
    }
}

TEST_CASE("a failing phase leaves no partial output and keeps the previous run")
{
    const fs::path out = work_root() / "fail";
    write_file(out / "marker.txt", "previous run");

    RunConfig c = config_at("fail");
    c.corpus.ci_solar_dip_depth = 0.0;
    c.corpus.ci_ramp_peak = 0.0;
    c.corpus.ci_ar1_sigma = 0.0; // flat CI: no shift saves CO2
    try {
        run_pipeline(c);
        FAIL("expected a phase error");
    } catch (const PhaseError& e) {
        CHECK(e.phase() == "qubo");
    }
    CHECK_FALSE(fs::exists(work_root() / "fail.partial"));
    CHECK(read_file(out / "marker.txt") == "previous run");

    RunConfig bad = config_at("bad");
    bad.panel_size = 0;
    try {
        run_pipeline(bad);
        FAIL("expected a phase error");
    } catch (const PhaseError& e) {
        CHECK(e.phase() == "config");
    }
    CHECK_FALSE(fs::exists(work_root() / "bad"));
    fs::remove_all(out);
}
