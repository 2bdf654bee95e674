#pragma once

// Five-phase run: corpus -> clean/split -> forecast, CO2, DR, bills ->
// metrics -> reports. Also the five-arm ablation and the DR KPIs.

#include "gridbill/billgen.hpp"
#include "gridbill/carbon.hpp"
#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"
#include "gridbill/forecast.hpp"
#include "gridbill/io.hpp"
#include "gridbill/qubo.hpp"
#include "gridbill/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridbill {

enum class AblationArm { Full, NoConstrainedDecoding, SmaInsteadOfSurrogate, SaInsteadOfSb, AllThree };

inline constexpr std::array<AblationArm, 5> kAllArms{AblationArm::Full, AblationArm::NoConstrainedDecoding, AblationArm::SmaInsteadOfSurrogate,
                                                     AblationArm::SaInsteadOfSb, AblationArm::AllThree};

inline std::string_view to_string(AblationArm arm)
{
    switch (arm) {
    case AblationArm::Full: return "full";
    case AblationArm::NoConstrainedDecoding: return "no-constrained-decoding";
    case AblationArm::SmaInsteadOfSurrogate: return "sma-instead-of-surrogate";
    case AblationArm::SaInsteadOfSb: return "sa-instead-of-sb";
    case AblationArm::AllThree: return "all-three";
    }
    return "unknown";
}

inline AblationArm arm_from_string(std::string_view s)
{
    for (AblationArm a : kAllArms) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw ConfigError("unknown ablation arm '" + std::string(s) + "'");
}

inline bool uses_surrogate(AblationArm a) { return a != AblationArm::SmaInsteadOfSurrogate && a != AblationArm::AllThree; }
inline bool uses_sb(AblationArm a) { return a != AblationArm::SaInsteadOfSb && a != AblationArm::AllThree; }
inline bool uses_constrained_decoding(AblationArm a) { return a != AblationArm::NoConstrainedDecoding && a != AblationArm::AllThree; }

/// SB settings used on DR instances: RMS-normalised coupling and a lower
/// detuning than the library default.
inline SbParams default_dr_sb_params()
{
    SbParams p;
    p.detuning = 0.5;
    p.coupling = 2.0;
    p.auto_scale_c = true;
    return p;
}

struct RunConfig {
    CorpusConfig corpus;
    TariffSchedule tariff;
    ForecastConfig forecast;
    DrConfig dr;
    SbParams sb = default_dr_sb_params(); // seed is derived from the corpus seed
    int sa_tune_trials = 100;
    std::optional<int> dr_day;            // defaults to the first test day
    int panel_size = 30;
    AblationArm ablation = AblationArm::Full;
    fs::path output_dir = "out";
    bool export_corpus = true;

    void validate() const
    {
        corpus.validate();
        tariff.validate();
        dr.validate();
        sb.validate();
        if (sa_tune_trials < 1) {
            throw ConfigError("sa_tune_trials must be at least 1");
        }
        if (dr_day && (*dr_day < kDaysPerWeek || *dr_day >= corpus.n_days)) {
            throw ConfigError("dr_day must be a forecast day inside the corpus");
        }
        if (panel_size < 1 || panel_size > corpus.n_customers) {
            throw ConfigError("panel_size must lie in [1, n_customers]");
        }
        if (corpus.n_days < kDaysPerBillingMonth) {
            throw ConfigError("corpus must cover at least one 30-day billing period");
        }
    }

    int resolved_dr_day() const { return dr_day.value_or(corpus.train_days); }
};

// ---------------------------------------------------------------------------
// Config JSON

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

inline void check_keys(const json& j, std::initializer_list<const char*> known, const char* where)
{
    if (!j.is_object()) {
        throw ConfigError(std::string(where) + ": expected an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* s) { return k == s; })) {
            throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
        }
    }
}

} // namespace detail

inline json to_json(const RunConfig& c)
{
    json j;
    const auto& k = c.corpus;
    json arch = json::array();
    for (const auto& a : k.archetypes) {
        arch.push_back({a.base_load, a.morning_peak_amp, a.evening_peak_amp});
    }
    j["corpus"] = {{"n_customers", k.n_customers},
                   {"n_days", k.n_days},
                   {"archetype_mix", k.archetype_mix},
                   {"archetypes", arch},
                   {"peak_sigma_intervals", k.peak_sigma_intervals},
                   {"morning_peak_center", k.morning_peak_center},
                   {"evening_peak_center", k.evening_peak_center},
                   {"noise_sigma", k.noise_sigma},
                   {"seasonal_amplitude", k.seasonal_amplitude},
                   {"weekend_factor", k.weekend_factor},
                   {"ci_base", k.ci_base},
                   {"ci_solar_dip_depth", k.ci_solar_dip_depth},
                   {"ci_dip_center", k.ci_dip_center},
                   {"ci_dip_sigma_intervals", k.ci_dip_sigma_intervals},
                   {"ci_ramp_peak", k.ci_ramp_peak},
                   {"ci_ramp_centers", k.ci_ramp_centers},
                   {"ci_ramp_sigma_intervals", k.ci_ramp_sigma_intervals},
                   {"ci_ar1_phi", k.ci_ar1_phi},
                   {"ci_ar1_sigma", k.ci_ar1_sigma},
                   {"ci_floor", k.ci_floor},
                   {"seed", k.master_seed},
                   {"train_days", k.train_days},
                   {"test_days", k.test_days}};
    json blocks = json::array();
    for (const auto& b : c.tariff.blocks) {
        blocks.push_back({{"upper_kwh", std::isfinite(b.upper_kwh) ? json(b.upper_kwh) : json(nullptr)}, {"rate", b.rate}});
    }
    j["tariff"] = {{"blocks", blocks}, {"tax_rate", c.tariff.tax_rate}};
    j["forecast"] = {{"hwes_alpha", c.forecast.hwes.alpha},
                     {"hwes_beta", c.forecast.hwes.beta},
                     {"hwes_gamma", c.forecast.hwes.gamma},
                     {"surrogate_decay", c.forecast.surrogate_decay},
                     {"ar_order", c.forecast.ar_order},
                     {"epsilon_mape", c.forecast.epsilon_mape},
                     {"min_band_samples", c.forecast.min_band_samples},
                     {"band_first_day", c.forecast.band_first_day}};
    j["dr"] = {{"shadow_price", c.dr.shadow_price},
               {"discomfort", c.dr.discomfort},
               {"headroom_fraction", c.dr.headroom_fraction},
               {"headroom_kwh", c.dr.headroom_kwh ? json(*c.dr.headroom_kwh) : json(nullptr)},
               {"penalty_factor", c.dr.penalty_factor},
               {"penalty_weight", c.dr.penalty_weight ? json(*c.dr.penalty_weight) : json(nullptr)},
               {"day", c.dr_day ? json(*c.dr_day) : json(nullptr)}};
    j["solver"] = {{"detuning", c.sb.detuning}, {"coupling", c.sb.coupling},   {"dt", c.sb.dt},
                   {"i_max", c.sb.i_max},       {"restarts", c.sb.restarts},   {"auto_scale_c", c.sb.auto_scale_c},
                   {"sa_tune_trials", c.sa_tune_trials}};
    j["billing"] = {{"panel_size", c.panel_size}};
    j["ablation"] = std::string(to_string(c.ablation));
    j["export_corpus"] = c.export_corpus;
    return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline RunConfig run_config_from_json(const json& j)
{
    RunConfig c;
    try {
        detail::check_keys(j, {"corpus", "tariff", "forecast", "dr", "solver", "billing", "ablation", "export_corpus", "output_dir"}, "config");
        if (j.contains("corpus")) {
            const json& k = j.at("corpus");
            detail::check_keys(k,
                               {"n_customers", "n_days", "archetype_mix", "archetypes", "peak_sigma_intervals", "morning_peak_center",
                                "evening_peak_center", "noise_sigma", "seasonal_amplitude", "weekend_factor", "ci_base", "ci_solar_dip_depth",
                                "ci_dip_center", "ci_dip_sigma_intervals", "ci_ramp_peak", "ci_ramp_centers", "ci_ramp_sigma_intervals",
                                "ci_ar1_phi", "ci_ar1_sigma", "ci_floor", "seed", "train_days", "test_days"},
                               "corpus");
            auto& o = c.corpus;
            detail::read_opt(k, "n_customers", o.n_customers);
            detail::read_opt(k, "n_days", o.n_days);
            detail::read_opt(k, "archetype_mix", o.archetype_mix);
            if (k.contains("archetypes")) {
                const auto a = k.at("archetypes").get<std::vector<std::array<double, 3>>>();
                if (a.size() != 3) {
                    throw ConfigError("corpus.archetypes: three archetypes required");
                }
                for (std::size_t i = 0; i < 3; ++i) {
                    o.archetypes[i] = {a[i][0], a[i][1], a[i][2]};
                }
            }
            detail::read_opt(k, "peak_sigma_intervals", o.peak_sigma_intervals);
            detail::read_opt(k, "morning_peak_center", o.morning_peak_center);
            detail::read_opt(k, "evening_peak_center", o.evening_peak_center);
            detail::read_opt(k, "noise_sigma", o.noise_sigma);
            detail::read_opt(k, "seasonal_amplitude", o.seasonal_amplitude);
            detail::read_opt(k, "weekend_factor", o.weekend_factor);
            detail::read_opt(k, "ci_base", o.ci_base);
            detail::read_opt(k, "ci_solar_dip_depth", o.ci_solar_dip_depth);
            detail::read_opt(k, "ci_dip_center", o.ci_dip_center);
            detail::read_opt(k, "ci_dip_sigma_intervals", o.ci_dip_sigma_intervals);
            detail::read_opt(k, "ci_ramp_peak", o.ci_ramp_peak);
            detail::read_opt(k, "ci_ramp_centers", o.ci_ramp_centers);
            detail::read_opt(k, "ci_ramp_sigma_intervals", o.ci_ramp_sigma_intervals);
            detail::read_opt(k, "ci_ar1_phi", o.ci_ar1_phi);
            detail::read_opt(k, "ci_ar1_sigma", o.ci_ar1_sigma);
            detail::read_opt(k, "ci_floor", o.ci_floor);
            detail::read_opt(k, "seed", o.master_seed);
            detail::read_opt(k, "train_days", o.train_days);
            detail::read_opt(k, "test_days", o.test_days);
        }
        if (j.contains("tariff")) {
            const json& t = j.at("tariff");
            detail::check_keys(t, {"blocks", "tax_rate"}, "tariff");
            if (t.contains("blocks")) {
                c.tariff.blocks.clear();
                for (const auto& b : t.at("blocks")) {
                    TariffBlock tb;
                    if (b.contains("upper_kwh") && !b.at("upper_kwh").is_null()) {
                        tb.upper_kwh = b.at("upper_kwh").get<double>();
                    }
                    tb.rate = b.at("rate").get<double>();
                    c.tariff.blocks.push_back(tb);
                }
            }
            detail::read_opt(t, "tax_rate", c.tariff.tax_rate);
        }
        if (j.contains("forecast")) {
            const json& f = j.at("forecast");
            detail::check_keys(f,
                               {"hwes_alpha", "hwes_beta", "hwes_gamma", "surrogate_decay", "ar_order", "epsilon_mape", "min_band_samples",
                                "band_first_day"},
                               "forecast");
            detail::read_opt(f, "hwes_alpha", c.forecast.hwes.alpha);
            detail::read_opt(f, "hwes_beta", c.forecast.hwes.beta);
            detail::read_opt(f, "hwes_gamma", c.forecast.hwes.gamma);
            detail::read_opt(f, "surrogate_decay", c.forecast.surrogate_decay);
            detail::read_opt(f, "ar_order", c.forecast.ar_order);
            detail::read_opt(f, "epsilon_mape", c.forecast.epsilon_mape);
            detail::read_opt(f, "min_band_samples", c.forecast.min_band_samples);
            detail::read_opt(f, "band_first_day", c.forecast.band_first_day);
        }
        if (j.contains("dr")) {
            const json& d = j.at("dr");
            detail::check_keys(d, {"shadow_price", "discomfort", "headroom_fraction", "headroom_kwh", "penalty_factor", "penalty_weight", "day"},
                               "dr");
            detail::read_opt(d, "shadow_price", c.dr.shadow_price);
            detail::read_opt(d, "discomfort", c.dr.discomfort);
            detail::read_opt(d, "headroom_fraction", c.dr.headroom_fraction);
            detail::read_opt(d, "penalty_factor", c.dr.penalty_factor);
            if (d.contains("headroom_kwh") && !d.at("headroom_kwh").is_null()) {
                c.dr.headroom_kwh = d.at("headroom_kwh").get<double>();
            }
            if (d.contains("penalty_weight") && !d.at("penalty_weight").is_null()) {
                c.dr.penalty_weight = d.at("penalty_weight").get<double>();
            }
            if (d.contains("day") && !d.at("day").is_null()) {
                c.dr_day = d.at("day").get<int>();
            }
        }
        if (j.contains("solver")) {
            const json& s = j.at("solver");
            detail::check_keys(s, {"detuning", "coupling", "dt", "i_max", "restarts", "auto_scale_c", "sa_tune_trials"}, "solver");
            detail::read_opt(s, "detuning", c.sb.detuning);
            detail::read_opt(s, "coupling", c.sb.coupling);
            detail::read_opt(s, "dt", c.sb.dt);
            detail::read_opt(s, "i_max", c.sb.i_max);
            detail::read_opt(s, "restarts", c.sb.restarts);
            detail::read_opt(s, "auto_scale_c", c.sb.auto_scale_c);
            detail::read_opt(s, "sa_tune_trials", c.sa_tune_trials);
        }
        if (j.contains("billing")) {
            detail::check_keys(j.at("billing"), {"panel_size"}, "billing");
            detail::read_opt(j.at("billing"), "panel_size", c.panel_size);
        }
        if (j.contains("ablation")) {
            c.ablation = arm_from_string(j.at("ablation").get<std::string>());
        }
        detail::read_opt(j, "export_corpus", c.export_corpus);
        if (j.contains("output_dir")) {
            c.output_dir = j.at("output_dir").get<std::string>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const fs::path& path)
{
    try {
        return run_config_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
}

/// Hash of the canonical config JSON (output location excluded).
inline std::string config_hash(const RunConfig& c) { return fnv1a_hex(to_json(c).dump()); }

// ---------------------------------------------------------------------------
// DR KPIs

struct DrKpis {
    double peak_reduction_pct = 0.0;
    double co2_reduction_pct = 0.0;
    double kg_saved = 0.0;
    double currency_saved = 0.0;
    std::size_t shifts = 0;
};

/// Applies accepted shifts to the aggregate q50 profile and compares peak
/// load and day CO2 with the unshifted profile.
inline DrKpis compute_dr_kpis(std::span<const ShiftCandidate> schedule, const DayProfile& aggregate_q50, const DayProfile& ci_day,
                              double shadow_price)
{
    DrKpis k;
    if (schedule.empty()) {
        return k;
    }
    DayProfile after = aggregate_q50;
    for (const auto& s : schedule) {
        after[static_cast<std::size_t>(s.from_hour)] -= s.expected_kwh;
        after[static_cast<std::size_t>(s.to_hour)] += s.expected_kwh;
        k.kg_saved += s.co2_saved_kg;
    }
    const double before_peak = *std::max_element(aggregate_q50.begin(), aggregate_q50.end());
    const double after_peak = *std::max_element(after.begin(), after.end());
    k.peak_reduction_pct = before_peak > 0.0 ? 100.0 * (before_peak - after_peak) / before_peak : 0.0;
    double day_kg = 0.0;
    for (int h = 0; h < kHoursPerDay; ++h) {
        day_kg += aggregate_q50[static_cast<std::size_t>(h)] * ci_day[static_cast<std::size_t>(h)] / 1000.0;
    }
    k.co2_reduction_pct = day_kg > 0.0 ? 100.0 * k.kg_saved / day_kg : 0.0;
    k.currency_saved = shadow_price * k.kg_saved;
    k.shifts = schedule.size();
    return k;
}

inline std::vector<ShiftCandidate> accepted_shifts(const QuboInstance& inst, std::span<const std::uint8_t> x)
{
    std::vector<ShiftCandidate> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i]) {
            out.push_back(inst.candidates.at(i));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run summary

struct SolverSummary {
    std::string method;
    double energy = 0.0;
    int iterations = 0;
    std::size_t selected = 0;
    DrKpis kpis;
};

struct Co2Summary {
    double mean_abs_pct_error = 0.0;
    double p95_abs_pct_error = 0.0;
    double within_3pct_fraction = 0.0;
    std::size_t scored_days = 0;
    std::size_t excluded_days = 0;
    double metered_kg_total = 0.0;
    double flat_ci_gap_kg = 0.0; // sum over customer-months of |metered - flat-CI|
};

struct RunSummary {
    AblationArm arm = AblationArm::Full;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::size_t reading_count = 0;
    std::size_t imputed_intervals = 0;
    std::vector<MetricsRow> forecast_metrics;
    std::string forecaster;
    double forecast_mape = 0.0;
    int dr_day = 0;
    std::size_t dr_variables = 0;
    std::vector<SolverSummary> solvers;
    std::string optimiser;
    SolverSummary selected;
    Co2Summary co2;
    std::string decoding_policy;
    std::size_t panel_size = 0;
    double hallucination_rate = 0.0;
    std::size_t statements = 0;
    std::size_t statement_audit_failures = 0;
    std::vector<std::string> invariant_failures;
    std::map<std::string, std::string> checksums; // relative path -> FNV-1a

    bool invariants_ok() const noexcept { return invariant_failures.empty(); }
};

inline json kpis_to_json(const DrKpis& k)
{
    return {{"peak_reduction_pct", k.peak_reduction_pct},
            {"co2_reduction_pct", k.co2_reduction_pct},
            {"kg_saved", k.kg_saved},
            {"currency_saved", k.currency_saved},
            {"shifts", k.shifts}};
}

inline json summary_to_json(const RunSummary& s)
{
    json j;
    j["arm"] = std::string(to_string(s.arm));
    j["provenance"] = {{"seed", s.seed}, {"config_hash", s.config_hash}, {"checksums", s.checksums}};
    j["corpus"] = {{"readings", s.reading_count}, {"imputed_intervals", s.imputed_intervals}};
    json fm = json::array();
    for (const auto& r : s.forecast_metrics) {
        fm.push_back({{"method", r.method}, {"mape_pct", r.metrics.mape}, {"rmse_kwh", r.metrics.rmse}, {"pinball", r.metrics.pinball},
                      {"coverage", r.coverage}});
    }
    j["forecast"] = {{"methods", fm}, {"forecaster", s.forecaster}, {"mape_pct", s.forecast_mape}};
    json sv = json::array();
    for (const auto& r : s.solvers) {
        sv.push_back({{"method", r.method}, {"energy", r.energy}, {"iterations", r.iterations}, {"selected", r.selected}, {"kpis", kpis_to_json(r.kpis)}});
    }
    j["dr"] = {{"day", s.dr_day},
               {"variables", s.dr_variables},
               {"solvers", sv},
               {"optimiser", s.optimiser},
               {"energy", s.selected.energy},
               {"iterations", s.selected.iterations},
               {"kpis", kpis_to_json(s.selected.kpis)}};
    j["co2"] = {{"mean_abs_pct_error", s.co2.mean_abs_pct_error},
                {"p95_abs_pct_error", s.co2.p95_abs_pct_error},
                {"within_3pct_fraction", s.co2.within_3pct_fraction},
                {"scored_days", s.co2.scored_days},
                {"excluded_days", s.co2.excluded_days},
                {"metered_kg_total", s.co2.metered_kg_total},
                {"flat_ci_gap_kg", s.co2.flat_ci_gap_kg}};
    j["billing"] = {{"policy", s.decoding_policy},
                    {"panel_size", s.panel_size},
                    {"hallucination_rate", s.hallucination_rate},
                    {"statements", s.statements},
                    {"audit_failures", s.statement_audit_failures}};
    j["invariants"] = {{"ok", s.invariants_ok()}, {"failures", s.invariant_failures}};
    return j;
}

// ---------------------------------------------------------------------------
// Pipeline

class PhaseError : public std::runtime_error {
public:
    PhaseError(std::string phase, const std::string& cause)
        : std::runtime_error("phase '" + phase + "' failed: " + cause)
        , phase_(std::move(phase))
    {
    }
    const std::string& phase() const noexcept { return phase_; }

private:
    std::string phase_;
};

inline constexpr std::uint64_t kSbStreamKey = 0x5BULL;
inline constexpr std::uint64_t kSaStreamKey = 0x5AULL;
inline constexpr std::uint64_t kFaultStreamKey = 0xFA17ULL;

/// Customers of the statement panel: evenly spaced over the corpus.
inline std::vector<std::size_t> panel_customers(std::size_t n_customers, std::size_t panel_size)
{
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < panel_size; ++k) {
        out.push_back(k * n_customers / panel_size);
    }
    return out;
}

namespace detail {

template <class F>
auto run_phase(const char* name, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const PhaseError&) {
        throw;
    } catch (const std::exception& e) {
        throw PhaseError(name, e.what());
    }
}

struct Artifacts {
    fs::path root;
    std::map<std::string, std::string> checksums;

    void put(const std::string& rel, std::string_view content)
    {
        write_file(root / rel, content);
        checksums[rel] = fnv1a_hex(content);
    }
};

inline SolverSummary summarise(const std::string& method, const QuboInstance& inst, const SolveResult& r, const DayProfile& agg_q50,
                               const DayProfile& ci_day, double shadow_price)
{
    SolverSummary s;
    s.method = method;
    s.energy = r.energy;
    s.iterations = r.iterations_to_converge;
    s.selected = static_cast<std::size_t>(std::count(r.assignment.begin(), r.assignment.end(), 1));
    const auto sched = accepted_shifts(inst, r.assignment);
    s.kpis = compute_dr_kpis(sched, agg_q50, ci_day, shadow_price);
    return s;
}

inline std::string dr_packet(const QuboInstance& inst, const SolveResult& r, const std::string& method, int day, const DrKpis& k)
{
    json j;
    j["day"] = day;
    j["optimiser"] = method;
    j["objective"] = r.energy;
    j["shifts"] = json::array();
    for (const auto& s : accepted_shifts(inst, r.assignment)) {
        j["shifts"].push_back(candidate_to_json(s));
    }
    j["expected_kg_co2_saved"] = k.kg_saved;
    j["expected_monetary_saving"] = k.currency_saved;
    j["peak_reduction_pct"] = k.peak_reduction_pct;
    j["co2_reduction_pct"] = k.co2_reduction_pct;
    return j.dump(2) + "\n";
}

} // namespace detail

/// Runs every phase and writes all artefacts under config.output_dir. Work
/// happens in a sibling staging directory that replaces the output directory
/// only after every phase succeeded, so a failure leaves no partial output.
inline RunSummary run_pipeline(const RunConfig& config)
{
    detail::run_phase("config", [&] {
        config.validate();
        return 0;
    });
    const AblationArm arm = config.ablation;
    const std::uint64_t seed = config.corpus.master_seed;

    fs::path staging = config.output_dir;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    detail::Artifacts art{staging, {}};

    try {
        RunSummary s;
        s.arm = arm;
        s.seed = seed;
        s.config_hash = config_hash(config);

        // Phase 1: corpus
        const Corpus corpus = detail::run_phase("generate", [&] { return generate_corpus(config.corpus, config.tariff); });
        s.reading_count = corpus.reading_count();

        // Phase 2: validate, impute, split
        detail::run_phase("clean", [&] {
            for (const auto& m : corpus.meters) {
                for (double v : m.readings) {
                    if (!std::isfinite(v) || v < 0.0) {
                        throw DomainError("meter reading is negative or non-finite");
                    }
                }
            }
            for (double v : corpus.ci.values) {
                if (!(v > 0.0)) {
                    throw DomainError("carbon intensity must be positive");
                }
            }
            // The synthetic corpus has no gaps; the hook runs with an empty mask.
            std::vector<double> scratch = corpus.meters.front().readings;
            const std::unique_ptr<bool[]> mask(new bool[scratch.size()]());
            s.imputed_intervals = impute_gaps(scratch, std::span<const bool>(mask.get(), scratch.size()));
            return 0;
        });
        const TrainTestSplit split = split_train_test(corpus);
        const int test_first = split.test.first_day();
        const int n_days = corpus.config.n_days;

        // Phase 3a: forecasting (all methods, for the comparison table)
        std::vector<MethodEvaluation> evals = detail::run_phase("forecast", [&] {
            std::vector<MethodEvaluation> v;
            for (BaselineKind k : kAllBaselineKinds) {
                v.push_back(evaluate_method(corpus, k, config.forecast));
            }
            return v;
        });
        for (const auto& e : evals) {
            s.forecast_metrics.push_back({std::string(to_string(e.kind)), e.metrics, e.coverage});
        }
        const BaselineKind chosen_kind = uses_surrogate(arm) ? BaselineKind::Surrogate : BaselineKind::Sma;
        const MethodEvaluation& fc = *std::find_if(evals.begin(), evals.end(), [&](const auto& e) { return e.kind == chosen_kind; });
        s.forecaster = std::string(to_string(chosen_kind));
        s.forecast_mape = fc.metrics.mape;

        // Phase 3b: CO2 attribution
        std::vector<Co2DayRow> co2_days;
        std::vector<Co2MonthRow> co2_months;
        std::vector<CarbonEstimate> metered(corpus.meters.size());
        detail::run_phase("carbon", [&] {
            std::vector<double> abs_err;
            for (std::size_t c = 0; c < corpus.meters.size(); ++c) {
                metered[c] = co2_metered(corpus, c);
                const auto& fcs = fc.quantiles[c];
                const auto test_fc = std::span<const QuantileForecast>(fcs).subspan(static_cast<std::size_t>(test_first - fc.first_forecast_day));
                const CarbonEstimate proj = co2_projected(corpus.meters[c].id, test_first, test_fc,
                                                          std::span<const double>(corpus.ci.values).subspan(static_cast<std::size_t>(test_first) * kIntervalsPerDay));
                const ProjectedErrorReport err = co2_projected_error(proj, metered[c]);
                const FootprintReport pr = co2_rollup(proj, Granularity::Daily);
                const FootprintReport mr = co2_rollup(metered[c], Granularity::Monthly);
                for (int d = test_first; d < n_days; ++d) {
                    const auto k = static_cast<std::size_t>(d - test_first);
                    co2_days.push_back({corpus.meters[c].id, d, mr.daily_kg[static_cast<std::size_t>(d)], pr.daily_kg[k], err.daily_pct_error[k]});
                    if (!std::isnan(err.daily_pct_error[k])) {
                        abs_err.push_back(std::abs(err.daily_pct_error[k]));
                    }
                }
                s.co2.excluded_days += err.excluded_days;
                const FootprintReport flat = co2_rollup(co2_annual_average_baseline(corpus.meters[c], corpus.ci), Granularity::Monthly);
                for (std::size_t m = 0; m < mr.monthly_kg.size(); ++m) {
                    co2_months.push_back({corpus.meters[c].id, static_cast<int>(m), mr.monthly_kg[m], flat.monthly_kg[m]});
                    s.co2.metered_kg_total += mr.monthly_kg[m];
                    s.co2.flat_ci_gap_kg += std::abs(mr.monthly_kg[m] - flat.monthly_kg[m]);
                }
            }
            s.co2.scored_days = abs_err.size();
            if (!abs_err.empty()) {
                double sum = 0.0;
                std::size_t within = 0;
                for (double e : abs_err) {
                    sum += e;
                    within += e <= 3.0 ? 1 : 0;
                }
                s.co2.mean_abs_pct_error = sum / static_cast<double>(abs_err.size());
                s.co2.within_3pct_fraction = static_cast<double>(within) / static_cast<double>(abs_err.size());
                s.co2.p95_abs_pct_error = empirical_quantile(abs_err, 0.95);
            }
            return 0;
        });

        // Phase 3c: demand response
        const int dr_day = config.resolved_dr_day();
        s.dr_day = dr_day;
        DayProfile ci_day{};
        DayProfile agg_q50{};
        std::vector<DrCustomer> dr_customers;
        for (std::size_t c = 0; c < corpus.meters.size(); ++c) {
            const auto& f = fc.customer_forecast(c, dr_day);
            dr_customers.push_back({corpus.meters[c].id, corpus.profiles[c].archetype, f});
            for (int h = 0; h < kHoursPerDay; ++h) {
                agg_q50[static_cast<std::size_t>(h)] += f.q50[static_cast<std::size_t>(h)];
            }
        }
        {
            const auto hourly = hourly_mean(std::span<const double>(corpus.ci.values).subspan(static_cast<std::size_t>(dr_day) * kIntervalsPerDay, kIntervalsPerDay));
            std::copy(hourly.begin(), hourly.end(), ci_day.begin());
        }
        const DrInstance dr = detail::run_phase("qubo", [&] { return build_dr_qubo(dr_customers, ci_day, config.dr); });
        s.dr_variables = dr.qubo.size();

        SbParams sbp = config.sb;
        sbp.seed = derive_seed(seed, kSbStreamKey);
        struct Solved {
            SolveResult bsb, asb, sa, greedy;
            SaTuning tuning;
        };
        const Solved solved = detail::run_phase("solve", [&] {
            Solved r;
            r.bsb = solve_bsb(dr.qubo, sbp);
            r.asb = solve_asb(dr.qubo, sbp);
            r.tuning = tune_sa(dr.qubo, config.sa_tune_trials, derive_seed(seed, kSaStreamKey));
            r.sa = solve_sa(dr.qubo, r.tuning.best);
            r.greedy = solve_greedy(dr.qubo);
            return r;
        });
        const double pi = config.dr.shadow_price;
        s.solvers.push_back(detail::summarise("bSB", dr.qubo, solved.bsb, agg_q50, ci_day, pi));
        s.solvers.push_back(detail::summarise("aSB", dr.qubo, solved.asb, agg_q50, ci_day, pi));
        s.solvers.push_back(detail::summarise("SA-tuned", dr.qubo, solved.sa, agg_q50, ci_day, pi));
        s.solvers.push_back(detail::summarise("greedy", dr.qubo, solved.greedy, agg_q50, ci_day, pi));
        s.optimiser = uses_sb(arm) ? "bSB" : "SA-tuned";
        const SolveResult& chosen = uses_sb(arm) ? solved.bsb : solved.sa;
        s.selected = uses_sb(arm) ? s.solvers[0] : s.solvers[2];

        // Phase 3d: bills
        const DecodingPolicy::Kind policy_kind =
            uses_constrained_decoding(arm) ? DecodingPolicy::Kind::Constrained : DecodingPolicy::Kind::UnconstrainedFaulty;
        s.decoding_policy = policy_kind == DecodingPolicy::Kind::Constrained ? "constrained" : "unconstrained-faulty";
        const auto periods = billing_periods(n_days);
        std::vector<PanelItem> panel;
        detail::run_phase("billing", [&] {
            const TemplateBackend backend;
            const auto panel_set = panel_customers(corpus.meters.size(), static_cast<std::size_t>(config.panel_size));
            for (std::size_t c = 0; c < corpus.meters.size(); ++c) {
                for (std::size_t p = 0; p < periods.size(); ++p) {
                    const BillInput input = assemble_bill_input(corpus, c, periods[p], metered[c], fc);
                    DecodingPolicy policy{policy_kind, derive_seed(derive_seed(seed, kFaultStreamKey), c * 16 + p)};
                    BillStatement st = generate_statement(input, policy, backend);
                    const AuditReport audit = audit_statement(st, input);
                    ++s.statements;
                    s.statement_audit_failures += audit.passed() ? 0 : 1;
                    const std::string stem = "statements/" + customer_label(corpus.meters[c].id) + "_p" + std::to_string(p + 1);
                    art.put(stem + ".txt", st.text);
                    art.put(stem + ".json", statement_sidecar(st, audit).dump(2) + "\n");
                    if (p + 1 == periods.size() && std::binary_search(panel_set.begin(), panel_set.end(), c)) {
                        panel.push_back({std::move(st), input});
                    }
                }
            }
            s.panel_size = panel.size();
            s.hallucination_rate = hallucination_rate(panel);
            return 0;
        });

        // Phase 4: invariant checks
        if (policy_kind == DecodingPolicy::Kind::Constrained && s.statement_audit_failures != 0) {
            s.invariant_failures.push_back("constrained statements failed audit");
        }
        if (policy_kind == DecodingPolicy::Kind::UnconstrainedFaulty && s.statement_audit_failures != s.statements) {
            s.invariant_failures.push_back("fault injector left a statement unperturbed");
        }
        for (const SolveResult* r : {&solved.bsb, &solved.asb, &solved.sa, &solved.greedy}) {
            if (r->energy != qubo_energy(dr.qubo, r->assignment)) {
                s.invariant_failures.push_back("solver energy does not match its assignment");
            }
        }
        if (s.reading_count != static_cast<std::size_t>(corpus.config.n_customers) * static_cast<std::size_t>(corpus.config.intervals())) {
            s.invariant_failures.push_back("reading count mismatch");
        }

        // Phase 5: reports
        detail::run_phase("report", [&] {
            if (config.export_corpus) {
                art.put("data/meter_readings.csv", meter_csv(corpus));
                art.put("data/carbon_intensity.csv", ci_csv(corpus.ci));
            }
            art.put("tables/forecast_metrics.csv", metrics_csv(s.forecast_metrics));
            art.put("tables/forecasts.csv", forecast_csv(corpus, fc, test_first, n_days));
            art.put("reports/co2_daily.csv", co2_daily_csv(co2_days));
            art.put("reports/co2_monthly.csv", co2_monthly_csv(co2_months));
            art.put("reports/dr_packet.json", detail::dr_packet(dr.qubo, chosen, s.optimiser, dr_day, s.selected.kpis));
            art.put("tables/dr_instance.json", instance_to_json(dr.qubo).dump() + "\n");

            std::string solver_rows = "method,energy,iterations,selected,kg_saved,peak_reduction_pct,co2_reduction_pct\n";
            for (const auto& r : s.solvers) {
                solver_rows += r.method + "," + fmt(r.energy) + "," + std::to_string(r.iterations) + "," + std::to_string(r.selected) + "," +
                               fmt(r.kpis.kg_saved) + "," + fmt(r.kpis.peak_reduction_pct) + "," + fmt(r.kpis.co2_reduction_pct) + "\n";
            }
            art.put("tables/solver_results.csv", solver_rows);
            art.put("tables/panel.csv", panel_csv({{s.decoding_policy, s.panel_size, s.hallucination_rate}}));

            const auto best_classical = std::min_element(s.forecast_metrics.begin(), s.forecast_metrics.end(), [](const auto& a, const auto& b) {
                if ((a.method == "Surrogate") != (b.method == "Surrogate")) {
                    return b.method == "Surrogate";
                }
                return a.metrics.mape < b.metrics.mape;
            });
            const auto surrogate = std::find_if(s.forecast_metrics.begin(), s.forecast_metrics.end(), [](const auto& r) { return r.method == "Surrogate"; });
            std::string headline = "metric,baseline_method,baseline,proposed_method,proposed\n";
            headline += "forecast_mape_pct," + best_classical->method + "," + fmt(best_classical->metrics.mape) + ",Surrogate," +
                        fmt(surrogate->metrics.mape) + "\n";
            headline += "optimiser_objective,SA-tuned," + fmt(s.solvers[2].energy) + ",bSB," + fmt(s.solvers[0].energy) + "\n";
            headline += "convergence_iterations,SA-tuned," + std::to_string(s.solvers[2].iterations) + ",bSB," + std::to_string(s.solvers[0].iterations) + "\n";
            headline += "dr_kg_saved,SA-tuned," + fmt(s.solvers[2].kpis.kg_saved) + ",bSB," + fmt(s.solvers[0].kpis.kg_saved) + "\n";
            art.put("tables/headline.csv", headline);

            // Figure data
            art.put("figures/fig3_forecast_bands.csv", aggregate_forecast_csv(fc, test_first));
            art.put("figures/fig4_convergence.csv",
                    trace_csv({{"bSB", solved.bsb.trace}, {"aSB", solved.asb.trace}, {"SA-tuned", solved.sa.trace}}));
            std::string fig5 = "day,kg_metered,kg_projected\n";
            for (int d = test_first; d < n_days; ++d) {
                double m = 0.0;
                double p = 0.0;
                for (const auto& r : co2_days) {
                    if (r.day == d) {
                        m += r.kg_metered;
                        p += r.kg_projected;
                    }
                }
                fig5 += std::to_string(d) + "," + fmt(m) + "," + fmt(p) + "\n";
            }
            art.put("figures/fig5_co2_daily.csv", fig5);
            std::string fig6 = "kpi,value\n";
            fig6 += "peak_reduction_pct," + fmt(s.selected.kpis.peak_reduction_pct) + "\n";
            fig6 += "co2_reduction_pct," + fmt(s.selected.kpis.co2_reduction_pct) + "\n";
            fig6 += "kg_saved," + fmt(s.selected.kpis.kg_saved) + "\n";
            fig6 += "currency_saved," + fmt(s.selected.kpis.currency_saved) + "\n";
            fig6 += "co2_monthly_gap_vs_flat_ci_kg," + fmt(s.co2.flat_ci_gap_kg) + "\n";
            fig6 += "drafting_time_reduction,n/a\n";
            fig6 += "review_effort_reduction,n/a\n";
            art.put("figures/fig6_kpis.csv", fig6);
            art.put("tables/config.json", to_json(config).dump(2) + "\n");
            return 0;
        });

        s.checksums = art.checksums;
        write_file(staging / "summary.json", summary_to_json(s).dump(2) + "\n");

        fs::remove_all(config.output_dir, ec);
        fs::rename(staging, config.output_dir);
        return s;
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
}

struct AblationRow {
    AblationArm arm = AblationArm::Full;
    RunSummary summary;
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows)
{
    std::string out = "arm,forecaster,forecast_mape_pct,optimiser,optimiser_iterations,optimiser_energy,co2_reduction_pct,hallucination_rate\n";
    for (const auto& r : rows) {
        const auto& s = r.summary;
        out += std::string(to_string(r.arm)) + "," + s.forecaster + "," + fmt(s.forecast_mape) + "," + s.optimiser + "," +
               std::to_string(s.selected.iterations) + "," + fmt(s.selected.energy) + "," + fmt(s.selected.kpis.co2_reduction_pct) + "," +
               fmt(s.hallucination_rate) + "\n";
    }
    return out;
}

/// All five arms with the same seed, each written to <out>/<arm>/, plus
/// <out>/ablation.csv. The corpus is exported only by the full arm.
inline std::vector<AblationRow> run_ablation(const RunConfig& base)
{
    base.validate();
    std::vector<AblationRow> rows;
    for (AblationArm arm : kAllArms) {
        RunConfig c = base;
        c.ablation = arm;
        c.output_dir = base.output_dir / std::string(to_string(arm));
        c.export_corpus = base.export_corpus && arm == AblationArm::Full;
        rows.push_back({arm, run_pipeline(c)});
    }
    write_file(base.output_dir / "ablation.csv", ablation_csv(rows));
    return rows;
}

} // namespace gridbill
