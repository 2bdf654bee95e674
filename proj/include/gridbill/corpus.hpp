#pragma once

// Deterministic synthetic smart-meter corpus: per-customer 15-minute
// consumption, an aligned grid carbon-intensity feed and a block tariff.

#include "gridbill/error.hpp"
#include "gridbill/rng.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridbill {

inline constexpr int kIntervalsPerDay = 96;
inline constexpr int kIntervalsPerHour = 4;
inline constexpr int kHoursPerDay = 24;
inline constexpr int kDaysPerWeek = 7;

struct CustomerId {
    std::uint32_t value = 0;

    friend constexpr bool operator==(CustomerId, CustomerId) = default;
    friend constexpr auto operator<=>(CustomerId, CustomerId) = default;
};

enum class Archetype { Low = 0, Mid = 1, Heavy = 2 };

inline std::string_view to_string(Archetype a)
{
    switch (a) {
    case Archetype::Low: return "low";
    case Archetype::Mid: return "mid";
    case Archetype::Heavy: return "heavy";
    }
    return "unknown";
}

/// Day 0 is a Monday; days 5 and 6 of each week are the weekend.
constexpr bool is_weekend(int day) noexcept
{
    return day % kDaysPerWeek >= 5;
}

struct ArchetypeShape {
    double base_load = 0.0;        // kWh per interval
    double morning_peak_amp = 0.0; // kWh per interval at the bump peak
    double evening_peak_amp = 0.0;
};

struct CorpusConfig {
    int n_customers = 200;
    int n_days = 60;
    int intervals_per_day = kIntervalsPerDay;
    std::array<double, 3> archetype_mix{0.4, 0.4, 0.2};
    std::array<ArchetypeShape, 3> archetypes{{
        {0.05, 0.15, 0.25},
        {0.10, 0.30, 0.50},
        {0.18, 0.50, 0.90},
    }};
    double peak_sigma_intervals = 6.0;
    double morning_peak_center = 30.0; // 07:30
    double evening_peak_center = 78.0; // 19:30
    double noise_sigma = 0.03;
    double seasonal_amplitude = 0.10;
    double weekend_factor = 1.15;

    double ci_base = 450.0;
    double ci_solar_dip_depth = 150.0;
    double ci_dip_center = 50.0;       // 12:30, middle of the 12:00-13:00 hour
    double ci_dip_sigma_intervals = 8.0;
    double ci_ramp_peak = 120.0;
    std::array<double, 2> ci_ramp_centers{32.0, 80.0}; // 08:00 and 20:00
    double ci_ramp_sigma_intervals = 4.0;
    double ci_ar1_phi = 0.8;
    double ci_ar1_sigma = 15.0;
    double ci_floor = 50.0;

    std::uint64_t master_seed = 20240601;
    int train_days = 48;
    int test_days = 12;

    void validate() const
    {
        if (n_customers <= 0 || n_days <= 0) {
            throw ConfigError("corpus: n_customers and n_days must be positive");
        }
        if (intervals_per_day != kIntervalsPerDay) {
            throw ConfigError("corpus: intervals_per_day is fixed at 96");
        }
        double mix_sum = 0.0;
        for (double f : archetype_mix) {
            if (!(f >= 0.0)) {
                throw ConfigError("corpus: archetype_mix fractions must be non-negative");
            }
            mix_sum += f;
        }
        if (std::abs(mix_sum - 1.0) > 1e-9) {
            throw ConfigError("corpus: archetype_mix must sum to 1");
        }
        if (train_days <= 0 || test_days <= 0) {
            throw ConfigError("corpus: train_days and test_days must be positive");
        }
        if (train_days + test_days != n_days) {
            throw ConfigError("corpus: train_days + test_days must equal n_days");
        }
        if (!(std::abs(ci_ar1_phi) < 1.0)) {
            throw ConfigError("corpus: |ci_ar1_phi| must be < 1");
        }
        if (noise_sigma < 0.0 || ci_ar1_sigma < 0.0) {
            throw ConfigError("corpus: noise scales must be non-negative");
        }
        if (!(ci_floor > 0.0)) {
            throw ConfigError("corpus: ci_floor must be positive");
        }
        if (!(peak_sigma_intervals > 0.0) || !(ci_dip_sigma_intervals > 0.0) || !(ci_ramp_sigma_intervals > 0.0)) {
            throw ConfigError("corpus: bump widths must be positive");
        }
        if (weekend_factor < 0.0) {
            throw ConfigError("corpus: weekend_factor must be non-negative");
        }
    }

    int intervals() const noexcept { return n_days * kIntervalsPerDay; }
};

struct CustomerProfile {
    CustomerId id;
    Archetype archetype = Archetype::Low;
    double morning_peak_amp = 0.0;
    double evening_peak_amp = 0.0;
    double base_load = 0.0;
    std::uint64_t seed = 0;
};

struct MeterSeries {
    CustomerId id;
    std::vector<double> readings; // index = day * 96 + interval

    double at(int day, int interval) const { return readings.at(static_cast<std::size_t>(day) * kIntervalsPerDay + interval); }
};

struct CarbonIntensitySeries {
    std::vector<double> values; // gCO2/kWh, same index as MeterSeries

    double at(int day, int interval) const { return values.at(static_cast<std::size_t>(day) * kIntervalsPerDay + interval); }
};

struct TariffBlock {
    double upper_kwh = std::numeric_limits<double>::infinity(); // per billing period
    double rate = 0.0;                                          // currency per kWh
};

struct TariffSchedule {
    std::vector<TariffBlock> blocks{{100.0, 0.10}, {300.0, 0.18}, {std::numeric_limits<double>::infinity(), 0.25}};
    double tax_rate = 0.05;

    void validate() const
    {
        if (blocks.empty()) {
            throw ConfigError("tariff: at least one block required");
        }
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            if (blocks[i].rate < 0.0) {
                throw ConfigError("tariff: rates must be non-negative");
            }
            if (i + 1 < blocks.size()) {
                if (!std::isfinite(blocks[i].upper_kwh) || blocks[i].upper_kwh <= 0.0) {
                    throw ConfigError("tariff: only the final block may be unbounded");
                }
                if (blocks[i + 1].upper_kwh <= blocks[i].upper_kwh) {
                    throw ConfigError("tariff: block bounds must be strictly increasing");
                }
            }
        }
        if (std::isfinite(blocks.back().upper_kwh)) {
            throw ConfigError("tariff: final block must be unbounded");
        }
        if (tax_rate < 0.0) {
            throw ConfigError("tariff: tax_rate must be non-negative");
        }
    }
};

struct Corpus {
    CorpusConfig config;
    std::vector<CustomerProfile> profiles;
    std::vector<MeterSeries> meters;
    CarbonIntensitySeries ci;
    TariffSchedule tariff;

    std::size_t reading_count() const noexcept
    {
        std::size_t n = 0;
        for (const auto& m : meters) {
            n += m.readings.size();
        }
        return n;
    }
};

namespace detail {

inline double gaussian_bump(double x, double center, double sigma) noexcept
{
    const double z = (x - center) / sigma;
    return std::exp(-0.5 * z * z);
}

inline constexpr std::uint64_t kCiStreamKey = 0xC1C1C1C1ULL;
inline constexpr std::uint64_t kArchetypeStreamKey = 0xA5A5ULL;

} // namespace detail

/// Per-customer seed, a pure function of (master_seed, customer id).
inline std::uint64_t customer_seed(std::uint64_t master_seed, CustomerId id) noexcept
{
    return derive_seed(master_seed, id.value);
}

inline CustomerProfile make_profile(const CorpusConfig& config, CustomerId id)
{
    CustomerProfile p;
    p.id = id;
    p.seed = customer_seed(config.master_seed, id);

    Rng pick(derive_seed(p.seed, detail::kArchetypeStreamKey));
    const double u = pick.uniform();
    double acc = 0.0;
    int chosen = 2;
    for (int k = 0; k < 3; ++k) {
        acc += config.archetype_mix[k];
        if (u < acc) {
            chosen = k;
            break;
        }
    }
    p.archetype = static_cast<Archetype>(chosen);
    const ArchetypeShape& shape = config.archetypes[chosen];
    p.base_load = shape.base_load;
    p.morning_peak_amp = shape.morning_peak_amp;
    p.evening_peak_amp = shape.evening_peak_amp;
    return p;
}

/// Noise-free expected consumption (kWh) of a profile at (day, interval).
inline double expected_reading(const CorpusConfig& config, const CustomerProfile& p, int day, int interval)
{
    const double t = interval;
    double kwh = p.base_load + p.morning_peak_amp * detail::gaussian_bump(t, config.morning_peak_center, config.peak_sigma_intervals) +
                 p.evening_peak_amp * detail::gaussian_bump(t, config.evening_peak_center, config.peak_sigma_intervals);
    if (is_weekend(day)) {
        kwh *= config.weekend_factor;
    }
    kwh *= 1.0 + config.seasonal_amplitude * std::sin(2.0 * std::numbers::pi * day / 365.0);
    return kwh;
}

inline MeterSeries generate_meter(const CorpusConfig& config, const CustomerProfile& p)
{
    MeterSeries m;
    m.id = p.id;
    m.readings.resize(static_cast<std::size_t>(config.intervals()));
    Rng noise(p.seed);
    std::size_t k = 0;
    for (int day = 0; day < config.n_days; ++day) {
        for (int i = 0; i < kIntervalsPerDay; ++i, ++k) {
            const double v = expected_reading(config, p, day, i) + config.noise_sigma * noise.normal();
            m.readings[k] = v > 0.0 ? v : 0.0;
        }
    }
    return m;
}

/// Deterministic daily CI envelope (gCO2/kWh) at an interval of the day.
inline double ci_envelope(const CorpusConfig& config, int interval)
{
    const double t = interval;
    double v = config.ci_base - config.ci_solar_dip_depth * detail::gaussian_bump(t, config.ci_dip_center, config.ci_dip_sigma_intervals);
    for (double center : config.ci_ramp_centers) {
        v += config.ci_ramp_peak * detail::gaussian_bump(t, center, config.ci_ramp_sigma_intervals);
    }
    return v;
}

inline CarbonIntensitySeries generate_ci_series(const CorpusConfig& config)
{
    config.validate();
    CarbonIntensitySeries ci;
    ci.values.resize(static_cast<std::size_t>(config.intervals()));
    Rng rng(derive_seed(config.master_seed, detail::kCiStreamKey));

    const double phi = config.ci_ar1_phi;
    // Start from the stationary distribution so there is no burn-in transient.
    double eps = config.ci_ar1_sigma / std::sqrt(1.0 - phi * phi) * rng.normal();
    std::size_t k = 0;
    for (int day = 0; day < config.n_days; ++day) {
        for (int i = 0; i < kIntervalsPerDay; ++i, ++k) {
            if (k > 0) {
                eps = phi * eps + config.ci_ar1_sigma * rng.normal();
            }
            const double v = ci_envelope(config, i) + eps;
            ci.values[k] = v < config.ci_floor ? config.ci_floor : v;
        }
    }
    return ci;
}

inline Corpus generate_corpus(const CorpusConfig& config, TariffSchedule tariff = {})
{
    config.validate();
    tariff.validate();
    Corpus corpus;
    corpus.config = config;
    corpus.tariff = std::move(tariff);
    corpus.profiles.reserve(static_cast<std::size_t>(config.n_customers));
    corpus.meters.reserve(static_cast<std::size_t>(config.n_customers));
    for (int c = 0; c < config.n_customers; ++c) {
        const CustomerId id{static_cast<std::uint32_t>(c)};
        corpus.profiles.push_back(make_profile(config, id));
        corpus.meters.push_back(generate_meter(config, corpus.profiles.back()));
    }
    corpus.ci = generate_ci_series(config);
    return corpus;
}

/// Read-only window of whole days over a corpus.
class CorpusView {
public:
    CorpusView(const Corpus& corpus, int first_day, int n_days)
        : corpus_(&corpus)
        , first_day_(first_day)
        , n_days_(n_days)
    {
        if (first_day < 0 || n_days < 0 || first_day + n_days > corpus.config.n_days) {
            throw RangeError("corpus view outside corpus days");
        }
    }

    int first_day() const noexcept { return first_day_; }
    int n_days() const noexcept { return n_days_; }
    int end_day() const noexcept { return first_day_ + n_days_; }
    std::size_t customer_count() const noexcept { return corpus_->meters.size(); }
    const Corpus& corpus() const noexcept { return *corpus_; }

    std::span<const double> readings(std::size_t customer) const
    {
        return std::span<const double>(corpus_->meters.at(customer).readings).subspan(offset(), length());
    }

    std::span<const double> ci() const { return std::span<const double>(corpus_->ci.values).subspan(offset(), length()); }

private:
    std::size_t offset() const noexcept { return static_cast<std::size_t>(first_day_) * kIntervalsPerDay; }
    std::size_t length() const noexcept { return static_cast<std::size_t>(n_days_) * kIntervalsPerDay; }

    const Corpus* corpus_;
    int first_day_;
    int n_days_;
};

struct TrainTestSplit {
    CorpusView train;
    CorpusView test;
};

inline TrainTestSplit split_train_test(const Corpus& corpus)
{
    const auto& cfg = corpus.config;
    return {CorpusView(corpus, 0, cfg.train_days), CorpusView(corpus, cfg.train_days, cfg.test_days)};
}

/// Sums each run of four quarter-hour readings into an hourly value.
/// Summation is in ascending interval order.
inline std::vector<double> aggregate_hourly(std::span<const double> quarter_hourly)
{
    if (quarter_hourly.size() % kIntervalsPerDay != 0) {
        throw PreconditionError("aggregate_hourly: series must hold whole days of 96 intervals");
    }
    std::vector<double> hourly(quarter_hourly.size() / kIntervalsPerHour);
    for (std::size_t h = 0; h < hourly.size(); ++h) {
        double sum = 0.0;
        for (std::size_t k = 0; k < kIntervalsPerHour; ++k) {
            sum += quarter_hourly[h * kIntervalsPerHour + k];
        }
        hourly[h] = sum;
    }
    return hourly;
}

inline std::vector<double> aggregate_hourly(const MeterSeries& series)
{
    return aggregate_hourly(std::span<const double>(series.readings));
}

/// Hourly mean of an interval-aligned intensity series.
inline std::vector<double> hourly_mean(std::span<const double> quarter_hourly)
{
    std::vector<double> hourly = aggregate_hourly(quarter_hourly);
    for (double& v : hourly) {
        v /= kIntervalsPerHour;
    }
    return hourly;
}

} // namespace gridbill
