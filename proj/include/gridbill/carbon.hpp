#pragma once

// Interval-level CO2 attribution (kWh x gCO2/kWh / 1000) with daily and
// 30-day roll-ups. Everything here is plain arithmetic over aligned series.

#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"
#include "gridbill/forecast.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace gridbill {

inline constexpr int kDaysPerBillingMonth = 30;

enum class CarbonBasis { Metered, Projected };

struct CarbonEstimate {
    CustomerId customer;
    int first_day = 0;
    std::vector<double> per_interval_kg; // index = (day - first_day) * 96 + interval
    CarbonBasis basis = CarbonBasis::Metered;

    int n_days() const noexcept { return static_cast<int>(per_interval_kg.size() / kIntervalsPerDay); }
};

struct FootprintReport {
    CustomerId customer;
    int first_day = 0;
    std::vector<double> daily_kg;
    std::vector<double> monthly_kg; // consecutive 30-day blocks counted from first_day; last block may be partial
};

enum class Granularity { Daily, Monthly };

inline double co2_interval(double kwh, double ci_g_per_kwh)
{
    if (!(kwh >= 0.0)) {
        throw DomainError("co2_interval: kWh must be non-negative");
    }
    if (!(ci_g_per_kwh > 0.0)) {
        throw DomainError("co2_interval: carbon intensity must be positive");
    }
    return kwh * ci_g_per_kwh / 1000.0;
}

/// Interval estimate over aligned kWh and CI windows that start at `first_day`.
inline CarbonEstimate co2_estimate(CustomerId customer, int first_day, std::span<const double> kwh, std::span<const double> ci,
                                   CarbonBasis basis = CarbonBasis::Metered)
{
    if (kwh.size() != ci.size() || kwh.size() % kIntervalsPerDay != 0) {
        throw DomainError("co2_estimate: kWh and CI must be aligned whole days");
    }
    CarbonEstimate est;
    est.customer = customer;
    est.first_day = first_day;
    est.basis = basis;
    est.per_interval_kg.resize(kwh.size());
    for (std::size_t i = 0; i < kwh.size(); ++i) {
        est.per_interval_kg[i] = co2_interval(kwh[i], ci[i]);
    }
    return est;
}

inline CarbonEstimate co2_metered(const Corpus& corpus, std::size_t customer)
{
    const auto& m = corpus.meters.at(customer);
    return co2_estimate(m.id, 0, m.readings, corpus.ci.values, CarbonBasis::Metered);
}

/// Spreads each hourly q50 value evenly over its four intervals, then
/// multiplies by the actual CI of those intervals.
inline CarbonEstimate co2_projected(CustomerId customer, int first_day, std::span<const QuantileForecast> forecasts,
                                    std::span<const double> ci_from_first_day)
{
    std::vector<double> kwh;
    kwh.reserve(forecasts.size() * kIntervalsPerDay);
    for (const auto& f : forecasts) {
        for (int h = 0; h < kHoursPerDay; ++h) {
            for (int k = 0; k < kIntervalsPerHour; ++k) {
                kwh.push_back(f.q50[h] / kIntervalsPerHour);
            }
        }
    }
    return co2_estimate(customer, first_day, kwh, ci_from_first_day.first(kwh.size()), CarbonBasis::Projected);
}

/// Daily totals sum intervals in ascending order; monthly totals sum those
/// daily totals in ascending order.
inline FootprintReport co2_rollup(const CarbonEstimate& est, Granularity granularity = Granularity::Monthly)
{
    FootprintReport r;
    r.customer = est.customer;
    r.first_day = est.first_day;
    const int days = est.n_days();
    r.daily_kg.resize(static_cast<std::size_t>(days));
    for (int d = 0; d < days; ++d) {
        double sum = 0.0;
        for (int i = 0; i < kIntervalsPerDay; ++i) {
            sum += est.per_interval_kg[static_cast<std::size_t>(d) * kIntervalsPerDay + i];
        }
        r.daily_kg[static_cast<std::size_t>(d)] = sum;
    }
    if (granularity == Granularity::Monthly) {
        for (int start = 0; start < days; start += kDaysPerBillingMonth) {
            double sum = 0.0;
            for (int d = start; d < std::min(days, start + kDaysPerBillingMonth); ++d) {
                sum += r.daily_kg[static_cast<std::size_t>(d)];
            }
            r.monthly_kg.push_back(sum);
        }
    }
    return r;
}

struct ProjectedErrorReport {
    int first_day = 0;
    std::vector<double> daily_pct_error; // NaN where the metered day total is zero
    std::size_t excluded_days = 0;
    std::vector<double> monthly_abs_error_kg;
};

/// Per-day percent error of projected vs metered over the projected days, and
/// absolute kg error per 30-day block (blocks counted from corpus day 0,
/// restricted to the days both estimates cover).
inline ProjectedErrorReport co2_projected_error(const CarbonEstimate& projected, const CarbonEstimate& metered)
{
    const int first = projected.first_day;
    const int end = first + projected.n_days();
    if (first < metered.first_day || end > metered.first_day + metered.n_days()) {
        throw RangeError("co2_projected_error: metered estimate does not cover the projected days");
    }
    const FootprintReport p = co2_rollup(projected, Granularity::Daily);
    const FootprintReport m = co2_rollup(metered, Granularity::Daily);

    ProjectedErrorReport out;
    out.first_day = first;
    int current_month = -1;
    double month_p = 0.0;
    double month_m = 0.0;
    for (int d = first; d < end; ++d) {
        const double pd = p.daily_kg[static_cast<std::size_t>(d - first)];
        const double md = m.daily_kg[static_cast<std::size_t>(d - metered.first_day)];
        if (md == 0.0) {
            out.daily_pct_error.push_back(std::nan(""));
            ++out.excluded_days;
        } else {
            out.daily_pct_error.push_back(100.0 * (pd - md) / md);
        }
        const int month = d / kDaysPerBillingMonth;
        if (month != current_month) {
            if (current_month >= 0) {
                out.monthly_abs_error_kg.push_back(std::abs(month_p - month_m));
            }
            current_month = month;
            month_p = 0.0;
            month_m = 0.0;
        }
        month_p += pd;
        month_m += md;
    }
    if (current_month >= 0) {
        out.monthly_abs_error_kg.push_back(std::abs(month_p - month_m));
    }
    return out;
}

/// Interval attribution with every CI value replaced by the series mean.
inline CarbonEstimate co2_annual_average_baseline(const MeterSeries& meter, const CarbonIntensitySeries& ci)
{
    if (meter.readings.size() != ci.values.size() || ci.values.empty()) {
        throw DomainError("co2_annual_average_baseline: series not aligned");
    }
    double mean = 0.0;
    for (double v : ci.values) {
        mean += v;
    }
    mean /= static_cast<double>(ci.values.size());
    const std::vector<double> flat(ci.values.size(), mean);
    return co2_estimate(meter.id, 0, meter.readings, flat, CarbonBasis::Metered);
}

/// Fills masked intervals with the same interval of the previous day.
/// Masked intervals on day 0 take the nearest earlier unmasked reading of
/// the day, or zero. Returns the number of imputed intervals.
inline std::size_t impute_gaps(std::span<double> readings, std::span<const bool> missing)
{
    if (readings.size() != missing.size()) {
        throw DomainError("impute_gaps: mask length mismatch");
    }
    std::size_t imputed = 0;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        if (!missing[i]) {
            continue;
        }
        if (i >= kIntervalsPerDay) {
            readings[i] = readings[i - kIntervalsPerDay];
        } else {
            readings[i] = i > 0 ? readings[i - 1] : 0.0;
        }
        ++imputed;
    }
    return imputed;
}

} // namespace gridbill
