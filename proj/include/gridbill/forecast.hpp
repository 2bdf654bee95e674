#pragma once

// Day-ahead hourly forecasting: five classical baselines, the bias-corrected
// moving-average surrogate, empirical quantile bands and accuracy metrics.

#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace gridbill {

inline constexpr int kHistoryWindowHours = 168;
inline constexpr std::array<double, 3> kQuantiles{0.1, 0.5, 0.9};

using DayProfile = std::array<double, kHoursPerDay>;

enum class BaselineKind { Persist, Sma, Hwes, LinReg, ArResidual, Surrogate };

inline constexpr std::array<BaselineKind, 6> kAllBaselineKinds{
    BaselineKind::Persist, BaselineKind::Sma, BaselineKind::Hwes, BaselineKind::LinReg, BaselineKind::ArResidual, BaselineKind::Surrogate,
};

inline std::string_view to_string(BaselineKind kind)
{
    switch (kind) {
    case BaselineKind::Persist: return "PERSIST";
    case BaselineKind::Sma: return "SMA";
    case BaselineKind::Hwes: return "HWES";
    case BaselineKind::LinReg: return "LinReg";
    case BaselineKind::ArResidual: return "ARIMA_p";
    case BaselineKind::Surrogate: return "Surrogate";
    }
    return "unknown";
}

struct HwesParams {
    double alpha = 0.2;
    double beta = 0.02;
    double gamma = 0.1;
};

struct ForecastConfig {
    HwesParams hwes;
    double surrogate_decay = 0.8;
    int ar_order = 4;
    double epsilon_mape = 1e-6;
    int min_band_samples = 14;
    int band_first_day = 21; // residuals before this day are not used for bands
};

/// Chronological hourly values that start at corpus day 0 and end at the
/// last hour before the target day. The target day is implied by the length.
class HourlyHistory {
public:
    explicit HourlyHistory(std::span<const double> values)
        : values_(values)
    {
        if (values.size() % kHoursPerDay != 0) {
            throw PreconditionError("hourly history must hold whole days");
        }
        if (values.size() < static_cast<std::size_t>(kHistoryWindowHours)) {
            throw PreconditionError("hourly history shorter than the 168-hour window");
        }
    }

    std::span<const double> values() const noexcept { return values_; }
    int days() const noexcept { return static_cast<int>(values_.size() / kHoursPerDay); }
    int target_day() const noexcept { return days(); }
    double at(int day, int hour) const { return values_[static_cast<std::size_t>(day) * kHoursPerDay + hour]; }

private:
    std::span<const double> values_;
};

struct QuantileForecast {
    DayProfile q10{};
    DayProfile q50{};
    DayProfile q90{};
};

struct ForecastMetrics {
    double mape = 0.0;   // percent
    double rmse = 0.0;   // kWh
    double pinball = 0.0;
    std::size_t mape_excluded = 0;
};

// ---------------------------------------------------------------------------
// Losses and accuracy metrics

/// Quantile (pinball) loss of a single residual actual - predicted.
inline double pinball_loss(double actual, double predicted, double q)
{
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("pinball_loss: q must lie in (0, 1)");
    }
    const double e = actual - predicted;
    return std::max(q * e, (q - 1.0) * e);
}

struct MapeResult {
    double percent = 0.0;
    std::size_t excluded = 0;
};

/// Mean absolute percentage error; actuals with |a| < epsilon are skipped and counted.
inline MapeResult mape(std::span<const double> actuals, std::span<const double> forecasts, double epsilon = 1e-6)
{
    if (actuals.size() != forecasts.size() || actuals.empty()) {
        throw DomainError("mape: sequences must have equal non-zero length");
    }
    MapeResult r;
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        if (std::abs(actuals[i]) < epsilon) {
            ++r.excluded;
            continue;
        }
        sum += std::abs(actuals[i] - forecasts[i]) / std::abs(actuals[i]);
        ++used;
    }
    if (used == 0) {
        throw DomainError("mape: every actual is below epsilon");
    }
    r.percent = 100.0 * sum / static_cast<double>(used);
    return r;
}

inline double rmse(std::span<const double> actuals, std::span<const double> forecasts)
{
    if (actuals.size() != forecasts.size() || actuals.empty()) {
        throw DomainError("rmse: sequences must have equal non-zero length");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < actuals.size(); ++i) {
        const double d = actuals[i] - forecasts[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(actuals.size()));
}

// ---------------------------------------------------------------------------
// Quantile bands

/// Lower empirical q-quantile (order statistic ceil(q n)). It minimises the
/// sample pinball loss exactly.
inline double empirical_quantile(std::vector<double> sample, double q)
{
    if (sample.empty()) {
        throw PreconditionError("empirical_quantile: empty sample");
    }
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError("empirical_quantile: q must lie in (0, 1)");
    }
    const auto n = sample.size();
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n) - 1;
    std::nth_element(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(k), sample.end());
    return sample[k];
}

using ResidualsByHour = std::array<std::vector<double>, kHoursPerDay>;

/// Per-hour offsets for quantile q: the empirical q-quantile of actual - point.
inline DayProfile fit_quantile_bands(const ResidualsByHour& residuals, double q, int min_samples = 14)
{
    DayProfile offsets{};
    for (int h = 0; h < kHoursPerDay; ++h) {
        if (residuals[h].size() < static_cast<std::size_t>(min_samples)) {
            throw PreconditionError("fit_quantile_bands: too few residual samples for an hour");
        }
        offsets[h] = empirical_quantile(residuals[h], q);
    }
    return offsets;
}

struct BandOffsets {
    std::array<DayProfile, 3> by_quantile{}; // aligned with kQuantiles

    static BandOffsets fit(const ResidualsByHour& residuals, int min_samples = 14)
    {
        BandOffsets b;
        for (std::size_t k = 0; k < kQuantiles.size(); ++k) {
            b.by_quantile[k] = fit_quantile_bands(residuals, kQuantiles[k], min_samples);
        }
        return b;
    }
};

/// Adds offsets to a point forecast, rearranges each hour into ascending
/// order and clamps at zero.
inline QuantileForecast apply_bands(const DayProfile& point, const BandOffsets& bands)
{
    QuantileForecast f;
    for (int h = 0; h < kHoursPerDay; ++h) {
        std::array<double, 3> v{point[h] + bands.by_quantile[0][h], point[h] + bands.by_quantile[1][h], point[h] + bands.by_quantile[2][h]};
        std::sort(v.begin(), v.end());
        f.q10[h] = std::max(v[0], 0.0);
        f.q50[h] = std::max(v[1], 0.0);
        f.q90[h] = std::max(v[2], 0.0);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Point forecasters

inline DayProfile persist_forecast(const HourlyHistory& history)
{
    DayProfile out{};
    const int last = history.days() - 1;
    for (int h = 0; h < kHoursPerDay; ++h) {
        out[h] = history.at(last, h);
    }
    return out;
}

/// Mean of the 7 same-hour values preceding `day` (exclusive).
inline DayProfile sma7(const HourlyHistory& history, int day)
{
    DayProfile out{};
    for (int h = 0; h < kHoursPerDay; ++h) {
        double sum = 0.0;
        for (int k = day - kDaysPerWeek; k < day; ++k) {
            sum += history.at(k, h);
        }
        out[h] = sum / kDaysPerWeek;
    }
    return out;
}

inline DayProfile sma_forecast(const HourlyHistory& history)
{
    return sma7(history, history.target_day());
}

inline DayProfile hwes_forecast(const HourlyHistory& history, const HwesParams& p)
{
    const auto y = history.values();
    double level = 0.0;
    for (int t = 0; t < kHistoryWindowHours; ++t) {
        level += y[t];
    }
    level /= kHistoryWindowHours;
    double trend = 0.0;
    DayProfile season{};
    for (int h = 0; h < kHoursPerDay; ++h) {
        double sum = 0.0;
        for (int d = 0; d < kDaysPerWeek; ++d) {
            sum += y[static_cast<std::size_t>(d) * kHoursPerDay + h];
        }
        season[h] = sum / kDaysPerWeek - level;
    }
    for (std::size_t t = kHistoryWindowHours; t < y.size(); ++t) {
        const std::size_t h = t % kHoursPerDay;
        const double prev_level = level;
        level = p.alpha * (y[t] - season[h]) + (1.0 - p.alpha) * (level + trend);
        trend = p.beta * (level - prev_level) + (1.0 - p.beta) * trend;
        season[h] = p.gamma * (y[t] - level) + (1.0 - p.gamma) * season[h];
    }
    DayProfile out{};
    for (int h = 0; h < kHoursPerDay; ++h) {
        out[h] = level + (h + 1) * trend + season[h];
    }
    return out;
}

/// Exponentially weighted bias of actual minus SMA7, kept per hour of day and
/// separately for weekdays and weekends.
class SurrogateBias {
public:
    explicit SurrogateBias(double decay = 0.8)
        : decay_(decay)
    {
        if (!(decay >= 0.0 && decay < 1.0)) {
            throw ConfigError("surrogate decay must lie in [0, 1)");
        }
    }

    void update(const DayProfile& actual, const DayProfile& sma, bool weekend)
    {
        auto& b = bias_[weekend ? 1 : 0];
        for (int h = 0; h < kHoursPerDay; ++h) {
            b[h] = decay_ * b[h] + (1.0 - decay_) * (actual[h] - sma[h]);
        }
    }

    const DayProfile& bias(bool weekend) const noexcept { return bias_[weekend ? 1 : 0]; }

private:
    double decay_;
    std::array<DayProfile, 2> bias_{};
};

/// SMA7 plus the bias state after replaying every complete day of history.
inline DayProfile surrogate_forecast(const HourlyHistory& history, double decay)
{
    SurrogateBias bias(decay);
    for (int day = kDaysPerWeek; day < history.days(); ++day) {
        DayProfile actual{};
        for (int h = 0; h < kHoursPerDay; ++h) {
            actual[h] = history.at(day, h);
        }
        bias.update(actual, sma7(history, day), is_weekend(day));
    }
    const int target = history.target_day();
    DayProfile out = sma7(history, target);
    const DayProfile& b = bias.bias(is_weekend(target));
    for (int h = 0; h < kHoursPerDay; ++h) {
        out[h] = std::max(out[h] + b[h], 0.0);
    }
    return out;
}

// Fitted state for the regression-type baselines, estimated on training days only.

struct LinRegFit {
    Eigen::VectorXd coefficients; // 24 hour + 6 weekday indicators + anchor
    DayProfile seasonal_mean{};
    bool fallback = false;
};

struct ArFit {
    std::array<DayProfile, 2> seasonal_mean{}; // [weekday, weekend]
    std::vector<double> coefficients;          // lag 1 first
};

struct FittedModel {
    BaselineKind kind = BaselineKind::Persist;
    ForecastConfig config;
    LinRegFit linreg;
    ArFit ar;
};

namespace detail {

inline constexpr int kLinRegColumns = kHoursPerDay + (kDaysPerWeek - 1) + 1;

inline void linreg_row(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, int day, int hour, double anchor)
{
    row.setZero();
    row(hour) = 1.0;
    const int dow = day % kDaysPerWeek;
    if (dow > 0) {
        row(kHoursPerDay + dow - 1) = 1.0;
    }
    row(kLinRegColumns - 1) = anchor;
}

inline DayProfile hourly_mean_profile(std::span<const double> hourly, int first_day, int end_day)
{
    DayProfile mean{};
    if (end_day <= first_day) {
        return mean;
    }
    for (int d = first_day; d < end_day; ++d) {
        for (int h = 0; h < kHoursPerDay; ++h) {
            mean[h] += hourly[static_cast<std::size_t>(d) * kHoursPerDay + h];
        }
    }
    for (double& v : mean) {
        v /= end_day - first_day;
    }
    return mean;
}

} // namespace detail

inline LinRegFit fit_linreg(std::span<const double> train_hourly)
{
    const int days = static_cast<int>(train_hourly.size() / kHoursPerDay);
    LinRegFit fit;
    fit.seasonal_mean = detail::hourly_mean_profile(train_hourly, 0, days);
    const int rows = (days - 1) * kHoursPerDay;
    if (rows < detail::kLinRegColumns) {
        fit.fallback = true;
        return fit;
    }
    Eigen::MatrixXd x(rows, detail::kLinRegColumns);
    Eigen::VectorXd y(rows);
    int r = 0;
    for (int d = 1; d < days; ++d) {
        for (int h = 0; h < kHoursPerDay; ++h, ++r) {
            detail::linreg_row(x.row(r), d, h, train_hourly[static_cast<std::size_t>(d - 1) * kHoursPerDay + h]);
            y(r) = train_hourly[static_cast<std::size_t>(d) * kHoursPerDay + h];
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < detail::kLinRegColumns) {
        fit.fallback = true;
        return fit;
    }
    fit.coefficients = qr.solve(y);
    return fit;
}

/// Least-squares AR(p) fit without intercept. Returns the minimum-norm
/// solution when the lag matrix is rank deficient (e.g. all-zero residuals).
inline std::vector<double> fit_ar_least_squares(std::span<const double> series, int order)
{
    const auto p = static_cast<std::size_t>(order);
    if (series.size() <= p) {
        throw PreconditionError("AR fit: series shorter than the model order");
    }
    const auto rows = static_cast<Eigen::Index>(series.size() - p);
    Eigen::MatrixXd x(rows, order);
    Eigen::VectorXd y(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const std::size_t t = static_cast<std::size_t>(r) + p;
        for (std::size_t k = 0; k < p; ++k) {
            x(r, static_cast<Eigen::Index>(k)) = series[t - k - 1];
        }
        y(r) = series[t];
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    cod.setThreshold(1e-12);
    const Eigen::VectorXd beta = cod.solve(y);
    return {beta.data(), beta.data() + beta.size()};
}

inline ArFit fit_ar_residual(std::span<const double> train_hourly, int order)
{
    if (order < 1) {
        throw ConfigError("AR order must be at least 1");
    }
    const int days = static_cast<int>(train_hourly.size() / kHoursPerDay);
    ArFit fit;
    std::array<int, 2> counts{};
    for (int d = 0; d < days; ++d) {
        const int w = is_weekend(d) ? 1 : 0;
        ++counts[w];
        for (int h = 0; h < kHoursPerDay; ++h) {
            fit.seasonal_mean[w][h] += train_hourly[static_cast<std::size_t>(d) * kHoursPerDay + h];
        }
    }
    const DayProfile overall = detail::hourly_mean_profile(train_hourly, 0, days);
    for (int w = 0; w < 2; ++w) {
        for (int h = 0; h < kHoursPerDay; ++h) {
            fit.seasonal_mean[w][h] = counts[w] > 0 ? fit.seasonal_mean[w][h] / counts[w] : overall[h];
        }
    }

    std::vector<double> resid(train_hourly.size());
    for (std::size_t t = 0; t < resid.size(); ++t) {
        const int d = static_cast<int>(t / kHoursPerDay);
        resid[t] = train_hourly[t] - fit.seasonal_mean[is_weekend(d) ? 1 : 0][t % kHoursPerDay];
    }
    fit.coefficients = fit_ar_least_squares(resid, order);
    return fit;
}

inline FittedModel fit_baseline(BaselineKind kind, std::span<const double> train_hourly, const ForecastConfig& config = {})
{
    if (train_hourly.size() % kHoursPerDay != 0 || train_hourly.size() < static_cast<std::size_t>(kHistoryWindowHours)) {
        throw PreconditionError("fit_baseline: training series must hold at least 7 whole days");
    }
    FittedModel m;
    m.kind = kind;
    m.config = config;
    if (kind == BaselineKind::LinReg) {
        m.linreg = fit_linreg(train_hourly);
    } else if (kind == BaselineKind::ArResidual) {
        m.ar = fit_ar_residual(train_hourly, config.ar_order);
    }
    return m;
}

struct PointForecast {
    DayProfile values{};
    bool fallback = false; // singular regression; seasonal mean used instead
};

inline PointForecast baseline_forecast(const FittedModel& model, const HourlyHistory& history)
{
    PointForecast out;
    const int target = history.target_day();
    switch (model.kind) {
    case BaselineKind::Persist:
        out.values = persist_forecast(history);
        break;
    case BaselineKind::Sma:
        out.values = sma_forecast(history);
        break;
    case BaselineKind::Hwes:
        out.values = hwes_forecast(history, model.config.hwes);
        break;
    case BaselineKind::Surrogate:
        out.values = surrogate_forecast(history, model.config.surrogate_decay);
        break;
    case BaselineKind::LinReg: {
        const auto& fit = model.linreg;
        if (fit.fallback) {
            out.values = fit.seasonal_mean;
            out.fallback = true;
            break;
        }
        Eigen::RowVectorXd row(detail::kLinRegColumns);
        for (int h = 0; h < kHoursPerDay; ++h) {
            detail::linreg_row(row, target, h, history.at(target - 1, h));
            out.values[h] = row.dot(fit.coefficients);
        }
        break;
    }
    case BaselineKind::ArResidual: {
        const auto& fit = model.ar;
        const auto p = fit.coefficients.size();
        const auto y = history.values();
        std::vector<double> lags; // most recent last
        lags.reserve(p + kHoursPerDay);
        for (std::size_t t = y.size() - p; t < y.size(); ++t) {
            const int d = static_cast<int>(t / kHoursPerDay);
            lags.push_back(y[t] - fit.seasonal_mean[is_weekend(d) ? 1 : 0][t % kHoursPerDay]);
        }
        const DayProfile& season = fit.seasonal_mean[is_weekend(target) ? 1 : 0];
        for (int h = 0; h < kHoursPerDay; ++h) {
            double r = 0.0;
            for (std::size_t k = 0; k < p; ++k) {
                r += fit.coefficients[k] * lags[lags.size() - 1 - k];
            }
            lags.push_back(r);
            out.values[h] = season[h] + r;
        }
        break;
    }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus-level evaluation

/// Point and quantile forecasts of one method, for every customer and every
/// day from `first_forecast_day` to the end of the corpus.
struct MethodEvaluation {
    BaselineKind kind = BaselineKind::Persist;
    int first_forecast_day = kDaysPerWeek;
    std::vector<std::vector<DayProfile>> point;            // [customer][day - first]
    std::vector<std::vector<QuantileForecast>> quantiles;  // [customer][day - first]
    std::vector<double> aggregate_actual;                  // test hours
    std::vector<double> aggregate_point;                   // test hours
    std::vector<QuantileForecast> aggregate_bands;         // per test day
    ForecastMetrics metrics;
    double coverage = 0.0; // aggregate test actuals inside [q10, q90]
    std::size_t fallback_count = 0;

    const QuantileForecast& customer_forecast(std::size_t customer, int day) const
    {
        return quantiles.at(customer).at(static_cast<std::size_t>(day - first_forecast_day));
    }
};

inline MethodEvaluation evaluate_method(const Corpus& corpus, BaselineKind kind, const ForecastConfig& config = {})
{
    const auto& cfg = corpus.config;
    const int first = kDaysPerWeek;
    const int train_days = cfg.train_days;
    const int n_days = cfg.n_days;
    const std::size_t n_cust = corpus.meters.size();
    const auto n_fc_days = static_cast<std::size_t>(n_days - first);
    const int band_first = std::max(first, config.band_first_day);
    if (band_first >= train_days) {
        throw ConfigError("evaluate_method: band fitting window is empty");
    }

    MethodEvaluation ev;
    ev.kind = kind;
    ev.first_forecast_day = first;
    ev.point.assign(n_cust, std::vector<DayProfile>(n_fc_days));
    ev.quantiles.assign(n_cust, std::vector<QuantileForecast>(n_fc_days));

    std::vector<DayProfile> agg_point(n_fc_days, DayProfile{});
    std::vector<DayProfile> agg_actual(n_fc_days, DayProfile{});
    double pinball_sum = 0.0;
    std::size_t pinball_n = 0;

    for (std::size_t c = 0; c < n_cust; ++c) {
        const std::vector<double> hourly = aggregate_hourly(corpus.meters[c]);
        const std::span<const double> all(hourly);
        const FittedModel model = fit_baseline(kind, all.first(static_cast<std::size_t>(train_days) * kHoursPerDay), config);

        ResidualsByHour residuals;
        for (int d = first; d < n_days; ++d) {
            const HourlyHistory history(all.first(static_cast<std::size_t>(d) * kHoursPerDay));
            const PointForecast pf = baseline_forecast(model, history);
            ev.fallback_count += pf.fallback ? 1 : 0;
            const auto idx = static_cast<std::size_t>(d - first);
            ev.point[c][idx] = pf.values;
            for (int h = 0; h < kHoursPerDay; ++h) {
                const double actual = all[static_cast<std::size_t>(d) * kHoursPerDay + h];
                agg_point[idx][h] += pf.values[h];
                agg_actual[idx][h] += actual;
                if (d >= band_first && d < train_days) {
                    residuals[h].push_back(actual - pf.values[h]);
                }
            }
        }
        const BandOffsets bands = BandOffsets::fit(residuals, config.min_band_samples);
        for (std::size_t idx = 0; idx < n_fc_days; ++idx) {
            ev.quantiles[c][idx] = apply_bands(ev.point[c][idx], bands);
            const int d = first + static_cast<int>(idx);
            if (d < train_days) {
                continue;
            }
            const auto& qf = ev.quantiles[c][idx];
            for (int h = 0; h < kHoursPerDay; ++h) {
                const double actual = all[static_cast<std::size_t>(d) * kHoursPerDay + h];
                pinball_sum += pinball_loss(actual, qf.q10[h], kQuantiles[0]) + pinball_loss(actual, qf.q50[h], kQuantiles[1]) +
                               pinball_loss(actual, qf.q90[h], kQuantiles[2]);
                pinball_n += kQuantiles.size();
            }
        }
    }

    ResidualsByHour agg_resid;
    for (int d = band_first; d < train_days; ++d) {
        const auto idx = static_cast<std::size_t>(d - first);
        for (int h = 0; h < kHoursPerDay; ++h) {
            agg_resid[h].push_back(agg_actual[idx][h] - agg_point[idx][h]);
        }
    }
    const BandOffsets agg_bands = BandOffsets::fit(agg_resid, config.min_band_samples);
    std::size_t covered = 0;
    for (int d = train_days; d < n_days; ++d) {
        const auto idx = static_cast<std::size_t>(d - first);
        const QuantileForecast band = apply_bands(agg_point[idx], agg_bands);
        ev.aggregate_bands.push_back(band);
        for (int h = 0; h < kHoursPerDay; ++h) {
            ev.aggregate_actual.push_back(agg_actual[idx][h]);
            ev.aggregate_point.push_back(agg_point[idx][h]);
            if (agg_actual[idx][h] >= band.q10[h] && agg_actual[idx][h] <= band.q90[h]) {
                ++covered;
            }
        }
    }
    const MapeResult m = mape(ev.aggregate_actual, ev.aggregate_point, config.epsilon_mape);
    ev.metrics.mape = m.percent;
    ev.metrics.mape_excluded = m.excluded;
    ev.metrics.rmse = rmse(ev.aggregate_actual, ev.aggregate_point);
    ev.metrics.pinball = pinball_n > 0 ? pinball_sum / static_cast<double>(pinball_n) : 0.0;
    ev.coverage = static_cast<double>(covered) / static_cast<double>(ev.aggregate_actual.size());
    return ev;
}

} // namespace gridbill
