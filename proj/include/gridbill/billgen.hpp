#pragma once

// Bill statements: fixed-point bill input, numeric vocabulary, a template
// backend under a decoding policy, and an auditor that re-reads the text.

#include "gridbill/carbon.hpp"
#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"
#include "gridbill/forecast.hpp"
#include "gridbill/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridbill {

// ---------------------------------------------------------------------------
// Fixed-point display numbers

/// value = units / 10^scale. All display numbers are held this way so that
/// rendering never does floating-point arithmetic.
struct Fixed {
    std::int64_t units = 0;
    int scale = 2;

    friend bool operator==(const Fixed&, const Fixed&) = default;
};

namespace detail {

inline std::int64_t pow10(int e)
{
    std::int64_t p = 1;
    for (int i = 0; i < e; ++i) {
        p *= 10;
    }
    return p;
}

/// Integer division rounding half away from zero; den > 0.
inline std::int64_t round_div(std::int64_t num, std::int64_t den)
{
    std::int64_t q = num / den;
    const std::int64_t r = num % den;
    if (2 * (r < 0 ? -r : r) >= den) {
        q += num < 0 ? -1 : 1;
    }
    return q;
}

} // namespace detail

/// Rounds half away from zero at `scale` decimals.
inline Fixed to_fixed(double value, int scale)
{
    if (!std::isfinite(value)) {
        throw DomainError("to_fixed: non-finite value");
    }
    return Fixed{std::llround(value * static_cast<double>(detail::pow10(scale))), scale};
}

inline std::string format_fixed(const Fixed& f)
{
    const std::int64_t p = detail::pow10(f.scale);
    const std::int64_t mag = f.units < 0 ? -f.units : f.units;
    std::string out = f.units < 0 ? "-" : "";
    out += std::to_string(mag / p);
    if (f.scale > 0) {
        std::string frac = std::to_string(mag % p);
        out += '.';
        out.append(static_cast<std::size_t>(f.scale) - frac.size(), '0');
        out += frac;
    }
    return out;
}

/// Drops trailing zero decimals down to `min_scale` (tariff rates: 0.1800 -> 0.18).
inline Fixed trim_fixed(Fixed f, int min_scale)
{
    while (f.scale > min_scale && f.units % 10 == 0) {
        f.units /= 10;
        --f.scale;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Bill input

struct BillingPeriod {
    int first_day = 0;
    int n_days = kDaysPerBillingMonth;

    int end_day() const noexcept { return first_day + n_days; }
};

/// Consecutive 30-day periods; a trailing partial period is dropped.
inline std::vector<BillingPeriod> billing_periods(int corpus_days)
{
    std::vector<BillingPeriod> out;
    for (int d = 0; d + kDaysPerBillingMonth <= corpus_days; d += kDaysPerBillingMonth) {
        out.push_back({d, kDaysPerBillingMonth});
    }
    return out;
}

struct BillBlock {
    int index = 1; // 1-based
    Fixed kwh;
    Fixed rate{0, 4};
    Fixed charge;
};

struct BillInput {
    CustomerId customer;
    BillingPeriod period;
    int period_first_day = 1; // 1-based display
    int period_last_day = 30;
    Fixed kwh_total;
    std::vector<BillBlock> blocks;
    Fixed subtotal;
    Fixed tax_rate_pct{0, 1};
    Fixed tax;
    Fixed total;
    std::optional<Fixed> prev_period_kwh;
    std::optional<Fixed> delta_kwh;
    std::optional<Fixed> delta_pct; // absent without a positive previous period
    Fixed co2_total_kg;
    Fixed expected_kwh;

    void validate() const
    {
        std::int64_t sum_kwh = 0;
        std::int64_t sum_charge = 0;
        for (const auto& b : blocks) {
            sum_kwh += b.kwh.units;
            sum_charge += b.charge.units;
            if (b.charge.units != detail::round_div(b.kwh.units * b.rate.units, detail::pow10(b.rate.scale))) {
                throw DomainError("bill input: block charge does not equal kWh x rate");
            }
        }
        if (sum_kwh != kwh_total.units || sum_charge != subtotal.units || subtotal.units + tax.units != total.units) {
            throw DomainError("bill input: totals are inconsistent");
        }
        if (prev_period_kwh && (!delta_kwh || delta_kwh->units != kwh_total.units - prev_period_kwh->units)) {
            throw DomainError("bill input: delta does not match the previous period");
        }
    }
};

/// Prices a period from already-measured quantities. Every number that a
/// statement may show is computed here, at its display precision.
inline BillInput price_bill(CustomerId customer, BillingPeriod period, double kwh, std::optional<double> prev_kwh, double co2_kg,
                            double expected_kwh, const TariffSchedule& tariff)
{
    tariff.validate();
    if (!(kwh >= 0.0) || !(co2_kg >= 0.0) || (prev_kwh && !(*prev_kwh >= 0.0))) {
        throw DomainError("price_bill: quantities must be non-negative");
    }
    BillInput in;
    in.customer = customer;
    in.period = period;
    in.period_first_day = period.first_day + 1;
    in.period_last_day = period.end_day();
    in.kwh_total = to_fixed(kwh, 2);
    in.co2_total_kg = to_fixed(co2_kg, 2);
    in.expected_kwh = to_fixed(expected_kwh, 2);

    std::int64_t remaining = in.kwh_total.units;
    std::int64_t lower = 0;
    std::int64_t subtotal = 0;
    for (std::size_t b = 0; b < tariff.blocks.size(); ++b) {
        const auto& tb = tariff.blocks[b];
        const bool last = !std::isfinite(tb.upper_kwh);
        const std::int64_t upper = last ? 0 : std::llround(tb.upper_kwh * 100.0);
        const std::int64_t used = last ? remaining : std::min(remaining, upper - lower);
        BillBlock block;
        block.index = static_cast<int>(b) + 1;
        block.kwh = Fixed{used, 2};
        block.rate = to_fixed(tb.rate, 4);
        block.charge = Fixed{detail::round_div(used * block.rate.units, detail::pow10(4)), 2};
        subtotal += block.charge.units;
        remaining -= used;
        lower = upper;
        in.blocks.push_back(block);
    }
    in.subtotal = Fixed{subtotal, 2};
    in.tax_rate_pct = to_fixed(tariff.tax_rate * 100.0, 1);
    in.tax = Fixed{detail::round_div(subtotal * to_fixed(tariff.tax_rate, 4).units, detail::pow10(4)), 2};
    in.total = Fixed{in.subtotal.units + in.tax.units, 2};

    if (prev_kwh) {
        in.prev_period_kwh = to_fixed(*prev_kwh, 2);
        in.delta_kwh = Fixed{in.kwh_total.units - in.prev_period_kwh->units, 2};
        if (in.prev_period_kwh->units > 0) {
            in.delta_pct = Fixed{detail::round_div(in.delta_kwh->units * 1000, in.prev_period_kwh->units), 1};
        }
    }
    in.validate();
    return in;
}

/// Bill input for one customer and period. Consumption and CO2 come from the
/// meter; the expected consumption is the mean daily q50 total over the
/// forecast-covered days of the period, scaled to the period length.
inline BillInput assemble_bill_input(const Corpus& corpus, std::size_t customer, BillingPeriod period, const CarbonEstimate& metered,
                                     const MethodEvaluation& forecasts)
{
    if (period.first_day < 0 || period.n_days <= 0 || period.end_day() > corpus.config.n_days) {
        throw RangeError("assemble_bill_input: period outside the corpus");
    }
    const auto& readings = corpus.meters.at(customer).readings;
    auto sum_days = [&](int first, int n) {
        double s = 0.0;
        for (std::size_t i = static_cast<std::size_t>(first) * kIntervalsPerDay; i < static_cast<std::size_t>(first + n) * kIntervalsPerDay;
             ++i) {
            s += readings[i];
        }
        return s;
    };
    const double kwh = sum_days(period.first_day, period.n_days);
    std::optional<double> prev;
    if (period.first_day >= period.n_days) {
        prev = sum_days(period.first_day - period.n_days, period.n_days);
    }

    const FootprintReport fp = co2_rollup(metered, Granularity::Daily);
    double co2 = 0.0;
    for (int d = period.first_day; d < period.end_day(); ++d) {
        co2 += fp.daily_kg.at(static_cast<std::size_t>(d - metered.first_day));
    }

    double expected = 0.0;
    int covered = 0;
    for (int d = std::max(period.first_day, forecasts.first_forecast_day); d < period.end_day(); ++d) {
        const auto& f = forecasts.customer_forecast(customer, d);
        for (double v : f.q50) {
            expected += v;
        }
        ++covered;
    }
    expected = covered > 0 ? expected / covered * period.n_days : 0.0;

    return price_bill(corpus.meters[customer].id, period, kwh, prev, co2, expected, corpus.tariff);
}

// ---------------------------------------------------------------------------
// Vocabulary and statement fields

using FieldTable = std::map<std::string, std::string, std::less<>>;

inline std::string customer_label(CustomerId id)
{
    std::string digits = std::to_string(id.value);
    return "C" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

/// Named canonical strings for every numeric field of a bill input.
inline FieldTable statement_fields(const BillInput& in)
{
    FieldTable t;
    t["period_first_day"] = std::to_string(in.period_first_day);
    t["period_last_day"] = std::to_string(in.period_last_day);
    t["period_days"] = std::to_string(in.period.n_days);
    t["kwh_total"] = format_fixed(in.kwh_total);
    t["expected_kwh"] = format_fixed(in.expected_kwh);
    for (const auto& b : in.blocks) {
        const std::string key = "block." + std::to_string(b.index) + ".";
        t[key + "index"] = std::to_string(b.index);
        t[key + "kwh"] = format_fixed(b.kwh);
        t[key + "rate"] = format_fixed(trim_fixed(b.rate, 2));
        t[key + "charge"] = format_fixed(b.charge);
    }
    t["subtotal"] = format_fixed(in.subtotal);
    t["tax_rate_pct"] = format_fixed(in.tax_rate_pct);
    t["tax"] = format_fixed(in.tax);
    t["total"] = format_fixed(in.total);
    if (in.prev_period_kwh) {
        t["prev_kwh"] = format_fixed(*in.prev_period_kwh);
        t["delta_kwh"] = format_fixed(*in.delta_kwh);
    }
    if (in.delta_pct) {
        t["delta_pct"] = format_fixed(*in.delta_pct);
    }
    t["co2_kg"] = format_fixed(in.co2_total_kg);
    return t;
}

using NumericVocabulary = std::set<std::string, std::less<>>;

inline NumericVocabulary numeric_vocabulary(const BillInput& in)
{
    NumericVocabulary v;
    for (const auto& [name, value] : statement_fields(in)) {
        v.insert(value);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Generation

struct NumericSpan {
    std::size_t begin = 0; // byte offsets into the text, [begin, end)
    std::size_t end = 0;
    std::string field;
    std::string value;
};

struct BillStatement {
    CustomerId customer;
    BillingPeriod period;
    std::string text;
    std::vector<NumericSpan> numeric_spans;
};

/// Any generator that turns a field table into text and reports where each
/// numeric value landed.
class StatementBackend {
public:
    virtual ~StatementBackend() = default;
    virtual std::vector<std::string> fields_used(const BillInput& input) const = 0;
    virtual BillStatement render(const BillInput& input, const FieldTable& fields) const = 0;
};

/// Fills `{field}` slots of a fixed English template. Literal template text
/// carries no digits.
class TemplateBackend final : public StatementBackend {
public:
    std::vector<std::string> fields_used(const BillInput& input) const override
    {
        std::vector<std::string> names;
        const std::string t = make_template(input);
        for (std::size_t pos = 0; (pos = t.find('{', pos)) != std::string::npos;) {
            const std::size_t close = t.find('}', pos);
            names.push_back(t.substr(pos + 1, close - pos - 1));
            pos = close + 1;
        }
        return names;
    }

    BillStatement render(const BillInput& input, const FieldTable& fields) const override
    {
        const std::string t = make_template(input);
        BillStatement s;
        s.customer = input.customer;
        s.period = input.period;
        std::size_t pos = 0;
        while (pos < t.size()) {
            const std::size_t open = t.find('{', pos);
            if (open == std::string::npos) {
                s.text.append(t, pos, std::string::npos);
                break;
            }
            s.text.append(t, pos, open - pos);
            const std::size_t close = t.find('}', open);
            if (close == std::string::npos) {
                throw GenerationError("template: unterminated slot");
            }
            const std::string name = t.substr(open + 1, close - open - 1);
            const auto it = fields.find(name);
            if (it == fields.end()) {
                throw GenerationError("template slot references missing field '" + name + "'");
            }
            s.numeric_spans.push_back({s.text.size(), s.text.size() + it->second.size(), name, it->second});
            s.text += it->second;
            pos = close + 1;
        }
        return s;
    }

    static std::string make_template(const BillInput& in)
    {
        std::string t;
        t += "Energy statement for customer " + customer_label(in.customer) + "\n";
        t += "Billing period: day {period_first_day} to day {period_last_day} ({period_days} days)\n\n";
        t += "You used {kwh_total} kWh this period. Based on your usual pattern we expected about {expected_kwh} kWh.\n\n";
        for (const auto& b : in.blocks) {
            const std::string key = "block." + std::to_string(b.index) + ".";
            t += "  Block {" + key + "index}: {" + key + "kwh} kWh at {" + key + "rate} per kWh = {" + key + "charge}\n";
        }
        t += "  Subtotal: {subtotal}\n";
        t += "  Tax at {tax_rate_pct} percent: {tax}\n";
        t += "  Total due: {total}\n\n";
        if (in.prev_period_kwh) {
            t += "Last period you used {prev_kwh} kWh; the change is {delta_kwh} kWh";
            t += in.delta_pct ? " ({delta_pct} percent).\n" : ".\n";
        } else {
            t += "No previous period is on record for comparison.\n";
        }
        t += "The electricity you used was responsible for {co2_kg} kg of carbon dioxide.\n";
        return t;
    }
};

struct DecodingPolicy {
    enum class Kind { Constrained, UnconstrainedFaulty };
    Kind kind = Kind::Constrained;
    std::uint64_t seed = 0;

    static DecodingPolicy constrained() { return {}; }
    static DecodingPolicy faulty(std::uint64_t seed) { return {Kind::UnconstrainedFaulty, seed}; }
};

namespace detail {

inline Fixed parse_fixed(std::string_view s)
{
    Fixed f{0, 0};
    bool neg = false;
    bool frac = false;
    for (char ch : s) {
        if (ch == '-') {
            neg = true;
        } else if (ch == '.') {
            frac = true;
        } else {
            f.units = f.units * 10 + (ch - '0');
            f.scale += frac ? 1 : 0;
        }
    }
    if (neg) {
        f.units = -f.units;
    }
    return f;
}

/// Moves one field used by the backend to a value outside the vocabulary.
inline void inject_fault(FieldTable& fields, const std::vector<std::string>& used, const NumericVocabulary& vocab, std::uint64_t seed)
{
    if (used.empty()) {
        throw GenerationError("faulty policy: backend uses no numeric fields");
    }
    Rng rng(seed);
    const std::string& name = used[rng.below(used.size())];
    const Fixed original = parse_fixed(fields.at(name));
    for (int attempt = 0;; ++attempt) {
        const auto magnitude = static_cast<std::int64_t>(1 + rng.below(99)) * (attempt < 64 ? 1 : attempt);
        std::int64_t delta = (rng() >> 63) ? magnitude : -magnitude;
        if (original.units + delta < 0) {
            delta = magnitude;
        }
        const std::string candidate = format_fixed(Fixed{original.units + delta, original.scale});
        if (!vocab.contains(candidate)) {
            fields[name] = candidate;
            return;
        }
    }
}

} // namespace detail

/// Generates a statement. Under the constrained policy every emitted numeric
/// span must be a vocabulary member, whatever the backend; the faulty policy
/// perturbs one used field before rendering.
inline BillStatement generate_statement(const BillInput& input, const DecodingPolicy& policy, const StatementBackend& backend)
{
    const NumericVocabulary vocab = numeric_vocabulary(input);
    FieldTable fields = statement_fields(input);
    if (policy.kind == DecodingPolicy::Kind::UnconstrainedFaulty) {
        detail::inject_fault(fields, backend.fields_used(input), vocab, policy.seed);
    }
    BillStatement s = backend.render(input, fields);
    if (policy.kind == DecodingPolicy::Kind::Constrained) {
        for (const auto& span : s.numeric_spans) {
            if (!vocab.contains(span.value)) {
                throw GenerationError("constrained decoding rejected value '" + span.value + "' for field '" + span.field + "'");
            }
        }
    }
    return s;
}

inline BillStatement generate_statement(const BillInput& input, const DecodingPolicy& policy = {})
{
    return generate_statement(input, policy, TemplateBackend{});
}

// ---------------------------------------------------------------------------
// Audit

struct NumericToken {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string text;
};

/// Numbers as a reader sees them: optional leading minus, digits, optional
/// fraction. Digits glued to letters (C0042, CO2) are part of a word.
inline std::vector<NumericToken> scan_numeric_tokens(std::string_view text)
{
    auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    std::vector<NumericToken> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            while (i < text.size() && is_word(text[i])) {
                ++i;
            }
            continue;
        }
        const bool minus = c == '-' && i + 1 < text.size() && is_digit(text[i + 1]) && (i == 0 || !is_word(text[i - 1]));
        if (!is_digit(c) && !minus) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (minus) {
            ++i;
        }
        while (i < text.size() && is_digit(text[i])) {
            ++i;
        }
        if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1])) {
            ++i;
            while (i < text.size() && is_digit(text[i])) {
                ++i;
            }
        }
        if (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
            // e.g. "12abc": a word, not a number
            while (i < text.size() && is_word(text[i])) {
                ++i;
            }
            continue;
        }
        out.push_back({start, i, std::string(text.substr(start, i - start))});
    }
    return out;
}

struct AuditMismatch {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string field;    // empty when no span claims the token
    std::string expected; // empty when the field is unknown
    std::string found;
};

struct AuditReport {
    enum class Verdict { Pass, Fail };
    Verdict verdict = Verdict::Pass;
    std::vector<AuditMismatch> mismatches;

    bool passed() const noexcept { return verdict == Verdict::Pass; }
};

namespace detail {

inline std::string audit_render(const Fixed& f) { return format_fixed(f); }

/// The value a field name must show, looked up directly on the bill input.
inline std::optional<std::string> audit_expected(const BillInput& in, std::string_view field)
{
    if (field == "period_first_day") return std::to_string(in.period_first_day);
    if (field == "period_last_day") return std::to_string(in.period_last_day);
    if (field == "period_days") return std::to_string(in.period_last_day - in.period_first_day + 1);
    if (field == "kwh_total") return audit_render(in.kwh_total);
    if (field == "expected_kwh") return audit_render(in.expected_kwh);
    if (field == "subtotal") return audit_render(in.subtotal);
    if (field == "tax_rate_pct") return audit_render(in.tax_rate_pct);
    if (field == "tax") return audit_render(in.tax);
    if (field == "total") return audit_render(in.total);
    if (field == "co2_kg") return audit_render(in.co2_total_kg);
    if (field == "prev_kwh") return in.prev_period_kwh ? std::optional(audit_render(*in.prev_period_kwh)) : std::nullopt;
    if (field == "delta_kwh") return in.delta_kwh ? std::optional(audit_render(*in.delta_kwh)) : std::nullopt;
    if (field == "delta_pct") return in.delta_pct ? std::optional(audit_render(*in.delta_pct)) : std::nullopt;
    if (field.starts_with("block.")) {
        const std::size_t dot = field.find('.', 6);
        if (dot == std::string_view::npos) return std::nullopt;
        const std::string idx(field.substr(6, dot - 6));
        const std::string_view part = field.substr(dot + 1);
        for (const auto& b : in.blocks) {
            if (std::to_string(b.index) != idx) continue;
            if (part == "index") return idx;
            if (part == "kwh") return audit_render(b.kwh);
            if (part == "rate") return audit_render(trim_fixed(b.rate, 2));
            if (part == "charge") return audit_render(b.charge);
        }
    }
    return std::nullopt;
}

} // namespace detail

/// Re-reads every number in the text. Each one must sit exactly on a span,
/// equal the value of the field that span claims, and be a vocabulary member.
inline AuditReport audit_statement(const BillStatement& statement, const BillInput& input)
{
    const NumericVocabulary vocab = numeric_vocabulary(input);
    AuditReport report;
    std::vector<bool> span_seen(statement.numeric_spans.size(), false);
    for (const auto& tok : scan_numeric_tokens(statement.text)) {
        const NumericSpan* span = nullptr;
        for (std::size_t k = 0; k < statement.numeric_spans.size(); ++k) {
            const auto& s = statement.numeric_spans[k];
            if (s.begin == tok.begin && s.end == tok.end) {
                span = &s;
                span_seen[k] = true;
                break;
            }
        }
        if (!span) {
            report.mismatches.push_back({tok.begin, tok.end, "", "", tok.text});
            continue;
        }
        const auto expected = detail::audit_expected(input, span->field);
        if (!expected || *expected != tok.text || !vocab.contains(tok.text)) {
            report.mismatches.push_back({tok.begin, tok.end, span->field, expected.value_or(""), tok.text});
        }
    }
    for (std::size_t k = 0; k < span_seen.size(); ++k) {
        if (!span_seen[k]) {
            const auto& s = statement.numeric_spans[k];
            report.mismatches.push_back({s.begin, s.end, s.field, detail::audit_expected(input, s.field).value_or(""), ""});
        }
    }
    report.verdict = report.mismatches.empty() ? AuditReport::Verdict::Pass : AuditReport::Verdict::Fail;
    return report;
}

struct PanelItem {
    BillStatement statement;
    BillInput input;
};

/// Fraction of statements whose audit fails.
inline double hallucination_rate(std::span<const PanelItem> panel)
{
    if (panel.empty()) {
        throw DomainError("hallucination_rate: empty panel");
    }
    std::size_t failed = 0;
    for (const auto& item : panel) {
        failed += audit_statement(item.statement, item.input).passed() ? 0 : 1;
    }
    return static_cast<double>(failed) / static_cast<double>(panel.size());
}

} // namespace gridbill
