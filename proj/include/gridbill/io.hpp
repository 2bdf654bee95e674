#pragma once

// File formats: CSV exports, instance JSON, statement sidecars, checksums.

#include "gridbill/billgen.hpp"
#include "gridbill/carbon.hpp"
#include "gridbill/corpus.hpp"
#include "gridbill/error.hpp"
#include "gridbill/forecast.hpp"
#include "gridbill/qubo.hpp"
#include "gridbill/solver.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gridbill {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Shortest text that parses back to the same double.
inline std::string fmt(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s)
{
    if (s == "nan") {
        return std::nan("");
    }
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw IoError("not a number: '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline void write_file(const fs::path& path, std::string_view content)
{
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

inline std::string file_checksum(const fs::path& path) { return fnv1a_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Corpus

inline std::string meter_csv(const Corpus& corpus)
{
    std::string out = "customer_id,day,interval,kwh\n";
    out.reserve(corpus.reading_count() * 24);
    for (const auto& m : corpus.meters) {
        const std::string id = std::to_string(m.id.value) + ",";
        for (std::size_t i = 0; i < m.readings.size(); ++i) {
            out += id;
            out += std::to_string(i / kIntervalsPerDay);
            out += ',';
            out += std::to_string(i % kIntervalsPerDay);
            out += ',';
            out += fmt(m.readings[i]);
            out += '\n';
        }
    }
    return out;
}

inline std::string ci_csv(const CarbonIntensitySeries& ci)
{
    std::string out = "day,interval,ci_g_per_kwh\n";
    for (std::size_t i = 0; i < ci.values.size(); ++i) {
        out += std::to_string(i / kIntervalsPerDay) + "," + std::to_string(i % kIntervalsPerDay) + "," + fmt(ci.values[i]) + "\n";
    }
    return out;
}

/// Per-customer readings from a meter CSV, indexed by customer order of first appearance.
inline std::vector<std::vector<double>> parse_meter_csv(std::string_view text)
{
    std::vector<std::vector<double>> out;
    std::uint64_t last_id = ~0ULL;
    std::size_t pos = text.find('\n');
    if (pos == std::string_view::npos || text.substr(0, pos) != "customer_id,day,interval,kwh") {
        throw IoError("meter csv: bad header");
    }
    ++pos;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const auto cols = split_csv_line(text.substr(pos, eol - pos));
        if (cols.size() != 4) {
            throw IoError("meter csv: expected 4 columns");
        }
        const auto id = static_cast<std::uint64_t>(parse_double(cols[0]));
        if (id != last_id) {
            out.emplace_back();
            last_id = id;
        }
        out.back().push_back(parse_double(cols[3]));
        pos = eol + 1;
    }
    return out;
}

inline std::vector<double> parse_ci_csv(std::string_view text)
{
    std::vector<double> out;
    std::size_t pos = text.find('\n');
    if (pos == std::string_view::npos || text.substr(0, pos) != "day,interval,ci_g_per_kwh") {
        throw IoError("ci csv: bad header");
    }
    ++pos;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = text.size();
        }
        const auto cols = split_csv_line(text.substr(pos, eol - pos));
        if (cols.size() != 3) {
            throw IoError("ci csv: expected 3 columns");
        }
        out.push_back(parse_double(cols[2]));
        pos = eol + 1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Forecasts

struct MetricsRow {
    std::string method;
    ForecastMetrics metrics;
    double coverage = 0.0;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& rows)
{
    std::string out = "method,mape_pct,rmse_kwh,pinball,coverage_q10_q90\n";
    for (const auto& r : rows) {
        out += r.method + "," + fmt(r.metrics.mape) + "," + fmt(r.metrics.rmse) + "," + fmt(r.metrics.pinball) + "," + fmt(r.coverage) + "\n";
    }
    return out;
}

/// Per-customer quantile forecasts for days [first_day, end_day).
inline std::string forecast_csv(const Corpus& corpus, const MethodEvaluation& ev, int first_day, int end_day)
{
    std::string out = "customer_id,day,hour,q10,q50,q90\n";
    for (std::size_t c = 0; c < corpus.meters.size(); ++c) {
        const std::string id = std::to_string(corpus.meters[c].id.value) + ",";
        for (int d = first_day; d < end_day; ++d) {
            const auto& f = ev.customer_forecast(c, d);
            for (int h = 0; h < kHoursPerDay; ++h) {
                out += id + std::to_string(d) + "," + std::to_string(h) + "," + fmt(f.q10[h]) + "," + fmt(f.q50[h]) + "," + fmt(f.q90[h]) + "\n";
            }
        }
    }
    return out;
}

/// Aggregate test-window series: actual, point and band per hour.
inline std::string aggregate_forecast_csv(const MethodEvaluation& ev, int first_test_day)
{
    std::string out = "day,hour,actual_kwh,point_kwh,q10,q50,q90\n";
    for (std::size_t k = 0; k < ev.aggregate_actual.size(); ++k) {
        const std::size_t d = k / kHoursPerDay;
        const auto h = static_cast<int>(k % kHoursPerDay);
        const auto& band = ev.aggregate_bands[d];
        out += std::to_string(first_test_day + static_cast<int>(d)) + "," + std::to_string(h) + "," + fmt(ev.aggregate_actual[k]) + "," +
               fmt(ev.aggregate_point[k]) + "," + fmt(band.q10[h]) + "," + fmt(band.q50[h]) + "," + fmt(band.q90[h]) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Carbon

struct Co2DayRow {
    CustomerId customer;
    int day = 0;
    double kg_metered = 0.0;
    double kg_projected = 0.0;
    double pct_error = 0.0;
};

inline std::string co2_daily_csv(const std::vector<Co2DayRow>& rows)
{
    std::string out = "customer_id,day,kg_metered,kg_projected,pct_error\n";
    for (const auto& r : rows) {
        out += std::to_string(r.customer.value) + "," + std::to_string(r.day) + "," + fmt(r.kg_metered) + "," + fmt(r.kg_projected) + "," +
               fmt(r.pct_error) + "\n";
    }
    return out;
}

struct Co2MonthRow {
    CustomerId customer;
    int month = 0;
    double kg_metered = 0.0;
    double kg_flat_ci = 0.0; // same consumption at the mean CI
};

inline std::string co2_monthly_csv(const std::vector<Co2MonthRow>& rows)
{
    std::string out = "customer_id,month,kg_metered,kg_flat_ci\n";
    for (const auto& r : rows) {
        out += std::to_string(r.customer.value) + "," + std::to_string(r.month) + "," + fmt(r.kg_metered) + "," + fmt(r.kg_flat_ci) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// QUBO instances and solver traces

inline json candidate_to_json(const ShiftCandidate& c)
{
    return json{{"customer_id", c.customer.value},      {"archetype", std::string(to_string(c.archetype))},
                {"from_hour", c.from_hour},             {"to_hour", c.to_hour},
                {"expected_kwh", c.expected_kwh},       {"worst_case_kwh", c.worst_case_kwh},
                {"co2_saved_kg", c.co2_saved_kg},       {"discomfort", c.discomfort}};
}

inline json instance_to_json(const QuboInstance& inst)
{
    json j;
    const auto n = static_cast<Eigen::Index>(inst.size());
    j["n"] = n;
    std::vector<double> q;
    q.reserve(static_cast<std::size_t>(n * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < n; ++k) {
            q.push_back(inst.q(i, k));
        }
    }
    j["q"] = q;
    j["candidates"] = json::array();
    for (const auto& c : inst.candidates) {
        j["candidates"].push_back(candidate_to_json(c));
    }
    return j;
}

inline Archetype archetype_from_string(std::string_view s)
{
    for (Archetype a : {Archetype::Low, Archetype::Mid, Archetype::Heavy}) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw IoError("unknown archetype '" + std::string(s) + "'");
}

inline QuboInstance instance_from_json(const json& j)
{
    try {
        const auto n = j.at("n").get<Eigen::Index>();
        const auto q = j.at("q").get<std::vector<double>>();
        if (n < 0 || q.size() != static_cast<std::size_t>(n * n)) {
            throw IoError("instance json: q must hold n*n entries");
        }
        QuboInstance inst;
        inst.q.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index k = 0; k < n; ++k) {
                inst.q(i, k) = q[static_cast<std::size_t>(i * n + k)];
            }
        }
        if (j.contains("candidates")) {
            for (const auto& c : j.at("candidates")) {
                ShiftCandidate sc;
                sc.customer = CustomerId{c.at("customer_id").get<std::uint32_t>()};
                sc.archetype = archetype_from_string(c.at("archetype").get<std::string>());
                sc.from_hour = c.at("from_hour").get<int>();
                sc.to_hour = c.at("to_hour").get<int>();
                sc.expected_kwh = c.at("expected_kwh").get<double>();
                sc.worst_case_kwh = c.at("worst_case_kwh").get<double>();
                sc.co2_saved_kg = c.at("co2_saved_kg").get<double>();
                sc.discomfort = c.at("discomfort").get<double>();
                inst.candidates.push_back(sc);
            }
        }
        inst.validate();
        return inst;
    } catch (const json::exception& e) {
        throw IoError(std::string("instance json: ") + e.what());
    }
}

inline QuboInstance load_instance(const fs::path& path)
{
    try {
        return instance_from_json(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw IoError("instance json: " + std::string(e.what()));
    }
}

struct NamedTrace {
    std::string method;
    SolverTrace trace;
};

inline std::string trace_csv(const std::vector<NamedTrace>& traces)
{
    std::string out = "method,iteration,objective\n";
    for (const auto& t : traces) {
        for (std::size_t i = 0; i < t.trace.size(); ++i) {
            out += t.method + "," + std::to_string(i) + "," + fmt(t.trace[i]) + "\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statements

struct PanelRow {
    std::string policy;
    std::size_t panel_size = 0;
    double hallucination_rate = 0.0;
};

inline std::string panel_csv(const std::vector<PanelRow>& rows)
{
    std::string out = "policy,panel_size,hallucination_rate\n";
    for (const auto& r : rows) {
        out += r.policy + "," + std::to_string(r.panel_size) + "," + fmt(r.hallucination_rate) + "\n";
    }
    return out;
}

inline json audit_to_json(const AuditReport& a)
{
    json j;
    j["verdict"] = a.passed() ? "Pass" : "Fail";
    j["mismatches"] = json::array();
    for (const auto& m : a.mismatches) {
        j["mismatches"].push_back({{"begin", m.begin}, {"end", m.end}, {"field", m.field}, {"expected", m.expected}, {"found", m.found}});
    }
    return j;
}

inline json statement_sidecar(const BillStatement& s, const AuditReport& audit)
{
    json j;
    j["customer_id"] = s.customer.value;
    j["period"] = {{"first_day", s.period.first_day}, {"n_days", s.period.n_days}};
    j["numeric_spans"] = json::array();
    for (const auto& sp : s.numeric_spans) {
        j["numeric_spans"].push_back({{"begin", sp.begin}, {"end", sp.end}, {"field", sp.field}, {"value", sp.value}});
    }
    j["audit"] = audit_to_json(audit);
    return j;
}

} // namespace gridbill
