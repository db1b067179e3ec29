#include "etnet/series.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace etnet {

void validate(const TimeSeries& x) {
    require(!x.values.empty(), "shape", "series '" + x.id + "' has no values");
    require(x.interval > 0.0, "config", "series '" + x.id + "' has non-positive interval");
    for (double v : x.values)
        require(std::isfinite(v), "numeric", "series '" + x.id + "' contains a non-finite value");
}

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void write_corpus_csv(const std::string& path, const Corpus& data) {
    std::ofstream out(path);
    require(out.good(), "io", "cannot open '" + path + "' for writing");
    for (const TimeSeries& x : data) {
        validate(x);
        require(x.id.find(',') == std::string::npos && x.label.find(',') == std::string::npos,
                "io", "series id/label must not contain commas");
        out << x.id << ',' << format_double(x.interval) << ',' << x.label;
        for (double v : x.values) out << ',' << format_double(v);
        out << '\n';
    }
    require(out.good(), "io", "write to '" + path + "' failed");
}

namespace {

double parse_double(const std::string& field, const std::string& path, std::size_t lineno) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        fail("io", path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
    }
    require(used == field.size(), "io",
            path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
    return v;
}

} // namespace

Corpus read_corpus_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "io", "cannot open '" + path + "'");
    Corpus data;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        require(fields.size() >= 4, "io",
                path + ":" + std::to_string(lineno) + ": expected id,interval,label,values...");
        TimeSeries x;
        x.id = fields[0];
        x.interval = parse_double(fields[1], path, lineno);
        x.label = fields[2];
        x.values.reserve(fields.size() - 3);
        for (std::size_t i = 3; i < fields.size(); ++i)
            x.values.push_back(parse_double(fields[i], path, lineno));
        validate(x);
        data.push_back(std::move(x));
    }
    return data;
}

std::vector<double> read_value_stream(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "io", "cannot open '" + path + "'");
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        values.push_back(parse_double(line, path, lineno));
    }
    return values;
}

MinMaxScaler MinMaxScaler::fit(const Corpus& data) {
    require(!data.empty(), "shape", "scaler fit: empty corpus");
    MinMaxScaler s;
    s.lo = std::numeric_limits<double>::infinity();
    s.hi = -std::numeric_limits<double>::infinity();
    for (const TimeSeries& x : data) {
        validate(x);
        for (double v : x.values) {
            s.lo = std::min(s.lo, v);
            s.hi = std::max(s.hi, v);
        }
    }
    return s;
}

std::vector<double> MinMaxScaler::transform(const std::vector<double>& v) const {
    double span = hi - lo;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out[i] = span > 0.0 ? (v[i] - lo) / span : 0.0;
    return out;
}

std::vector<double> MinMaxScaler::inverse(const std::vector<double>& v) const {
    double span = hi - lo;
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = lo + v[i] * span;
    return out;
}

} // namespace etnet
