#pragma once

#include <string>
#include <vector>

#include "etnet/error.hpp"

namespace etnet {

// One traffic series: `values[t]` is the volume observed during bin t and
// `interval` is the bin width in seconds. `label` is free-form audit metadata
// ("normal", "anomaly-3", a cluster id); training never reads it.
struct TimeSeries {
    std::string id;
    double interval = 60.0;
    std::string label;
    std::vector<double> values;

    std::size_t length() const { return values.size(); }
};

void validate(const TimeSeries& x);

using Corpus = std::vector<TimeSeries>;

// Corpus CSV: one series per row, columns id, interval, label (may be empty),
// then the values. No header row.
void write_corpus_csv(const std::string& path, const Corpus& data);
Corpus read_corpus_csv(const std::string& path);

// Raw stream format: one value per line, blank lines ignored.
std::vector<double> read_value_stream(const std::string& path);

// Min-max scaling to [0,1], fit over every bin of every series in a corpus.
// A constant corpus maps to all zeros.
struct MinMaxScaler {
    double lo = 0.0;
    double hi = 1.0;

    static MinMaxScaler fit(const Corpus& data);
    std::vector<double> transform(const std::vector<double>& v) const;
    std::vector<double> inverse(const std::vector<double>& v) const;
};

} // namespace etnet
