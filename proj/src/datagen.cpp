#include "etnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace etnet {

WaveKind wave_kind_from_string(const std::string& s) {
    if (s == "sine") return WaveKind::Sine;
    if (s == "square") return WaveKind::Square;
    if (s == "triangle") return WaveKind::Triangle;
    fail("config", "unknown wave kind '" + s + "'");
}

std::string to_string(WaveKind kind) {
    switch (kind) {
        case WaveKind::Sine: return "sine";
        case WaveKind::Square: return "square";
        case WaveKind::Triangle: return "triangle";
    }
    fail("config", "unknown wave kind");
}

TimeSeries gen_wave(WaveKind kind, std::size_t length, double period, double amplitude,
                    double phase, std::uint64_t) {
    require(length >= 2, "config", "gen_wave: length must be >= 2");
    require(period >= 2.0, "config", "gen_wave: period must be >= 2");
    TimeSeries x;
    x.id = to_string(kind);
    x.label = "normal";
    x.values.resize(length);
    for (std::size_t t = 0; t < length; ++t) {
        double theta = 2.0 * M_PI * static_cast<double>(t) / period + phase;
        double s = std::sin(theta);
        switch (kind) {
            case WaveKind::Sine: x.values[t] = amplitude * s; break;
            case WaveKind::Square: x.values[t] = s >= 0.0 ? amplitude : -amplitude; break;
            case WaveKind::Triangle:
                x.values[t] = (2.0 * amplitude / M_PI) * std::asin(s);
                break;
        }
    }
    return x;
}

EventSpec make_mtc_event(std::size_t length, std::size_t period, double intensity,
                         std::uint64_t seed) {
    require(length >= 1, "config", "make_mtc_event: empty event");
    require(period >= 1, "config", "make_mtc_event: period must be >= 1");
    require(intensity >= 0.0, "config", "make_mtc_event: negative intensity");
    Rng rng(seed);
    std::size_t offset = rng.uniform_index(period);
    EventSpec e;
    e.kind = EventKind::Mtc;
    e.indicator.resize(length, 0.0);
    e.intensity.resize(length, 0.0);
    for (std::size_t t = 0; t < length; ++t) {
        if ((t + offset) % period == 0) {
            e.indicator[t] = 1.0;
            e.intensity[t] = intensity * (0.8 + 0.4 * rng.uniform());
        }
    }
    return e;
}

EventSpec make_htc_event(std::size_t length, std::size_t bursts, std::size_t burst_len,
                         double intensity, std::uint64_t seed) {
    require(length >= 1, "config", "make_htc_event: empty event");
    require(burst_len >= 1 && burst_len <= length, "config", "make_htc_event: bad burst length");
    require(intensity >= 0.0, "config", "make_htc_event: negative intensity");
    Rng rng(seed);
    EventSpec e;
    e.kind = EventKind::Htc;
    e.indicator.resize(length, 0.0);
    e.intensity.resize(length, 0.0);
    for (std::size_t b = 0; b < bursts; ++b) {
        std::size_t start = rng.uniform_index(length - burst_len + 1);
        for (std::size_t t = start; t < start + burst_len; ++t) {
            e.indicator[t] = 1.0;
            e.intensity[t] = intensity * (0.5 + rng.uniform());
        }
    }
    return e;
}

TimeSeries gen_event_triggered(const std::vector<EventSpec>& events, std::size_t length) {
    require(length >= 1, "config", "gen_event_triggered: empty output requested");
    TimeSeries x;
    x.id = "event-triggered";
    x.label = "normal";
    x.values.assign(length, 0.0);
    for (const EventSpec& e : events) {
        require(e.indicator.size() == length && e.intensity.size() == length, "shape",
                "gen_event_triggered: event length mismatch");
        for (std::size_t t = 0; t < length; ++t) {
            require(e.indicator[t] == 0.0 || e.indicator[t] == 1.0, "config",
                    "gen_event_triggered: indicator must be 0/1");
            x.values[t] += e.indicator[t] * e.intensity[t];
        }
    }
    return x;
}

TimeSeries inject_anomaly(const TimeSeries& x, int type, const AnomalyParams& params,
                          std::uint64_t seed) {
    validate(x);
    require(type >= 1 && type <= 4, "config", "inject_anomaly: type must be 1..4");
    const std::size_t L = x.length();
    Rng rng(seed);
    TimeSeries out = x;
    out.label = "anomaly-" + std::to_string(type);

    if (type == 4) {
        std::size_t pos;
        if (params.start >= 0) {
            pos = static_cast<std::size_t>(params.start);
            require(pos < L, "config", "inject_anomaly: bin out of range");
        } else {
            pos = rng.uniform_index(L);
        }
        double peak = 0.0;
        for (double v : x.values) peak = std::max(peak, std::abs(v));
        out.values[pos] = params.impulse_scale * (peak > 0.0 ? peak : 1.0);
        return out;
    }

    require(params.span >= 1 && params.span <= L, "config",
            "inject_anomaly: segment does not fit the series");
    std::size_t start;
    if (params.start >= 0) {
        start = static_cast<std::size_t>(params.start);
        require(start + params.span <= L, "config", "inject_anomaly: segment out of range");
    } else {
        start = rng.uniform_index(L - params.span + 1);
    }
    double plateau = params.plateau_scale * *std::max_element(x.values.begin(), x.values.end());
    for (std::size_t t = start; t < start + params.span; ++t) {
        switch (type) {
            case 1: out.values[t] += params.noise_sigma * rng.gaussian(); break;
            case 2: out.values[t] += plateau; break;
            case 3: out.values[t] = 0.0; break;
        }
    }
    return out;
}

namespace {

std::size_t integer_factor(double level, const char* what) {
    double r = std::round(level);
    require(r >= 1.0 && std::abs(level - r) < 1e-9, "config",
            std::string(what) + " factor must be a positive integer");
    return static_cast<std::size_t>(r);
}

} // namespace

TimeSeries apply_noise(const TimeSeries& x, int type, double level, std::uint64_t seed) {
    validate(x);
    require(type >= 1 && type <= 4, "config", "apply_noise: type must be 1..4");
    require(level >= 0.0, "config", "apply_noise: negative level");
    const std::size_t L = x.length();
    TimeSeries out = x;

    switch (type) {
        case 1: {
            std::size_t f = integer_factor(level, "upsample");
            if (f == 1) return out;
            out.values.assign(L * f, 0.0);
            for (std::size_t j = 0; j < L * f; ++j) {
                std::size_t i = j / f;
                double frac = static_cast<double>(j % f) / static_cast<double>(f);
                double next = i + 1 < L ? x.values[i + 1] : x.values[L - 1];
                out.values[j] = (1.0 - frac) * x.values[i] + frac * next;
            }
            out.interval = x.interval / static_cast<double>(f);
            return out;
        }
        case 2: {
            std::size_t f = integer_factor(level, "decimation");
            std::size_t n = (L + f - 1) / f;
            require(n >= 2, "config", "apply_noise: decimation leaves fewer than 2 points");
            out.values.resize(n);
            for (std::size_t j = 0; j < n; ++j) out.values[j] = x.values[j * f];
            out.interval = x.interval * static_cast<double>(f);
            return out;
        }
        case 3: {
            std::size_t s = static_cast<std::size_t>(std::floor(level)) % L;
            for (std::size_t i = 0; i < L; ++i) out.values[(i + s) % L] = x.values[i];
            return out;
        }
        case 4: {
            Rng rng(seed);
            for (std::size_t t = 0; t < L; ++t) out.values[t] += level * rng.gaussian();
            return out;
        }
    }
    fail("config", "apply_noise: unreachable");
}

TimeSeries resample(const TimeSeries& x, double new_interval) {
    validate(x);
    require(new_interval > 0.0, "config", "resample: interval must be positive");
    if (new_interval == x.interval) return x;

    long long a = std::llround(x.interval);
    long long b = std::llround(new_interval);
    require(a >= 1 && b >= 1 && std::abs(x.interval - static_cast<double>(a)) < 1e-9 &&
                std::abs(new_interval - static_cast<double>(b)) < 1e-9,
            "config", "resample: intervals must be whole seconds");
    long long g = std::gcd(a, b);
    std::size_t up = static_cast<std::size_t>(a / g);
    std::size_t down = static_cast<std::size_t>(b / g);

    const std::size_t L = x.length();
    require((L * up) % down == 0, "shape",
            "resample: length " + std::to_string(L) + " is incompatible with the interval ratio");

    // Splitting a bin into `up` equal parts is linear interpolation of the
    // cumulative volume, so total volume survives the round trip.
    std::vector<double> fine;
    fine.reserve(L * up);
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t k = 0; k < up; ++k)
            fine.push_back(x.values[i] / static_cast<double>(up));

    TimeSeries out = x;
    out.interval = new_interval;
    out.values.assign(L * up / down, 0.0);
    for (std::size_t j = 0; j < out.values.size(); ++j)
        for (std::size_t k = 0; k < down; ++k) out.values[j] += fine[j * down + k];
    return out;
}

Corpus contaminate_training(const Corpus& data, double fraction, const std::vector<int>& types,
                            std::uint64_t seed) {
    require(fraction >= 0.0 && fraction <= 0.5, "config",
            "contaminate_training: fraction must be in [0, 0.5]");
    const std::size_t N = data.size();
    std::size_t n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(N)));
    Corpus out = data;
    if (n == 0) return out;
    require(!types.empty(), "config", "contaminate_training: no anomaly types given");

    std::vector<std::size_t> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t j = 0; j < n; ++j)
        std::swap(idx[j], idx[j + rng.uniform_index(N - j)]);

    AnomalyParams params;
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t i = idx[j];
        int type = types[j % types.size()];
        out[i] = inject_anomaly(data[i], type, params, derive_seed(seed, 1000 + i));
    }
    return out;
}

} // namespace etnet
