#pragma once

#include <cstdint>
#include <vector>

#include "etnet/rng.hpp"
#include "etnet/series.hpp"

namespace etnet {

enum class WaveKind { Sine, Square, Triangle };

WaveKind wave_kind_from_string(const std::string& s);
std::string to_string(WaveKind kind);

// Analytic waveform sampled once per bin. `seed` is accepted for interface
// symmetry with the stochastic generators and does not affect the output.
TimeSeries gen_wave(WaveKind kind, std::size_t length, double period, double amplitude,
                    double phase, std::uint64_t seed);

// One traffic-generating event: the series contributes intensity[t] wherever
// indicator[t] is 1. Mtc events fire periodically with small intensity, Htc
// events fire in sparse bursts with large intensity.
enum class EventKind { Mtc, Htc };

struct EventSpec {
    EventKind kind = EventKind::Mtc;
    std::vector<double> indicator;
    std::vector<double> intensity;
};

EventSpec make_mtc_event(std::size_t length, std::size_t period, double intensity,
                         std::uint64_t seed);
EventSpec make_htc_event(std::size_t length, std::size_t bursts, std::size_t burst_len,
                         double intensity, std::uint64_t seed);

// Superposition of the events' masked intensities; no events gives zeros.
TimeSeries gen_event_triggered(const std::vector<EventSpec>& events, std::size_t length);

// Anomaly injection. Types: 1 additive Gaussian noise on a segment, 2 plateau
// added on a segment, 3 segment zeroed, 4 one bin replaced by an extreme
// value. A negative `start` places the segment (or bin) from the seed.
struct AnomalyParams {
    long start = -1;
    std::size_t span = 10;
    double noise_sigma = 1.0;    // type 1
    double plateau_scale = 5.0;  // type 2, plateau height = scale * max(x)
    double impulse_scale = 10.0; // type 4, new value = scale * max(|x|)
};

TimeSeries inject_anomaly(const TimeSeries& x, int type, const AnomalyParams& params,
                          std::uint64_t seed);

// Benign distortions used for robustness studies. Types: 1 upsample by linear
// interpolation (factor = level), 2 downsample by decimation (factor = level),
// 3 circular shift by floor(level) bins, 4 i.i.d. Gaussian noise everywhere
// (sigma = level).
TimeSeries apply_noise(const TimeSeries& x, int type, double level, std::uint64_t seed);

// Change the bin width. Coarsening sums consecutive bins (volume is
// additive); refining splits each bin uniformly, which is exactly linear
// interpolation of the cumulative volume curve. Non-integer ratios go through
// the common divisor of the two intervals. Total volume is conserved.
TimeSeries resample(const TimeSeries& x, double new_interval);

// Replaces floor(fraction*N) samples with anomaly-injected versions, types
// drawn round-robin from `types`. Labels mark the injected samples for audit.
Corpus contaminate_training(const Corpus& data, double fraction, const std::vector<int>& types,
                            std::uint64_t seed);

} // namespace etnet
