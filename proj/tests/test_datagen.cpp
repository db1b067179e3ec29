#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "etnet/datagen.hpp"
#include "testutil.hpp"

using namespace etnet;

TEST_SUITE("series") {

TEST_CASE("corpus csv round trip preserves every field bit for bit") {
    Corpus data;
    TimeSeries a;
    a.id = "dev-1";
    a.interval = 60.0;
    a.label = "normal";
    a.values = {0.0, 1.5, -2.25, 1.0 / 3.0, 1e-17, 123456.789};
    TimeSeries b;
    b.id = "dev-2";
    b.interval = 30.0;
    b.label = "";
    b.values = {4.0, 5.0, 6.0, 7.0};
    data.push_back(a);
    data.push_back(b);

    const char* path = "tmp_corpus_roundtrip.csv";
    write_corpus_csv(path, data);
    Corpus got = read_corpus_csv(path);
    std::remove(path);

    REQUIRE(got.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(got[i].id == data[i].id);
        CHECK(got[i].interval == data[i].interval);
        CHECK(got[i].label == data[i].label);
        REQUIRE(got[i].values.size() == data[i].values.size());
        for (std::size_t t = 0; t < got[i].values.size(); ++t)
            CHECK(got[i].values[t] == data[i].values[t]);
    }
}

TEST_CASE("csv reader rejects malformed rows") {
    const char* path = "tmp_corpus_bad.csv";
    {
        FILE* f = std::fopen(path, "w");
        std::fputs("id,60,normal\n", f); // no values
        std::fclose(f);
    }
    CHECK_THROWS_AS((void)read_corpus_csv(path), Error);
    {
        FILE* f = std::fopen(path, "w");
        std::fputs("id,60,normal,1.0,oops\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS((void)read_corpus_csv(path), Error);
    std::remove(path);
    CHECK_THROWS_AS((void)read_corpus_csv("does_not_exist.csv"), Error);
}

TEST_CASE("value stream reader") {
    const char* path = "tmp_stream.txt";
    {
        FILE* f = std::fopen(path, "w");
        std::fputs("1.5\n\n-2\n0.25\n", f);
        std::fclose(f);
    }
    std::vector<double> v = read_value_stream(path);
    std::remove(path);
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 1.5);
    CHECK(v[1] == -2.0);
    CHECK(v[2] == 0.25);
}

TEST_CASE("min-max scaler maps the corpus onto [0,1] and inverts") {
    Corpus data;
    TimeSeries x;
    x.id = "x";
    x.values = {-2.0, 0.0, 6.0};
    data.push_back(x);
    MinMaxScaler s = MinMaxScaler::fit(data);
    CHECK(s.lo == -2.0);
    CHECK(s.hi == 6.0);
    std::vector<double> t = s.transform(x.values);
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(t[2] == 1.0);
    std::vector<double> back = s.inverse(t);
    for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == doctest::Approx(x.values[i]).epsilon(1e-15));

    // constant corpus degenerates to zeros
    TimeSeries c;
    c.id = "c";
    c.values = {3.0, 3.0, 3.0};
    MinMaxScaler sc = MinMaxScaler::fit({c});
    for (double v : sc.transform(c.values)) CHECK(v == 0.0);
}

TEST_CASE("validate rejects broken series") {
    TimeSeries empty;
    empty.id = "e";
    CHECK_THROWS_AS(validate(empty), Error);
    TimeSeries bad;
    bad.id = "b";
    bad.values = {1.0};
    bad.interval = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
    TimeSeries inf;
    inf.id = "i";
    inf.values = {1.0 / 0.0};
    CHECK_THROWS_AS(validate(inf), Error);
}

} // TEST_SUITE series

TEST_SUITE("datagen") {

TEST_CASE("waves: range, value set, and slope") {
    // period 20 puts the sine extremes exactly on bins 5 and 15
    TimeSeries s = gen_wave(WaveKind::Sine, 120, 20, 1.0, 0.0, 0);
    CHECK(*std::max_element(s.values.begin(), s.values.end()) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*std::min_element(s.values.begin(), s.values.end()) == doctest::Approx(-1.0).epsilon(1e-15));

    TimeSeries q = gen_wave(WaveKind::Square, 120, 14, 2.5, 0.3, 0);
    for (double v : q.values) CHECK((v == 2.5 || v == -2.5));
    std::set<double> vals(q.values.begin(), q.values.end());
    CHECK(vals.size() == 2);

    // piecewise linear: every consecutive difference has magnitude 4A/period
    // when the period is a multiple of 4 (peaks land on bins)
    TimeSeries tr = gen_wave(WaveKind::Triangle, 120, 12, 2.0, 0.0, 0);
    for (std::size_t t = 0; t + 1 < tr.length(); ++t)
        CHECK(std::abs(std::abs(tr.values[t + 1] - tr.values[t]) - 4.0 * 2.0 / 12.0) < 1e-12);

    CHECK_THROWS_AS((void)gen_wave(WaveKind::Sine, 120, 1.0, 1.0, 0.0, 0), Error);
    CHECK_THROWS_AS((void)gen_wave(WaveKind::Sine, 1, 20, 1.0, 0.0, 0), Error);
    CHECK(wave_kind_from_string("triangle") == WaveKind::Triangle);
    CHECK_THROWS_AS((void)wave_kind_from_string("sawtooth"), Error);
}

TEST_CASE("event superposition") {
    CHECK(gen_event_triggered({}, 50).values == std::vector<double>(50, 0.0));

    EventSpec mtc;
    mtc.kind = EventKind::Mtc;
    mtc.indicator.assign(40, 0.0);
    mtc.intensity.assign(40, 0.0);
    for (std::size_t t = 0; t < 40; t += 7) {
        mtc.indicator[t] = 1.0;
        mtc.intensity[t] = 2.0;
    }
    TimeSeries single = gen_event_triggered({mtc}, 40);
    for (std::size_t t = 0; t < 40; ++t)
        CHECK(single.values[t] == mtc.indicator[t] * mtc.intensity[t]);

    EventSpec htc;
    htc.kind = EventKind::Htc;
    htc.indicator.assign(40, 0.0);
    htc.intensity.assign(40, 0.0);
    for (std::size_t t = 2; t < 6; ++t) {
        htc.indicator[t] = 1.0;
        htc.intensity[t] = 10.0;
    }
    // disjoint supports: the sum is the union of the two masked intensities
    TimeSeries both = gen_event_triggered({mtc, htc}, 40);
    for (std::size_t t = 0; t < 40; ++t) {
        double want = mtc.indicator[t] * mtc.intensity[t] + htc.indicator[t] * htc.intensity[t];
        CHECK(both.values[t] == want);
        CHECK((mtc.indicator[t] == 0.0 || htc.indicator[t] == 0.0));
        CHECK(both.values[t] >= 0.0);
    }

    EventSpec shorty = mtc;
    shorty.indicator.pop_back();
    CHECK_THROWS_AS((void)gen_event_triggered({shorty}, 40), Error);
}

TEST_CASE("event factories respect their shape invariants") {
    EventSpec m = make_mtc_event(100, 6, 1.5, 42);
    EventSpec h = make_htc_event(100, 3, 8, 20.0, 43);
    for (const EventSpec* e : {&m, &h}) {
        REQUIRE(e->indicator.size() == 100);
        REQUIRE(e->intensity.size() == 100);
        for (std::size_t t = 0; t < 100; ++t) {
            CHECK((e->indicator[t] == 0.0 || e->indicator[t] == 1.0));
            CHECK(e->intensity[t] >= 0.0);
            if (e->indicator[t] == 0.0) CHECK(e->intensity[t] == 0.0);
        }
    }
    // periodic indicator: gaps between firings equal the period
    std::vector<std::size_t> fire;
    for (std::size_t t = 0; t < 100; ++t)
        if (m.indicator[t] == 1.0) fire.push_back(t);
    REQUIRE(fire.size() >= 2);
    for (std::size_t i = 0; i + 1 < fire.size(); ++i) CHECK(fire[i + 1] - fire[i] == 6);

    // determinism
    EventSpec m2 = make_mtc_event(100, 6, 1.5, 42);
    CHECK(m2.intensity == m.intensity);
    CHECK(m2.indicator == m.indicator);
}

TEST_CASE("anomaly injection touches exactly the designated bins") {
    TimeSeries x = gen_wave(WaveKind::Sine, 120, 20, 1.0, 0.0, 0);
    AnomalyParams p;
    p.start = 30;
    p.span = 10;

    TimeSeries z = inject_anomaly(x, 3, p, 1);
    for (std::size_t t = 0; t < 120; ++t) {
        if (t >= 30 && t < 40)
            CHECK(z.values[t] == 0.0);
        else
            CHECK(z.values[t] == x.values[t]);
    }
    CHECK(z.label == "anomaly-3");

    p.start = 77;
    TimeSeries imp = inject_anomaly(x, 4, p, 2);
    std::size_t differing = 0;
    for (std::size_t t = 0; t < 120; ++t)
        if (imp.values[t] != x.values[t]) ++differing;
    CHECK(differing == 1);
    CHECK(imp.values[77] == 10.0); // impulse_scale 10 times peak magnitude 1

    p.start = 30;
    p.noise_sigma = 0.0;
    TimeSeries same = inject_anomaly(x, 1, p, 3);
    CHECK(same.values == x.values);

    p.noise_sigma = 0.5;
    TimeSeries noisy = inject_anomaly(x, 1, p, 3);
    for (std::size_t t = 0; t < 120; ++t)
        if (t < 30 || t >= 40) CHECK(noisy.values[t] == x.values[t]);
    CHECK(noisy.values != x.values);

    TimeSeries plat = inject_anomaly(x, 2, p, 4);
    for (std::size_t t = 30; t < 40; ++t)
        CHECK(plat.values[t] == doctest::Approx(x.values[t] + 5.0).epsilon(1e-12));

    // seeded placement is reproducible and in range
    AnomalyParams autop;
    TimeSeries r1 = inject_anomaly(x, 3, autop, 9);
    TimeSeries r2 = inject_anomaly(x, 3, autop, 9);
    CHECK(r1.values == r2.values);

    p.start = 115;
    p.span = 10;
    CHECK_THROWS_AS((void)inject_anomaly(x, 3, p, 0), Error);
    p.start = 0;
    CHECK_THROWS_AS((void)inject_anomaly(x, 5, p, 0), Error);
}

TEST_CASE("benign noise transforms") {
    TimeSeries x = gen_wave(WaveKind::Triangle, 120, 24, 1.0, 0.1, 0);

    TimeSeries up = apply_noise(x, 1, 3, 0);
    REQUIRE(up.length() == 360);
    CHECK(up.interval == doctest::Approx(x.interval / 3.0).epsilon(1e-15));
    for (std::size_t i = 0; i < 120; ++i) CHECK(up.values[i * 3] == x.values[i]);
    // interpolated midpoints sit on the chord
    for (std::size_t i = 0; i + 1 < 120; ++i)
        CHECK(up.values[i * 3 + 1] ==
              doctest::Approx(x.values[i] + (x.values[i + 1] - x.values[i]) / 3.0).epsilon(1e-12));

    TimeSeries down = apply_noise(x, 2, 2, 0);
    REQUIRE(down.length() == 60);
    for (std::size_t j = 0; j < 60; ++j) CHECK(down.values[j] == x.values[2 * j]);
    CHECK(down.interval == x.interval * 2.0);

    TimeSeries id3 = apply_noise(x, 3, 0, 0);
    CHECK(id3.values == x.values);
    TimeSeries sh = apply_noise(x, 3, 17, 0);
    std::multiset<double> before(x.values.begin(), x.values.end());
    std::multiset<double> after(sh.values.begin(), sh.values.end());
    CHECK(before == after);
    for (std::size_t i = 0; i < 120; ++i) CHECK(sh.values[(i + 17) % 120] == x.values[i]);

    TimeSeries g1 = apply_noise(x, 4, 0.2, 5);
    TimeSeries g2 = apply_noise(x, 4, 0.2, 5);
    CHECK(g1.values == g2.values);
    CHECK(g1.values != x.values);
    CHECK(apply_noise(x, 4, 0.0, 5).values == x.values);

    TimeSeries tiny = x;
    tiny.values.resize(3);
    CHECK_THROWS_AS((void)apply_noise(tiny, 2, 3, 0), Error);
    CHECK_THROWS_AS((void)apply_noise(x, 1, 2.5, 0), Error);
    CHECK_THROWS_AS((void)apply_noise(x, 4, -1.0, 0), Error);
}

TEST_CASE("resampling conserves volume") {
    Rng rng(6);
    TimeSeries x;
    x.id = "x";
    x.interval = 60.0;
    for (int i = 0; i < 120; ++i) x.values.push_back(std::abs(rng.gaussian()) * 10.0);
    double total = 0.0;
    for (double v : x.values) total += v;

    TimeSeries pair = resample(x, 120.0);
    REQUIRE(pair.length() == 60);
    for (std::size_t j = 0; j < 60; ++j)
        CHECK(pair.values[j] == x.values[2 * j] + x.values[2 * j + 1]);

    CHECK(resample(x, 60.0).values == x.values);

    TimeSeries odd = resample(x, 90.0);
    REQUIRE(odd.length() == 80);
    CHECK(odd.interval == 90.0);
    double odd_total = 0.0;
    for (double v : odd.values) odd_total += v;
    CHECK(std::abs(odd_total - total) < 1e-9);

    TimeSeries fine = resample(x, 20.0);
    REQUIRE(fine.length() == 360);
    TimeSeries back = resample(fine, 60.0);
    REQUIRE(back.length() == 120);
    for (std::size_t i = 0; i < 120; ++i)
        CHECK(std::abs(back.values[i] - x.values[i]) < 1e-9);

    TimeSeries seven = x;
    seven.values.resize(119); // 119 bins cannot regroup into 2:1
    CHECK_THROWS_AS((void)resample(seven, 120.0), Error);
    TimeSeries frac = x;
    frac.interval = 60.5;
    CHECK_THROWS_AS((void)resample(frac, 90.0), Error);
}

TEST_CASE("training contamination counts and reproducibility") {
    Corpus data;
    for (int i = 0; i < 500; ++i) {
        TimeSeries x = gen_wave(WaveKind::Sine, 60, 12, 1.0, 0.01 * i, 0);
        x.id = "s" + std::to_string(i);
        data.push_back(x);
    }

    Corpus none = contaminate_training(data, 0.0, {1, 2, 3, 4}, 7);
    for (std::size_t i = 0; i < 500; ++i) CHECK(none[i].values == data[i].values);

    Corpus dirty = contaminate_training(data, 0.1, {1, 2, 3, 4}, 7);
    std::set<std::string> touched;
    for (std::size_t i = 0; i < 500; ++i)
        if (dirty[i].label != "normal") touched.insert(dirty[i].id);
    CHECK(touched.size() == 50);

    Corpus again = contaminate_training(data, 0.1, {1, 2, 3, 4}, 7);
    for (std::size_t i = 0; i < 500; ++i) {
        CHECK(again[i].label == dirty[i].label);
        CHECK(again[i].values == dirty[i].values);
    }

    CHECK_THROWS_AS((void)contaminate_training(data, 0.6, {1}, 7), Error);
    CHECK_THROWS_AS((void)contaminate_training(data, 0.1, {}, 7), Error);
}

} // TEST_SUITE datagen
