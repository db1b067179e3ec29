#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "etnet/cli.hpp"
#include "etnet/datagen.hpp"
#include "etnet/metrics.hpp"
#include "testutil.hpp"

using namespace etnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const {
        return leaf.empty() ? path.string() : (path / leaf).string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::vector<nlohmann::json> parse_jsonl(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<nlohmann::json> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
    return lines;
}

// Two distinguishable wave families, phases spread so scores are not tied.
Corpus two_family_corpus(std::size_t per_family, std::size_t length = 20) {
    Corpus data;
    for (std::size_t i = 0; i < per_family; ++i) {
        TimeSeries a =
            gen_wave(WaveKind::Sine, length, 8, 1.0, 0.21 * static_cast<double>(i), 0);
        a.id = "sine-" + std::to_string(i);
        a.label = "sine";
        TimeSeries b =
            gen_wave(WaveKind::Square, length, 8, 1.0, 0.21 * static_cast<double>(i), 0);
        b.id = "square-" + std::to_string(i);
        b.label = "square";
        data.push_back(a);
        data.push_back(b);
    }
    return data;
}

nlohmann::json small_run_config() {
    return nlohmann::json{{"N_E", 2},   {"N_L", 2},  {"N_N", 3},           {"K", 2},
                          {"L_c", 2},   {"epochs", 4}, {"seed", 9},        {"window", 20},
                          {"train_fraction", 0.5}};
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("ingest windows raw streams and passes corpora through") {
    TempDir dir("tmp_cli_ingest");

    std::string stream;
    for (int i = 0; i < 240; ++i) stream += std::to_string(i) + "\n";
    spit(dir.str("raw.txt"), stream);
    Corpus two = ingest(dir.str("raw.txt"), 120);
    REQUIRE(two.size() == 2);
    CHECK(two[0].length() == 120);
    CHECK(two[0].id == "w0");
    CHECK(two[1].id == "w1");
    CHECK(two[0].values[0] == 0.0);
    CHECK(two[1].values[0] == 120.0);

    for (int i = 240; i < 250; ++i) stream += std::to_string(i) + "\n";
    spit(dir.str("raw250.txt"), stream);
    Corpus dropped = ingest(dir.str("raw250.txt"), 120);
    REQUIRE(dropped.size() == 2); // 10 trailing values discarded
    CHECK(dropped[1].values.back() == 239.0);

    Corpus waves = two_family_corpus(3);
    write_corpus_csv(dir.str("corpus.csv"), waves);
    Corpus back = ingest(dir.str("corpus.csv"), 120);
    REQUIRE(back.size() == waves.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == waves[i].id);
        CHECK(back[i].label == waves[i].label);
        CHECK(back[i].values == waves[i].values);
    }

    spit(dir.str("bad.txt"), "1.0\nnot-a-number\n");
    try {
        (void)ingest(dir.str("bad.txt"), 2);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }

    spit(dir.str("empty.txt"), "");
    CHECK_THROWS_AS((void)ingest(dir.str("empty.txt"), 2), Error);
    CHECK_THROWS_AS((void)ingest(dir.str("raw.txt"), 1), Error);
    CHECK_THROWS_AS((void)ingest(dir.str("raw.txt"), 500), Error);
    CHECK_THROWS_AS((void)ingest(dir.str("no_such_file"), 2), Error);
}

TEST_CASE("run config json splits run keys from model keys") {
    nlohmann::json j = small_run_config();
    j["contamination"] = 0.1;
    j["task"] = "cluster";
    RunConfig cfg = run_config_from_json(j);
    CHECK(cfg.window == 20);
    CHECK(cfg.train_fraction == 0.5);
    CHECK(cfg.contamination == 0.1);
    CHECK(cfg.task == "cluster");
    CHECK(cfg.model.n_e == 2);
    CHECK(cfg.model.k == 2);
    CHECK(cfg.model.seed == 9);

    nlohmann::json unknown = small_run_config();
    unknown["window_bins"] = 10;
    CHECK_THROWS_AS((void)run_config_from_json(unknown), Error);

    nlohmann::json bad = small_run_config();
    bad["train_fraction"] = 1.0;
    CHECK_THROWS_AS((void)run_config_from_json(bad), Error);
    bad = small_run_config();
    bad["window"] = 1;
    CHECK_THROWS_AS((void)run_config_from_json(bad), Error);
    bad = small_run_config();
    bad["contamination"] = 0.9;
    CHECK_THROWS_AS((void)run_config_from_json(bad), Error);
    bad = small_run_config();
    bad["task"] = "paint";
    CHECK_THROWS_AS((void)run_config_from_json(bad), Error);
}

TEST_CASE("synth generates labeled deterministic corpora") {
    TempDir dir("tmp_cli_synth");
    nlohmann::json spec = {
        {"seed", 11},
        {"length", 24},
        {"groups",
         nlohmann::json::array(
             {{{"label", "sine"},
               {"count", 20},
               {"wave", {{"kind", "sine"}, {"period", 8}, {"phase_jitter", 1.5}}}},
              {{"label", "mtc"},
               {"count", 20},
               {"events", nlohmann::json::array({{{"kind", "mtc"}, {"period", 6}, {"intensity", 0.5}}})}}})}};
    spit(dir.str("spec.json"), spec.dump());

    std::string path = run_synth(dir.str("spec.json"), dir.str("a"));
    Corpus corpus = read_corpus_csv(path);
    REQUIRE(corpus.size() == 40);
    CHECK(corpus[0].id == "sine-0");
    CHECK(corpus[0].label == "sine");
    CHECK(corpus[20].id == "mtc-20");
    CHECK(corpus[20].label == "mtc");
    for (const TimeSeries& x : corpus) CHECK(x.length() == 24);
    // jitter separates the copies
    CHECK(corpus[0].values != corpus[1].values);
    // event traffic is nonnegative and not identically zero
    double maxv = 0.0;
    for (double v : corpus[20].values) {
        CHECK(v >= 0.0);
        maxv = std::max(maxv, v);
    }
    CHECK(maxv > 0.0);

    // same seed, byte-identical corpus; override changes it
    (void)run_synth(dir.str("spec.json"), dir.str("b"));
    CHECK(slurp(dir.str("a") + "/corpus.csv") == slurp(dir.str("b") + "/corpus.csv"));
    (void)run_synth(dir.str("spec.json"), dir.str("c"), std::uint64_t{12});
    CHECK(slurp(dir.str("a") + "/corpus.csv") != slurp(dir.str("c") + "/corpus.csv"));

    // anomaly directive labels exactly floor(fraction * N) rows
    spec["anomalies"] = {{"fraction", 0.1}, {"types", nlohmann::json::array({3})}};
    spit(dir.str("spec2.json"), spec.dump());
    Corpus tainted = read_corpus_csv(run_synth(dir.str("spec2.json"), dir.str("d")));
    std::size_t flagged = 0;
    for (const TimeSeries& x : tainted) flagged += x.label.rfind("anomaly", 0) == 0 ? 1 : 0;
    CHECK(flagged == 4);

    nlohmann::json bad = spec;
    bad["groops"] = 1;
    spit(dir.str("bad.json"), bad.dump());
    CHECK_THROWS_AS((void)run_synth(dir.str("bad.json"), dir.str("e")), Error);

    nlohmann::json badwave = spec;
    badwave.erase("anomalies");
    badwave["groups"][0]["wave"]["kind"] = "sawtooth";
    spit(dir.str("badwave.json"), badwave.dump());
    CHECK_THROWS_AS((void)run_synth(dir.str("badwave.json"), dir.str("e")), Error);

    nlohmann::json empty_group = {{"seed", 1},
                                  {"length", 16},
                                  {"groups", nlohmann::json::array({{{"label", "x"}, {"count", 2}}})}};
    spit(dir.str("nogen.json"), empty_group.dump());
    CHECK_THROWS_AS((void)run_synth(dir.str("nogen.json"), dir.str("e")), Error);
}

TEST_CASE("train splits, persists, and reports deterministically") {
    TempDir dir("tmp_cli_train");
    Corpus data = two_family_corpus(6);
    // two pre-labeled anomalies must never reach the fit
    AnomalyParams ap;
    TimeSeries bad0 = inject_anomaly(data[0], 3, ap, 77);
    bad0.id = "known-anomaly-0";
    TimeSeries bad1 = inject_anomaly(data[1], 2, ap, 78);
    bad1.id = "known-anomaly-1";
    data.push_back(bad0);
    data.push_back(bad1);
    write_corpus_csv(dir.str("data.csv"), data);

    RunConfig cfg = run_config_from_json(small_run_config());
    TrainOutcome out = run_train(cfg, dir.str("data.csv"), dir.str("a"));

    EtNetModel m = load_model(out.model_path);
    CHECK(m.series_length == 20);
    ScoredSample s = anomaly_score(m, data[2]);
    CHECK(std::isfinite(s.score));

    // 12 normals at fraction 0.5: 6 fit, 6 held out, plus the 2 anomalies
    Corpus held = read_corpus_csv(out.test_path);
    CHECK(held.size() == 8);
    std::size_t anomalies_held = 0;
    for (const TimeSeries& x : held)
        anomalies_held += x.label.rfind("anomaly", 0) == 0 ? 1 : 0;
    CHECK(anomalies_held == 2);

    nlohmann::json rep = nlohmann::json::parse(slurp(out.report_path));
    CHECK(rep["train_count"] == 6);
    CHECK(rep["held_out_count"] == 8);
    CHECK(rep["loss_w"].size() >= 1);
    CHECK(rep["loss_d"].size() >= 1);
    CHECK(rep["gmm_w"]["K"] == 2);
    CHECK(rep["gmm_w"]["phi"].size() == 2);
    CHECK(rep["contaminated_ids"].empty());

    // same config and data: byte-identical model
    (void)run_train(cfg, dir.str("data.csv"), dir.str("b"));
    CHECK(slurp(dir.str("a") + "/model.json") == slurp(dir.str("b") + "/model.json"));

    // contamination bookkeeping: floor(0.25 * 6) = 1 replaced id, reported
    RunConfig dirty = cfg;
    dirty.contamination = 0.25;
    TrainOutcome outc = run_train(dirty, dir.str("data.csv"), dir.str("c"));
    CHECK(outc.contaminated_ids.size() == 1);
    nlohmann::json repc = nlohmann::json::parse(slurp(outc.report_path));
    REQUIRE(repc["contaminated_ids"].size() == 1);
    CHECK(repc["contaminated_ids"][0] == outc.contaminated_ids[0]);
}

TEST_CASE("score emits jsonl whose auc matches the printed report") {
    TempDir dir("tmp_cli_score");
    Corpus train_data = two_family_corpus(6);
    write_corpus_csv(dir.str("train.csv"), train_data);
    RunConfig cfg = run_config_from_json(small_run_config());
    cfg.train_fraction = 0.8;
    TrainOutcome tr = run_train(cfg, dir.str("train.csv"), dir.str("m"));

    // labeled evaluation set: clean waves plus injected anomalies
    Corpus eval_set;
    AnomalyParams ap;
    for (std::size_t i = 0; i < 6; ++i) {
        TimeSeries x = train_data[i];
        x.label = "";
        eval_set.push_back(x);
        TimeSeries bad = inject_anomaly(train_data[i], 2, ap, 300 + i);
        bad.id = "bad-" + std::to_string(i);
        eval_set.push_back(bad);
    }
    write_corpus_csv(dir.str("eval.csv"), eval_set);

    ScoreOutcome out = run_score(tr.model_path, dir.str("eval.csv"), dir.str("s"), 95.0, true);
    REQUIRE(std::isfinite(out.auc_value));
    CHECK(out.auc_value >= 0.0);
    CHECK(out.auc_value <= 1.0);

    std::vector<nlohmann::json> lines = parse_jsonl(out.scores_path);
    REQUIRE(lines.size() == eval_set.size());
    LabeledScores ls;
    std::size_t flagged = 0;
    for (const nlohmann::json& o : lines) {
        ls.labels.push_back(o.at("label").get<int>());
        ls.scores.push_back(o.at("score").get<double>());
        CHECK(o.at("score").get<double>() ==
              std::max(o.at("E_w").get<double>(), o.at("E_d").get<double>()));
        CHECK(o.at("z_w").size() == 4);
        flagged += o.at("flag").get<bool>() ? 1 : 0;
    }
    CHECK(auc(ls) == out.auc_value); // emitted scores reproduce the report exactly
    nlohmann::json report = nlohmann::json::parse(out.report);
    CHECK(report["metric"] == "auc");
    CHECK(report["value"].get<double>() == out.auc_value);
    CHECK(flagged == out.flagged);

    // threshold is the interpolated percentile of the stored training scores
    EtNetModel m = load_model(tr.model_path);
    REQUIRE(m.training_scores.size() >= 2);
    double pos = 0.95 * static_cast<double>(m.training_scores.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double expect = m.training_scores[lo] +
                    (pos - static_cast<double>(lo)) *
                        (m.training_scores[std::min(lo + 1, m.training_scores.size() - 1)] -
                         m.training_scores[lo]);
    CHECK(out.threshold == doctest::Approx(expect).epsilon(1e-12));

    // plot export: header plus one row per sample, latent width columns
    std::string plot = slurp(out.plot_path);
    CHECK(plot.substr(0, 3) == "id,");
    CHECK(std::count(plot.begin(), plot.end(), '\n') == static_cast<long>(eval_set.size()) + 1);

    // unlabeled data: scores only, no auc, no label key
    Corpus unlabeled = eval_set;
    for (TimeSeries& x : unlabeled) x.label.clear();
    write_corpus_csv(dir.str("unlabeled.csv"), unlabeled);
    ScoreOutcome quiet = run_score(tr.model_path, dir.str("unlabeled.csv"), dir.str("q"));
    CHECK(!std::isfinite(quiet.auc_value));
    CHECK(quiet.report.empty());
    CHECK(quiet.plot_path.empty());
    std::vector<nlohmann::json> qlines = parse_jsonl(quiet.scores_path);
    CHECK(!qlines[0].contains("label"));
    CHECK(!qlines[0].contains("flag"));

    // wrong series length surfaces the model/data mismatch
    Corpus shorty = {gen_wave(WaveKind::Sine, 10, 4, 1.0, 0.0, 0)};
    shorty[0].id = "short";
    write_corpus_csv(dir.str("short.csv"), shorty);
    CHECK_THROWS_AS((void)run_score(tr.model_path, dir.str("short.csv"), dir.str("x")), Error);
}

TEST_CASE("cluster labels samples and reports nmi against gold labels") {
    TempDir dir("tmp_cli_cluster");
    Corpus data = two_family_corpus(6);
    write_corpus_csv(dir.str("data.csv"), data);
    RunConfig cfg = run_config_from_json(small_run_config());
    cfg.task = "cluster";
    TrainOutcome tr = run_train(cfg, dir.str("data.csv"), dir.str("m"));

    ClusterOutcome out = run_cluster(tr.model_path, dir.str("data.csv"), dir.str("c"));
    std::vector<nlohmann::json> lines = parse_jsonl(out.labels_path);
    REQUIRE(lines.size() == data.size());
    for (const nlohmann::json& o : lines) {
        int label = o.at("label").get<int>();
        CHECK(label >= 0);
        CHECK(label < 2);
        CHECK(!o.at("gold").get<std::string>().empty());
    }
    REQUIRE(std::isfinite(out.nmi_value));
    CHECK(out.nmi_value >= 0.0);
    CHECK(out.nmi_value <= 1.0);
    nlohmann::json report = nlohmann::json::parse(out.report);
    CHECK(report["metric"] == "nmi");
    CHECK(report["value"].get<double>() == out.nmi_value);

    // no gold labels, no report
    Corpus unlabeled = data;
    for (TimeSeries& x : unlabeled) x.label.clear();
    write_corpus_csv(dir.str("plain.csv"), unlabeled);
    ClusterOutcome quiet = run_cluster(tr.model_path, dir.str("plain.csv"), dir.str("q"));
    CHECK(!std::isfinite(quiet.nmi_value));
    CHECK(quiet.report.empty());
}

TEST_CASE("explain reports ordered reference series") {
    TempDir dir("tmp_cli_explain");
    Corpus data = two_family_corpus(5);
    write_corpus_csv(dir.str("data.csv"), data);
    RunConfig cfg = run_config_from_json(small_run_config());
    TrainOutcome tr = run_train(cfg, dir.str("data.csv"), dir.str("m"));

    std::string path =
        run_explain(tr.model_path, dir.str("data.csv"), "sine-2", 3, 1, BranchSel::W, dir.str("e"));
    nlohmann::json rep = nlohmann::json::parse(slurp(path));
    CHECK(rep["id"] == "sine-2");
    CHECK(rep["branch"] == "w");
    CHECK(rep["anomaly"]["values"].size() == 20);
    REQUIRE(rep["references"].size() == 3); // n_points stops, anomaly end first
    for (std::size_t j = 0; j < 3; ++j) {
        const nlohmann::json& stop = rep["references"][j];
        CHECK(stop["step"] == j + 1);
        REQUIRE(stop["neighbors"].size() == 1); // k_neighbors
        std::string rid = stop["neighbors"][0]["id"].get<std::string>();
        CHECK(rid != "sine-2"); // the sample cannot explain itself
        bool found = false;
        for (const TimeSeries& x : data) found = found || x.id == rid;
        CHECK(found);
        CHECK(stop["neighbors"][0]["values"].size() == 20);
        CHECK(stop["neighbors"][0]["distance"].get<double>() >= 0.0);
    }

    CHECK_THROWS_AS(
        (void)run_explain(tr.model_path, dir.str("data.csv"), "ghost", 2, 1, BranchSel::W, dir.str("e")),
        Error);
}

TEST_CASE("eval-dist writes the exact pairwise matrix") {
    TempDir dir("tmp_cli_dist");
    Corpus data;
    double raw[3][4] = {{0, 1, 2, 3}, {1, 1, 2, 3}, {5, 5, 5, 5}};
    for (int i = 0; i < 3; ++i) {
        TimeSeries x;
        x.id = "x" + std::to_string(i);
        x.values.assign(raw[i], raw[i] + 4);
        data.push_back(x);
    }
    write_corpus_csv(dir.str("data.csv"), data);

    DistOutcome out = run_eval_dist(dir.str("data.csv"), "euclidean", dir.str("a"));
    std::string text = slurp(out.matrix_path);
    std::vector<std::vector<double>> mat;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
        mat.push_back(row);
    }
    REQUIRE(mat.size() == 3);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(mat[i].size() == 3);
        CHECK(mat[i][i] == 0.0);
        for (int j = 0; j < 3; ++j) {
            CHECK(mat[i][j] == mat[j][i]);
            CHECK(mat[i][j] == euclidean(data[i].values, data[j].values));
        }
    }
    nlohmann::json report = nlohmann::json::parse(out.report);
    double mean = (mat[0][1] + mat[0][2] + mat[1][2]) * 2.0 / 6.0;
    CHECK(report["value"].get<double>() == doctest::Approx(mean).epsilon(1e-15));
    CHECK(report["n"] == 3);

    DistOutcome dtw_out = run_eval_dist(dir.str("data.csv"), "dtw", dir.str("b"), 120, 2);
    nlohmann::json dtw_rep = nlohmann::json::parse(dtw_out.report);
    CHECK(dtw_rep["params"]["window"] == 2.0);
    DistOutcome edr_out = run_eval_dist(dir.str("data.csv"), "edr", dir.str("c"), 120, -1, 0.5);
    nlohmann::json edr_rep = nlohmann::json::parse(edr_out.report);
    CHECK(edr_rep["params"]["epsilon"] == 0.5);

    CHECK_THROWS_AS((void)run_eval_dist(dir.str("data.csv"), "cosine", dir.str("d")), Error);
}

TEST_CASE("binary drives the whole pipeline") {
    TempDir dir("tmp_cli_bin");
    nlohmann::json spec = {
        {"seed", 5},
        {"length", 20},
        {"groups",
         nlohmann::json::array(
             {{{"label", "sine"},
               {"count", 10},
               {"wave", {{"kind", "sine"}, {"period", 8}, {"phase_jitter", 1.3}}}},
              {{"label", "square"},
               {"count", 10},
               {"wave", {{"kind", "square"}, {"period", 8}, {"phase_jitter", 1.3}}}}})}};
    spit(dir.str("spec.json"), spec.dump());
    spit(dir.str("cfg.json"), small_run_config().dump());

    auto shell = [&](const std::string& args) {
        std::string cmd = std::string(ETNET_BIN) + " " + args + " > " + dir.str("stdout.txt") +
                          " 2> " + dir.str("stderr.txt");
        return std::system(cmd.c_str());
    };

    CHECK(shell("synth --config " + dir.str("spec.json") + " --out " + dir.str("d")) == 0);
    nlohmann::json synth_out = nlohmann::json::parse(slurp(dir.str("stdout.txt")));
    std::string corpus = synth_out.at("corpus").get<std::string>();

    CHECK(shell("train --config " + dir.str("cfg.json") + " --data " + corpus + " --out " +
                dir.str("d")) == 0);
    nlohmann::json train_out = nlohmann::json::parse(slurp(dir.str("stdout.txt")));
    std::string model = train_out.at("model").get<std::string>();

    CHECK(shell("score --model " + model + " --data " + corpus + " --threshold-percentile 95 --out " +
                dir.str("d")) == 0);
    std::istringstream score_lines(slurp(dir.str("stdout.txt")));
    std::string first;
    std::getline(score_lines, first);
    nlohmann::json score_out = nlohmann::json::parse(first);
    CHECK(fs::exists(score_out.at("scores").get<std::string>()));
    CHECK(score_out.contains("threshold"));

    CHECK(shell("cluster --model " + model + " --data " + corpus + " --out " + dir.str("d")) == 0);
    std::istringstream cluster_lines(slurp(dir.str("stdout.txt")));
    std::getline(cluster_lines, first);
    std::string metric_line;
    std::getline(cluster_lines, metric_line);
    nlohmann::json nmi_rep = nlohmann::json::parse(metric_line);
    CHECK(nmi_rep["metric"] == "nmi");

    CHECK(shell("explain --model " + model + " --data " + corpus +
                " --id sine-0 --points 2 --refs 2 --out " + dir.str("d")) == 0);
    CHECK(shell("eval-dist --data " + corpus + " --metric edr --epsilon 0.2 --out " + dir.str("d")) ==
          0);

    // failures exit nonzero with a structured envelope on the error stream
    CHECK(shell("score --model " + dir.str("nope.json") + " --data " + corpus) != 0);
    nlohmann::json err = nlohmann::json::parse(slurp(dir.str("stderr.txt")));
    CHECK(err.contains("error"));
    CHECK(err["error"]["kind"] == "io");
    CHECK(shell("bogus-subcommand") != 0);
    err = nlohmann::json::parse(slurp(dir.str("stderr.txt")));
    CHECK(err["error"]["kind"] == "usage");
}

} // TEST_SUITE
