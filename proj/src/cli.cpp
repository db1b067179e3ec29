#include "etnet/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include "etnet/datagen.hpp"
#include "etnet/metrics.hpp"

namespace etnet {

namespace {

constexpr double nan_v = std::numeric_limits<double>::quiet_NaN();

std::string format_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool is_anomaly_label(const std::string& label) {
    return label.rfind("anomaly", 0) == 0;
}

std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "io", "cannot open " + path + " for writing");
    out << text;
    require(out.good(), "io", "write to " + path + " failed");
}

nlohmann::json gmm_report(const GmmState& g) {
    nlohmann::json j;
    j["K"] = g.K;
    j["dim"] = g.dim;
    j["phi"] = to_std(g.phi);
    nlohmann::json means = nlohmann::json::array();
    nlohmann::json covs = nlohmann::json::array();
    for (Eigen::Index k = 0; k < g.K; ++k) {
        means.push_back(to_std(g.means[static_cast<std::size_t>(k)]));
        const Matrix& c = g.covs[static_cast<std::size_t>(k)];
        std::vector<double> flat;
        for (Eigen::Index r = 0; r < c.rows(); ++r)
            for (Eigen::Index col = 0; col < c.cols(); ++col) flat.push_back(c(r, col));
        covs.push_back(flat);
    }
    j["means"] = means;
    j["covs"] = covs;
    return j;
}

// Linear interpolation between closest ranks over an ascending-sorted list.
double percentile(const std::vector<double>& sorted, double p) {
    require(!sorted.empty(), "config", "percentile: no values");
    require(p >= 0.0 && p <= 100.0, "config", "percentile: p must lie in [0, 100]");
    if (sorted.size() == 1) return sorted[0];
    double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// Ground truth is usable for AUC only when someone labeled the corpus and
// both classes actually occur.
std::optional<LabeledScores> auc_input(const Corpus& data, const std::vector<double>& scores) {
    bool any = false;
    for (const TimeSeries& x : data) any = any || !x.label.empty();
    if (!any) return std::nullopt;
    LabeledScores ls;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ls.labels.push_back(is_anomaly_label(data[i].label) ? 1 : 0);
        ls.scores.push_back(scores[i]);
    }
    bool pos = false, neg = false;
    for (int y : ls.labels) (y == 1 ? pos : neg) = true;
    if (!pos || !neg) return std::nullopt;
    return ls;
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    require(j.is_object(), "config", where + ": expected a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || item.key() == k;
        require(ok, "config", where + ": unknown key '" + item.key() + "'");
    }
}

} // namespace

std::string error_json(const std::string& kind, const std::string& message) {
    nlohmann::json j;
    j["error"]["kind"] = kind;
    j["error"]["message"] = message;
    return j.dump();
}

void validate(const RunConfig& cfg) {
    validate(cfg.model);
    require(cfg.window >= 2, "config", "run config: window length must be at least 2");
    require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0, "config",
            "run config: train_fraction must lie in (0, 1)");
    require(cfg.contamination >= 0.0 && cfg.contamination <= 0.5, "config",
            "run config: contamination must lie in [0, 0.5]");
    require(cfg.task == "detect" || cfg.task == "cluster", "config",
            "run config: task must be 'detect' or 'cluster'");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), "config", "run config: expected a JSON object");
    RunConfig cfg;
    nlohmann::json model = nlohmann::json::object();
    try {
        for (const auto& item : j.items()) {
            const std::string& k = item.key();
            const nlohmann::json& v = item.value();
            if (k == "window")
                cfg.window = v.get<std::size_t>();
            else if (k == "train_fraction")
                cfg.train_fraction = v.get<double>();
            else if (k == "contamination")
                cfg.contamination = v.get<double>();
            else if (k == "task")
                cfg.task = v.get<std::string>();
            else
                model[k] = v;
        }
    } catch (const nlohmann::json::exception& e) {
        fail("config", std::string("run config: ") + e.what());
    }
    cfg.model = config_from_json(model);
    validate(cfg);
    return cfg;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io", "cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("io", path + ": " + e.what());
    }
}

Corpus ingest(const std::string& path, std::size_t window) {
    require(window >= 2, "config", "ingest: window length must be at least 2");
    bool corpus = false, any = false;
    {
        std::ifstream in(path, std::ios::binary);
        require(in.good(), "io", "ingest: cannot open " + path);
        // corpus rows always carry commas, raw value streams never do
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            any = true;
            corpus = line.find(',') != std::string::npos;
            break;
        }
    }
    require(any, "io", "ingest: " + path + " is empty");
    if (corpus) return read_corpus_csv(path);

    std::vector<double> raw = read_value_stream(path);
    std::size_t nwin = raw.size() / window;
    require(nwin >= 1, "config",
            "ingest: " + std::to_string(raw.size()) + " values cannot fill a window of " +
                std::to_string(window));
    Corpus data;
    for (std::size_t w = 0; w < nwin; ++w) {
        TimeSeries x;
        x.id = "w" + std::to_string(w);
        x.values.assign(raw.begin() + static_cast<std::ptrdiff_t>(w * window),
                        raw.begin() + static_cast<std::ptrdiff_t>((w + 1) * window));
        data.push_back(std::move(x));
    }
    return data;
}

TrainOutcome run_train(const RunConfig& cfg, const std::string& data_path,
                       const std::string& out_dir) {
    validate(cfg);
    Corpus all = ingest(data_path, cfg.window);

    // pre-labeled anomalies never enter the fit; they join the held-out side
    Corpus normal, held;
    for (const TimeSeries& x : all) (is_anomaly_label(x.label) ? held : normal).push_back(x);
    require(!normal.empty(), "config", "run_train: no unlabeled or normal samples to fit");

    std::vector<std::size_t> order(normal.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.model.seed, 600));
    for (std::size_t i = normal.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);
    std::size_t n_train = static_cast<std::size_t>(cfg.train_fraction * static_cast<double>(normal.size()));
    if (n_train == 0) n_train = 1;

    Corpus training;
    for (std::size_t i = 0; i < normal.size(); ++i)
        (i < n_train ? training : held).push_back(normal[order[i]]);

    std::vector<std::string> contaminated;
    if (cfg.contamination > 0.0) {
        Corpus dirty = contaminate_training(training, cfg.contamination, {1, 2, 3, 4},
                                            derive_seed(cfg.model.seed, 601));
        for (std::size_t i = 0; i < training.size(); ++i)
            if (dirty[i].label != training[i].label) contaminated.push_back(dirty[i].id);
        training = std::move(dirty);
    }

    TrainReport rep;
    EtNetModel m = train(cfg.model, training, &rep);

    std::filesystem::create_directories(out_dir);
    TrainOutcome out;
    out.model_path = out_dir + "/model.json";
    out.contaminated_ids = contaminated;
    save_model(m, out.model_path);
    if (!held.empty()) {
        out.test_path = out_dir + "/test.csv";
        write_corpus_csv(out.test_path, held);
    }

    nlohmann::json r;
    r["task"] = cfg.task;
    r["train_count"] = training.size();
    r["held_out_count"] = held.size();
    r["contaminated_ids"] = contaminated;
    r["loss_w"] = rep.loss_w;
    r["loss_d"] = rep.loss_d;
    r["recon_w"] = rep.recon_w;
    r["recon_d"] = rep.recon_d;
    r["gmm_w"] = gmm_report(m.gmm_w);
    r["gmm_d"] = gmm_report(m.gmm_d);
    out.report_path = out_dir + "/train_report.json";
    write_text_file(out.report_path, r.dump(1) + "\n");
    return out;
}

ScoreOutcome run_score(const std::string& model_path, const std::string& data_path,
                       const std::string& out_dir, double threshold_percentile, bool plot_data) {
    EtNetModel m = load_model(model_path);
    Corpus data = ingest(data_path, m.series_length);
    require(!data.empty(), "config", "run_score: no samples");

    ScoreOutcome out;
    out.auc_value = nan_v;
    out.threshold = nan_v;
    if (threshold_percentile >= 0.0)
        out.threshold = percentile(m.training_scores, threshold_percentile);

    bool labeled = false;
    for (const TimeSeries& x : data) labeled = labeled || !x.label.empty();

    std::vector<double> scores;
    std::string lines, plot;
    if (plot_data) {
        ScoredSample first = anomaly_score(m, data[0]);
        plot = "id";
        for (Eigen::Index i = 0; i < first.z_w.size(); ++i) plot += ",zw" + std::to_string(i);
        for (Eigen::Index i = 0; i < first.z_d.size(); ++i) plot += ",zd" + std::to_string(i);
        plot += ",label\n";
    }
    for (const TimeSeries& x : data) {
        ScoredSample s = anomaly_score(m, x);
        scores.push_back(s.score);
        nlohmann::json o;
        o["id"] = s.id;
        o["score"] = s.score;
        o["E_w"] = s.e_w;
        o["E_d"] = s.e_d;
        o["z_w"] = to_std(s.z_w);
        o["z_d"] = to_std(s.z_d);
        if (labeled) o["label"] = is_anomaly_label(x.label) ? 1 : 0;
        if (threshold_percentile >= 0.0) {
            bool flag = s.score > out.threshold;
            o["flag"] = flag;
            if (flag) out.flagged += 1;
        }
        lines += o.dump() + "\n";
        if (plot_data) {
            plot += x.id;
            for (Eigen::Index i = 0; i < s.z_w.size(); ++i) plot += "," + format_double(s.z_w(i));
            for (Eigen::Index i = 0; i < s.z_d.size(); ++i) plot += "," + format_double(s.z_d(i));
            plot += "," + x.label + "\n";
        }
    }

    std::filesystem::create_directories(out_dir);
    out.scores_path = out_dir + "/scores.jsonl";
    write_text_file(out.scores_path, lines);
    if (plot_data) {
        out.plot_path = out_dir + "/plot.csv";
        write_text_file(out.plot_path, plot);
    }

    if (std::optional<LabeledScores> ls = auc_input(data, scores)) {
        out.auc_value = auc(*ls);
        out.report = metric_report("auc", out.auc_value, data.size(), {});
    }
    return out;
}

ClusterOutcome run_cluster(const std::string& model_path, const std::string& data_path,
                           const std::string& out_dir) {
    EtNetModel m = load_model(model_path);
    Corpus data = ingest(data_path, m.series_length);
    require(!data.empty(), "config", "run_cluster: no samples");

    std::vector<int> predicted;
    std::string lines;
    bool gold_complete = true;
    for (const TimeSeries& x : data) {
        int label = cluster_assign(m, x);
        predicted.push_back(label);
        nlohmann::json o;
        o["id"] = x.id;
        o["label"] = label;
        if (!x.label.empty()) o["gold"] = x.label;
        gold_complete = gold_complete && !x.label.empty();
        lines += o.dump() + "\n";
    }

    std::filesystem::create_directories(out_dir);
    ClusterOutcome out;
    out.nmi_value = nan_v;
    out.labels_path = out_dir + "/clusters.jsonl";
    write_text_file(out.labels_path, lines);

    if (gold_complete) {
        std::vector<std::string> seen;
        std::vector<int> gold;
        for (const TimeSeries& x : data) {
            auto it = std::find(seen.begin(), seen.end(), x.label);
            if (it == seen.end()) {
                seen.push_back(x.label);
                it = std::prev(seen.end());
            }
            gold.push_back(static_cast<int>(it - seen.begin()));
        }
        out.nmi_value = nmi(predicted, gold);
        out.report = metric_report("nmi", out.nmi_value, data.size(), {});
    }
    return out;
}

std::string run_explain(const std::string& model_path, const std::string& data_path,
                        const std::string& sample_id, int n_points, int k_neighbors,
                        BranchSel branch, const std::string& out_dir) {
    EtNetModel m = load_model(model_path);
    Corpus data = ingest(data_path, m.series_length);

    std::size_t target = data.size();
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i].id == sample_id) {
            target = i;
            break;
        }
    require(target < data.size(), "config", "run_explain: unknown sample id '" + sample_id + "'");

    // the queried sample never references itself
    Corpus pool;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (i != target) pool.push_back(data[i]);
    require(!pool.empty(), "config", "run_explain: no reference candidates besides the sample");

    std::vector<ReferencePoint> refs =
        attribute(m, data[target], pool, branch, n_points, k_neighbors);

    nlohmann::json rep;
    rep["id"] = sample_id;
    rep["branch"] = branch == BranchSel::W ? "w" : "d";
    rep["anomaly"]["id"] = data[target].id;
    rep["anomaly"]["values"] = data[target].values;
    nlohmann::json stops = nlohmann::json::array();
    for (std::size_t j = 0; j < refs.size(); ++j) {
        nlohmann::json stop;
        stop["step"] = j + 1; // 1 is the anomaly end of the line
        stop["line_point"] = to_std(refs[j].line_point);
        nlohmann::json neighbors = nlohmann::json::array();
        for (std::size_t n = 0; n < refs[j].neighbor_ids.size(); ++n) {
            const TimeSeries& ref = pool[refs[j].neighbor_ids[n]];
            nlohmann::json item;
            item["id"] = ref.id;
            item["distance"] = refs[j].distances[n];
            item["values"] = ref.values;
            neighbors.push_back(item);
        }
        stop["neighbors"] = neighbors;
        stops.push_back(stop);
    }
    rep["references"] = stops;

    std::filesystem::create_directories(out_dir);
    std::string path = out_dir + "/explain.json";
    write_text_file(path, rep.dump(1) + "\n");
    return path;
}

std::string run_synth(const std::string& spec_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed_override) {
    nlohmann::json spec = read_json_file(spec_path);
    check_keys(spec, {"seed", "length", "interval", "groups", "anomalies"}, "synth spec");
    Corpus corpus;
    try {
        std::uint64_t seed = spec.value("seed", std::uint64_t{0});
        if (seed_override) seed = *seed_override;
        require(spec.contains("length"), "config", "synth spec: missing 'length'");
        std::size_t length = spec.at("length").get<std::size_t>();
        double interval = spec.value("interval", 60.0);
        require(spec.contains("groups") && spec["groups"].is_array() && !spec["groups"].empty(),
                "config", "synth spec: 'groups' must be a non-empty array");

        std::size_t global = 0;
        for (std::size_t gi = 0; gi < spec["groups"].size(); ++gi) {
            const nlohmann::json& g = spec["groups"][gi];
            check_keys(g, {"label", "count", "wave", "events", "noise"},
                       "synth spec group " + std::to_string(gi));
            std::string label = g.value("label", std::string{});
            std::size_t count = g.value("count", std::size_t{1});
            require(count >= 1, "config", "synth spec: group count must be at least 1");
            require(g.contains("wave") || g.contains("events"), "config",
                    "synth spec group " + std::to_string(gi) + ": needs 'wave' or 'events'");

            Rng phase_rng(derive_seed(seed, 700 + gi));
            for (std::size_t c = 0; c < count; ++c) {
                TimeSeries x;
                x.interval = interval;
                x.label = label;
                x.values.assign(length, 0.0);
                if (g.contains("wave")) {
                    const nlohmann::json& w = g["wave"];
                    check_keys(w, {"kind", "period", "amplitude", "phase", "phase_jitter"},
                               "synth spec wave");
                    require(w.contains("kind") && w.contains("period"), "config",
                            "synth spec wave: needs 'kind' and 'period'");
                    double phase = w.value("phase", 0.0);
                    double jitter = w.value("phase_jitter", 0.0);
                    if (jitter > 0.0) phase += jitter * phase_rng.uniform();
                    TimeSeries wave =
                        gen_wave(wave_kind_from_string(w.at("kind").get<std::string>()), length,
                                 w.at("period").get<double>(), w.value("amplitude", 1.0), phase, 0);
                    for (std::size_t t = 0; t < length; ++t) x.values[t] += wave.values[t];
                }
                if (g.contains("events")) {
                    require(g["events"].is_array(), "config", "synth spec: 'events' must be an array");
                    std::vector<EventSpec> events;
                    for (std::size_t ei = 0; ei < g["events"].size(); ++ei) {
                        const nlohmann::json& e = g["events"][ei];
                        check_keys(e, {"kind", "period", "bursts", "burst_len", "intensity"},
                                   "synth spec event");
                        std::uint64_t es = derive_seed(seed, 800 + gi * 1000003 + c * 131 + ei);
                        std::string kind = e.value("kind", std::string{"mtc"});
                        if (kind == "mtc")
                            events.push_back(make_mtc_event(length, e.value("period", std::size_t{12}),
                                                            e.value("intensity", 0.3), es));
                        else if (kind == "htc")
                            events.push_back(make_htc_event(length, e.value("bursts", std::size_t{2}),
                                                            e.value("burst_len", std::size_t{5}),
                                                            e.value("intensity", 2.0), es));
                        else
                            fail("config", "synth spec event: unknown kind '" + kind + "'");
                    }
                    TimeSeries et = gen_event_triggered(events, length);
                    for (std::size_t t = 0; t < length; ++t) x.values[t] += et.values[t];
                }
                if (g.contains("noise")) {
                    const nlohmann::json& n = g["noise"];
                    check_keys(n, {"type", "level"}, "synth spec noise");
                    require(n.contains("type") && n.contains("level"), "config",
                            "synth spec noise: needs 'type' and 'level'");
                    x = apply_noise(x, n.at("type").get<int>(), n.at("level").get<double>(),
                                    derive_seed(seed, 900 + global));
                }
                x.id = (label.empty() ? std::string{"s"} : label) + "-" + std::to_string(global);
                ++global;
                corpus.push_back(std::move(x));
            }
        }

        if (spec.contains("anomalies")) {
            const nlohmann::json& a = spec["anomalies"];
            check_keys(a, {"fraction", "types"}, "synth spec anomalies");
            require(a.contains("fraction") && a.contains("types"), "config",
                    "synth spec anomalies: needs 'fraction' and 'types'");
            corpus = contaminate_training(corpus, a.at("fraction").get<double>(),
                                          a.at("types").get<std::vector<int>>(),
                                          derive_seed(seed, 999));
        }
    } catch (const nlohmann::json::exception& e) {
        fail("config", std::string("synth spec: ") + e.what());
    }

    std::filesystem::create_directories(out_dir);
    std::string path = out_dir + "/corpus.csv";
    write_corpus_csv(path, corpus);
    return path;
}

DistOutcome run_eval_dist(const std::string& data_path, const std::string& metric,
                          const std::string& out_dir, std::size_t window, long band,
                          double epsilon) {
    require(metric == "euclidean" || metric == "dtw" || metric == "edr", "config",
            "run_eval_dist: metric must be euclidean, dtw, or edr");
    Corpus data = ingest(data_path, window);
    require(!data.empty(), "config", "run_eval_dist: no samples");

    const std::size_t n = data.size();
    Matrix dist = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 0.0;
            if (metric == "euclidean")
                d = euclidean(data[i].values, data[j].values);
            else if (metric == "dtw")
                d = dtw(data[i].values, data[j].values, band);
            else
                d = edr(data[i].values, data[j].values, epsilon);
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
            dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
        }

    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j > 0) text += ",";
            text += format_double(dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        text += "\n";
    }
    std::filesystem::create_directories(out_dir);
    DistOutcome out;
    out.matrix_path = out_dir + "/dist_" + metric + ".csv";
    write_text_file(out.matrix_path, text);

    double mean = n > 1 ? dist.sum() / static_cast<double>(n * n - n) : 0.0;
    std::map<std::string, double> params;
    if (metric == "dtw" && band >= 0) params["window"] = static_cast<double>(band);
    if (metric == "edr") params["epsilon"] = epsilon;
    out.report = metric_report(metric, mean, n, params);
    return out;
}

} // namespace etnet
