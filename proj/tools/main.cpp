#include <CLI11.hpp>
#include <cstdio>
#include <json.hpp>

#include "etnet/cli.hpp"

using namespace etnet;

namespace {

void emit(const nlohmann::json& j) { std::printf("%s\n", j.dump().c_str()); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"similarity learning toolkit for event-triggered traffic series"};
    app.require_subcommand(1);

    std::string config_path, model_path, data_path, out_dir = "out";
    std::uint64_t seed = 0;
    double threshold_percentile = -1.0;
    bool plot_data = false;
    std::string sample_id, branch = "w", metric;
    int n_points = 3, k_neighbors = 3;
    std::size_t window = 120;
    long band = -1;
    double epsilon = 0.0;

    CLI::App* train_cmd = app.add_subcommand("train", "fit a model on a dataset");
    train_cmd->add_option("--config", config_path, "run configuration JSON")->required();
    train_cmd->add_option("--data", data_path, "corpus CSV or raw value stream")->required();
    CLI::Option* train_seed = train_cmd->add_option("--seed", seed, "override the config seed");
    train_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* score_cmd = app.add_subcommand("score", "score samples against a model");
    score_cmd->add_option("--model", model_path, "model JSON")->required();
    score_cmd->add_option("--data", data_path, "corpus CSV or raw value stream")->required();
    score_cmd->add_option("--threshold-percentile", threshold_percentile,
                          "flag scores above this percentile of the training scores");
    score_cmd->add_flag("--plot-data", plot_data, "emit per-sample latent coordinates as CSV");
    score_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* cluster_cmd = app.add_subcommand("cluster", "assign mixture-based cluster labels");
    cluster_cmd->add_option("--model", model_path, "model JSON")->required();
    cluster_cmd->add_option("--data", data_path, "corpus CSV or raw value stream")->required();
    cluster_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* explain_cmd = app.add_subcommand("explain", "reference samples for one detection");
    explain_cmd->add_option("--model", model_path, "model JSON")->required();
    explain_cmd->add_option("--data", data_path, "corpus CSV or raw value stream")->required();
    explain_cmd->add_option("--id", sample_id, "sample to explain")->required();
    explain_cmd->add_option("--points", n_points, "stops on the latent reference line");
    explain_cmd->add_option("--refs", k_neighbors, "reference samples per stop");
    explain_cmd->add_option("--branch", branch, "latent space to search, w or d")
        ->check(CLI::IsMember({"w", "d"}));
    explain_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    synth_cmd->add_option("--config", config_path, "generation spec JSON")->required();
    CLI::Option* synth_seed = synth_cmd->add_option("--seed", seed, "override the spec seed");
    synth_cmd->add_option("--out", out_dir, "output directory");

    CLI::App* dist_cmd = app.add_subcommand("eval-dist", "pairwise distance matrix over a corpus");
    dist_cmd->add_option("--data", data_path, "corpus CSV or raw value stream")->required();
    dist_cmd->add_option("--metric", metric, "euclidean, dtw, or edr")->required();
    dist_cmd->add_option("--window", window, "bins per window for raw streams");
    dist_cmd->add_option("--band", band, "warping band half-width, negative for none");
    dist_cmd->add_option("--epsilon", epsilon, "match tolerance for edr");
    dist_cmd->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", error_json("usage", e.what()).c_str());
        return 1;
    }

    try {
        if (*train_cmd) {
            RunConfig cfg = run_config_from_json(read_json_file(config_path));
            if (train_seed->count() > 0) cfg.model.seed = seed;
            TrainOutcome out = run_train(cfg, data_path, out_dir);
            nlohmann::json j;
            j["model"] = out.model_path;
            j["report"] = out.report_path;
            if (!out.test_path.empty()) j["test"] = out.test_path;
            j["contaminated"] = out.contaminated_ids.size();
            emit(j);
        } else if (*score_cmd) {
            ScoreOutcome out =
                run_score(model_path, data_path, out_dir, threshold_percentile, plot_data);
            nlohmann::json j;
            j["scores"] = out.scores_path;
            if (!out.plot_path.empty()) j["plot"] = out.plot_path;
            if (threshold_percentile >= 0.0) {
                j["threshold"] = out.threshold;
                j["flagged"] = out.flagged;
            }
            emit(j);
            if (!out.report.empty()) std::printf("%s\n", out.report.c_str());
        } else if (*cluster_cmd) {
            ClusterOutcome out = run_cluster(model_path, data_path, out_dir);
            nlohmann::json j;
            j["labels"] = out.labels_path;
            emit(j);
            if (!out.report.empty()) std::printf("%s\n", out.report.c_str());
        } else if (*explain_cmd) {
            std::string path = run_explain(model_path, data_path, sample_id, n_points, k_neighbors,
                                           branch == "w" ? BranchSel::W : BranchSel::D, out_dir);
            nlohmann::json j;
            j["report"] = path;
            emit(j);
        } else if (*synth_cmd) {
            std::optional<std::uint64_t> ov;
            if (synth_seed->count() > 0) ov = seed;
            std::string path = run_synth(config_path, out_dir, ov);
            nlohmann::json j;
            j["corpus"] = path;
            emit(j);
        } else if (*dist_cmd) {
            DistOutcome out = run_eval_dist(data_path, metric, out_dir, window, band, epsilon);
            nlohmann::json j;
            j["matrix"] = out.matrix_path;
            emit(j);
            std::printf("%s\n", out.report.c_str());
        }
        return 0;
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n", error_json(e.kind(), e.what()).c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", error_json("internal", e.what()).c_str());
        return 1;
    }
}
