#pragma once

#include <json.hpp>
#include <optional>

#include "etnet/model.hpp"

namespace etnet {

// Everything a training run needs beyond the model hyperparameters. The
// extra keys live in the same JSON file as the model config; unknown keys
// are still rejected.
struct RunConfig {
    ModelConfig model;
    std::size_t window = 120;    // bins per sample when cutting raw streams
    double train_fraction = 0.4; // corpus share used for fitting
    double contamination = 0.0;  // anomaly injection fraction on the training split
    std::string task = "detect"; // "detect" or "cluster", recorded for audit
};

void validate(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

// Corpus rows pass through unchanged; a raw one-value-per-line stream is cut
// into non-overlapping windows with the trailing remainder dropped and ids
// assigned sequentially.
Corpus ingest(const std::string& path, std::size_t window);

struct TrainOutcome {
    std::string model_path;
    std::string report_path;
    std::string test_path; // empty when no samples were held out
    std::vector<std::string> contaminated_ids;
};

// Splits the corpus (labeled anomalies always land in the held-out part),
// optionally contaminates the training split, trains, and persists the model
// next to a JSON report of per-epoch losses and final mixture parameters.
TrainOutcome run_train(const RunConfig& cfg, const std::string& data_path,
                       const std::string& out_dir);

struct ScoreOutcome {
    std::string scores_path;
    std::string plot_path; // empty unless plot data was requested
    double auc_value;      // NaN when ground truth is absent or one-sided
    std::string report;    // metric-report line, empty when auc_value is NaN
    double threshold;      // NaN unless a percentile was requested
    std::size_t flagged = 0;
};

// Scores every sample into JSONL. A threshold percentile (over the stored
// training scores) appends binary flags; ground-truth labels, when present
// on both classes, produce an AUC metric report.
ScoreOutcome run_score(const std::string& model_path, const std::string& data_path,
                       const std::string& out_dir, double threshold_percentile = -1.0,
                       bool plot_data = false);

struct ClusterOutcome {
    std::string labels_path;
    double nmi_value;   // NaN when gold labels are absent
    std::string report; // metric-report line, empty when nmi_value is NaN
};

ClusterOutcome run_cluster(const std::string& model_path, const std::string& data_path,
                           const std::string& out_dir);

// Emits the anomaly series and, for each stop on the latent reference line,
// the nearest training series (ids and values), anomaly end first.
std::string run_explain(const std::string& model_path, const std::string& data_path,
                        const std::string& sample_id, int n_points, int k_neighbors,
                        BranchSel branch, const std::string& out_dir);

// Deterministic corpus generation from a JSON directive file; returns the
// corpus path. The override takes precedence over the spec's own seed.
std::string run_synth(const std::string& spec_path, const std::string& out_dir,
                      std::optional<std::uint64_t> seed_override = std::nullopt);

// Strict JSON file loader shared by the subcommands.
nlohmann::json read_json_file(const std::string& path);

struct DistOutcome {
    std::string matrix_path;
    std::string report; // metric-report line with the mean pairwise distance
};

// Full pairwise distance matrix over a corpus under euclidean, dtw, or edr.
DistOutcome run_eval_dist(const std::string& data_path, const std::string& metric,
                          const std::string& out_dir, std::size_t window = 120,
                          long band = -1, double epsilon = 0.0);

// One-line error envelope for the diagnostic stream.
std::string error_json(const std::string& kind, const std::string& message);

} // namespace etnet
