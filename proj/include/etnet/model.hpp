#pragma once

#include <json.hpp>

#include "etnet/branches.hpp"
#include "etnet/gmm.hpp"
#include "etnet/optim.hpp"
#include "etnet/series.hpp"

namespace etnet {

struct ModelConfig {
    int n_e = 3;          // parallel encoder/decoder pairs in the W branch
    int n_l = 2;          // dilated layers in the D branch
    Eigen::Index n_n = 8; // hidden units per cell
    Eigen::Index k = 1;   // mixture components
    Eigen::Index l_c = 1; // compressed latent width, extended latent is l_c+2
    double lambda = 0.1;
    double learning_rate = 1e-3;
    int epochs = 200;
    std::uint64_t seed = 0;
    CellKind w_cell = CellKind::Lstm;
    CellKind d_cell = CellKind::Gru;
    double eps_reg = 1e-6;
    int em_iterations = 1;
    bool standard_lstm_output = false;
    bool normalize_ensemble_energy = false;
    int early_stop_patience = 20;
    double early_stop_min_delta = 1e-6;
    // Global gradient norm cap applied before each step; 0 disables. Unrolled
    // recurrences produce occasional exploding gradients that otherwise wreck
    // a full-batch run in one step.
    double max_grad_norm = 5.0;
};

void validate(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ModelConfig& cfg);

// One branch's trainable pieces plus its frozen mixture state.
struct EtNetModel {
    ModelConfig config;
    MinMaxScaler scaler;
    std::size_t series_length = 0;

    WBranch w;
    MembershipNet gm_w;
    GmmState gmm_w;

    DBranch d;
    MembershipNet gm_d;
    GmmState gmm_d;

    double energy_mean_w = 0.0, energy_std_w = 1.0;
    double energy_mean_d = 0.0, energy_std_d = 1.0;
    std::vector<double> training_scores; // sorted ascending, for thresholds

    void collect_w(ParamSet& ps);
    void collect_d(ParamSet& ps);
};

struct TrainReport {
    std::vector<double> loss_w, loss_d;   // per epoch
    std::vector<double> recon_w, recon_d; // per epoch, reconstruction term only
};

// Mean squared reconstruction error over every (sample, decoder) pair plus
// lambda times the mean sample energy, as one recorded scalar.
Tensor branch_loss(const std::vector<Tensor>& recon_sses, const std::vector<Tensor>& energies,
                   double lambda);

EtNetModel train(const ModelConfig& cfg, const Corpus& data, TrainReport* report = nullptr);

struct ScoredSample {
    std::string id;
    Vector z_w, z_d;
    Vector gamma_w, gamma_d;     // per-branch mixture responsibilities of z
    double e_w = 0.0, e_d = 0.0; // raw branch energies
    double score = 0.0;          // max rule, optionally z-scored per branch
    int label = 0;               // membership-rule cluster assignment
};

ScoredSample anomaly_score(const EtNetModel& m, const TimeSeries& x);

// Branch with the larger peak membership wins; its argmax component is the
// label. Exact ties go to the W branch, then to the lowest index.
int cluster_from_memberships(const Vector& gamma_w, const Vector& gamma_d);
int cluster_assign(const EtNetModel& m, const TimeSeries& x);

enum class BranchSel { W, D };

struct ReferencePoint {
    Vector line_point;                      // position on the latent segment
    std::vector<std::size_t> neighbor_ids;  // indices into the training corpus
    std::vector<double> distances;          // matching latent distances
};

// Walks the latent segment from the anomaly's embedding to the mixture's
// weighted center and reports the nearest training samples at each stop,
// anomaly end first.
std::vector<ReferencePoint> attribute(const EtNetModel& m, const TimeSeries& anomaly,
                                      const Corpus& training, BranchSel branch, int n_points,
                                      int k_neighbors);

void save_model(const EtNetModel& m, const std::string& path);
EtNetModel load_model(const std::string& path);

} // namespace etnet
