#pragma once

#include <memory>
#include <vector>

#include "etnet/autodiff.hpp"

namespace etnet {

// Membership estimator g_m: one tanh hidden layer of width 10, softmax out.
struct MembershipNet {
    AffineParams hidden;  // 10 x in
    AffineParams out;     // K x 10
    Eigen::Index in = 0;
    Eigen::Index K = 0;

    static MembershipNet init(Eigen::Index in, Eigen::Index K, const std::string& name,
                              Rng& rng);
    void collect(ParamSet& ps);
};

// gamma = softmax(W2 tanh(W1 z + b1) + b2), recorded on the tape so that
// gradient flows from the energy term back into the compression network.
Tensor membership(Tape& tape, MembershipNet& net, Tensor z);

// Mixture state for one branch's latent space. Covariances are stored with
// the diagonal loading already applied; Cholesky factors are kept alongside
// and refreshed on every mutation.
struct GmmState {
    Eigen::Index K = 0;
    Eigen::Index dim = 0;
    Vector phi;
    std::vector<Vector> means;
    std::vector<Matrix> covs;
    double eps_reg = 1e-6;
    bool ready = false;

    const std::vector<Matrix>& chol() const { return chol_; }
    const Vector& logdet() const { return logdet_; }

    // Factorizes every covariance; fails with a structured error when a
    // covariance is not positive definite even after loading.
    void refresh_factors();

private:
    std::vector<Matrix> chol_;
    Vector logdet_;
};

GmmState make_gmm_state(Eigen::Index K, Eigen::Index dim, double eps_reg);

// phi_k = column mean of the M x K membership batch.
Vector update_phi(const Matrix& gamma);

// T full-batch EM iterations over z (M x dim) with phi held fixed: E-step
// responsibilities from the current state, M-step recomputing means and
// covariances (plus loading). Components that receive no responsibility left
// untouched.
void em_update(GmmState& state, const Matrix& z, int iterations);

// Seeds the means k-means++-style from batch embeddings and sets every
// covariance to the batch covariance plus loading. phi is the caller's job
// (update_phi of the first-epoch memberships).
void seed_means(GmmState& state, const Matrix& z, Rng& rng);

// Posterior component responsibilities p(k | z) of one embedding.
Vector responsibilities(const GmmState& state, const Vector& z);

// Re-estimates the whole mixture from scratch on a frozen embedding batch:
// k-means++ seeded Lloyd runs keep the lowest within-cluster sum of squares,
// per-cluster moments initialise the components, then standard EM (weights
// included, the caller's phi is only the starting point) with a minimal
// covariance loading. The per-epoch updates chase a moving embedding and can
// end on a stale local optimum; this pass re-reads the final geometry.
void refit_mixture(GmmState& state, const Matrix& z, Rng& rng);

// E = -log sum_k phi_k N(z; mu_k, Sigma_k), log-sum-exp over Cholesky-based
// per-component log-densities.
double energy(const GmmState& state, const Vector& z);

// Mean per-sample log-likelihood of a batch (rows of z).
double batch_log_likelihood(const GmmState& state, const Matrix& z);

// Snapshot of the state for the recorded per-sample energy op.
std::shared_ptr<const GmmGraphConsts> graph_consts(const GmmState& state);

} // namespace etnet
