#include "etnet/gmm.hpp"

#include <cmath>
#include <limits>

namespace etnet {

namespace {

// Per-component log-densities of one point against every component.
Vector component_log_densities(const GmmState& s, const Vector& z) {
    const double log2pi = std::log(2.0 * M_PI);
    Vector out(s.K);
    for (Eigen::Index k = 0; k < s.K; ++k) {
        Vector y = s.chol()[static_cast<std::size_t>(k)]
                       .triangularView<Eigen::Lower>()
                       .solve(z - s.means[static_cast<std::size_t>(k)]);
        out(k) = -0.5 * (static_cast<double>(s.dim) * log2pi + s.logdet()(k) + y.squaredNorm());
    }
    return out;
}

double log_sum_exp(const Vector& l) {
    double m = l.maxCoeff();
    return m + std::log((l.array() - m).exp().sum());
}

Vector log_mixture_terms(const GmmState& s, const Vector& z) {
    Vector l = component_log_densities(s, z);
    for (Eigen::Index k = 0; k < s.K; ++k)
        l(k) += std::log(std::max(s.phi(k), 1e-300));
    return l;
}

// k-means++: first row uniform, each next proportional to squared distance
// from the nearest row already chosen.
std::vector<Eigen::Index> kmeanspp_rows(const Matrix& z, Eigen::Index K, Rng& rng) {
    const Eigen::Index M = z.rows();
    std::vector<Eigen::Index> chosen;
    chosen.push_back(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(M))));
    Vector d2 = (z.rowwise() - z.row(chosen[0])).rowwise().squaredNorm();
    while (static_cast<Eigen::Index>(chosen.size()) < K) {
        double total = d2.sum();
        Eigen::Index pick;
        if (total <= 0.0) {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(M)));
        } else {
            double u = rng.uniform() * total;
            double acc = 0.0;
            pick = M - 1;
            for (Eigen::Index i = 0; i < M; ++i) {
                acc += d2(i);
                if (u <= acc) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
        d2 = d2.cwiseMin((z.rowwise() - z.row(pick)).rowwise().squaredNorm());
    }
    return chosen;
}

// Lloyd iterations from the given centers to an assignment fixed point
// (capped), overwriting centers and assign. Returns the within-cluster sum
// of squares of the result. Empty clusters keep their previous center.
double lloyd(const Matrix& z, Matrix& centers, std::vector<Eigen::Index>& assign) {
    const Eigen::Index M = z.rows();
    const Eigen::Index K = centers.rows();
    assign.assign(static_cast<std::size_t>(M), -1);
    for (int it = 0; it < 100; ++it) {
        bool moved = false;
        for (Eigen::Index i = 0; i < M; ++i) {
            Eigen::Index nearest = 0;
            double best = (z.row(i) - centers.row(0)).squaredNorm();
            for (Eigen::Index k = 1; k < K; ++k) {
                double d = (z.row(i) - centers.row(k)).squaredNorm();
                if (d < best) {
                    best = d;
                    nearest = k;
                }
            }
            if (assign[static_cast<std::size_t>(i)] != nearest) {
                assign[static_cast<std::size_t>(i)] = nearest;
                moved = true;
            }
        }
        if (!moved) break;
        for (Eigen::Index k = 0; k < K; ++k) {
            Vector sum = Vector::Zero(z.cols());
            Eigen::Index count = 0;
            for (Eigen::Index i = 0; i < M; ++i) {
                if (assign[static_cast<std::size_t>(i)] != k) continue;
                sum += z.row(i).transpose();
                ++count;
            }
            if (count > 0) centers.row(k) = (sum / static_cast<double>(count)).transpose();
        }
    }
    double wcss = 0.0;
    for (Eigen::Index i = 0; i < M; ++i)
        wcss += (z.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    return wcss;
}

} // namespace

MembershipNet MembershipNet::init(Eigen::Index in, Eigen::Index K, const std::string& name,
                                  Rng& rng) {
    require(in >= 1 && K >= 1, "config", "membership net widths must be positive");
    MembershipNet net;
    net.in = in;
    net.K = K;
    net.hidden = AffineParams::init(name + ".hidden", 10, in, rng);
    net.out = AffineParams::init(name + ".out", K, 10, rng);
    return net;
}

void MembershipNet::collect(ParamSet& ps) {
    hidden.collect(ps);
    out.collect(ps);
}

Tensor membership(Tape& tape, MembershipNet& net, Tensor z) {
    (void)tape;
    require(z.rows() == net.in && z.cols() == 1, "shape",
            "membership: latent width " + std::to_string(z.rows()) + " != net input " +
                std::to_string(net.in));
    return softmax(affine(net.out, etnet::tanh(affine(net.hidden, z))));
}

void GmmState::refresh_factors() {
    require(K >= 1 && static_cast<Eigen::Index>(covs.size()) == K, "config",
            "mixture state is incomplete");
    chol_.clear();
    chol_.reserve(static_cast<std::size_t>(K));
    logdet_ = Vector(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        Eigen::LLT<Matrix> llt(covs[static_cast<std::size_t>(k)]);
        require(llt.info() == Eigen::Success, "numeric",
                "covariance of component " + std::to_string(k) +
                    " is not factorizable after regularization");
        Matrix L = llt.matrixL();
        chol_.push_back(L);
        logdet_(k) = 2.0 * L.diagonal().array().log().sum();
    }
}

GmmState make_gmm_state(Eigen::Index K, Eigen::Index dim, double eps_reg) {
    require(K >= 1 && dim >= 1, "config", "mixture needs K >= 1 and dim >= 1");
    require(eps_reg > 0.0, "config", "eps_reg must be positive");
    GmmState s;
    s.K = K;
    s.dim = dim;
    s.eps_reg = eps_reg;
    s.phi = Vector::Constant(K, 1.0 / static_cast<double>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        s.means.push_back(Vector::Zero(dim));
        s.covs.push_back(Matrix::Identity(dim, dim));
    }
    s.refresh_factors();
    return s;
}

Vector update_phi(const Matrix& gamma) {
    require(gamma.rows() >= 1, "shape", "update_phi: empty membership batch");
    return gamma.colwise().mean().transpose();
}

namespace {

// M-step over precomputed responsibilities: means and loaded covariances.
void em_m_step(GmmState& state, const Matrix& z, const Matrix& r, double loading) {
    const Eigen::Index M = z.rows();
    for (Eigen::Index k = 0; k < state.K; ++k) {
        double nk = r.col(k).sum();
        if (nk <= 1e-12) continue;  // dead component keeps its parameters
        Vector mu = (z.transpose() * r.col(k)) / nk;
        Matrix cov = Matrix::Zero(state.dim, state.dim);
        for (Eigen::Index i = 0; i < M; ++i) {
            Vector d = z.row(i).transpose() - mu;
            cov.noalias() += r(i, k) * (d * d.transpose());
        }
        cov /= nk;
        cov += loading * Matrix::Identity(state.dim, state.dim);
        state.means[static_cast<std::size_t>(k)] = mu;
        state.covs[static_cast<std::size_t>(k)] = cov;
    }
    state.refresh_factors();
}

Matrix e_step(const GmmState& state, const Matrix& z) {
    Matrix r(z.rows(), state.K);
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        r.row(i) = responsibilities(state, z.row(i).transpose()).transpose();
    return r;
}

} // namespace

void em_update(GmmState& state, const Matrix& z, int iterations) {
    require(state.phi.size() == state.K, "config", "em_update: weight vector out of sync");
    require(z.cols() == state.dim, "shape", "em_update: embedding width mismatch");
    require(z.rows() >= 1, "shape", "em_update: empty batch");
    require(iterations >= 1, "config", "em_update: iterations must be >= 1");

    // phi held fixed: the mixture weights belong to the membership nets
    // during training and only means and covariances track the embeddings.
    for (int it = 0; it < iterations; ++it)
        em_m_step(state, z, e_step(state, z), state.eps_reg);
    state.ready = true;
}

void seed_means(GmmState& state, const Matrix& z, Rng& rng) {
    require(z.rows() >= 1, "shape", "seed_means: empty batch");
    require(z.cols() == state.dim, "shape", "seed_means: embedding width mismatch");
    const Eigen::Index M = z.rows();

    std::vector<Eigen::Index> chosen = kmeanspp_rows(z, state.K, rng);

    Vector mean = z.colwise().mean().transpose();
    Matrix centered = z.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(M) +
                 state.eps_reg * Matrix::Identity(state.dim, state.dim);
    for (Eigen::Index k = 0; k < state.K; ++k) {
        state.means[static_cast<std::size_t>(k)] = z.row(chosen[static_cast<std::size_t>(k)]).transpose();
        state.covs[static_cast<std::size_t>(k)] = cov;
    }
    state.refresh_factors();
    state.ready = true;
}

Vector responsibilities(const GmmState& state, const Vector& z) {
    require(z.size() == state.dim, "shape", "responsibilities: latent width mismatch");
    Vector l = log_mixture_terms(state, z);
    double lse = log_sum_exp(l);
    return (l.array() - lse).exp();
}

void refit_mixture(GmmState& state, const Matrix& z, Rng& rng) {
    require(z.rows() >= 1, "shape", "refit_mixture: empty batch");
    require(z.cols() == state.dim, "shape", "refit_mixture: embedding width mismatch");
    require(state.phi.size() == state.K, "config", "refit_mixture: weight vector out of sync");
    const Eigen::Index M = z.rows();
    const Eigen::Index K = state.K;
    const int restarts = 8;
    const int em_iterations = 60;
    // The training loading keeps energy curvature bounded against latent
    // collapse and can sit well above the scale that separates nearby
    // clusters. A read-out fit only needs positive definiteness.
    const double loading = std::min(state.eps_reg, 1e-6);

    Matrix best_centers(K, state.dim);
    std::vector<Eigen::Index> best_assign;
    double best_wcss = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        std::vector<Eigen::Index> seeds = kmeanspp_rows(z, K, rng);
        Matrix centers(K, state.dim);
        for (Eigen::Index k = 0; k < K; ++k)
            centers.row(k) = z.row(seeds[static_cast<std::size_t>(k)]);
        std::vector<Eigen::Index> assign;
        double wcss = lloyd(z, centers, assign);
        if (wcss < best_wcss) {
            best_wcss = wcss;
            best_centers = centers;
            best_assign = assign;
        }
    }

    // Per-cluster moments start EM close to the partition Lloyd found. A
    // shared batch covariance here would flatten the responsibilities and
    // let the first EM step merge the components again.
    Vector mean = z.colwise().mean().transpose();
    Matrix centered = z.rowwise() - mean.transpose();
    Matrix batch_cov = (centered.transpose() * centered) / static_cast<double>(M) +
                       loading * Matrix::Identity(state.dim, state.dim);
    for (Eigen::Index k = 0; k < K; ++k) {
        state.means[static_cast<std::size_t>(k)] = best_centers.row(k).transpose();
        Matrix cov = Matrix::Zero(state.dim, state.dim);
        Eigen::Index count = 0;
        for (Eigen::Index i = 0; i < M; ++i) {
            if (best_assign[static_cast<std::size_t>(i)] != k) continue;
            Vector d = z.row(i).transpose() - state.means[static_cast<std::size_t>(k)];
            cov.noalias() += d * d.transpose();
            ++count;
        }
        if (count >= 2) {
            cov /= static_cast<double>(count);
            cov += loading * Matrix::Identity(state.dim, state.dim);
            state.covs[static_cast<std::size_t>(k)] = cov;
        } else {
            // singleton or empty cluster: no local spread to estimate
            state.covs[static_cast<std::size_t>(k)] = batch_cov;
        }
    }
    state.refresh_factors();
    state.ready = true;

    // Standard EM including the weights. The caller's phi only seeds the
    // first E-step; a collapsed membership net must not be able to starve a
    // component that owns real mass.
    for (int it = 0; it < em_iterations; ++it) {
        Matrix r = e_step(state, z);
        state.phi = update_phi(r);
        em_m_step(state, z, r, loading);
    }
}

double energy(const GmmState& state, const Vector& z) {
    require(z.size() == state.dim, "shape", "energy: latent width mismatch");
    return -log_sum_exp(log_mixture_terms(state, z));
}

double batch_log_likelihood(const GmmState& state, const Matrix& z) {
    require(z.rows() >= 1, "shape", "batch_log_likelihood: empty batch");
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        total += log_sum_exp(log_mixture_terms(state, z.row(i).transpose()));
    return total / static_cast<double>(z.rows());
}

std::shared_ptr<const GmmGraphConsts> graph_consts(const GmmState& state) {
    auto c = std::make_shared<GmmGraphConsts>();
    c->means = Matrix(state.dim, state.K);
    for (Eigen::Index k = 0; k < state.K; ++k)
        c->means.col(k) = state.means[static_cast<std::size_t>(k)];
    c->chol = state.chol();
    c->logdet = state.logdet();
    return c;
}

} // namespace etnet
