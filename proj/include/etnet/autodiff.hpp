#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "etnet/error.hpp"
#include "etnet/rng.hpp"

namespace etnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ============================================================================
// Trainable parameters
// ============================================================================

// A persistent trainable tensor. Lives outside any graph recording; gradient
// contributions from backward passes accumulate into `grad` until zeroed.
struct Param {
    std::string name;
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
        grad = Matrix::Zero(value.rows(), value.cols());
    }

    void zero_grad() { grad.setZero(); }
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

// Glorot uniform init in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Random matrix with orthonormal columns (rows, if wide). Recurrent kernels
// start here so state transients survive long unrolls instead of decaying.
Matrix orthogonal_init(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Ordered registry of the parameters of one trainable unit. Registration
// order is the iteration order everywhere (optimizer, serialization, checks),
// which keeps runs byte-for-byte reproducible.
class ParamSet {
public:
    void add(Param& p) { items_.push_back(&p); }

    const std::vector<Param*>& items() const { return items_; }

    void zero_grads() {
        for (Param* p : items_) p->zero_grad();
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Param* p : items_) n += static_cast<std::size_t>(p->value.size());
        return n;
    }

private:
    std::vector<Param*> items_;
};

// W*x + b, the affine building block used by combiners, skip maps, readouts
// and the membership estimator.
struct AffineParams {
    Param W;
    Param b;

    static AffineParams init(const std::string& name, Eigen::Index out, Eigen::Index in, Rng& rng);
    void collect(ParamSet& ps) {
        ps.add(W);
        ps.add(b);
    }
};

// ============================================================================
// Graph recording
// ============================================================================

// Constant side of the per-sample energy op: mixture means and Cholesky
// factors are held fixed during the gradient pass (the EM loop owns them),
// only z and the mixture weights receive gradient.
struct GmmGraphConsts {
    Matrix means;                             // d x K
    std::vector<Matrix> chol;                 // K lower-triangular factors of Sigma_k
    Vector logdet;                            // K, log det Sigma_k
};

enum class Op : std::uint8_t {
    Constant,
    Leaf,
    Add,
    Sub,
    Mul,
    Matmul,
    Sigmoid,
    Tanh,
    Softmax,
    SumAll,
    Scale,
    SumOf,
    MeanOf,
    Vstack,
    Affine,
    DecodeReadout,
    LstmMemory,
    LstmOutput,
    GruStep,
    Mix,
    SseToConst,
    RelDistToConst,
    CosToConst,
    GmmEnergy,
};

struct Node {
    Op op = Op::Constant;
    std::uint8_t flag = 0;  // op-specific: LstmOutput tanh form, dead CosToConst
    double a = 0.0;         // op-specific scalars (Scale factor, Mix w1, norms)
    double b = 0.0;
    std::vector<std::int32_t> in;
    Param* params[6] = {nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
    std::shared_ptr<const GmmGraphConsts> gmm;
    Matrix value;
    Matrix grad;               // allocated lazily during backward
    std::vector<Matrix> aux;   // forward intermediates (gates) and constants
};

class Tape;

// Cheap handle into one tape. Valid only while its tape is alive.
struct Tensor {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

// Define-by-run recording of one forward computation. Node ids are assigned
// monotonically, so the id order is already a topological order and backward
// is a single reverse sweep visiting every node at most once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void reserve(std::size_t n) { nodes_.reserve(n); }

    Tensor constant(Matrix v);
    Tensor constant(double v);
    // Tracked leaf bound to a Param; one node per Param per tape.
    Tensor input(Param& p);

    const Matrix& value(Tensor t) const { return nodes_.at(static_cast<std::size_t>(t.id)).value; }
    std::size_t node_count() const { return nodes_.size(); }

    // Accumulates gradients into every bound Param reachable from `loss`.
    // With release_memory, interior values/intermediates are freed as the
    // sweep passes them; only leaf/constant values survive. Full-batch BPTT
    // graphs here reach millions of nodes, so training always releases.
    void backward(Tensor loss, bool release_memory = false);

    // Internal: used by the op free functions.
    std::int32_t push(Node&& n);
    Node& node(std::int32_t id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

private:
    std::vector<Node> nodes_;
    std::unordered_map<const Param*, std::int32_t> leaf_ids_;
    bool backward_done_ = false;
};

// ============================================================================
// Recorded operations
// ============================================================================

// Elementwise; shapes must match or one side must be 1x1 (scalar broadcast).
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
// Elementwise product, equal shapes required.
Tensor hadamard(Tensor a, Tensor b);

Tensor matmul(Tensor a, Tensor b);

Tensor sigmoid(Tensor x);
Tensor tanh(Tensor x);
// Column vector in, column vector out; max-subtracted for stability.
Tensor softmax(Tensor v);

Tensor sum_all(Tensor x);        // 1x1 sum of all entries
Tensor scale(Tensor x, double c);
Tensor sum_of(const std::vector<Tensor>& xs);   // elementwise sum, equal shapes
Tensor mean_of(const std::vector<Tensor>& xs);  // elementwise mean, equal shapes
Tensor vstack(const std::vector<Tensor>& xs);   // stack column blocks vertically

// W * vstack(xs) + b.
Tensor affine(AffineParams& p, const std::vector<Tensor>& xs);
Tensor affine(AffineParams& p, Tensor x);

// Applies a 1xN readout to each state; entry j of the result is W*h_j + b.
Tensor decode_readout(AffineParams& p, const std::vector<Tensor>& states);

// Fused recurrent steps. Weight layout is W * [h_prev ; x] + b throughout.
// lstm_memory: c_t = f ∘ c_prev + i ∘ c~   (params W_f,b_f,W_i,b_i,W_c,b_c)
Tensor lstm_memory(Param* Wf, Param* bf, Param* Wi, Param* bi, Param* Wc, Param* bc,
                   Tensor h_prev, Tensor c_prev, Tensor x);
// lstm_output: h_t = o ∘ c_t, or o ∘ tanh(c_t) when standard_form.
Tensor lstm_output(Param* Wo, Param* bo, Tensor h_prev, Tensor c_t, Tensor x, bool standard_form);
// gru_step: h' = (1-u) ∘ h + u ∘ tanh(W_h [r∘h ; x] + b_h)   (params W_u,b_u,W_r,b_r,W_h,b_h)
Tensor gru_step(Param* Wu, Param* bu, Param* Wr, Param* br, Param* Wh, Param* bh,
                Tensor h_prev, Tensor x);
// (w1*a + w2*b) / (w1+w2) with w1+w2 > 0.
Tensor mix(Tensor a, Tensor b, double w1, double w2);

// Reconstruction objective and distance features against a constant target.
Tensor sse_to(Tensor xhat, const Matrix& x);       // ||xhat - x||^2, 1x1
Tensor rel_dist_to(Tensor xhat, const Matrix& x);  // ||x - xhat|| / max(||x||, 1e-12)
Tensor cos_to(Tensor xhat, const Matrix& x);       // clamped cosine, 0 on tiny norms

// Per-sample mixture energy -log sum_k phi_k N(z; mu_k, Sigma_k); means and
// covariances come from `consts` and are not differentiated through.
Tensor gmm_energy(Tensor z, Tensor phi, std::shared_ptr<const GmmGraphConsts> consts);

// ============================================================================
// Finite-difference verification
// ============================================================================

// Central finite differences over every scalar of every param in `ps`.
// `loss_fn` must rebuild the forward pass from current param values; analytic
// gradients must already be accumulated in Param::grad. Returns the worst
// relative error, using max(1, |fd|, |analytic|) as the denominator.
double finite_difference_check(const ParamSet& ps, const std::function<double()>& loss_fn,
                               double step = 1e-5);

} // namespace etnet
