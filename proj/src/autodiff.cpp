#include "etnet/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace etnet {

namespace {

constexpr double kNormEps = 1e-12;

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_tape(Tensor a, Tensor b) {
    require(a.tape != nullptr && a.tape == b.tape, "graph",
            "operands belong to different graph recordings");
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

// [h ; x] column concatenation used by every recurrent step.
Matrix stack2(const Matrix& h, const Matrix& x) {
    Matrix u(h.rows() + x.rows(), 1);
    u.topRows(h.rows()) = h;
    u.bottomRows(x.rows()) = x;
    return u;
}

Matrix sigmoid_of(const Matrix& pre) {
    return pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

} // namespace

// ============================================================================
// Param helpers
// ============================================================================

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
}

Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
    return m;
}

Matrix orthogonal_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    // QR of a Gaussian draw, signs fixed by R's diagonal so the result is
    // unique given the draw. Tall orientation first, transpose back if wide.
    const bool wide = rows < cols;
    const Eigen::Index n = wide ? cols : rows;
    const Eigen::Index k = wide ? rows : cols;
    Matrix a(n, k);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < k; ++c) a(r, c) = rng.gaussian();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(n, k);
    Matrix rfac = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < k; ++c)
        if (rfac(c, c) < 0.0) q.col(c) = -q.col(c);
    if (wide) return q.transpose();
    return q;
}

AffineParams AffineParams::init(const std::string& name, Eigen::Index out, Eigen::Index in,
                                Rng& rng) {
    AffineParams p;
    p.W = Param(name + ".W", glorot_init(out, in, rng));
    p.b = Param(name + ".b", Matrix::Zero(out, 1));
    return p;
}

// ============================================================================
// Tape basics
// ============================================================================

const Matrix& Tensor::value() const {
    require(tape != nullptr, "graph", "tensor handle is empty");
    return tape->value(*this);
}

std::int32_t Tape::push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<std::int32_t>(nodes_.size() - 1);
}

Tensor Tape::constant(Matrix v) {
    Node n;
    n.op = Op::Constant;
    n.value = std::move(v);
    return Tensor{this, push(std::move(n))};
}

Tensor Tape::constant(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

Tensor Tape::input(Param& p) {
    auto it = leaf_ids_.find(&p);
    if (it != leaf_ids_.end()) return Tensor{this, it->second};
    require(p.value.size() > 0, "shape", "param '" + p.name + "' has no value");
    Node n;
    n.op = Op::Leaf;
    n.params[0] = &p;
    n.value = p.value;
    std::int32_t id = push(std::move(n));
    leaf_ids_.emplace(&p, id);
    return Tensor{this, id};
}

// ============================================================================
// Recorded operations: forward
// ============================================================================

namespace {

Tensor push_binary(Op op, Tensor a, Tensor b, Matrix value) {
    Node n;
    n.op = op;
    n.in = {a.id, b.id};
    n.value = std::move(value);
    return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor push_unary(Op op, Tensor x, Matrix value) {
    Node n;
    n.op = op;
    n.in = {x.id};
    n.value = std::move(value);
    return Tensor{x.tape, x.tape->push(std::move(n))};
}

void require_conform(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return;
    if (is_scalar(a) || is_scalar(b)) return;
    fail("shape", std::string(what) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                      " do not conform");
}

Matrix broadcast_apply(const Matrix& a, const Matrix& b, double (*f)(double, double)) {
    if (is_scalar(a) && !is_scalar(b)) {
        double s = a(0, 0);
        return b.unaryExpr([&](double v) { return f(s, v); });
    }
    if (is_scalar(b) && !is_scalar(a)) {
        double s = b(0, 0);
        return a.unaryExpr([&](double v) { return f(v, s); });
    }
    return a.binaryExpr(b, [&](double x, double y) { return f(x, y); });
}

} // namespace

Tensor add(Tensor a, Tensor b) {
    require_same_tape(a, b);
    require_conform(a.value(), b.value(), "add");
    return push_binary(Op::Add, a, b,
                       broadcast_apply(a.value(), b.value(), [](double x, double y) { return x + y; }));
}

Tensor sub(Tensor a, Tensor b) {
    require_same_tape(a, b);
    require_conform(a.value(), b.value(), "sub");
    return push_binary(Op::Sub, a, b,
                       broadcast_apply(a.value(), b.value(), [](double x, double y) { return x - y; }));
}

Tensor mul(Tensor a, Tensor b) {
    require_same_tape(a, b);
    require_conform(a.value(), b.value(), "mul");
    return push_binary(Op::Mul, a, b,
                       broadcast_apply(a.value(), b.value(), [](double x, double y) { return x * y; }));
}

Tensor hadamard(Tensor a, Tensor b) {
    require_same_tape(a, b);
    require(a.rows() == b.rows() && a.cols() == b.cols(), "shape",
            "hadamard: shapes " + shape_str(a.value()) + " and " + shape_str(b.value()) +
                " differ");
    return mul(a, b);
}

Tensor matmul(Tensor a, Tensor b) {
    require_same_tape(a, b);
    require(a.cols() == b.rows(), "shape",
            "matmul: inner extents differ, " + shape_str(a.value()) + " * " +
                shape_str(b.value()));
    return push_binary(Op::Matmul, a, b, a.value() * b.value());
}

Tensor sigmoid(Tensor x) { return push_unary(Op::Sigmoid, x, sigmoid_of(x.value())); }

Tensor tanh(Tensor x) { return push_unary(Op::Tanh, x, x.value().array().tanh().matrix()); }

Tensor softmax(Tensor v) {
    const Matrix& x = v.value();
    require(x.cols() == 1 && x.rows() >= 1, "shape", "softmax expects a column vector");
    double m = x.maxCoeff();
    Matrix e = (x.array() - m).exp().matrix();
    e /= e.sum();
    return push_unary(Op::Softmax, v, std::move(e));
}

Tensor sum_all(Tensor x) {
    Matrix s(1, 1);
    s(0, 0) = x.value().sum();
    return push_unary(Op::SumAll, x, std::move(s));
}

Tensor scale(Tensor x, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = c;
    n.in = {x.id};
    n.value = c * x.value();
    return Tensor{x.tape, x.tape->push(std::move(n))};
}

namespace {

Tensor push_nary(Op op, const std::vector<Tensor>& xs, Matrix value) {
    Node n;
    n.op = op;
    n.in.reserve(xs.size());
    for (Tensor t : xs) n.in.push_back(t.id);
    n.value = std::move(value);
    return Tensor{xs.front().tape, xs.front().tape->push(std::move(n))};
}

} // namespace

Tensor sum_of(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "shape", "sum_of: empty operand list");
    Matrix acc = xs.front().value();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        require_same_tape(xs.front(), xs[i]);
        require(xs[i].rows() == acc.rows() && xs[i].cols() == acc.cols(), "shape",
                "sum_of: operand shapes differ");
        acc += xs[i].value();
    }
    return push_nary(Op::SumOf, xs, std::move(acc));
}

Tensor mean_of(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "shape", "mean_of: empty operand list");
    Matrix acc = xs.front().value();
    for (std::size_t i = 1; i < xs.size(); ++i) {
        require_same_tape(xs.front(), xs[i]);
        require(xs[i].rows() == acc.rows() && xs[i].cols() == acc.cols(), "shape",
                "mean_of: operand shapes differ");
        acc += xs[i].value();
    }
    acc /= static_cast<double>(xs.size());
    return push_nary(Op::MeanOf, xs, std::move(acc));
}

Tensor vstack(const std::vector<Tensor>& xs) {
    require(!xs.empty(), "shape", "vstack: empty operand list");
    Eigen::Index rows = 0;
    Eigen::Index cols = xs.front().cols();
    for (Tensor t : xs) {
        require_same_tape(xs.front(), t);
        require(t.cols() == cols, "shape", "vstack: column counts differ");
        rows += t.rows();
    }
    Matrix v(rows, cols);
    Eigen::Index off = 0;
    for (Tensor t : xs) {
        v.middleRows(off, t.rows()) = t.value();
        off += t.rows();
    }
    return push_nary(Op::Vstack, xs, std::move(v));
}

Tensor affine(AffineParams& p, const std::vector<Tensor>& xs) {
    require(!xs.empty(), "shape", "affine: empty input list");
    Eigen::Index rows = 0;
    for (Tensor t : xs) {
        require_same_tape(xs.front(), t);
        require(t.cols() == 1, "shape", "affine expects column-vector inputs");
        rows += t.rows();
    }
    require(p.W.value.cols() == rows, "shape",
            "affine '" + p.W.name + "': weight expects " + std::to_string(p.W.value.cols()) +
                " input rows, got " + std::to_string(rows));
    Matrix u(rows, 1);
    Eigen::Index off = 0;
    for (Tensor t : xs) {
        u.middleRows(off, t.rows()) = t.value();
        off += t.rows();
    }
    Node n;
    n.op = Op::Affine;
    n.in.reserve(xs.size());
    for (Tensor t : xs) n.in.push_back(t.id);
    n.params[0] = &p.W;
    n.params[1] = &p.b;
    n.value = p.W.value * u + p.b.value;
    return Tensor{xs.front().tape, xs.front().tape->push(std::move(n))};
}

Tensor affine(AffineParams& p, Tensor x) { return affine(p, std::vector<Tensor>{x}); }

Tensor decode_readout(AffineParams& p, const std::vector<Tensor>& states) {
    require(!states.empty(), "shape", "decode_readout: empty state list");
    require(p.W.value.rows() == 1, "shape", "decode_readout expects a 1xN readout");
    Matrix v(static_cast<Eigen::Index>(states.size()), 1);
    for (std::size_t j = 0; j < states.size(); ++j) {
        require_same_tape(states.front(), states[j]);
        require(states[j].rows() == p.W.value.cols() && states[j].cols() == 1, "shape",
                "decode_readout: state shape mismatch");
        v(static_cast<Eigen::Index>(j), 0) =
            (p.W.value * states[j].value())(0, 0) + p.b.value(0, 0);
    }
    Node n;
    n.op = Op::DecodeReadout;
    n.in.reserve(states.size());
    for (Tensor t : states) n.in.push_back(t.id);
    n.params[0] = &p.W;
    n.params[1] = &p.b;
    n.value = std::move(v);
    return Tensor{states.front().tape, states.front().tape->push(std::move(n))};
}

Tensor lstm_memory(Param* Wf, Param* bf, Param* Wi, Param* bi, Param* Wc, Param* bc,
                   Tensor h_prev, Tensor c_prev, Tensor x) {
    require_same_tape(h_prev, c_prev);
    require_same_tape(h_prev, x);
    Matrix u = stack2(h_prev.value(), x.value());
    require(Wf->value.cols() == u.rows(), "shape",
            "lstm_memory '" + Wf->name + "': input width mismatch");
    Matrix f = sigmoid_of(Wf->value * u + bf->value);
    Matrix i = sigmoid_of(Wi->value * u + bi->value);
    Matrix ct = (Wc->value * u + bc->value).array().tanh().matrix();
    Node n;
    n.op = Op::LstmMemory;
    n.in = {h_prev.id, c_prev.id, x.id};
    n.params[0] = Wf;
    n.params[1] = bf;
    n.params[2] = Wi;
    n.params[3] = bi;
    n.params[4] = Wc;
    n.params[5] = bc;
    n.value = f.cwiseProduct(c_prev.value()) + i.cwiseProduct(ct);
    n.aux = {std::move(f), std::move(i), std::move(ct)};
    return Tensor{h_prev.tape, h_prev.tape->push(std::move(n))};
}

Tensor lstm_output(Param* Wo, Param* bo, Tensor h_prev, Tensor c_t, Tensor x,
                   bool standard_form) {
    require_same_tape(h_prev, c_t);
    require_same_tape(h_prev, x);
    Matrix u = stack2(h_prev.value(), x.value());
    Matrix o = sigmoid_of(Wo->value * u + bo->value);
    Matrix m = standard_form ? Matrix(c_t.value().array().tanh().matrix()) : c_t.value();
    Node n;
    n.op = Op::LstmOutput;
    n.flag = standard_form ? 1 : 0;
    n.in = {h_prev.id, c_t.id, x.id};
    n.params[0] = Wo;
    n.params[1] = bo;
    n.value = o.cwiseProduct(m);
    n.aux = {std::move(o)};
    return Tensor{h_prev.tape, h_prev.tape->push(std::move(n))};
}

Tensor gru_step(Param* Wu, Param* bu, Param* Wr, Param* br, Param* Wh, Param* bh,
                Tensor h_prev, Tensor x) {
    require_same_tape(h_prev, x);
    const Matrix& h = h_prev.value();
    Matrix u_in = stack2(h, x.value());
    require(Wu->value.cols() == u_in.rows(), "shape",
            "gru_step '" + Wu->name + "': input width mismatch");
    Matrix u = sigmoid_of(Wu->value * u_in + bu->value);
    Matrix r = sigmoid_of(Wr->value * u_in + br->value);
    Matrix v_in = stack2(r.cwiseProduct(h), x.value());
    Matrix hc = (Wh->value * v_in + bh->value).array().tanh().matrix();
    Node n;
    n.op = Op::GruStep;
    n.in = {h_prev.id, x.id};
    n.params[0] = Wu;
    n.params[1] = bu;
    n.params[2] = Wr;
    n.params[3] = br;
    n.params[4] = Wh;
    n.params[5] = bh;
    n.value = (Matrix::Ones(h.rows(), 1) - u).cwiseProduct(h) + u.cwiseProduct(hc);
    n.aux = {std::move(u), std::move(r), std::move(hc)};
    return Tensor{h_prev.tape, h_prev.tape->push(std::move(n))};
}

Tensor mix(Tensor a, Tensor b, double w1, double w2) {
    require_same_tape(a, b);
    require(w1 + w2 > 0.0, "config", "mix: w1 + w2 must be positive");
    Node n;
    n.op = Op::Mix;
    n.a = w1;
    n.b = w2;
    n.in = {a.id, b.id};
    n.value = (w1 * a.value() + w2 * b.value()) / (w1 + w2);
    return Tensor{a.tape, a.tape->push(std::move(n))};
}

Tensor sse_to(Tensor xhat, const Matrix& x) {
    require(xhat.rows() == x.rows() && xhat.cols() == x.cols(), "shape",
            "sse_to: shapes " + shape_str(xhat.value()) + " and " + shape_str(x) + " differ");
    Node n;
    n.op = Op::SseToConst;
    n.in = {xhat.id};
    n.aux = {x};
    Matrix v(1, 1);
    v(0, 0) = (xhat.value() - x).squaredNorm();
    n.value = std::move(v);
    return Tensor{xhat.tape, xhat.tape->push(std::move(n))};
}

Tensor rel_dist_to(Tensor xhat, const Matrix& x) {
    require(xhat.rows() == x.rows() && xhat.cols() == x.cols(), "shape",
            "rel_dist_to: length mismatch");
    Node n;
    n.op = Op::RelDistToConst;
    n.in = {xhat.id};
    n.aux = {x};
    n.a = std::max(x.norm(), kNormEps);  // denominator
    n.b = (xhat.value() - x).norm();     // difference norm, reused in backward
    Matrix v(1, 1);
    v(0, 0) = n.b / n.a;
    n.value = std::move(v);
    return Tensor{xhat.tape, xhat.tape->push(std::move(n))};
}

Tensor cos_to(Tensor xhat, const Matrix& x) {
    require(xhat.rows() == x.rows() && xhat.cols() == x.cols(), "shape",
            "cos_to: length mismatch");
    Node n;
    n.op = Op::CosToConst;
    n.in = {xhat.id};
    n.aux = {x};
    n.a = x.norm();             // ||x||
    n.b = xhat.value().norm();  // ||xhat||
    double c = 0.0;
    if (n.a < kNormEps || n.b < kNormEps) {
        n.flag = 1;  // degenerate: value 0, no gradient
    } else {
        c = x.cwiseProduct(xhat.value()).sum() / (n.a * n.b + kNormEps);
        if (c > 1.0 || c < -1.0) {
            c = std::clamp(c, -1.0, 1.0);
            n.flag = 1;
        }
    }
    Matrix v(1, 1);
    v(0, 0) = c;
    n.value = std::move(v);
    return Tensor{xhat.tape, xhat.tape->push(std::move(n))};
}

Tensor gmm_energy(Tensor z, Tensor phi, std::shared_ptr<const GmmGraphConsts> consts) {
    require_same_tape(z, phi);
    require(consts != nullptr, "config", "gmm_energy: missing mixture constants");
    const Eigen::Index d = consts->means.rows();
    const Eigen::Index K = consts->means.cols();
    require(z.rows() == d && z.cols() == 1, "shape", "gmm_energy: latent shape mismatch");
    require(phi.rows() == K && phi.cols() == 1, "shape", "gmm_energy: phi shape mismatch");

    const double log2pi = std::log(2.0 * M_PI);
    Matrix y(d, K);       // L_k^{-1} (z - mu_k)
    Matrix logn(1, K);    // log N(z; mu_k, Sigma_k)
    Vector l(K);          // log phi_k + logn_k
    for (Eigen::Index k = 0; k < K; ++k) {
        Vector diff = z.value() - consts->means.col(k);
        y.col(k) = consts->chol[static_cast<std::size_t>(k)]
                       .triangularView<Eigen::Lower>()
                       .solve(diff);
        double q = y.col(k).squaredNorm();
        logn(0, k) = -0.5 * (static_cast<double>(d) * log2pi + consts->logdet(k) + q);
        double ph = std::max(phi.value()(k, 0), 1e-300);
        l(k) = std::log(ph) + logn(0, k);
    }
    double m = l.maxCoeff();
    double s = (l.array() - m).exp().sum();

    Node n;
    n.op = Op::GmmEnergy;
    n.in = {z.id, phi.id};
    n.gmm = std::move(consts);
    n.aux = {std::move(y), std::move(logn)};
    Matrix v(1, 1);
    v(0, 0) = -(m + std::log(s));
    n.value = std::move(v);
    return Tensor{z.tape, z.tape->push(std::move(n))};
}

// ============================================================================
// Backward
// ============================================================================

namespace {

// Lazily allocated gradient accumulator for interior nodes.
Matrix& grad_of(Tape& tape, std::int32_t id) {
    Node& n = tape.node(id);
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void backptr_affine_inputs(Tape& tape, const Node& n, const Matrix& W, const Matrix& d) {
    Eigen::Index off = 0;
    for (std::int32_t in_id : n.in) {
        const Node& src = tape.node(in_id);
        Eigen::Index r = src.value.rows();
        grad_of(tape, in_id).noalias() += W.middleCols(off, r).transpose() * d;
        off += r;
    }
}

void dispatch_backward(Tape& tape, std::int32_t id) {
    Node& n = tape.node(id);
    const Matrix& g = n.grad;

    auto in_val = [&](int i) -> const Matrix& { return tape.node(n.in[static_cast<std::size_t>(i)]).value; };
    auto in_grad = [&](int i) -> Matrix& { return grad_of(tape, n.in[static_cast<std::size_t>(i)]); };

    switch (n.op) {
    case Op::Constant:
        break;
    case Op::Leaf:
        n.params[0]->grad += g;
        break;
    case Op::Add: {
        for (int i = 0; i < 2; ++i) {
            if (is_scalar(in_val(i)) && !is_scalar(n.value))
                in_grad(i)(0, 0) += g.sum();
            else
                in_grad(i) += g;
        }
        break;
    }
    case Op::Sub: {
        if (is_scalar(in_val(0)) && !is_scalar(n.value))
            in_grad(0)(0, 0) += g.sum();
        else
            in_grad(0) += g;
        if (is_scalar(in_val(1)) && !is_scalar(n.value))
            in_grad(1)(0, 0) -= g.sum();
        else
            in_grad(1) -= g;
        break;
    }
    case Op::Mul: {
        const Matrix& a = in_val(0);
        const Matrix& b = in_val(1);
        if (is_scalar(a) && !is_scalar(b)) {
            in_grad(0)(0, 0) += g.cwiseProduct(b).sum();
            in_grad(1) += a(0, 0) * g;
        } else if (is_scalar(b) && !is_scalar(a)) {
            in_grad(0) += b(0, 0) * g;
            in_grad(1)(0, 0) += g.cwiseProduct(a).sum();
        } else {
            in_grad(0) += g.cwiseProduct(b);
            in_grad(1) += g.cwiseProduct(a);
        }
        break;
    }
    case Op::Matmul:
        in_grad(0).noalias() += g * in_val(1).transpose();
        in_grad(1).noalias() += in_val(0).transpose() * g;
        break;
    case Op::Sigmoid: {
        const Matrix& y = n.value;
        in_grad(0) += g.cwiseProduct(y.cwiseProduct(Matrix::Ones(y.rows(), y.cols()) - y));
        break;
    }
    case Op::Tanh: {
        const Matrix& y = n.value;
        in_grad(0) += g.cwiseProduct((1.0 - y.array().square()).matrix());
        break;
    }
    case Op::Softmax: {
        const Matrix& y = n.value;
        double dot = g.cwiseProduct(y).sum();
        in_grad(0) += y.cwiseProduct((g.array() - dot).matrix());
        break;
    }
    case Op::SumAll: {
        in_grad(0).array() += g(0, 0);
        break;
    }
    case Op::Scale:
        in_grad(0) += n.a * g;
        break;
    case Op::SumOf:
        for (std::size_t i = 0; i < n.in.size(); ++i)
            grad_of(tape, n.in[i]) += g;
        break;
    case Op::MeanOf: {
        double inv = 1.0 / static_cast<double>(n.in.size());
        for (std::size_t i = 0; i < n.in.size(); ++i)
            grad_of(tape, n.in[i]) += inv * g;
        break;
    }
    case Op::Vstack: {
        Eigen::Index off = 0;
        for (std::size_t i = 0; i < n.in.size(); ++i) {
            Eigen::Index r = tape.node(n.in[i]).value.rows();
            grad_of(tape, n.in[i]) += g.middleRows(off, r);
            off += r;
        }
        break;
    }
    case Op::Affine: {
        Matrix u(n.params[0]->value.cols(), 1);
        Eigen::Index off = 0;
        for (std::int32_t in_id : n.in) {
            const Matrix& xv = tape.node(in_id).value;
            u.middleRows(off, xv.rows()) = xv;
            off += xv.rows();
        }
        n.params[0]->grad.noalias() += g * u.transpose();
        n.params[1]->grad += g;
        backptr_affine_inputs(tape, n, n.params[0]->value, g);
        break;
    }
    case Op::DecodeReadout: {
        const Matrix& W = n.params[0]->value;  // 1 x N
        for (std::size_t j = 0; j < n.in.size(); ++j) {
            double gj = g(static_cast<Eigen::Index>(j), 0);
            if (gj == 0.0) continue;
            const Matrix& hj = tape.node(n.in[j]).value;
            n.params[0]->grad.noalias() += gj * hj.transpose();
            n.params[1]->grad(0, 0) += gj;
            grad_of(tape, n.in[j]).noalias() += gj * W.transpose();
        }
        break;
    }
    case Op::LstmMemory: {
        const Matrix& h = in_val(0);
        const Matrix& c_prev = in_val(1);
        const Matrix& x = in_val(2);
        const Matrix& f = n.aux[0];
        const Matrix& i = n.aux[1];
        const Matrix& ct = n.aux[2];
        Matrix u = stack2(h, x);
        Matrix df = g.cwiseProduct(c_prev).cwiseProduct(f).cwiseProduct(
            (1.0 - f.array()).matrix());
        Matrix di = g.cwiseProduct(ct).cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
        Matrix dct = g.cwiseProduct(i).cwiseProduct((1.0 - ct.array().square()).matrix());
        in_grad(1) += g.cwiseProduct(f);
        n.params[0]->grad.noalias() += df * u.transpose();
        n.params[1]->grad += df;
        n.params[2]->grad.noalias() += di * u.transpose();
        n.params[3]->grad += di;
        n.params[4]->grad.noalias() += dct * u.transpose();
        n.params[5]->grad += dct;
        Matrix gu = n.params[0]->value.transpose() * df + n.params[2]->value.transpose() * di +
                    n.params[4]->value.transpose() * dct;
        in_grad(0) += gu.topRows(h.rows());
        in_grad(2) += gu.bottomRows(x.rows());
        break;
    }
    case Op::LstmOutput: {
        const Matrix& h = in_val(0);
        const Matrix& c = in_val(1);
        const Matrix& x = in_val(2);
        const Matrix& o = n.aux[0];
        Matrix m = n.flag ? Matrix(c.array().tanh().matrix()) : c;
        Matrix go = g.cwiseProduct(m);
        Matrix gm = g.cwiseProduct(o);
        if (n.flag)
            in_grad(1) += gm.cwiseProduct((1.0 - m.array().square()).matrix());
        else
            in_grad(1) += gm;
        Matrix do_ = go.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
        Matrix u = stack2(h, x);
        n.params[0]->grad.noalias() += do_ * u.transpose();
        n.params[1]->grad += do_;
        Matrix gu = n.params[0]->value.transpose() * do_;
        in_grad(0) += gu.topRows(h.rows());
        in_grad(2) += gu.bottomRows(x.rows());
        break;
    }
    case Op::GruStep: {
        const Matrix& h = in_val(0);
        const Matrix& x = in_val(1);
        const Matrix& u = n.aux[0];
        const Matrix& r = n.aux[1];
        const Matrix& hc = n.aux[2];
        Matrix u_in = stack2(h, x);
        Matrix gu = g.cwiseProduct(hc - h);
        Matrix ghc = g.cwiseProduct(u);
        in_grad(0) += g.cwiseProduct((1.0 - u.array()).matrix());
        Matrix dhc = ghc.cwiseProduct((1.0 - hc.array().square()).matrix());
        Matrix v_in = stack2(r.cwiseProduct(h), x);
        n.params[4]->grad.noalias() += dhc * v_in.transpose();
        n.params[5]->grad += dhc;
        Matrix gv = n.params[4]->value.transpose() * dhc;
        Matrix grh = gv.topRows(h.rows());
        in_grad(1) += gv.bottomRows(x.rows());
        Matrix gr = grh.cwiseProduct(h);
        in_grad(0) += grh.cwiseProduct(r);
        Matrix dr = gr.cwiseProduct(r).cwiseProduct((1.0 - r.array()).matrix());
        n.params[2]->grad.noalias() += dr * u_in.transpose();
        n.params[3]->grad += dr;
        Matrix du = gu.cwiseProduct(u).cwiseProduct((1.0 - u.array()).matrix());
        n.params[0]->grad.noalias() += du * u_in.transpose();
        n.params[1]->grad += du;
        Matrix gu_in = n.params[2]->value.transpose() * dr + n.params[0]->value.transpose() * du;
        in_grad(0) += gu_in.topRows(h.rows());
        in_grad(1) += gu_in.bottomRows(x.rows());
        break;
    }
    case Op::Mix: {
        double w = n.a + n.b;
        in_grad(0) += (n.a / w) * g;
        in_grad(1) += (n.b / w) * g;
        break;
    }
    case Op::SseToConst: {
        const Matrix& x = n.aux[0];
        in_grad(0) += (2.0 * g(0, 0)) * (in_val(0) - x);
        break;
    }
    case Op::RelDistToConst: {
        if (n.b > 0.0) {
            const Matrix& x = n.aux[0];
            in_grad(0) += (g(0, 0) / (n.b * n.a)) * (in_val(0) - x);
        }
        break;
    }
    case Op::CosToConst: {
        if (!n.flag) {
            const Matrix& x = n.aux[0];
            const Matrix& xh = in_val(0);
            double q = n.a * n.b + kNormEps;
            double c = n.value(0, 0);
            in_grad(0) += g(0, 0) * (x / q - (c * n.a / (q * n.b)) * xh);
        }
        break;
    }
    case Op::GmmEnergy: {
        const Matrix& y = n.aux[0];
        const Matrix& logn = n.aux[1];
        const Matrix& phi = in_val(1);
        const Eigen::Index K = y.cols();
        Vector l(K);
        for (Eigen::Index k = 0; k < K; ++k)
            l(k) = std::log(std::max(phi(k, 0), 1e-300)) + logn(0, k);
        double m = l.maxCoeff();
        double s = (l.array() - m).exp().sum();
        double g0 = g(0, 0);
        Matrix gz = Matrix::Zero(y.rows(), 1);
        Matrix& gphi = in_grad(1);
        for (Eigen::Index k = 0; k < K; ++k) {
            double w = std::exp(l(k) - m) / s;
            Vector back = n.gmm->chol[static_cast<std::size_t>(k)]
                              .triangularView<Eigen::Lower>()
                              .transpose()
                              .solve(Vector(y.col(k)));
            gz += w * back;
            gphi(k, 0) += g0 * (-std::exp(logn(0, k) - m) / s);
        }
        in_grad(0) += g0 * gz;
        break;
    }
    }
}

} // namespace

void Tape::backward(Tensor loss, bool release_memory) {
    require(loss.tape == this, "graph", "loss tensor is not on this tape");
    require(!backward_done_, "graph", "backward has already run on this tape");
    const Matrix& lv = nodes_.at(static_cast<std::size_t>(loss.id)).value;
    require(is_scalar(lv), "shape",
            "backward requires a scalar loss, got " + shape_str(lv));
    backward_done_ = true;
    nodes_[static_cast<std::size_t>(loss.id)].grad = Matrix::Ones(1, 1);
    for (std::int32_t i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.size() > 0) dispatch_backward(*this, i);
        if (release_memory && n.op != Op::Leaf && n.op != Op::Constant) {
            n.value.resize(0, 0);
            n.grad.resize(0, 0);
            n.aux.clear();
            n.aux.shrink_to_fit();
        } else if (release_memory) {
            n.grad.resize(0, 0);
            n.aux.clear();
            n.aux.shrink_to_fit();
        }
    }
}

// ============================================================================
// Finite differences
// ============================================================================

double finite_difference_check(const ParamSet& ps, const std::function<double()>& loss_fn,
                               double step) {
    double worst = 0.0;
    for (Param* p : ps.items()) {
        for (Eigen::Index idx = 0; idx < p->value.size(); ++idx) {
            double saved = p->value(idx);
            p->value(idx) = saved + step;
            double up = loss_fn();
            p->value(idx) = saved - step;
            double down = loss_fn();
            p->value(idx) = saved;
            double fd = (up - down) / (2.0 * step);
            double an = p->grad(idx);
            double err = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

} // namespace etnet
