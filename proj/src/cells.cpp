#include "etnet/cells.hpp"

namespace etnet {

CellKind cell_kind_from_string(const std::string& s) {
    if (s == "lstm") return CellKind::Lstm;
    if (s == "gru") return CellKind::Gru;
    fail("config", "unknown cell kind '" + s + "' (expected lstm or gru)");
}

std::string to_string(CellKind k) { return k == CellKind::Lstm ? "lstm" : "gru"; }

CellParams CellParams::init(CellKind kind, Eigen::Index hidden, Eigen::Index input,
                            const std::string& name, Rng& rng) {
    require(hidden > 0 && input > 0, "config",
            "cell '" + name + "': hidden and input widths must be positive");
    CellParams p;
    p.kind = kind;
    p.hidden = hidden;
    p.input = input;
    const Eigen::Index in = hidden + input;
    // Kernels act on [h ; x]: the state block keeps orthonormal columns so
    // transients persist across long unrolls, the input block is Glorot.
    auto w = [&](const char* suffix) {
        Matrix m(hidden, in);
        m.leftCols(hidden) = orthogonal_init(hidden, hidden, rng);
        m.rightCols(input) = glorot_init(hidden, input, rng);
        return Param(name + "." + suffix, std::move(m));
    };
    auto b = [&](const char* suffix, double fill) {
        return Param(name + "." + suffix, Matrix::Constant(hidden, 1, fill));
    };
    if (kind == CellKind::Lstm) {
        LstmParams lp;
        lp.W_o = w("W_o");
        lp.W_f = w("W_f");
        lp.W_i = w("W_i");
        lp.W_c = w("W_c");
        lp.b_o = b("b_o", 0.0);
        // forget gate starts open so memory survives the first epochs
        lp.b_f = b("b_f", 1.0);
        lp.b_i = b("b_i", 0.0);
        lp.b_c = b("b_c", 0.0);
        p.weights = std::move(lp);
    } else {
        GruParams gp;
        gp.W_u = w("W_u");
        gp.W_h = w("W_h");
        gp.W_r = w("W_r");
        // update gate starts low and reset starts open, same rationale as the
        // forget gate above: early state must outlive the gate sigmoids
        gp.b_u = b("b_u", -1.0);
        gp.b_h = b("b_h", 0.0);
        gp.b_r = b("b_r", 1.0);
        p.weights = std::move(gp);
    }
    return p;
}

void CellParams::collect(ParamSet& ps) {
    if (kind == CellKind::Lstm) {
        LstmParams& lp = lstm();
        for (Param* p : {&lp.W_o, &lp.W_f, &lp.W_i, &lp.W_c, &lp.b_o, &lp.b_f, &lp.b_i, &lp.b_c})
            ps.add(*p);
    } else {
        GruParams& gp = gru();
        for (Param* p : {&gp.W_u, &gp.W_h, &gp.W_r, &gp.b_u, &gp.b_h, &gp.b_r}) ps.add(*p);
    }
}

CellState lstm_step(Tape& tape, CellParams& p, Tensor h_prev, Tensor c_prev, Tensor x,
                    bool standard_output) {
    (void)tape;
    require(p.kind == CellKind::Lstm, "config", "lstm_step on a non-LSTM cell");
    require(h_prev.rows() == p.hidden && c_prev.rows() == p.hidden, "shape",
            "lstm_step: state length != hidden size");
    LstmParams& lp = p.lstm();
    Tensor c =
        lstm_memory(&lp.W_f, &lp.b_f, &lp.W_i, &lp.b_i, &lp.W_c, &lp.b_c, h_prev, c_prev, x);
    Tensor h = lstm_output(&lp.W_o, &lp.b_o, h_prev, c, x, standard_output);
    return {h, c};
}

Tensor gru_step(Tape& tape, CellParams& p, Tensor h_prev, Tensor x) {
    (void)tape;
    require(p.kind == CellKind::Gru, "config", "gru_step on a non-GRU cell");
    require(h_prev.rows() == p.hidden, "shape", "gru_step: state length != hidden size");
    GruParams& gp = p.gru();
    return gru_step(&gp.W_u, &gp.b_u, &gp.W_r, &gp.b_r, &gp.W_h, &gp.b_h, h_prev, x);
}

CellState cell_step(Tape& tape, CellParams& p, const CellState& prev, Tensor x,
                    bool standard_lstm_output) {
    if (p.kind == CellKind::Lstm) return lstm_step(tape, p, prev.h, prev.c, x, standard_lstm_output);
    return {gru_step(tape, p, prev.h, x), Tensor{}};
}

std::pair<int, int> SrnnMask::at(long t) const {
    // splitmix64 of (seed, t); the admissible pairs are equiprobable.
    Rng h(seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(t + 1)));
    switch (h.next_u64() % 3) {
    case 0: return {0, 1};
    case 1: return {1, 0};
    default: return {1, 1};
    }
}

SrnnMask SrnnMask::init(std::uint64_t mask_seed, int skip, Eigen::Index hidden,
                        Eigen::Index input, const std::string& name, Rng& rng) {
    require(skip >= 1 && skip <= 3, "config",
            "srnn skip length must be in [1,3], got " + std::to_string(skip));
    SrnnMask m;
    m.seed = mask_seed;
    m.skip = skip;
    m.skip_map = AffineParams::init(name + ".skip", hidden, hidden + input, rng);
    return m;
}

SrnnCell SrnnCell::init(CellKind kind, Eigen::Index hidden, Eigen::Index input, int skip,
                        std::uint64_t mask_seed, const std::string& name, Rng& rng) {
    SrnnCell c;
    c.cell = CellParams::init(kind, hidden, input, name, rng);
    c.mask = SrnnMask::init(mask_seed, skip, hidden, input, name, rng);
    return c;
}

void SrnnCell::collect(ParamSet& ps) {
    cell.collect(ps);
    mask.skip_map.collect(ps);
}

CellState srnn_step(Tape& tape, SrnnCell& cell, const CellState& prev, Tensor h_skip,
                    Tensor x, long t, bool standard_lstm_output) {
    auto [w1, w2] = cell.mask.at(t);
    require(w1 + w2 != 0, "config", "srnn mask violates w1+w2 != 0");

    CellState next;
    if (cell.cell.kind == CellKind::Lstm) {
        // Memory advances every step; the blend below touches only h.
        LstmParams& lp = cell.cell.lstm();
        next.c = lstm_memory(&lp.W_f, &lp.b_f, &lp.W_i, &lp.b_i, &lp.W_c, &lp.b_c, prev.h,
                             prev.c, x);
        if (w1 != 0)
            next.h = lstm_output(&lp.W_o, &lp.b_o, prev.h, next.c, x, standard_lstm_output);
    } else if (w1 != 0) {
        next.h = gru_step(tape, cell.cell, prev.h, x);
    }

    if (w2 != 0) {
        Tensor skip = affine(cell.mask.skip_map, {h_skip, x});
        next.h = (w1 != 0) ? mix(next.h, skip, static_cast<double>(w1), static_cast<double>(w2))
                           : skip;
    }
    return next;
}

SrnnRun srnn_forward(Tape& tape, SrnnCell& cell, const std::vector<Tensor>& xs,
                     bool standard_lstm_output) {
    require(!xs.empty(), "shape", "srnn_forward: empty sequence");
    const Eigen::Index N = cell.cell.hidden;
    Tensor zero = tape.constant(Matrix::Zero(N, 1));
    CellState state{zero, zero};
    SrnnRun run;
    run.h.reserve(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
        long skip_t = static_cast<long>(t) - cell.mask.skip;
        Tensor h_skip = skip_t >= 0 ? run.h[static_cast<std::size_t>(skip_t)] : zero;
        state = srnn_step(tape, cell, state, h_skip, xs[t], static_cast<long>(t),
                          standard_lstm_output);
        run.h.push_back(state.h);
    }
    run.final_h = run.h.back();
    return run;
}

DilationSchedule DilationSchedule::exponential(std::size_t layers) {
    DilationSchedule s;
    long dil = 3;
    for (std::size_t i = 0; i < layers; ++i) {
        s.d.push_back(dil);
        dil *= 3;
    }
    return s;
}

DilatedRun dilated_forward(Tape& tape, std::vector<CellParams>& layers,
                           const DilationSchedule& schedule, const std::vector<Tensor>& xs,
                           bool standard_lstm_output) {
    require(!xs.empty(), "shape", "dilated_forward: empty sequence");
    require(schedule.d.size() == layers.size(), "config",
            "dilation schedule length != layer count");
    for (long dil : schedule.d)
        require(dil >= 1, "config", "dilations must be >= 1");

    DilatedRun run;
    run.states.resize(layers.size());
    const std::vector<Tensor>* below = &xs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        CellParams& layer = layers[i];
        const long dil = schedule.d[i];
        Tensor zero = tape.constant(Matrix::Zero(layer.hidden, 1));
        std::vector<Tensor>& out = run.states[i];
        out.reserve(xs.size());
        std::vector<CellState> past;  // own states, for the t - d^i lookback
        past.reserve(xs.size());
        for (std::size_t t = 0; t < xs.size(); ++t) {
            long back = static_cast<long>(t) - dil;
            CellState prev = back >= 0 ? past[static_cast<std::size_t>(back)]
                                       : CellState{zero, zero};
            CellState next = cell_step(tape, layer, prev, (*below)[t], standard_lstm_output);
            past.push_back(next);
            out.push_back(next.h);
        }
        run.finals.push_back(out.back());
        below = &out;
    }
    return run;
}

} // namespace etnet
