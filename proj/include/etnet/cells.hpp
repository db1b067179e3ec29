#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "etnet/autodiff.hpp"

namespace etnet {

enum class CellKind { Lstm, Gru };

CellKind cell_kind_from_string(const std::string& s);
std::string to_string(CellKind k);

struct LstmParams {
    Param W_o, W_f, W_i, W_c;
    Param b_o, b_f, b_i, b_c;
};

struct GruParams {
    Param W_u, W_h, W_r;
    Param b_u, b_h, b_r;
};

// One recurrent cell. Weights act on the concatenation [h_prev ; x].
struct CellParams {
    CellKind kind = CellKind::Lstm;
    Eigen::Index hidden = 0;  // N_N
    Eigen::Index input = 0;   // per-step input width
    std::variant<LstmParams, GruParams> weights;

    static CellParams init(CellKind kind, Eigen::Index hidden, Eigen::Index input,
                           const std::string& name, Rng& rng);
    void collect(ParamSet& ps);

    LstmParams& lstm() { return std::get<LstmParams>(weights); }
    GruParams& gru() { return std::get<GruParams>(weights); }
    const LstmParams& lstm() const { return std::get<LstmParams>(weights); }
    const GruParams& gru() const { return std::get<GruParams>(weights); }
};

// Recurrent state handles on one tape. `c` is only meaningful for LSTM cells.
struct CellState {
    Tensor h;
    Tensor c;
};

// One LSTM update: gates from [h_prev ; x], memory c = f∘c_prev + i∘c~, and
// output h = o ∘ c (the printed form; standard_output switches to o ∘ tanh c).
CellState lstm_step(Tape& tape, CellParams& p, Tensor h_prev, Tensor c_prev, Tensor x,
                    bool standard_output = false);

// One GRU update: h' = (1-u)∘h_prev + u∘h~.
Tensor gru_step(Tape& tape, CellParams& p, Tensor h_prev, Tensor x);

// Cell-kind dispatch over the two steps above.
CellState cell_step(Tape& tape, CellParams& p, const CellState& prev, Tensor x,
                    bool standard_lstm_output = false);

// Per-time-step blend weights of the stochastic skip recurrence. The pair for
// each t is a pure hash of (seed, t), drawn uniformly from the admissible set
// {(0,1),(1,0),(1,1)}, so the mask is defined for series of any length while
// staying fixed for the model's lifetime.
struct SrnnMask {
    std::uint64_t seed = 0;
    int skip = 1;          // s, in [1,3]
    AffineParams skip_map; // f': affine map of [h(t-s) ; x]

    std::pair<int, int> at(long t) const;

    static SrnnMask init(std::uint64_t mask_seed, int skip, Eigen::Index hidden,
                         Eigen::Index input, const std::string& name, Rng& rng);
};

// A recurrent cell with its skip recurrence.
struct SrnnCell {
    CellParams cell;
    SrnnMask mask;

    static SrnnCell init(CellKind kind, Eigen::Index hidden, Eigen::Index input, int skip,
                         std::uint64_t mask_seed, const std::string& name, Rng& rng);
    void collect(ParamSet& ps);
};

// One skip-recurrence update:
//   h_t = [w1 * f_rnn(h(t-1), x) + w2 * f'(h(t-s), x)] / (w1 + w2).
// For LSTM cells the memory state advances every step regardless of the mask;
// only the h outputs are blended.
CellState srnn_step(Tape& tape, SrnnCell& cell, const CellState& prev, Tensor h_skip,
                    Tensor x, long t, bool standard_lstm_output = false);

struct SrnnRun {
    std::vector<Tensor> h;  // h(0..T-1)
    Tensor final_h;
};

// Unrolls an SRNN over a whole sequence; h(t-s) is the zero state while t < s.
SrnnRun srnn_forward(Tape& tape, SrnnCell& cell, const std::vector<Tensor>& xs,
                     bool standard_lstm_output = false);

// Per-layer dilations. The paper's schedule starts at 3 and grows
// exponentially: layer i (1-based) uses 3^i.
struct DilationSchedule {
    std::vector<long> d;

    static DilationSchedule exponential(std::size_t layers);
};

struct DilatedRun {
    std::vector<std::vector<Tensor>> states;  // [layer][t]
    std::vector<Tensor> finals;               // last state per layer
};

// Stacked dilated recurrence: layer i at time t consumes the layer-(i-1)
// state at t (layer 0 consumes x_t) and its own state at t - d^i, with the
// zero state standing in whenever t - d^i < 0.
DilatedRun dilated_forward(Tape& tape, std::vector<CellParams>& layers,
                           const DilationSchedule& schedule, const std::vector<Tensor>& xs,
                           bool standard_lstm_output = false);

} // namespace etnet
